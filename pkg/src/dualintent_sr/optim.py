"""AdamW optimizer over named parameters.

Weight decay is decoupled from the adaptive step: each update applies

    p  <-  p - lr * ( m_hat / (sqrt(v_hat) + eps) + weight_decay * p )

so with a zero gradient the parameter still shrinks by ``lr * weight_decay * p``.
Rows listed as frozen (e.g. a padding embedding) receive neither gradient
updates nor decay and keep their initial values bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import NumericError

__all__ = ["Parameter", "AdamW"]


class Parameter:
    """Named trainable tensor, optionally with rows pinned to their init."""

    __slots__ = ("name", "tensor", "frozen_rows")

    def __init__(self, name: str, data: np.ndarray, frozen_rows: tuple[int, ...] = ()):
        self.name = name
        self.tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.frozen_rows = tuple(frozen_rows)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.tensor.data.shape})"


class AdamW:
    """Adam with decoupled weight decay; moments stored per parameter."""

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 1e-4,
        weight_decay: float = 1e-5,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0.0:
            raise NumericError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise NumericError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise NumericError(f"duplicate parameter names: {sorted(names)}")
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        """Apply one update from current gradients (missing grads count as 0)."""
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise NumericError(
                    f"non-finite gradient for parameter {p.name!r} at step {t}"
                )
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            update = self.lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data)
            if p.frozen_rows:
                rows = list(p.frozen_rows)
                saved = p.data[rows].copy()
                p.tensor.data -= update
                p.tensor.data[rows] = saved
                m[rows] = 0.0
                v[rows] = 0.0
            else:
                p.tensor.data -= update
            if not np.isfinite(p.data).all():
                raise NumericError(
                    f"non-finite parameter value for {p.name!r} after step {t}"
                )

    # -- checkpoint support ----------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment arrays keyed for serialization, in parameter order."""
        out: dict[str, np.ndarray] = {}
        for p in self.params:
            out[f"m:{p.name}"] = self.m[p.name]
            out[f"v:{p.name}"] = self.v[p.name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for p in self.params:
            for prefix, store in (("m", self.m), ("v", self.v)):
                key = f"{prefix}:{p.name}"
                if key not in arrays:
                    raise NumericError(f"optimizer state missing array {key!r}")
                if arrays[key].shape != p.data.shape:
                    raise NumericError(
                        f"optimizer state shape mismatch for {key!r}: "
                        f"{arrays[key].shape} vs {p.data.shape}"
                    )
                store[p.name] = arrays[key].astype(np.float64)
        self.step_count = int(step_count)
