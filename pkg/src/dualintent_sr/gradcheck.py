"""Central finite-difference verification of analytic gradients.

`grad_check` takes a zero-argument function that rebuilds one or more scalar
losses from the current parameter values, plus the parameters to probe.  For
every probed coordinate it compares the backward-pass gradient against

    (f(x + eps) - f(x - eps)) / (2 * eps)

using the scale-aware relative error ``|a - n| / max(1, |a|, |n|)``.  The
builder is evaluated twice up front and must produce bit-identical losses;
a non-deterministic builder makes finite differences meaningless, so it is
rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import NumericError
from .optim import Parameter

__all__ = ["GradCheckReport", "grad_check", "format_report"]


@dataclass
class CoordinateResult:
    loss: str
    param: str
    flat_index: int
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradCheckReport:
    eps: float
    n_coordinates: int
    max_rel_err: float
    worst: CoordinateResult | None
    per_pair_max: dict[tuple[str, str], float] = field(default_factory=dict)

    def failures(self, threshold: float) -> list[tuple[str, str, float]]:
        return sorted(
            (loss, param, err)
            for (loss, param), err in self.per_pair_max.items()
            if err >= threshold
        )


def _eval_losses(build_losses) -> dict[str, float]:
    losses = build_losses()
    return {name: float(t.data.reshape(())) for name, t in losses.items()}


def grad_check(
    build_losses,
    params: list[Parameter],
    eps: float = 1e-6,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients for every loss.

    Args:
        build_losses: zero-argument callable returning ``{name: scalar Tensor}``;
            it must read parameter values through the `params` tensors so that
            in-place perturbations are visible.
        params: parameters whose coordinates are probed.
        eps: finite-difference half-step (applied in float64).
        max_coords_per_param: probe at most this many coordinates per parameter,
            sampled without replacement; ``None`` probes every coordinate.
        rng: source of randomness for coordinate sampling.

    Raises:
        NumericError: if the builder is non-deterministic or a loss is non-finite.
    """
    first = _eval_losses(build_losses)
    second = _eval_losses(build_losses)
    if first.keys() != second.keys():
        raise NumericError("loss builder returned different keys on re-evaluation")
    for name in first:
        if not np.isfinite(first[name]):
            raise NumericError(f"loss {name!r} is non-finite: {first[name]}")
        if first[name] != second[name]:
            raise NumericError(
                f"loss builder is non-deterministic: {name!r} gave "
                f"{first[name]!r} then {second[name]!r}"
            )

    loss_names = sorted(first)
    analytic: dict[tuple[str, str], np.ndarray] = {}
    for name in loss_names:
        losses = build_losses()
        for p in params:
            p.zero_grad()
        losses[name].backward()
        for p in params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            analytic[(name, p.name)] = grad.ravel().copy()

    if rng is None:
        rng = np.random.default_rng(0)

    worst: CoordinateResult | None = None
    per_pair_max: dict[tuple[str, str], float] = {
        (l, p.name): 0.0 for l in loss_names for p in params
    }
    n_checked = 0
    for p in params:
        flat = p.tensor.data.ravel()
        size = flat.size
        if max_coords_per_param is not None and size > max_coords_per_param:
            coords = np.sort(rng.choice(size, size=max_coords_per_param, replace=False))
        else:
            coords = np.arange(size)
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            plus = _eval_losses(build_losses)
            flat[i] = original - eps
            minus = _eval_losses(build_losses)
            flat[i] = original
            n_checked += 1
            for name in loss_names:
                numeric = (plus[name] - minus[name]) / (2.0 * eps)
                a = float(analytic[(name, p.name)][i])
                rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                key = (name, p.name)
                if rel > per_pair_max[key]:
                    per_pair_max[key] = rel
                if worst is None or rel > worst.rel_err:
                    worst = CoordinateResult(name, p.name, int(i), a, numeric, rel)

    max_rel = max(per_pair_max.values()) if per_pair_max else 0.0
    return GradCheckReport(
        eps=eps,
        n_coordinates=n_checked,
        max_rel_err=max_rel,
        worst=worst,
        per_pair_max=per_pair_max,
    )


def format_report(report: GradCheckReport, threshold: float = 1e-4) -> str:
    """Human-readable summary, one line per (loss, parameter) pair."""
    lines = [
        f"gradient check: eps={report.eps:g}, coordinates probed={report.n_coordinates}"
    ]
    for (loss, param), err in sorted(report.per_pair_max.items()):
        status = "ok" if err < threshold else "FAIL"
        lines.append(f"  {status}  {loss:<12s} d/d {param:<24s} max rel err {err:.3e}")
    lines.append(f"overall max rel err: {report.max_rel_err:.3e}")
    if report.worst is not None and report.max_rel_err >= threshold:
        w = report.worst
        lines.append(
            f"worst: loss={w.loss} param={w.param} flat_index={w.flat_index} "
            f"analytic={w.analytic:.9e} numeric={w.numeric:.9e}"
        )
    return "\n".join(lines)
