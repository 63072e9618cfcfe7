"""Binary checkpoints that capture complete training state.

Layout (all integers little-endian):

    magic  b"UDSR"
    u32    format version (currently 1)
    u32    header length in bytes
    bytes  JSON header: dims, config, counters, rng states, array manifest
    bytes  float64 C-order array blobs, in manifest order
    u32    CRC32 (zlib) of every preceding byte

The header's array manifest pins names and shapes, so a loader never guesses
at offsets. Restored trainers are bit-identical to the saved one: optimizer
moments, both advancing rng streams, and mid-epoch position (the shuffle
stream is saved pre-permutation so the resumed epoch re-draws the identical
order) all round-trip. Validation trials are rebuilt from the config seed,
not stored.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .corpus import HistoryProfiles, InteractionRecord
from .errors import DataError, ValidationError
from .graph import InteractionGraph
from .intent import ModelDims
from .model import DualIntentModel, TrainConfig, Trainer, init_all_parameters, rng_streams

MAGIC = b"UDSR"
FORMAT_VERSION = 1

__all__ = ["CheckpointState", "save_checkpoint", "load_checkpoint", "restore_trainer"]


@dataclass(slots=True)
class CheckpointState:
    """Decoded checkpoint: header fields plus named arrays."""

    dims: ModelDims
    config: TrainConfig
    counters: dict
    rng_state: dict
    arrays: dict[str, np.ndarray]


def _trainer_counters(trainer: Trainer) -> dict:
    return {
        "epoch": trainer.epoch,
        "global_step": trainer.global_step,
        "step_in_epoch": trainer.step_in_epoch,
        "best_metric": trainer.best_metric,
        "best_epoch": trainer.best_epoch,
        "stale_epochs": trainer.stale_epochs,
        "history": list(trainer.history),
        "optimizer_step": trainer.optimizer.step_count,
    }


def _trainer_rng_state(trainer: Trainer) -> dict:
    # Mid-epoch, save the shuffle stream as it was before the current epoch's
    # permutation was drawn: the resumed trainer re-draws the same permutation
    # and lands on the exact post-draw state.
    if trainer._perm is not None:
        shuffle_state = trainer._perm_state
    else:
        shuffle_state = trainer.shuffle_rng.bit_generator.state
    return {
        "shuffle": shuffle_state,
        "negative": trainer.negative_rng.bit_generator.state,
    }


def save_checkpoint(path: str, trainer: Trainer) -> int:
    """Serialize the trainer to `path`; returns bytes written."""
    params = trainer.model.params
    arrays: list[tuple[str, np.ndarray]] = []
    for name, param in params.items():
        arrays.append((name, param.data))
    for name, blob in trainer.optimizer.state_arrays().items():
        arrays.append((name, blob))
    if trainer.best_params is not None:
        for name, blob in trainer.best_params.items():
            arrays.append((f"best:{name}", blob))

    header = {
        "dims": asdict(trainer.model.dims),
        "config": asdict(trainer.model.config),
        "counters": _trainer_counters(trainer),
        "rng": _trainer_rng_state(trainer),
        "has_best": trainer.best_params is not None,
        "manifest": [[name, list(blob.shape)] for name, blob in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<I", FORMAT_VERSION)
    payload += struct.pack("<I", len(header_bytes))
    payload += header_bytes
    for _, blob in arrays:
        payload += np.ascontiguousarray(blob, dtype=np.float64).tobytes()
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))

    with open(path, "wb") as handle:
        handle.write(payload)
    return len(payload)


def load_checkpoint(path: str) -> CheckpointState:
    """Read and validate a checkpoint file."""
    with open(path, "rb") as handle:
        raw = handle.read()
    if len(raw) < len(MAGIC) + 12:
        raise DataError(f"checkpoint {path!r} is truncated ({len(raw)} bytes)")
    if raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"checkpoint {path!r} has wrong magic {raw[:4]!r}")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    actual_crc = zlib.crc32(raw[:-4])
    if stored_crc != actual_crc:
        raise DataError(
            f"checkpoint {path!r} failed integrity check "
            f"(stored crc {stored_crc:#010x}, computed {actual_crc:#010x})"
        )
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise DataError(
            f"checkpoint {path!r} has format version {version}, "
            f"expected {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"checkpoint {path!r} has a corrupt header: {exc}") from exc
    offset += header_len

    arrays: dict[str, np.ndarray] = {}
    for name, shape in header["manifest"]:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + count * 8
        if end > len(raw) - 4:
            raise DataError(f"checkpoint {path!r}: array {name!r} extends past payload")
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        arrays[name] = flat.reshape(shape).copy()
        offset = end
    if offset != len(raw) - 4:
        raise DataError(
            f"checkpoint {path!r}: {len(raw) - 4 - offset} unexpected trailing bytes"
        )

    return CheckpointState(
        dims=ModelDims(**header["dims"]),
        config=TrainConfig(**header["config"]),
        counters=header["counters"],
        rng_state=header["rng"],
        arrays=arrays,
    )


def restore_trainer(
    state: CheckpointState,
    graph: InteractionGraph,
    profiles: HistoryProfiles,
    train_records: list[InteractionRecord],
    valid_records: list[InteractionRecord],
    log_sink: Callable[[str], None] | None = None,
) -> Trainer:
    """Rebuild a trainer whose next step matches the saved run exactly."""
    params = init_all_parameters(state.dims, rng_streams(state.config.seed)["init"])
    expected = {name: p.data.shape for name, p in params.items()}
    for name, shape in expected.items():
        if name not in state.arrays:
            raise ValidationError(f"checkpoint is missing parameter {name!r}")
        if state.arrays[name].shape != shape:
            raise ValidationError(
                f"checkpoint parameter {name!r} has shape "
                f"{state.arrays[name].shape}, model expects {shape}"
            )
        params[name].tensor.data[:] = state.arrays[name]

    model = DualIntentModel(state.dims, state.config, profiles, params)
    trainer = Trainer(model, graph, train_records, valid_records, log_sink=log_sink)

    moments = {
        name: blob for name, blob in state.arrays.items() if name.partition(":")[0] in ("m", "v")
    }
    trainer.optimizer.load_state_arrays(moments, int(state.counters["optimizer_step"]))

    counters = state.counters
    trainer.epoch = int(counters["epoch"])
    trainer.global_step = int(counters["global_step"])
    trainer.step_in_epoch = int(counters["step_in_epoch"])
    trainer.best_metric = float(counters["best_metric"])
    trainer.best_epoch = int(counters["best_epoch"])
    trainer.stale_epochs = int(counters["stale_epochs"])
    trainer.history = [float(v) for v in counters["history"]]

    trainer.shuffle_rng.bit_generator.state = state.rng_state["shuffle"]
    trainer.negative_rng.bit_generator.state = state.rng_state["negative"]

    if any(name.startswith("best:") for name in state.arrays):
        trainer.best_params = {
            name[len("best:") :]: blob.copy()
            for name, blob in state.arrays.items()
            if name.startswith("best:")
        }
    return trainer
