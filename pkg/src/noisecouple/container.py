"""Portable noise container: an NPY tensor plus a JSON sidecar.

The tensor file is NPY format version 1.0, little-endian IEEE-754 float32 or
float64, C-contiguous, shaped ``(k, d)`` or ``(k, C, H, W)`` with
``C*H*W = d``.  The sidecar (same path with ``.json`` appended) records
everything needed to verify and reproduce the tensor::

    {
      "format_version": 1,
      "spec": {...},                  # coupling spec serialization
      "seed": ..., "stream_id": ...,
      "rng": {"family", "version", "gaussian_transform"},
      "created_unix_seconds": ...,
      "checksum": "<sha-256 hex of the tensor file bytes>",
      "dtype": "float32" | "float64",
      "shape": [...]
    }

Replaying (sample again from spec/seed/stream_id and cast to the recorded
dtype) reproduces the tensor bitwise on the same rng family, transform, and
numpy version.
"""

from __future__ import annotations

import hashlib
import io
import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CouplingError, CouplingSpec, NoiseBatch
from .samplers import GAUSSIAN_TRANSFORM, RNG_FAMILY, RNG_VERSION, RandomStream, sample

__all__ = [
    "FORMAT_VERSION",
    "IntegrityError",
    "ShapeError",
    "LoadedContainer",
    "sidecar_path",
    "write_container",
    "load_container",
    "replay_sidecar",
]

FORMAT_VERSION = 1
_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}


class IntegrityError(CouplingError):
    """Checksum, metadata, or replay contract of a container is violated."""


class ShapeError(CouplingError):
    """Tensor shape or dtype is inconsistent with the sidecar spec."""


@dataclass(frozen=True)
class LoadedContainer:
    """A verified container: the batch plus its parsed sidecar and tensor shape."""

    batch: NoiseBatch
    sidecar: dict
    tensor_shape: tuple[int, ...]
    dtype: str


def sidecar_path(tensor_path) -> Path:
    return Path(str(tensor_path) + ".json")


def _encode_tensor(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0))
    return buf.getvalue()


def write_container(
    batch: NoiseBatch,
    path,
    *,
    dtype: str = "float64",
    shape: tuple[int, ...] | None = None,
) -> dict:
    """Write the batch to ``path`` (tensor) and ``path.json`` (sidecar).

    ``shape`` optionally reshapes each vector into trailing dims (C, H, W);
    their product must equal d.  Returns the sidecar document.
    """
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}, got {dtype!r}")
    k, d = batch.k, batch.d
    tensor_shape: tuple[int, ...] = (k, d)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != d:
            raise ShapeError(f"trailing shape {shape} has {int(np.prod(shape))} entries != d={d}")
        tensor_shape = (k, *shape)
    arr = np.asarray(batch.vectors, dtype=_DTYPES[dtype]).reshape(tensor_shape)
    payload = _encode_tensor(arr)
    checksum = hashlib.sha256(payload).hexdigest()
    path = Path(path)
    path.write_bytes(payload)
    sidecar = {
        "format_version": FORMAT_VERSION,
        "spec": batch.spec.to_json_dict(),
        "seed": batch.seed,
        "stream_id": batch.stream_id,
        "rng": {
            "family": RNG_FAMILY,
            "version": RNG_VERSION,
            "gaussian_transform": GAUSSIAN_TRANSFORM,
        },
        "created_unix_seconds": int(time.time()),
        "checksum": checksum,
        "dtype": dtype,
        "shape": list(tensor_shape),
    }
    if batch.refined:
        sidecar["refined"] = True
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return sidecar


def load_container(path) -> LoadedContainer:
    """Load and verify a container: checksum first, then shape and dtype."""
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.exists():
        raise FileNotFoundError(f"tensor file not found: {path}")
    if not meta_path.exists():
        raise FileNotFoundError(f"sidecar not found: {meta_path}")
    sidecar = json.loads(meta_path.read_text(encoding="utf-8"))
    if sidecar.get("format_version") != FORMAT_VERSION:
        raise IntegrityError(
            f"unsupported container format_version {sidecar.get('format_version')!r}"
        )
    payload = path.read_bytes()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != sidecar.get("checksum"):
        raise IntegrityError(
            f"checksum mismatch: tensor file hashes to {digest}, sidecar says "
            f"{sidecar.get('checksum')}"
        )
    arr = np.load(io.BytesIO(payload))
    declared = sidecar.get("dtype")
    if declared not in _DTYPES:
        raise IntegrityError(f"sidecar declares unsupported dtype {declared!r}")
    if arr.dtype != _DTYPES[declared]:
        raise ShapeError(f"tensor dtype {arr.dtype} does not match sidecar {declared}")
    spec = CouplingSpec.from_json_dict(sidecar["spec"])
    if arr.ndim < 2 or arr.shape[0] != spec.k:
        raise ShapeError(f"tensor shape {arr.shape} does not start with k={spec.k}")
    if int(np.prod(arr.shape[1:])) != spec.d:
        raise ShapeError(
            f"trailing dims of {arr.shape} give {int(np.prod(arr.shape[1:]))} != d={spec.d}"
        )
    if list(arr.shape) != list(sidecar.get("shape", [])):
        raise ShapeError(f"tensor shape {arr.shape} differs from sidecar {sidecar.get('shape')}")
    batch = NoiseBatch(
        vectors=arr.reshape(spec.k, spec.d),
        spec=spec,
        seed=int(sidecar["seed"]),
        stream_id=int(sidecar.get("stream_id", 0)),
        refined=bool(sidecar.get("refined", False)),
    )
    return LoadedContainer(
        batch=batch, sidecar=sidecar, tensor_shape=tuple(arr.shape), dtype=declared
    )


def replay_sidecar(sidecar: dict) -> np.ndarray:
    """Re-sample the tensor described by a sidecar, cast to its dtype.

    Raises IntegrityError when the recorded rng family or gaussian transform
    differs from this build; a numpy version difference only warns, since the
    stream may still agree.
    """
    rng = sidecar.get("rng", {})
    if rng.get("family") != RNG_FAMILY or rng.get("gaussian_transform") != GAUSSIAN_TRANSFORM:
        raise IntegrityError(
            f"cannot replay: container used rng {rng!r}, this build provides "
            f"{RNG_FAMILY}/{GAUSSIAN_TRANSFORM}"
        )
    if rng.get("version") != RNG_VERSION:
        warnings.warn(
            f"container written with numpy {rng.get('version')}, replaying with "
            f"{RNG_VERSION}; bitwise equality is not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    if sidecar.get("refined"):
        raise IntegrityError("cannot replay a refined container from its stream alone")
    spec = CouplingSpec.from_json_dict(sidecar["spec"])
    batch = sample(spec, RandomStream(int(sidecar["seed"]), int(sidecar.get("stream_id", 0))))
    arr = np.asarray(batch.vectors, dtype=_DTYPES[sidecar["dtype"]])
    return arr.reshape(tuple(sidecar["shape"]))
