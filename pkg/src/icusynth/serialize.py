"""Canonical JSON and the versioned array-checkpoint container.

Artifacts must be byte-identical across reruns, so all JSON in the package
goes through :func:`canonical_dumps` (sorted keys, fixed separators, no
NaN). Float64 values survive a dump/load cycle exactly because json uses
the shortest round-tripping repr.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import NumericError, SchemaError

CHECKPOINT_VERSION = 1


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_hash(obj) -> str:
    return sha256_hex(canonical_dumps(obj))


def write_json(path: Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_dumps(obj) + "\n", encoding="utf-8")


def read_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: invalid JSON ({err})") from err


def pack_arrays(arrays: dict[str, np.ndarray]) -> dict:
    packed = {}
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise NumericError(f"array {name!r} contains non-finite values; refusing to save")
        packed[name] = {"shape": list(a.shape), "data": a.reshape(-1).tolist()}
    return packed


def unpack_arrays(packed: dict) -> dict[str, np.ndarray]:
    arrays = {}
    for name, entry in packed.items():
        shape = tuple(entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        expected = int(np.prod(shape)) if shape else 1
        if data.size != expected:
            raise SchemaError(f"array {name!r}: manifest shape {shape} does not match data length")
        arrays[name] = data.reshape(shape)
    return arrays


def save_checkpoint(path: Path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a versioned checkpoint; load_checkpoint(save(p)) == p exactly."""
    write_json(
        path,
        {
            "format_version": CHECKPOINT_VERSION,
            "kind": kind,
            "meta": meta,
            "arrays": pack_arrays(arrays),
        },
    )


def load_checkpoint(path: Path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    doc = read_json(path)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {doc.get('format_version')}")
    if doc.get("kind") != kind:
        raise SchemaError(f"{path}: expected checkpoint kind {kind!r}, found {doc.get('kind')!r}")
    return doc["meta"], unpack_arrays(doc["arrays"])


def tensors_to_arrays(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.data for k, p in params.items()}


def arrays_to_tensors(arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(a) for k, a in arrays.items()}
