"""Trace container and JSON manifests.

A trace is ``<name>.bin`` holding little-endian float64 quadruples
``(Re X, Im X, Re Y, Im Y)`` per sample plus a ``<name>.json`` sidecar with
the metadata needed to interpret it.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

TRACE_FORMAT = "eqlab-trace-1"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def _paths(path) -> tuple[Path, Path]:
    base = Path(path)
    if base.suffix in (".bin", ".json"):
        base = base.with_suffix("")
    return base.with_name(base.name + ".bin"), base.with_name(base.name + ".json")


def save_trace(path, samples: np.ndarray, meta: dict, symbol_rate: bool = True) -> tuple[Path, Path]:
    """Write a dual-pol sequence and its sidecar.

    Parameters
    ----------
    samples : np.ndarray
        Complex ``(n, 2)`` array (columns X, Y).
    meta : dict
        Sidecar fields (rates, launch power, seed, link config, generator).
    symbol_rate : bool
        Marks symbol-rate sequences as opposed to oversampled fields.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("samples must have shape (n, 2)")
    bin_path, json_path = _paths(path)
    quads = np.empty((samples.shape[0], 4), dtype="<f8")
    quads[:, 0], quads[:, 1] = samples[:, 0].real, samples[:, 0].imag
    quads[:, 2], quads[:, 3] = samples[:, 1].real, samples[:, 1].imag
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    bin_path.write_bytes(quads.tobytes())
    side = dict(meta)
    side.update({"format": TRACE_FORMAT, "samples": int(samples.shape[0]), "symbol_rate": bool(symbol_rate),
                 "data_file": bin_path.name})
    json_path.write_text(json.dumps(side, indent=2, sort_keys=True))
    return bin_path, json_path


def load_trace(path) -> tuple[np.ndarray, dict]:
    bin_path, json_path = _paths(path)
    meta = json.loads(json_path.read_text())
    if meta.get("format") != TRACE_FORMAT:
        raise ValueError(f"{json_path} is not a trace sidecar")
    quads = np.frombuffer(bin_path.read_bytes(), dtype="<f8").reshape(-1, 4)
    if quads.shape[0] != meta["samples"]:
        raise ValueError(f"{bin_path} holds {quads.shape[0]} samples, sidecar says {meta['samples']}")
    out = np.empty((quads.shape[0], 2), dtype=np.complex128)
    out[:, 0] = quads[:, 0] + 1j * quads[:, 1]
    out[:, 1] = quads[:, 2] + 1j * quads[:, 3]
    return out, meta


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dataset_manifest(traces: list[str], memory: int, splits: dict, seeds: dict, constellation: int) -> dict:
    """Manifest of a windowed dataset: traces, memory, split index ranges, seeds."""
    ranges = {}
    for name, idx in splits.items():
        idx = np.asarray(idx)
        ranges[name] = [int(idx[0]), int(idx[-1]) + 1] if idx.size else [0, 0]
    return {"traces": list(traces), "N": int(memory), "splits": ranges, "seeds": dict(seeds),
            "constellation": int(constellation)}
