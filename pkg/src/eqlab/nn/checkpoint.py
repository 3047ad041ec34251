"""Model checkpoints: JSON descriptor plus a little-endian float64 blob."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .models import Model, arch_from_dict, build_model

FORMAT = "eqlab-checkpoint-1"


def save_checkpoint(model: Model, path, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<path>.json`` and ``<path>.bin``; returns both paths."""
    base = Path(path)
    meta_path, blob_path = base.with_suffix(".json"), base.with_suffix(".bin")
    manifest, offset, chunks = [], 0, []
    for name, arr in model.params.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += data.nbytes
        chunks.append(data.tobytes())
    blob_path.write_bytes(b"".join(chunks))
    meta = {
        "format": FORMAT,
        "arch": model.arch.to_dict(),
        "dtype": str(model.dtype),
        "blob": blob_path.name,
        "layers": manifest,
        "extra": extra or {},
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta_path, blob_path


def load_checkpoint(path) -> Model:
    base = Path(path)
    meta_path = base if base.suffix == ".json" else base.with_suffix(".json")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != FORMAT:
        raise ValueError(f"{meta_path} is not a checkpoint")
    blob = (meta_path.parent / meta["blob"]).read_bytes()
    model = build_model(arch_from_dict(meta["arch"]))
    params = {}
    for layer in meta["layers"]:
        arr = np.frombuffer(blob, dtype="<f8", count=layer["count"], offset=layer["offset"])
        params[layer["name"]] = arr.reshape(layer["shape"]).astype(meta["dtype"])
    if set(params) != set(model.params):
        raise ValueError("checkpoint layers do not match the architecture")
    model.params = params
    return model
