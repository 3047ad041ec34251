"""Training telemetry: last-layer gradient norm and weight statistics."""
from __future__ import annotations

import numpy as np


def grad_norm_last_layer(grads: dict) -> float:
    """L2 norm of the output layer's weight gradient."""
    return float(np.linalg.norm(grads["head.W"]))


def weight_stats(params: dict, thresholds=(1.0,), bins: int = 50) -> dict:
    """Per-layer histogram and counts of ``|w| > threshold``.

    For the head the outlier counts are also split per output neuron
    (one column of ``head.W`` each).
    """
    out = {}
    for name, w in params.items():
        if not name.endswith(".W"):
            continue
        layer = name[:-2]
        counts, edges = np.histogram(w, bins=bins)
        entry = {
            "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
            "outliers": {float(t): int(np.sum(np.abs(w) > t)) for t in thresholds},
            "max_abs": float(np.max(np.abs(w))) if w.size else 0.0,
        }
        if layer == "head":
            entry["outliers_per_output"] = {
                float(t): np.sum(np.abs(w) > t, axis=0).astype(int).tolist() for t in thresholds
            }
        out[layer] = entry
    return out
