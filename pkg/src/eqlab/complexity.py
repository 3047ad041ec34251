"""Inference cost accounting: real multiplications per symbol, bit operations, latency."""
from __future__ import annotations

import json
import math
import platform
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

KINDS = ("mlp2", "mlp3", "mlp4", "bilstm")


@dataclass(frozen=True)
class TopologySpec:
    """Equalizer topology for cost formulas.

    ``hidden`` holds the hidden-layer sizes of an MLP or ``(n_h,)`` for a
    biLSTM.
    """

    kind: str
    n_s: int
    hidden: tuple[int, ...]
    n_i: int = 4
    n_o: int = 2

    def __post_init__(self):
        hidden = (self.hidden,) if isinstance(self.hidden, (int, np.integer)) else tuple(self.hidden)
        object.__setattr__(self, "hidden", tuple(int(h) for h in hidden))
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.n_s < 1 or self.n_s % 2 == 0:
            raise ValueError("n_s must be a positive odd window length")
        if min(self.hidden, default=0) < 1 or self.n_i < 1 or self.n_o < 1:
            raise ValueError("layer sizes must be >= 1")
        expected = {"mlp2": 2, "mlp3": 3, "mlp4": 4, "bilstm": 1}[self.kind]
        if len(self.hidden) != expected:
            raise ValueError(f"{self.kind} needs {expected} hidden size(s), got {len(self.hidden)}")

    @classmethod
    def from_memory(cls, kind: str, memory: int, hidden, n_i: int = 4, n_o: int = 2) -> "TopologySpec":
        return cls(kind, 2 * memory + 1, hidden, n_i, n_o)

    def dense_layers(self) -> list[tuple[int, int]]:
        """(inputs m, neurons n) of each dense layer of an MLP."""
        if self.kind == "bilstm":
            raise ValueError("a biLSTM is not a stack of dense layers")
        sizes = (self.n_s * self.n_i,) + self.hidden + (self.n_o,)
        return [(sizes[k], sizes[k + 1]) for k in range(len(sizes) - 1)]


@dataclass(frozen=True)
class QuantSpec:
    b_w: int = 8
    b_i: int = 8
    sparsity: float = 0.0
    per_layer: tuple | None = None  # optional ((b_w, b_i, sparsity), ...) per dense layer

    def __post_init__(self):
        if self.b_w < 1 or self.b_i < 1:
            raise ValueError("bit widths must be >= 1")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError("sparsity must be in [0, 1)")

    def layer(self, k: int) -> "QuantSpec":
        if self.per_layer is None:
            return self
        b_w, b_i, eta = self.per_layer[k]
        return QuantSpec(b_w, b_i, eta)


def rmps(spec: TopologySpec) -> int:
    """Real multiplications per recovered symbol."""
    if spec.kind == "bilstm":
        n_h = spec.hidden[0]
        return 2 * spec.n_s * n_h * (4 * spec.n_i + 4 * n_h + 3 + spec.n_o)
    return sum(m * n for m, n in spec.dense_layers())


def param_count(spec: TopologySpec) -> int:
    """Trainable parameters including biases (biLSTM head reads all time steps)."""
    if spec.kind == "bilstm":
        n_h = spec.hidden[0]
        per_dir = 4 * n_h * (spec.n_i + n_h) + 4 * n_h
        return 2 * per_dir + 2 * spec.n_s * n_h * spec.n_o + spec.n_o
    return sum(m * n + n for m, n in spec.dense_layers())


def _clog2(m: int) -> int:
    return 0 if m <= 1 else math.ceil(math.log2(m))


def kept_weights(n: int, m: int, sparsity: float) -> int:
    """Weights surviving uniform pruning of an ``m -> n`` layer."""
    return int(round(n * m * (1.0 - sparsity)))


def bops_dense(n: int, m: int, quant: QuantSpec) -> int:
    """Bit operations of a dense layer with ``n`` neurons and ``m`` inputs.

    Multiplications cost ``b_w b_i`` each on the weights kept after pruning;
    every connection keeps its accumulator cost ``b_w + b_i + ceil(log2 m)``.
    """
    if n < 1 or m < 1:
        raise ValueError("layer sizes must be >= 1")
    if not 0.0 <= quant.sparsity < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    mult = kept_weights(n, m, quant.sparsity) * quant.b_w * quant.b_i
    return mult + n * m * (quant.b_w + quant.b_i + _clog2(m))


def bops_layers(spec: TopologySpec, quant: QuantSpec) -> list[dict]:
    """Per-layer BoPs; supports non-uniform bit widths and pruning."""
    out = []
    for k, (m, n) in enumerate(spec.dense_layers()):
        q = quant.layer(k)
        out.append({"layer": k, "inputs": m, "neurons": n, "b_w": q.b_w, "b_i": q.b_i,
                    "sparsity": q.sparsity, "bops": bops_dense(n, m, q)})
    return out


def bops_mlp3(spec: TopologySpec, quant: QuantSpec) -> int:
    """Closed-form BoPs of a three-hidden-layer MLP with uniform quantization and pruning.

    ``C_kept * b_w b_i + C * (b_w + b_i) + ACC`` where ``C`` is the RMpS and
    ``ACC`` the accumulator term ``sum m_k n_k ceil(log2 m_k)``.
    """
    if spec.kind != "mlp3":
        raise ValueError("bops_mlp3 needs an mlp3 topology")
    if quant.per_layer is not None:
        raise ValueError("non-uniform quantization/pruning: compose bops_layers instead")
    layers = spec.dense_layers()
    c = rmps(spec)
    c_kept = sum(kept_weights(n, m, quant.sparsity) for m, n in layers)
    acc = sum(m * n * _clog2(m) for m, n in layers)
    return c_kept * quant.b_w * quant.b_i + c * (quant.b_w + quant.b_i) + acc


def quantization_floor_warning(b_i: int, order: int) -> str | None:
    """Warn when the input resolution is at or below ``log2(sqrt(M))`` bits per axis."""
    floor = math.log2(math.sqrt(order))
    if b_i <= floor:
        msg = f"{b_i}-bit input resolution does not exceed log2(sqrt({order})) = {floor:g} bits per axis"
        warnings.warn(msg, stacklevel=2)
        return msg
    return None


def machine_descriptor() -> dict:
    return {
        "machine": platform.machine(),
        "processor": platform.processor(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": 1,
    }


def latency_bench(model, n_symbols: int = 10_000, warmup: int = 100, seed: int = 0) -> float:
    """Mean wall-clock seconds per symbol over strictly sequential single-window inferences.

    BLAS is pinned to one thread during the measurement.
    """
    rng = np.random.default_rng(seed)
    a = model.arch
    x = rng.standard_normal((n_symbols, 1, a.window, a.n_features)).astype(model.dtype)
    with threadpool_limits(limits=1):
        for k in range(min(warmup, n_symbols)):
            model.forward(x[k], keep=False)
        t0 = time.perf_counter()
        for k in range(n_symbols):
            model.forward(x[k], keep=False)
        elapsed = time.perf_counter() - t0
    return elapsed / n_symbols


@dataclass
class ComplexityReport:
    topology: dict
    rmps: int
    params: int
    bops: dict | None = None
    latency_s_per_symbol: float | None = None
    machine: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @classmethod
    def build(cls, spec: TopologySpec, quant: QuantSpec | None = None, order: int | None = None) -> "ComplexityReport":
        rep = cls(topology=asdict(spec), rmps=rmps(spec), params=param_count(spec))
        if quant is not None and spec.kind != "bilstm":
            layers = bops_layers(spec, quant)
            rep.bops = {"layers": layers, "total": sum(l["bops"] for l in layers)}
            if order is not None:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    msg = quantization_floor_warning(quant.b_i, order)
                if msg:
                    rep.warnings.append(msg)
        return rep

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# (kind, memory N, hidden sizes) of the equal-complexity latency study grid
REFERENCE_TOPOLOGIES = (
    ("mlp2", 35, (600, 518)),
    ("mlp3", 35, (400, 460, 400)),
    ("mlp4", 35, (200, 156, 553, 555)),
    ("mlp2", 45, (1250, 458)),
    ("mlp3", 45, (620, 564, 800)),
    ("mlp4", 45, (610, 500, 500, 501)),
    ("mlp3", 60, (1000, 1000, 600)),
    ("mlp4", 50, (2000, 500, 910, 2000)),
    ("bilstm", 5, (73,)),
    ("bilstm", 10, (52,)),
    ("bilstm", 14, (44,)),
    ("bilstm", 25, (48,)),
    ("bilstm", 30, (43,)),
    ("bilstm", 35, (40,)),
    ("bilstm", 40, (53,)),
    ("bilstm", 50, (68,)),
)


def reference_specs() -> list[TopologySpec]:
    return [TopologySpec.from_memory(k, n, h) for k, n, h in REFERENCE_TOPOLOGIES]
