"""MLP and bidirectional-LSTM equalizers with hand-written backpropagation.

Both models map a ``(B, 2N+1, 4)`` window batch to ``(B, n_out)``: a
``(Re, Im)`` pair for regression or one logit per constellation point for
classification. Parameters live in a flat ``name -> array`` dict so the
optimizer, regularizer and checkpoint code treat every model alike; names
ending in ``.W`` are weights, ``.b`` biases, and the output layer is always
``head``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

TASKS = ("regression", "classification")


@dataclass(frozen=True)
class MlpArch:
    memory: int
    hidden: tuple[int, ...] = (481, 31, 263)
    n_out: int = 2
    task: str = "regression"
    n_features: int = 4

    kind = "mlp"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.memory < 0 or not self.hidden or min(self.hidden) < 1 or self.n_out < 1:
            raise ValueError("invalid MLP architecture")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")

    @property
    def window(self) -> int:
        return 2 * self.memory + 1

    @property
    def n_in(self) -> int:
        return self.window * self.n_features

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class BiLstmArch:
    memory: int
    hidden_units: int = 226
    n_out: int = 2
    task: str = "regression"
    n_features: int = 4

    kind = "bilstm"

    def __post_init__(self):
        if self.memory < 0 or self.hidden_units < 1 or self.n_out < 1:
            raise ValueError("invalid biLSTM architecture")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")

    @property
    def window(self) -> int:
        return 2 * self.memory + 1

    @property
    def head_inputs(self) -> int:
        return 2 * self.window * self.hidden_units

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


def arch_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "mlp":
        return MlpArch(**d)
    if kind == "bilstm":
        return BiLstmArch(**d)
    raise ValueError(f"unknown architecture kind {kind!r}")


def _uniform(rng: np.random.Generator, shape: tuple, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


class Model:
    """Common parameter handling; subclasses implement forward/backward."""

    arch: MlpArch | BiLstmArch
    params: dict[str, np.ndarray]

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype) -> "Model":
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        a = self.arch
        if x.ndim != 3 or x.shape[1:] != (a.window, a.n_features):
            raise ValueError(f"expected batch of shape (B, {a.window}, {a.n_features}), got {x.shape}")
        return x.astype(self.dtype, copy=False)

    def predict(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        outs = [self.forward(x[s:s + batch_size], keep=False) for s in range(0, x.shape[0], batch_size)]
        return np.concatenate(outs, axis=0) if outs else np.empty((0, self.arch.n_out))


class Mlp(Model):
    """Fully connected tanh network over the flattened window."""

    def __init__(self, arch: MlpArch, rng: np.random.Generator | None = None, dtype=np.float64):
        self.arch = arch
        rng = np.random.default_rng(0) if rng is None else rng
        sizes = (arch.n_in,) + arch.hidden
        self.params = {}
        for i in range(len(arch.hidden)):
            s = 1 / np.sqrt(sizes[i])
            self.params[f"dense{i}.W"] = _uniform(rng, (sizes[i], sizes[i + 1]), s).astype(dtype)
            self.params[f"dense{i}.b"] = _uniform(rng, (sizes[i + 1],), s).astype(dtype)
        s = 1 / np.sqrt(sizes[-1])
        self.params["head.W"] = _uniform(rng, (sizes[-1], arch.n_out), s).astype(dtype)
        self.params["head.b"] = _uniform(rng, (arch.n_out,), s).astype(dtype)
        self._cache = None

    def layer_names(self) -> list[str]:
        return [f"dense{i}" for i in range(len(self.arch.hidden))] + ["head"]

    def forward(self, x: np.ndarray, keep: bool = True) -> np.ndarray:
        x = self._check(x)
        a = x.reshape(x.shape[0], -1)
        acts = [a]
        for i in range(len(self.arch.hidden)):
            a = np.tanh(a @ self.params[f"dense{i}.W"] + self.params[f"dense{i}.b"])
            acts.append(a)
        out = a @ self.params["head.W"] + self.params["head.b"]
        self._cache = acts if keep else None
        return out

    def backward(self, dout: np.ndarray) -> dict[str, np.ndarray]:
        if self._cache is None:
            raise RuntimeError("backward needs a preceding forward(keep=True)")
        acts = self._cache
        grads = {}
        d = dout
        grads["head.W"] = acts[-1].T @ d
        grads["head.b"] = d.sum(axis=0)
        da = d @ self.params["head.W"].T
        for i in range(len(self.arch.hidden) - 1, -1, -1):
            dz = da * (1 - acts[i + 1] ** 2)
            grads[f"dense{i}.W"] = acts[i].T @ dz
            grads[f"dense{i}.b"] = dz.sum(axis=0)
            if i:
                da = dz @ self.params[f"dense{i}.W"].T
        return grads


def _lstm_scan(xp: np.ndarray, wh: np.ndarray, n_h: int):
    """Run one LSTM direction given precomputed input projections ``xp`` (B, T, 4h)."""
    b, t_len = xp.shape[:2]
    h = np.zeros((b, n_h), dtype=xp.dtype)
    c = np.zeros_like(h)
    hs = np.empty((b, t_len, n_h), dtype=xp.dtype)
    cache = []
    for t in range(t_len):
        z = xp[:, t] + h @ wh
        i = expit(z[:, :n_h])
        f = expit(z[:, n_h:2 * n_h])
        g = np.tanh(z[:, 2 * n_h:3 * n_h])
        o = expit(z[:, 3 * n_h:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((i, f, g, o, c_prev, tc, h_prev))
    return hs, cache


def _lstm_scan_back(dhs: np.ndarray, cache: list, wh: np.ndarray, n_h: int):
    """Backpropagate through one direction; returns dL/dxp (B, T, 4h) and dL/dWh."""
    b, t_len = dhs.shape[:2]
    dxp = np.empty((b, t_len, 4 * n_h), dtype=dhs.dtype)
    dwh = np.zeros_like(wh)
    dh_next = np.zeros((b, n_h), dtype=dhs.dtype)
    dc_next = np.zeros_like(dh_next)
    for t in range(t_len - 1, -1, -1):
        i, f, g, o, c_prev, tc, h_prev = cache[t]
        dh = dhs[:, t] + dh_next
        dc = dh * o * (1 - tc**2) + dc_next
        dz = dxp[:, t]
        dz[:, :n_h] = dc * g * i * (1 - i)
        dz[:, n_h:2 * n_h] = dc * c_prev * f * (1 - f)
        dz[:, 2 * n_h:3 * n_h] = dc * i * (1 - g**2)
        dz[:, 3 * n_h:] = dh * tc * o * (1 - o)
        dwh += h_prev.T @ dz
        dh_next = dz @ wh.T
        dc_next = dc * f
    return dxp, dwh


class BiLstm(Model):
    """Bidirectional LSTM over the window; the head sees every hidden state.

    Gate order in the packed ``(n_i + n_h, 4 n_h)`` matrices is input, forget,
    cell, output. Head inputs are all forward states (time order) followed by
    all backward states, each aligned to the time step it summarizes.
    """

    def __init__(self, arch: BiLstmArch, rng: np.random.Generator | None = None, dtype=np.float64):
        self.arch = arch
        rng = np.random.default_rng(0) if rng is None else rng
        n_i, n_h = arch.n_features, arch.hidden_units
        s = 1 / np.sqrt(n_h)
        self.params = {}
        for d in ("fwd", "bwd"):
            self.params[f"{d}.W"] = _uniform(rng, (n_i + n_h, 4 * n_h), s).astype(dtype)
            b = np.zeros(4 * n_h)
            b[n_h:2 * n_h] = 1.0  # forget-gate bias
            self.params[f"{d}.b"] = b.astype(dtype)
        s = 1 / np.sqrt(arch.head_inputs)
        self.params["head.W"] = _uniform(rng, (arch.head_inputs, arch.n_out), s).astype(dtype)
        self.params["head.b"] = _uniform(rng, (arch.n_out,), s).astype(dtype)
        self._cache = None

    def layer_names(self) -> list[str]:
        return ["fwd", "bwd", "head"]

    def hidden_states(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forward and (time-aligned) backward hidden states, each (B, T, n_h)."""
        hf, hb, _ = self._run(self._check(x))
        return hf, hb

    def _run(self, x: np.ndarray):
        n_i, n_h = self.arch.n_features, self.arch.hidden_units
        out, caches = [], []
        for d, seq in (("fwd", x), ("bwd", x[:, ::-1])):
            w = self.params[f"{d}.W"]
            xp = seq @ w[:n_i] + self.params[f"{d}.b"]
            hs, cache = _lstm_scan(xp, w[n_i:], n_h)
            out.append(hs)
            caches.append((seq, cache))
        return out[0], out[1][:, ::-1], caches

    def forward(self, x: np.ndarray, keep: bool = True) -> np.ndarray:
        x = self._check(x)
        hf, hb, caches = self._run(x)
        feat = np.concatenate([hf.reshape(x.shape[0], -1), hb.reshape(x.shape[0], -1)], axis=1)
        out = feat @ self.params["head.W"] + self.params["head.b"]
        self._cache = (feat, caches) if keep else None
        return out

    def backward(self, dout: np.ndarray) -> dict[str, np.ndarray]:
        if self._cache is None:
            raise RuntimeError("backward needs a preceding forward(keep=True)")
        feat, caches = self._cache
        n_i, n_h, t_len = self.arch.n_features, self.arch.hidden_units, self.arch.window
        b = dout.shape[0]
        grads = {"head.W": feat.T @ dout, "head.b": dout.sum(axis=0)}
        dfeat = dout @ self.params["head.W"].T
        half = t_len * n_h
        dh = {
            "fwd": dfeat[:, :half].reshape(b, t_len, n_h),
            # backward states were reversed for alignment; undo for the scan
            "bwd": dfeat[:, half:].reshape(b, t_len, n_h)[:, ::-1],
        }
        for d, (seq, cache) in zip(("fwd", "bwd"), caches):
            w = self.params[f"{d}.W"]
            dxp, dwh = _lstm_scan_back(np.ascontiguousarray(dh[d]), cache, w[n_i:], n_h)
            dwx = np.einsum("bti,btk->ik", seq, dxp)
            grads[f"{d}.W"] = np.concatenate([dwx, dwh], axis=0)
            grads[f"{d}.b"] = dxp.sum(axis=(0, 1))
        return grads


def build_model(arch, rng: np.random.Generator | None = None, dtype=np.float64) -> Model:
    if isinstance(arch, MlpArch):
        return Mlp(arch, rng, dtype)
    if isinstance(arch, BiLstmArch):
        return BiLstm(arch, rng, dtype)
    raise TypeError(f"unknown architecture {arch!r}")


def mlp_forward(arch: MlpArch, params: dict, batch: np.ndarray) -> np.ndarray:
    model = Mlp.__new__(Mlp)
    model.arch, model.params, model._cache = arch, params, None
    return model.forward(batch, keep=False)


def bilstm_forward(arch: BiLstmArch, params: dict, batch: np.ndarray) -> np.ndarray:
    model = BiLstm.__new__(BiLstm)
    model.arch, model.params, model._cache = arch, params, None
    return model.forward(batch, keep=False)
