"""Experiment configuration: JSON schema, validation and typed accessors."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import jsonschema

from .channel import FiberParams, LinkConfig, ShapingConfig
from .complexity import QuantSpec, TopologySpec
from .constellation import SUPPORTED_ORDERS, qam
from .data import BitSource
from .io import config_hash
from .nn.models import BiLstmArch, MlpArch
from .nn.train import TrainConfig

SEED_NAMES = ("data", "noise", "init", "shuffle")

_num = {"type": "number"}
_int = {"type": "integer"}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "mode": {"enum": ["link", "b2b"]},
    "n_symbols": {"type": "integer", "minimum": 16},
    "constellation": {"enum": list(SUPPORTED_ORDERS)},
    "source": _obj({
        "kind": {"enum": ["prbs_lfsr", "mersenne_twister"]},
        "prbs_order": {"type": "integer", "minimum": 2, "maximum": 34},
        "polynomial_taps": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
    }, ["kind"]),
    "fiber": _obj({
        "attenuation_db_per_km": _num, "dispersion_ps_nm_km": _num,
        "gamma_per_w_km": _num, "center_wavelength_nm": _num, "manakov_factor": _num,
    }),
    "link": _obj({
        "span_length_km": _num, "num_spans": _int, "step_km": _num,
        "edfa_noise_figure_db": _num, "launch_power_dbm": _num,
    }),
    "shaping": _obj({
        "rolloff": _num, "samples_per_symbol": _int, "symbol_rate_gbd": _num, "filter_span_symbols": _int,
    }),
    "b2b": _obj({"target_q_db": _num}, ["target_q_db"]),
    "dac": _obj({"mem_samples": _int, "frames": _int, "dac_rate_gsps": _num}, ["mem_samples", "frames", "dac_rate_gsps"]),
    "memory": {"type": "integer", "minimum": 0},
    "splits": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 3, "maxItems": 3},
    "model": _obj({
        "kind": {"enum": ["mlp", "bilstm"]},
        "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "hidden_units": {"type": "integer", "minimum": 1},
        "task": {"enum": ["regression", "classification"]},
    }, ["kind"]),
    "train": _obj({
        "loss": {"enum": ["mse", "categorical_cel"]}, "l2_lambda": _num, "batch_size": _int,
        "learning_rate": _num, "max_epochs": _int, "early_stop_metric": {"enum": ["val_q", "val_loss"]},
        "patience": {"type": ["integer", "null"]}, "checkpoint_every": _int, "monitor_train_windows": _int,
    }),
    "seeds": _obj({k: {"type": "integer", "minimum": 0} for k in SEED_NAMES}, SEED_NAMES),
    "audit": _obj({"max_lag": _int, "gap_threshold_db": _num, "kappa": _num, "patience": _int}),
    "complexity": _obj({
        "b_w": _int, "b_i": _int, "sparsity": _num, "latency_symbols": _int,
    }),
    "outputs": {"type": "string"},
}, ["mode", "n_symbols", "constellation", "source", "seeds"])


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict, seed_overrides: dict | None = None, out: str | None = None) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        if seed_overrides:
            d.setdefault("seeds", {})
            for k, v in seed_overrides.items():
                if k not in SEED_NAMES:
                    raise ConfigError(f"unknown seed {k!r}; choose from {SEED_NAMES}")
                d["seeds"][k] = int(v)
        if out is not None:
            d["outputs"] = out
        try:
            jsonschema.validate(d, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        if "outputs" not in d:
            raise ConfigError("no output directory: set 'outputs' or pass --out")
        if d["mode"] == "b2b" and "b2b" not in d:
            raise ConfigError("b2b mode needs a 'b2b' section with target_q_db")
        cfg = cls(d)
        try:
            # construct every typed section once so value errors surface as config errors
            cfg.source(), cfg.fiber(), cfg.link(), cfg.shaping(), cfg.train_config(True)
            if "model" in d:
                cfg.arch()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def seeds(self) -> dict:
        return self.raw["seeds"]

    @property
    def outputs(self) -> str:
        return self.raw["outputs"]

    @property
    def constellation(self):
        return qam(self.raw["constellation"])

    @property
    def memory(self) -> int:
        return self.raw.get("memory", 10)

    @property
    def splits(self) -> tuple[float, float, float]:
        return tuple(self.raw.get("splits", (0.7, 0.15, 0.15)))

    def source(self) -> BitSource:
        s = self.raw["source"]
        taps = tuple(s["polynomial_taps"]) if "polynomial_taps" in s else None
        return BitSource(s["kind"], self.seeds["data"], s.get("prbs_order"), taps)

    def fiber(self) -> FiberParams:
        return FiberParams(**self.raw.get("fiber", {}))

    def link(self) -> LinkConfig:
        return LinkConfig(**self.raw.get("link", {}))

    def shaping(self) -> ShapingConfig:
        return ShapingConfig(**self.raw.get("shaping", {}))

    def arch(self):
        m = dict(self.raw.get("model", {"kind": "mlp"}))
        kind = m.pop("kind")
        task = m.get("task", "regression")
        n_out = self.raw["constellation"] if task == "classification" else 2
        if kind == "mlp":
            return MlpArch(self.memory, tuple(m.get("hidden", (481, 31, 263))), n_out, task)
        return BiLstmArch(self.memory, m.get("hidden_units", 226), n_out, task)

    def train_config(self, deterministic: bool = True) -> TrainConfig:
        t = dict(self.raw.get("train", {}))
        t.pop("checkpoint_every", None)
        t.pop("monitor_train_windows", None)
        task = self.raw.get("model", {}).get("task", "regression")
        t.setdefault("loss", "categorical_cel" if task == "classification" else "mse")
        return TrainConfig(seed=self.seeds["shuffle"], dtype="float64" if deterministic else "float32", **t)

    def topology(self) -> TopologySpec:
        arch = self.arch()
        if isinstance(arch, MlpArch):
            kind = f"mlp{len(arch.hidden)}"
            if kind not in ("mlp2", "mlp3", "mlp4"):
                raise ConfigError("complexity formulas cover MLPs with 2 to 4 hidden layers")
            return TopologySpec(kind, arch.window, arch.hidden, n_o=arch.n_out)
        return TopologySpec("bilstm", arch.window, (arch.hidden_units,), n_o=arch.n_out)

    def quant(self) -> QuantSpec | None:
        c = self.raw.get("complexity", {})
        if "b_w" not in c and "b_i" not in c:
            return None
        return QuantSpec(c.get("b_w", 8), c.get("b_i", 8), c.get("sparsity", 0.0))
