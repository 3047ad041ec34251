"""Command-line pipelines: simulate, train, evaluate, audit, complexity, report.

Every stage reads one JSON config, writes into the output directory and
stamps each file with the config hash. Exit codes: 0 success, 1 config
error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import ConfigurationError, awgn_b2b, simulate_link
from .complexity import (
    ComplexityReport,
    latency_bench,
    machine_descriptor,
    reference_specs,
    param_count,
    rmps,
)
from .config import ConfigError, ExperimentConfig
from .data import dac_effective_symbols, dac_frame_repeat, generate_symbols, symbol_periodicity, window_dataset
from .io import load_trace, read_json, save_trace, write_json
from .metrics import MetricsReport
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.models import build_model
from .nn.train import equalized_symbols, train
from .pitfalls import AuditReport, autocorr_period, jail_window_detect, overfit_gap

logger = logging.getLogger("eqlab")

CKPT_DIR = "checkpoints"


class ArtifactError(RuntimeError):
    """A stage needs output from an earlier stage that is not there."""


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.outputs)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _stamp(cfg: ExperimentConfig, obj: dict) -> dict:
    obj = dict(obj)
    obj["config_hash"] = cfg.hash
    return obj


def _write_csv(path: Path, cfg: ExperimentConfig, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {cfg.hash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path


def _load_traces(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    out = Path(cfg.outputs)
    if not (out / "tx.json").exists() or not (out / "rx.json").exists():
        raise ArtifactError(f"no tx/rx traces in {out}; run 'simulate' first")
    tx, _ = load_trace(out / "tx")
    rx, _ = load_trace(out / "rx")
    return tx, rx


def _dataset(cfg: ExperimentConfig, tx, rx):
    return window_dataset(tx, rx, cfg.memory, cfg.constellation, cfg.splits, shuffle_seed=cfg.seeds["shuffle"])


def cmd_simulate(cfg: ExperimentConfig, deterministic: bool = True) -> dict:
    """Generate TX symbols and the received post-CDC sequence."""
    out = _out(cfg)
    const = cfg.constellation
    shaping = cfg.shaping()
    tx = generate_symbols(cfg.source(), const, cfg.raw["n_symbols"])
    dac = cfg.raw.get("dac")
    if dac:
        tx = dac_frame_repeat(tx, dac["mem_samples"], dac["frames"], dac["dac_rate_gsps"], shaping.symbol_rate_gbd)
    rng = np.random.default_rng(cfg.seeds["noise"])
    if cfg.raw["mode"] == "b2b":
        rx = awgn_b2b(tx, cfg.raw["b2b"]["target_q_db"], const, rng)
        link_meta = {"mode": "b2b", "target_q_db": cfg.raw["b2b"]["target_q_db"]}
    else:
        link = cfg.link()
        rx = simulate_link(tx, cfg.fiber(), link, shaping, rng)
        link_meta = {"mode": "link", "link": cfg.raw.get("link", {}), "fiber": cfg.raw.get("fiber", {}),
                     "shaping": cfg.raw.get("shaping", {})}
    meta = {
        "config_hash": cfg.hash,
        "symbol_rate_hz": shaping.symbol_rate_hz,
        "sample_rate_hz": shaping.symbol_rate_hz,
        "launch_power_dbm": cfg.link().launch_power_dbm,
        "seeds": cfg.seeds,
        "generator": cfg.raw["source"],
        "constellation": const.order,
        "dac": dac,
        **link_meta,
    }
    save_trace(out / "tx", tx, dict(meta, role="tx"))
    save_trace(out / "rx", rx, dict(meta, role="rx", stage="post-CDC"))
    report = MetricsReport.from_symbols(rx, tx, const).to_dict()
    summary = _stamp(cfg, {"stage": "simulate", "n_symbols": int(tx.shape[0]), "unequalized": report})
    write_json(out / "simulate.json", summary)
    return summary


def cmd_train(cfg: ExperimentConfig, deterministic: bool = True) -> dict:
    """Train the configured equalizer on the simulated traces."""
    out = _out(cfg)
    tx, rx = _load_traces(cfg)
    const = cfg.constellation
    ds = _dataset(cfg, tx, rx)
    tcfg = cfg.train_config(deterministic)
    model = build_model(cfg.arch(), np.random.default_rng(cfg.seeds["init"]))
    t = cfg.raw.get("train", {})
    every = t.get("checkpoint_every", 1)
    n_mon = min(t.get("monitor_train_windows", 8192), ds.train_size())
    train_split = ds.split("train")
    mon_idx = np.arange(n_mon)
    monitors = {
        "train_eval": type(train_split)(train_split.inputs[mon_idx], train_split.targets_regression[mon_idx],
                                        train_split.targets_class[mon_idx]),
        "test": ds.split("test"),
    }
    ckdir = out / CKPT_DIR
    ckdir.mkdir(exist_ok=True)
    for old in ckdir.glob("epoch_*"):
        old.unlink()

    def on_epoch(epoch, model, rec):
        if every and epoch % every == 0:
            save_checkpoint(model, ckdir / f"epoch_{epoch:05d}", {"config_hash": cfg.hash, "epoch": epoch})

    res = train(model, ds, tcfg, const, ds.split("val"), monitors=monitors, on_epoch=on_epoch)
    save_checkpoint(res.model, out / "model", {"config_hash": cfg.hash, "best_epoch": res.best_epoch})
    cols = list(res.trace.records[0]) if res.trace.records else ["epoch"]
    _write_csv(out / "trace.csv", cfg, cols, ([r[c] for c in cols] for r in res.trace.records))
    summary = _stamp(cfg, {
        "stage": "train",
        "best_epoch": res.best_epoch,
        "stop_reason": res.stop_reason,
        "epochs_run": len(res.trace.records),
        "train_config": {k: v for k, v in vars(tcfg).items()},
        "arch": cfg.arch().to_dict(),
        "dtype": "float64" if deterministic else "float32",
    })
    write_json(out / "train.json", summary)
    return summary


def _test_view(cfg: ExperimentConfig):
    tx, rx = _load_traces(cfg)
    ds = _dataset(cfg, tx, rx)
    return ds.split("test")


def _raw_centre(split, memory: int) -> np.ndarray:
    c = split.inputs[:, memory]
    return c[:, 0] + 1j * c[:, 1]


def cmd_evaluate(cfg: ExperimentConfig, deterministic: bool = True) -> dict:
    """Metrics per epoch checkpoint plus a scatter CSV of the final equalizer output.

    Without a trained model the raw received test symbols are evaluated.
    """
    out = _out(cfg)
    const = cfg.constellation
    test = _test_view(cfg)
    tx = test.target_symbols
    ckpts = sorted((out / CKPT_DIR).glob("epoch_*.json"))
    rows = []
    for path in ckpts:
        model = load_checkpoint(path)
        rx_eq, _ = equalized_symbols(model, test, const)
        rep = MetricsReport.from_symbols(rx_eq, tx, const)
        epoch = read_json(path)["extra"]["epoch"]
        rows.append([epoch, rep.ber, rep.q_db, rep.evm_fraction, rep.snr_db, rep.mi_bits])
    _write_csv(out / "evaluate_epochs.csv", cfg, ["epoch", "ber", "q_db", "evm_fraction", "snr_db", "mi_bits"], rows)
    if (out / "model.json").exists():
        rx_eq, _ = equalized_symbols(load_checkpoint(out / "model"), test, const)
        source = "model"
    else:
        rx_eq = _raw_centre(test, cfg.memory)
        source = "unequalized"
    rep = MetricsReport.from_symbols(rx_eq, tx, const)
    _write_csv(out / "scatter.csv", cfg, ["re", "im", "tx_label"],
               zip(rx_eq.real.tolist(), rx_eq.imag.tolist(), test.targets_class.tolist()))
    summary = _stamp(cfg, {"stage": "evaluate", "source": source, "test_symbols": len(test),
                           "metrics": rep.to_dict(), "epoch_checkpoints": len(rows)})
    write_json(out / "evaluate.json", summary)
    return summary


def cmd_audit(cfg: ExperimentConfig, deterministic: bool = True) -> dict:
    """Periodicity, PRBS gain, jail-window and overfitting diagnostics."""
    out = _out(cfg)
    a = cfg.raw.get("audit", {})
    const = cfg.constellation
    tx, _ = _load_traces(cfg)
    rep = AuditReport()
    max_lag = a.get("max_lag", tx.shape[0] // 2)
    per = autocorr_period(tx, max_lag=max_lag)
    rep.detected_period_symbols = per.period
    if per.period is not None:
        rep.notes.append(f"TX repeats every {per.period} symbols (correlation {per.peak:.3f})")
    src = cfg.raw["source"]
    if src["kind"] == "prbs_lfsr" and src.get("prbs_order"):
        bound = symbol_periodicity(src["prbs_order"], 2 * const.bits_per_symbol)
        rep.notes.append(f"PRBS order {src['prbs_order']} repeats within about {bound} dual-pol symbols")
        if cfg.raw["n_symbols"] > bound:
            rep.notes.append("trace is longer than the PRBS period")
    if cfg.raw.get("dac"):
        d = cfg.raw["dac"]
        p = dac_effective_symbols(d["mem_samples"], d["frames"], d["dac_rate_gsps"], cfg.shaping().symbol_rate_gbd)
        rep.notes.append(f"DAC memory holds {p} unique symbols")

    test = _test_view(cfg)
    if (out / "model.json").exists():
        rx_eq, _ = equalized_symbols(load_checkpoint(out / "model"), test, const)
    else:
        rx_eq = _raw_centre(test, cfg.memory)
    jw = jail_window_detect(rx_eq, test.target_symbols, const, kappa=a.get("kappa", 1.0),
                            gap_threshold_db=a.get("gap_threshold_db", 2.0))
    rep.jail_window = {k: getattr(jw, k) for k in ("flag", "q_gap_db", "q_est_db", "q_counted_db", "excess_kurtosis")}
    if cfg.raw["mode"] == "b2b" and (out / "model.json").exists():
        q = MetricsReport.from_symbols(rx_eq, test.target_symbols, const).q_db
        rep.prbs_gain_db = q - cfg.raw["b2b"]["target_q_db"]
    trace_csv = out / "trace.csv"
    if trace_csv.exists():
        with open(trace_csv) as fh:
            recs = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        if recs and "train_eval_q_db" in recs[0] and "test_q_db" in recs[0]:
            res = overfit_gap([float(r["train_eval_q_db"]) for r in recs], [float(r["test_q_db"]) for r in recs],
                              patience=a.get("patience", 5))
            rep.overfit_gap_db = res.final_gap_db
            if res.overfit:
                rep.notes.append(f"test Q peaked at epoch {res.test_peak_epoch} and declined while train Q rose")
    summary = _stamp(cfg, rep.to_dict())
    write_json(out / "audit.json", summary)
    return summary


def cmd_complexity(cfg: ExperimentConfig, deterministic: bool = True) -> dict:
    """Cost of the configured topology; latency only when requested."""
    out = _out(cfg)
    rep = ComplexityReport.build(cfg.topology(), cfg.quant(), cfg.constellation.order)
    n_lat = cfg.raw.get("complexity", {}).get("latency_symbols", 0)
    if n_lat:
        path = out / "model"
        model = load_checkpoint(path) if path.with_suffix(".json").exists() else \
            build_model(cfg.arch(), np.random.default_rng(cfg.seeds["init"]))
        rep.latency_s_per_symbol = latency_bench(model, n_lat)
        rep.machine = machine_descriptor()
    summary = _stamp(cfg, rep.to_dict())
    write_json(out / "complexity.json", summary)
    return summary


def cmd_report(cfg: ExperimentConfig, deterministic: bool = True) -> dict:
    """Reference tables as CSV plus a summary of the stage outputs present."""
    out = _out(cfg)
    bits = 2 * cfg.constellation.bits_per_symbol
    _write_csv(out / "table_periodicity.csv", cfg, ["prbs_order", "bits_per_symbol", "period_symbols"],
               ([o, bits, symbol_periodicity(o, bits)] for o in range(16, 35, 2)))
    _write_csv(out / "table_complexity.csv", cfg, ["kind", "n_s", "hidden", "rmps", "params"],
               ([s.kind, s.n_s, "/".join(map(str, s.hidden)), rmps(s), param_count(s)] for s in reference_specs()))
    stages = {}
    for name in ("simulate", "train", "evaluate", "audit", "complexity"):
        p = out / f"{name}.json"
        if p.exists():
            stages[name] = read_json(p)
    summary = _stamp(cfg, {"stage": "report", "stages": stages})
    write_json(out / "report.json", summary)
    return summary


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "audit": cmd_audit,
    "complexity": cmd_complexity,
    "report": cmd_report,
}


def _parse_overrides(items: list[str]) -> dict:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--seed-override expects K=V, got {item!r}")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            raise ConfigError(f"seed {key!r} must be an integer") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqlab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed-override", action="append", default=[], metavar="K=V",
                   help="replace one of the data/noise/init/shuffle seeds (repeatable)")
    p.add_argument("--out", help="output directory (overrides 'outputs')")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="float64 training for bit-identical reruns (default on)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(path, overrides=None, out=None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(raw, overrides, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, _parse_overrides(args.seed_override), args.out)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](cfg, args.deterministic)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
