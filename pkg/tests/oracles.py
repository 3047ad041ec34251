"""Reference computations shared by the unit and acceptance tests."""
import math

import numpy as np

from eqlab.constellation import qam
from eqlab.data import BitSource, EvalSet, generate_symbols
from eqlab.nn import BiLstmArch, MlpArch, build_model
from eqlab.nn.losses import LOSSES, loss_l2
from eqlab.nn.train import TrainConfig, _batch_loss

H = 1e-6
TOL = 1e-5

# MLP3 and biLSTM, MSE and CEL, with and without L2
CONFIGS_FD = [
    ("mlp", "mse", 0.0),
    ("mlp", "mse", 1e-2),
    ("mlp", "categorical_cel", 0.0),
    ("mlp", "categorical_cel", 1e-2),
    ("bilstm", "mse", 0.0),
    ("bilstm", "mse", 1e-2),
    ("bilstm", "categorical_cel", 0.0),
    ("bilstm", "categorical_cel", 1e-2),
]


def small_model(kind, loss, seed):
    task = "classification" if loss == "categorical_cel" else "regression"
    n_out = 4 if task == "classification" else 2
    if kind == "mlp":
        arch = MlpArch(memory=1, hidden=(8, 6, 5), n_out=n_out, task=task)
    else:
        arch = BiLstmArch(memory=1, hidden_units=4, n_out=n_out, task=task)
    model = build_model(arch, np.random.default_rng(seed))
    assert model.n_params() <= 500
    return model


def batch_for(model, seed, b=6):
    g = np.random.default_rng(seed + 100)
    a = model.arch
    x = g.standard_normal((b, a.window, a.n_features))
    reg = g.standard_normal((b, 2))
    cls = g.integers(0, max(a.n_out, 2), b)
    return EvalSet(x, reg, cls)


def loss_ld(model, params, batch, loss, lam):
    """Loss of ``model`` at ``params`` in extended precision."""
    ld = {k: v.astype(np.longdouble) for k, v in params.items()}
    saved = model.params
    model.params = ld
    try:
        out = model.forward(batch.inputs.astype(np.longdouble), keep=False)
    finally:
        model.params = saved
    if loss == "mse":
        value, _ = LOSSES["mse"](out, batch.targets_regression.astype(np.longdouble))
    else:
        value, _ = LOSSES["categorical_cel"](out, batch.targets_class)
    value, _ = loss_l2(value, ld, lam)
    return value


def _check_dtype_support(model):
    # the oracle needs a forward pass that keeps long double end to end
    x = np.zeros((1, model.arch.window, model.arch.n_features), np.longdouble)
    saved = model.params
    model.params = {k: v.astype(np.longdouble) for k, v in saved.items()}
    try:
        return model.forward(x, keep=False).dtype == np.longdouble
    finally:
        model.params = saved


def awgn(tx, snr_db, seed=0):
    g = np.random.default_rng(seed)
    es = np.mean(np.abs(tx) ** 2)
    s = np.sqrt(es * 10 ** (-snr_db / 10) / 2)
    return tx + s * (g.standard_normal(tx.shape) + 1j * g.standard_normal(tx.shape))


def random_points(n, order=16, seed=0):
    c = qam(order)
    return c, c.points[np.random.default_rng(seed).integers(0, order, n)]


def awgn_mi_quadrature(constellation, sigma2, deg=40):
    """MI of the AWGN channel with uniform inputs by 2-D Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite.hermgauss(deg)
    s = np.sqrt(sigma2 / 2)
    nr, ni = np.meshgrid(np.sqrt(2) * s * x, np.sqrt(2) * s * x, indexing="ij")
    ww = np.outer(w, w) / np.pi
    n = (nr + 1j * ni).reshape(-1)
    ww = ww.reshape(-1)
    pts = constellation.points
    total = 0.0
    for xi in pts:
        d = np.abs(xi + n[:, None] - pts[None, :]) ** 2 - np.abs(n[:, None]) ** 2
        total += np.sum(ww * np.log2(np.sum(np.exp(-d / sigma2), axis=1)))
    return math.log2(len(pts)) - total / len(pts)


def line_cluster(c, n=20_000, frac=0.03, shift=1.1, sigma=0.02, seed=0):
    """Tight clusters plus a minority pushed along a grid line past the decision edge."""
    g = np.random.default_rng(seed)
    tx = generate_symbols(BitSource(seed=seed + 1), c, n)[:, 0]
    step = np.min(np.abs(np.diff(np.unique(c.points.real))))
    rx = tx.copy()
    sel = g.random(n) < frac
    rx[sel] += g.choice([-1.0, 1.0], sel.sum()) * shift * step
    rx += sigma * (g.standard_normal(n) + 1j * g.standard_normal(n))
    return rx, tx


def awgn_cluster(c, snr_db, n=20_000, seed=0):
    g = np.random.default_rng(seed)
    tx = generate_symbols(BitSource(seed=seed + 1), c, n)[:, 0]
    s = 10 ** (-snr_db / 20) / math.sqrt(2)
    return tx + s * (g.standard_normal(n) + 1j * g.standard_normal(n)), tx


def fd_worst_relative_error(kind, loss, lam, seed):
    """Largest relative gap between backprop and an extended-precision central difference."""
    model = small_model(kind, loss, seed)
    batch = batch_for(model, seed)
    _, grads = _batch_loss(model, batch, TrainConfig(loss=loss, l2_lambda=lam))
    base = {k: v.copy() for k, v in model.params.items()}
    worst = 0.0
    for name, p in base.items():
        for idx in np.ndindex(p.shape):
            plus = {k: v.copy() for k, v in base.items()}
            minus = {k: v.copy() for k, v in base.items()}
            plus[name][idx] += H
            minus[name][idx] -= H
            num = (loss_ld(model, plus, batch, loss, lam) - loss_ld(model, minus, batch, loss, lam)) / (
                np.longdouble(plus[name][idx]) - np.longdouble(minus[name][idx]))
            ana = grads[name][idx]
            worst = max(worst, abs(ana - float(num)) / (abs(ana) + 1e-8))
    return worst
