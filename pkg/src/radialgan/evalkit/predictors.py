"""Downstream binary classifiers: logistic regression and a two-hidden-layer perceptron."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..domains import Normalizer
from ..errors import ConfigError, DataError
from ..nn import Layer, Mlp, adam_step, backward, forward
from ..rng import make_rng


@dataclass
class PredictorConfig:
    kind: str = "logistic_regression"  # or "mlp2"
    hidden: list[int] = field(default_factory=lambda: [32, 16])
    lr: float = 0.01
    max_epochs: int = 5000
    grad_tol: float = 1e-6
    mlp_lr: float = 1e-3
    mlp_epochs: int = 200
    batch_size: int = 64

    def __post_init__(self):
        if self.kind not in ("logistic_regression", "mlp2"):
            raise ConfigError(f"unknown predictor kind {self.kind!r}")


@dataclass
class Predictor:
    kind: str
    net: Mlp  # outputs a logit
    normalizer: Normalizer

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return nn.sigmoid(forward(self.net, self.normalizer.apply(x))[0][:, 0])


def _fit_minmax(x: np.ndarray) -> Normalizer:
    return Normalizer(x.min(axis=0), x.max(axis=0), np.ones(x.shape[1], dtype=bool))


def fit_predictor(kind, train, seed: int = 0, config: PredictorConfig | None = None) -> Predictor:
    """Fit on ``train`` (anything with ``x`` and ``y``; y may be soft labels in [0, 1]).

    logistic_regression: zero-initialised linear logit, full-batch Adam on
    cross-entropy until the gradient norm drops below ``grad_tol`` or
    ``max_epochs``. mlp2: two tanh hidden layers, minibatch Adam.
    """
    cfg = config or PredictorConfig(kind=kind)
    if kind != cfg.kind:
        cfg = PredictorConfig(**{**cfg.__dict__, "kind": kind})
    x = np.asarray(train.x, dtype=np.float64)
    y = np.asarray(train.y, dtype=np.float64)
    if np.any((y < 0) | (y > 1)):
        raise DataError("predictor labels must lie in [0, 1]")
    hard = np.round(y)
    if hard.min() == hard.max():
        raise DataError("training labels contain a single class")
    norm = _fit_minmax(x)
    xn = norm.apply(x)
    d = x.shape[1]
    rng = make_rng(seed)
    if cfg.kind == "logistic_regression":
        net = Mlp([Layer(np.zeros((1, d)), np.zeros(1), "identity")])
        state = nn.AdamState.for_net(net, cfg.lr, 0.9, 0.999)
        for _ in range(cfg.max_epochs):
            p, tape = forward(net, xn)
            grads, _ = backward(net, tape, (nn.sigmoid(p) - y[:, None]) / len(y))
            gnorm = np.sqrt(sum(float((gw**2).sum() + (gb**2).sum()) for gw, gb in grads))
            if gnorm < cfg.grad_tol:
                break
            net, state = adam_step(net, state, grads)
        return Predictor(cfg.kind, net, norm)

    dims = [d, *cfg.hidden, 1]
    net = nn.xavier_init(dims, ["tanh"] * len(cfg.hidden) + ["identity"], rng)
    state = nn.AdamState.for_net(net, cfg.mlp_lr, 0.9, 0.999)
    n = len(y)
    for _ in range(cfg.mlp_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            p, tape = forward(net, xn[idx])
            grads, _ = backward(net, tape, (nn.sigmoid(p) - y[idx, None]) / len(idx))
            net, state = adam_step(net, state, grads)
    return Predictor(cfg.kind, net, norm)
