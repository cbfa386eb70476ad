"""Adversarial loss pieces shared by the multi-domain model and the single GAN."""

from __future__ import annotations

import math

import numpy as np

from . import nn
from .errors import DataError
from .nn import Mlp, add_grads, backward, forward, input_gradient, input_gradient_backward
from .rng import make_rng

LOG_FLOOR = 1e-8


def log_sigmoid(s: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -s)


def clamped_log_sig(s):
    """log(max(sigmoid(s), 1e-8)) and its derivative (zero where clamped)."""
    raw = log_sigmoid(s)
    ok = raw > math.log(LOG_FLOOR)
    return np.where(ok, raw, math.log(LOG_FLOOR)), np.where(ok, 1.0 - nn.sigmoid(s), 0.0)


def clamped_log_one_minus_sig(s):
    raw = log_sigmoid(-s)
    ok = raw > math.log(LOG_FLOOR)
    return np.where(ok, raw, math.log(LOG_FLOOR)), np.where(ok, -nn.sigmoid(s), 0.0)


def critic_loss(net: Mlp, real_in, fake_in, flavor="vanilla", beta=10.0, rng=None, u=None, need_grads=True):
    """Discriminator loss on raw scores and its parameter gradient.

    vanilla: -(mean log sig(D(real)) + mean log(1 - sig(D(fake))))
    wgan_gp: -(mean D(real) - mean D(fake)) + beta * mean (||grad_x D(xbar)|| - 1)^2,
             xbar = u * real + (1 - u) * fake with one u ~ U(0, 1) per pair.
    """
    if len(real_in) == 0 or len(fake_in) == 0:
        raise DataError("empty batch")
    s_r, t_r = forward(net, real_in)
    s_f, t_f = forward(net, fake_in)
    if flavor == "vanilla":
        lr_, dr = clamped_log_sig(s_r)
        lf, df = clamped_log_one_minus_sig(s_f)
        loss = -(lr_.mean() + lf.mean())
        ds_r, ds_f = -dr / len(s_r), -df / len(s_f)
    else:
        if len(s_r) != len(s_f):
            raise DataError(f"gradient penalty needs paired batches, got {len(s_r)} real vs {len(s_f)} fake")
        loss = -(s_r.mean() - s_f.mean())
        ds_r = np.full_like(s_r, -1.0 / len(s_r))
        ds_f = np.full_like(s_f, 1.0 / len(s_f))
        if u is None:
            u = make_rng(rng if rng is not None else 0).random((len(s_r), 1))
        u = np.asarray(u, dtype=np.float64).reshape(-1, 1)
        xbar = u * real_in + (1.0 - u) * fake_in
        g, tape2 = input_gradient(net, xbar)
        norm = np.linalg.norm(g, axis=1)
        loss = loss + beta * np.mean((norm - 1.0) ** 2)
    if not need_grads:
        return float(loss), None
    grads = add_grads(backward(net, t_r, ds_r)[0], backward(net, t_f, ds_f)[0])
    if flavor != "vanilla":
        coef = np.where(norm > 0, (norm - 1.0) / np.where(norm > 0, norm, 1.0), 0.0)
        dg = (2.0 * beta / len(norm)) * coef[:, None] * g
        grads = add_grads(grads, input_gradient_backward(net, tape2, dg))
    return float(loss), grads


def generator_adv(s: np.ndarray, flavor="vanilla", saturating=False):
    """Generator-side adversarial value and dValue/dscore for fake scores ``s``."""
    k = len(s)
    if flavor == "wgan_gp":
        return float(-s.mean()), np.full_like(s, -1.0 / k)
    if saturating:
        v, d = clamped_log_one_minus_sig(s)
        return float(v.mean()), d / k
    v, d = clamped_log_sig(s)
    return float(-v.mean()), -d / k
