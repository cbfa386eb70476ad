"""A standard single-dataset GAN on the same network machinery.

Used for the target-only baseline (noise -> target rows, no auxiliary data)
and for the two-dimensional toy experiments where the noise source itself is
the object of study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nn
from .domains import Dataset, DomainSchema
from .errors import ConfigError, DataError, TrainingDivergedError
from .losses import critic_loss, generator_adv
from .model import HiddenConfig, TrainConfig
from .nn import Mlp, adam_step, backward, forward
from .rng import derive_seed, make_rng, normal

NoiseFn = Callable[[np.random.Generator, int], np.ndarray]


def gaussian_noise(dim: int) -> NoiseFn:
    return lambda rng, k: normal(rng, (k, dim))


def _head(raw: np.ndarray, mask: np.ndarray | None):
    if mask is None or not mask.any():
        return raw, np.ones_like(raw)
    s = nn.sigmoid(raw)
    return np.where(mask, s, raw), np.where(mask, s * (1.0 - s), 1.0)


def train_gan(
    generator: Mlp,
    discriminator: Mlp,
    real: np.ndarray,
    noise: NoiseFn,
    cfg: TrainConfig,
    cond: np.ndarray | None = None,
    sigmoid_mask: np.ndarray | None = None,
) -> tuple[Mlp, Mlp, list[tuple[float, float]]]:
    """Fit ``generator`` so that ``generator(noise[, cond])`` matches ``real``.

    With ``cond`` (one row per real row) the generator and discriminator both
    see the condition appended to their input; fake conditions are drawn from
    the empirical condition rows. Returns (generator, discriminator, [(d_loss, g_loss)]).
    """
    real = np.asarray(real, dtype=np.float64)
    n = real.shape[0]
    if n == 0:
        raise DataError("empty training data")
    rng = make_rng(cfg.seed)
    d_state = nn.AdamState.for_net(discriminator, cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2)
    g_state = nn.AdamState.for_net(generator, cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2)

    def batch(k):
        idx = rng.choice(n, size=k, replace=k > n)
        return real[idx], (None if cond is None else cond[idx])

    def with_cond(a, c):
        return a if c is None else np.hstack([a, c])

    def fake(k, c):
        z = noise(rng, k)
        raw, tape = forward(generator, with_cond(z, c))
        out, dhead = _head(raw, sigmoid_mask)
        return out, tape, dhead

    history = []
    for it in range(cfg.iterations):
        d_state.learning_rate = cfg.lr_d * cfg.lr_scale(it)
        g_state.learning_rate = cfg.lr_g * cfg.lr_scale(it)
        for _ in range(cfg.d_steps):
            xr, cr = batch(cfg.k_d)
            _, cf = batch(cfg.k_d)
            xf = fake(cfg.k_d, cf)[0]
            d_loss, grads = critic_loss(
                discriminator, with_cond(xr, cr), with_cond(xf, cf), cfg.loss_flavor, cfg.beta, rng=rng
            )
            discriminator, d_state = adam_step(discriminator, d_state, grads)
        _, cf = batch(cfg.k_g)
        xf, g_tape, dhead = fake(cfg.k_g, cf)
        s, d_tape = forward(discriminator, with_cond(xf, cf))
        g_loss, ds = generator_adv(s, cfg.loss_flavor, cfg.saturating)
        if not (math.isfinite(d_loss) and math.isfinite(g_loss)):
            raise TrainingDivergedError(it, {"d_loss": d_loss, "g_loss": g_loss})
        _, dx = backward(discriminator, d_tape, ds)
        grads, _ = backward(generator, g_tape, dx[:, : xf.shape[1]] * dhead)
        generator, g_state = adam_step(generator, g_state, grads)
        history.append((d_loss, g_loss))
    return generator, discriminator, history


@dataclass
class TargetGan:
    generator: Mlp
    discriminator: Mlp
    schema: DomainSchema
    mode: str
    noise_dim: int
    label_freq: np.ndarray | None  # class frequencies (discrete mode)

    def sigmoid_mask(self) -> np.ndarray:
        mask = self.schema.binary_mask
        if self.mode == "continuous":
            mask = np.append(mask, self.schema.label_kind == "discrete")
        return mask

    def sample(self, n: int, rng) -> Dataset:
        rng = make_rng(rng)
        if self.mode == "discrete":
            k = self.label_freq.size
            y = np.searchsorted(np.cumsum(self.label_freq), rng.random(n), side="right")
            y = np.minimum(y, k - 1)
            c = np.zeros((n, k))
            c[np.arange(n), y] = 1.0
            z = np.hstack([normal(rng, (n, self.noise_dim)), c])
            x, _ = _head(forward(self.generator, z)[0], self.sigmoid_mask())
            return Dataset(self.schema, x, y, np.full(n, -1))
        out, _ = _head(forward(self.generator, normal(rng, (n, self.noise_dim)))[0], self.sigmoid_mask())
        d = self.schema.dim
        schema = self.schema
        if schema.label_kind == "discrete":
            schema = DomainSchema(schema.domain_id, schema.features, "continuous", None)
        return Dataset(schema, out[:, :d], out[:, d], np.full(n, -1))


def train_target_only_gan(
    data: Dataset,
    cfg: TrainConfig,
    mode: str | None = None,
    latent_dim: int | None = None,
    hidden: HiddenConfig | None = None,
) -> TargetGan:
    """Standard GAN on one dataset: Gaussian noise -> (x, y), or x | y in discrete mode."""
    schema = data.schema
    mode = mode or schema.label_kind
    if mode == "discrete" and schema.label_kind != "discrete":
        raise ConfigError("discrete mode needs discrete labels")
    hidden = hidden or HiddenConfig()
    noise_dim = latent_dim or schema.dim
    seed = cfg.seed
    if mode == "discrete":
        k = schema.num_classes
        cond = np.zeros((data.n, k))
        cond[np.arange(data.n), data.y] = 1.0
        real = data.x
        label_freq = np.bincount(data.y, minlength=k) / data.n
        g_in, g_out, d_in = noise_dim + k, schema.dim, schema.dim + k
    else:
        cond, label_freq = None, None
        real = np.hstack([data.x, data.y.astype(np.float64)[:, None]])
        g_in, g_out, d_in = noise_dim, schema.dim + 1, schema.dim + 1
    gen = nn.xavier_init([g_in, *hidden.decoder, g_out], [hidden.activation] * len(hidden.decoder) + ["identity"],
                         derive_seed(seed, 10))
    dis = nn.xavier_init([d_in, *hidden.discriminator, 1],
                         [hidden.discriminator_activation] * len(hidden.discriminator) + ["identity"],
                         derive_seed(seed, 11))
    tg = TargetGan(gen, dis, schema, mode, noise_dim, label_freq)
    gen, dis, _ = train_gan(gen, dis, real, gaussian_noise(noise_dim), cfg, cond, tg.sigmoid_mask())
    tg.generator, tg.discriminator = gen, dis
    return tg
