"""Multi-domain translation through a shared latent space.

Each domain ``i`` owns an encoder ``F_i`` (features + label -> latent), a
decoder ``G_i`` (latent -> features, conditioned on the label in discrete
mode) and a discriminator ``D_i``. Translation ``j -> i`` is ``G_i(F_j(.))``.
Training alternates discriminator updates with a joint encoder/decoder update
on the generator-side adversarial terms plus lambda times both cycle terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .config import from_dict, to_dict
from .domains import Dataset, DomainSchema
from .errors import ConfigError, DataError, SchemaError, TrainingDivergedError
from .losses import critic_loss, generator_adv
from .nn import Mlp, adam_step, add_grads, backward, forward
from .rng import derive_seed, make_rng

CHECKPOINT_VERSION = 1


@dataclass
class HiddenConfig:
    encoder: list[int] = field(default_factory=lambda: [32])
    decoder: list[int] = field(default_factory=lambda: [32])
    discriminator: list[int] = field(default_factory=lambda: [32])
    activation: str = "tanh"
    discriminator_activation: str = "tanh"
    latent_activation: str = "identity"


@dataclass
class TrainConfig:
    iterations: int = 2000
    lambda_cyc: float = 1.0
    loss_flavor: str = "vanilla"  # "vanilla" or "wgan_gp"
    beta: float = 10.0
    k_d: int = 64
    k_g: int = 64
    d_steps_per_g_step: int | None = None  # None: 1 for vanilla, 5 for wgan_gp
    lr_d: float = 1e-3
    lr_g: float = 1e-3
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    lr_schedule: str = "constant"  # or "linear": decay to zero over the run
    saturating: bool = False
    early_stop: bool = False
    early_stop_window: int = 100
    early_stop_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.loss_flavor not in ("vanilla", "wgan_gp"):
            raise ConfigError(f"unknown loss_flavor {self.loss_flavor!r}")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.lambda_cyc <= 0 or self.beta <= 0:
            raise ConfigError("lambda_cyc and beta must be positive")
        if self.k_d < 1 or self.k_g < 1 or self.lr_d <= 0 or self.lr_g <= 0:
            raise ConfigError("batch sizes and learning rates must be positive")
        if self.d_steps_per_g_step is not None and self.d_steps_per_g_step < 1:
            raise ConfigError("d_steps_per_g_step must be >= 1")
        if self.lr_schedule not in ("constant", "linear"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")

    @property
    def d_steps(self) -> int:
        if self.d_steps_per_g_step is not None:
            return self.d_steps_per_g_step
        return 5 if self.loss_flavor == "wgan_gp" else 1

    def lr_scale(self, iteration: int) -> float:
        if self.lr_schedule == "constant":
            return 1.0
        return 1.0 - iteration / max(self.iterations, 1)


@dataclass
class RadialGanModel:
    schemas: list[DomainSchema]
    mode: str
    latent_dim: int
    encoders: list[Mlp]
    decoders: list[Mlp]
    discriminators: list[Mlp]
    hidden: HiddenConfig = field(default_factory=HiddenConfig)
    seed: int = 0

    @property
    def num_domains(self) -> int:
        return len(self.schemas)

    @property
    def num_classes(self) -> int | None:
        return self.schemas[0].num_classes

    @property
    def label_width(self) -> int:
        return 1 if self.mode == "continuous" else self.num_classes

    def output_width(self, i: int) -> int:
        return self.schemas[i].dim + (1 if self.mode == "continuous" else 0)

    def sigmoid_columns(self, i: int) -> np.ndarray:
        mask = self.schemas[i].binary_mask
        if self.mode == "continuous":
            mask = np.append(mask, self.schemas[i].label_kind == "discrete")
        return mask

    # --- input assembly
    def onehot(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        out = np.zeros((y.size, self.num_classes))
        out[np.arange(y.size), y] = 1.0
        return out

    def encoder_input(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.mode == "continuous":
            return np.hstack([x, np.asarray(y, dtype=np.float64)[:, None]])
        return np.hstack([x, self.onehot(y)])

    def decoder_input(self, w: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.mode == "continuous":
            return w
        return np.hstack([w, self.onehot(y)])

    def condition(self, out: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Decoder output -> encoder/discriminator input (appends one-hot y in discrete mode)."""
        if self.mode == "continuous":
            return out
        return np.hstack([out, self.onehot(y)])

    def head(self, i: int, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mask = self.sigmoid_columns(i)
        if not mask.any():
            return raw, np.ones_like(raw)
        s = nn.sigmoid(raw)
        return np.where(mask, s, raw), np.where(mask, s * (1.0 - s), 1.0)

    # --- plain evaluation
    def encode(self, j: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return forward(self.encoders[j], self.encoder_input(x, y))[0]

    def decode(self, i: int, w: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.head(i, forward(self.decoders[i], self.decoder_input(w, y))[0])[0]

    def discriminate(self, i: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Raw critic score of real-format rows ``(x, y)`` for domain ``i``."""
        return forward(self.discriminators[i], self.encoder_input(x, y))[0][:, 0]

    def copy(self) -> "RadialGanModel":
        return RadialGanModel(
            list(self.schemas), self.mode, self.latent_dim,
            [n.copy() for n in self.encoders], [n.copy() for n in self.decoders],
            [n.copy() for n in self.discriminators], self.hidden, self.seed,
        )


def build_model(
    schemas: list[DomainSchema],
    mode: str | None = None,
    latent_dim: int | None = None,
    hidden: HiddenConfig | None = None,
    seed: int = 0,
) -> RadialGanModel:
    if len(schemas) < 2:
        raise ConfigError(f"need at least 2 domains, got {len(schemas)}")
    kinds = {(s.label_kind, s.num_classes) for s in schemas}
    if len(kinds) != 1:
        raise SchemaError(f"schemas disagree on label kind: {sorted(map(str, kinds))}")
    label_kind, k = kinds.pop()
    if mode is None:
        mode = label_kind
    if mode == "discrete" and label_kind != "discrete":
        raise ConfigError("discrete mode needs discrete labels")
    if mode == "continuous" and label_kind == "discrete" and k != 2:
        raise ConfigError("continuous mode can only carry continuous or binary labels")
    if mode not in ("continuous", "discrete"):
        raise ConfigError(f"unknown mode {mode!r}")
    hidden = hidden or HiddenConfig()
    if hidden.discriminator_activation not in nn.PENALTY_SAFE:
        raise ConfigError(
            f"discriminator activation {hidden.discriminator_activation!r} unsupported on the gradient-penalty path"
        )
    if latent_dim is None:
        latent_dim = max(s.dim for s in schemas)
    if latent_dim < 1:
        raise ConfigError("latent_dim must be positive")
    lw = 1 if mode == "continuous" else k
    cond = 0 if mode == "continuous" else k
    enc, dec, dis = [], [], []
    for i, s in enumerate(schemas):
        out_w = s.dim + (1 if mode == "continuous" else 0)
        h = hidden.encoder
        enc.append(nn.xavier_init([s.dim + lw, *h, latent_dim],
                                  [hidden.activation] * len(h) + [hidden.latent_activation],
                                  derive_seed(seed, 0, i)))
        h = hidden.decoder
        dec.append(nn.xavier_init([latent_dim + cond, *h, out_w],
                                  [hidden.activation] * len(h) + ["identity"],
                                  derive_seed(seed, 1, i)))
        h = hidden.discriminator
        dis.append(nn.xavier_init([s.dim + lw, *h, 1],
                                  [hidden.discriminator_activation] * len(h) + ["identity"],
                                  derive_seed(seed, 2, i)))
    return RadialGanModel(list(schemas), mode, latent_dim, enc, dec, dis, hidden, seed)


# ---------------------------------------------------------------- mixture sampling

def mixture_weights(i: int, sample_counts) -> np.ndarray:
    """alpha_ij = n_j / sum_{k != i} n_k; entry i is NaN (undefined)."""
    n = np.asarray(sample_counts, dtype=np.float64)
    if n.size < 2 or np.any(n <= 0):
        raise ConfigError("mixture weights need >= 2 positive counts")
    rest = n.sum() - n[i]
    alpha = n / rest
    alpha[i] = np.nan
    return alpha


@dataclass
class MixtureDraw:
    source: int
    row: int
    x: np.ndarray
    y: float | int
    w: np.ndarray


@dataclass
class MixtureBatch:
    target: int
    source: np.ndarray
    rows: np.ndarray
    y: np.ndarray
    groups: list  # (j, positions, encoder input rows)
    w: np.ndarray | None = None

    def __len__(self) -> int:
        return self.source.size

    def draws(self, datasets: list[Dataset]) -> list[MixtureDraw]:
        if self.w is None:
            raise ValueError("batch was not encoded")
        return [
            MixtureDraw(int(j), int(r), datasets[j].x[r], datasets[j].y[r], self.w[k])
            for k, (j, r) in enumerate(zip(self.source, self.rows))
        ]


def draw_mixture_rows(i: int, counts, k: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Uniform rows of the pooled non-target datasets, as (source domain, row)."""
    counts = np.asarray(counts, dtype=np.int64)
    others = [j for j in range(counts.size) if j != i]
    offsets = np.cumsum([0] + [counts[j] for j in others])
    pooled = rng.integers(0, offsets[-1], size=k)
    slot = np.searchsorted(offsets, pooled, side="right") - 1
    source = np.asarray(others, dtype=np.int64)[slot]
    rows = pooled - offsets[slot]
    return source, rows


def mixture_batch(model: RadialGanModel, i: int, datasets: list[Dataset], source, rows) -> MixtureBatch:
    y = np.empty(source.size, dtype=datasets[0].y.dtype if model.mode == "discrete" else np.float64)
    groups = []
    for j in np.unique(source):
        pos = np.flatnonzero(source == j)
        d = datasets[j]
        y[pos] = d.y[rows[pos]]
        groups.append((int(j), pos, model.encoder_input(d.x[rows[pos]], d.y[rows[pos]])))
    return MixtureBatch(i, source, rows, y, groups)


def sample_mixture(model: RadialGanModel, i: int, datasets: list[Dataset], k: int, rng) -> MixtureBatch:
    if k < 1:
        raise ConfigError("k must be >= 1")
    source, rows = draw_mixture_rows(i, [d.n for d in datasets], k, rng)
    batch = mixture_batch(model, i, datasets, source, rows)
    batch.w = _encode_mixture(model, batch)
    return batch


def _encode_mixture(model: RadialGanModel, mix: MixtureBatch) -> np.ndarray:
    w = np.empty((len(mix), model.latent_dim))
    for j, pos, e in mix.groups:
        w[pos] = forward(model.encoders[j], e)[0]
    return w


# ---------------------------------------------------------------- losses

def _fake_rows(model: RadialGanModel, i: int, mix: MixtureBatch) -> np.ndarray:
    w = _encode_mixture(model, mix)
    return model.condition(model.decode(i, w, mix.y), mix.y)


def _real_rows(model: RadialGanModel, real) -> np.ndarray:
    x, y = real
    return model.encoder_input(x, y)


def _check_batch(real, mix):
    if len(real[0]) == 0 or len(mix) == 0:
        raise DataError("empty batch")


def discriminator_loss(model, i, real, mix, cfg: TrainConfig, rng=None, u=None, need_grads=True):
    """Discriminator-side loss for domain ``i`` and its gradient wrt D_i's parameters."""
    _check_batch(real, mix)
    return critic_loss(
        model.discriminators[i], _real_rows(model, real), _fake_rows(model, i, mix),
        cfg.loss_flavor, cfg.beta, rng=rng, u=u, need_grads=need_grads,
    )


def _unit_rows(diff: np.ndarray):
    norm = np.linalg.norm(diff, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    return norm, np.where(norm[:, None] > 0, diff / safe[:, None], 0.0)


def generator_terms(model: RadialGanModel, i: int, real, mix: MixtureBatch, cfg: TrainConfig, acc: dict | None = None):
    """Generator-side adversarial and cycle terms for target domain ``i``.

    Returns ``(adv, cyc_real, cyc_latent)``. When ``acc`` is given, gradients
    of ``adv + lambda * (cyc_real + cyc_latent)`` are accumulated into it,
    keyed by ``("F", j)`` / ``("G", j)``.
    """
    _check_batch(real, mix)
    lam = cfg.lambda_cyc
    F, G, D = model.encoders, model.decoders, model.discriminators
    width = model.output_width(i)
    k = len(mix)

    # mixture latents w = F_j(x_j, y_j)
    w = np.empty((k, model.latent_dim))
    src_tapes = []
    for j, pos, e in mix.groups:
        wj, tj = forward(F[j], e)
        w[pos] = wj
        src_tapes.append((j, pos, tj))
    raw, t_dec = forward(G[i], model.decoder_input(w, mix.y))
    out, dhead = model.head(i, raw)
    s, t_dis = forward(D[i], model.condition(out, mix.y))
    adv, ds = generator_adv(s, cfg.loss_flavor, cfg.saturating)

    # latent cycle ||w - F_i(G_i(w))||
    back, t_enc2 = forward(F[i], model.condition(out, mix.y))
    n2, u2 = _unit_rows(w - back)
    cyc_latent = float(n2.mean())

    # real cycle ||(x, y) - G_i(F_i(x, y))||
    x, y = real
    z1, t_enc1 = forward(F[i], model.encoder_input(x, y))
    raw1, t_dec1 = forward(G[i], model.decoder_input(z1, y))
    rec, dhead1 = model.head(i, raw1)
    target = model.encoder_input(x, y) if model.mode == "continuous" else x
    n1, u1 = _unit_rows(target - rec)
    cyc_real = float(n1.mean())

    if acc is None:
        return adv, cyc_real, cyc_latent

    _, dfake = backward(D[i], t_dis, ds)
    dout = dfake[:, :width]
    dd2 = lam * u2 / k
    g_enc2, denc2 = backward(F[i], t_enc2, -dd2)
    dout = dout + denc2[:, :width]
    g_dec, ddec = backward(G[i], t_dec, dout * dhead)
    dw = dd2 + ddec[:, : model.latent_dim]

    drec = -lam * u1 / len(n1)
    g_dec1, ddec1 = backward(G[i], t_dec1, drec * dhead1)
    g_enc1, _ = backward(F[i], t_enc1, ddec1[:, : model.latent_dim])

    _accumulate(acc, ("G", i), add_grads(g_dec, g_dec1))
    _accumulate(acc, ("F", i), add_grads(g_enc2, g_enc1))
    for j, pos, tj in src_tapes:
        _accumulate(acc, ("F", j), backward(F[j], tj, dw[pos])[0])
    return adv, cyc_real, cyc_latent


def _accumulate(acc: dict, key, grads) -> None:
    acc[key] = add_grads(acc.get(key), grads)


def generator_objective(model, reals, mixes, cfg: TrainConfig, need_grads=True):
    """Sum over domains of generator adversarial term + lambda * cycle terms."""
    acc = {} if need_grads else None
    breakdown = []
    for i in range(model.num_domains):
        adv, c1, c2 = generator_terms(model, i, reals[i], mixes[i], cfg, acc)
        breakdown.append((adv, c1 + c2))
    total = sum(a for a, _ in breakdown) + cfg.lambda_cyc * sum(c for _, c in breakdown)
    return total, acc, breakdown


def adversarial_loss_vanilla(model, i, real, mix, saturating=False) -> tuple[float, float]:
    cfg = TrainConfig(loss_flavor="vanilla", saturating=saturating)
    d_loss, _ = discriminator_loss(model, i, real, mix, cfg, need_grads=False)
    adv, _, _ = generator_terms(model, i, real, mix, cfg)
    return d_loss, adv


def adversarial_loss_wgan(model, i, real, mix, beta=10.0, rng=None, u=None) -> tuple[float, float]:
    cfg = TrainConfig(loss_flavor="wgan_gp", beta=beta)
    d_loss, _ = discriminator_loss(model, i, real, mix, cfg, rng=rng, u=u, need_grads=False)
    adv, _, _ = generator_terms(model, i, real, mix, cfg)
    return d_loss, adv


def cycle_loss(model, i, real, mix) -> float:
    _, c1, c2 = generator_terms(model, i, real, mix, TrainConfig())
    return c1 + c2


def reconstruction_error(model: RadialGanModel, i: int, d: Dataset) -> float:
    """Mean ||(x, y) - G_i(F_i(x, y))|| (y dropped from the norm in discrete mode)."""
    rec = model.decode(i, model.encode(i, d.x, d.y), d.y)
    target = model.encoder_input(d.x, d.y) if model.mode == "continuous" else d.x
    return float(np.linalg.norm(target - rec, axis=1).mean())


# ---------------------------------------------------------------- training

@dataclass
class TrainRecord:
    iteration: int
    adv_loss: list[float]
    cyc_loss: list[float]
    d_loss: list[float]
    total: float


@dataclass
class TrainTrace:
    records: list[TrainRecord] = field(default_factory=list)
    lambda_cyc: float = 1.0

    def __len__(self) -> int:
        return len(self.records)

    def rows(self):
        for r in self.records:
            for i, (a, c) in enumerate(zip(r.adv_loss, r.cyc_loss)):
                yield r.iteration, i, a, c, a + self.lambda_cyc * c

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,domain,adv_loss,cyc_loss,total\n")
            for it, i, a, c, t in self.rows():
                fh.write(f"{it},{i},{a!r},{c!r},{t!r}\n")


def _check_datasets(model: RadialGanModel, datasets: list[Dataset]) -> None:
    if len(datasets) != model.num_domains:
        raise DataError(f"{len(datasets)} datasets for {model.num_domains} domains")
    for i, (d, s) in enumerate(zip(datasets, model.schemas)):
        if d.schema.names != s.names:
            raise SchemaError(f"dataset {i} does not match schema {s.domain_id!r}")
        if d.n == 0:
            raise DataError(f"dataset {i} is empty")


def _real_batch(d: Dataset, k: int, rng):
    idx = rng.choice(d.n, size=k, replace=k > d.n)
    return d.x[idx], d.y[idx]


def train(model: RadialGanModel, datasets: list[Dataset], cfg: TrainConfig, callback=None):
    """Alternating discriminator / encoder-decoder updates. Returns (model, trace)."""
    _check_datasets(model, datasets)
    model = model.copy()
    trace = TrainTrace(lambda_cyc=cfg.lambda_cyc)
    if cfg.iterations == 0:
        return model, trace
    M = model.num_domains
    rng = make_rng(cfg.seed)
    counts = [d.n for d in datasets]

    def opt(net, lr):
        return nn.AdamState.for_net(net, lr, cfg.adam_beta1, cfg.adam_beta2)

    d_states = [opt(n, cfg.lr_d) for n in model.discriminators]
    f_states = [opt(n, cfg.lr_g) for n in model.encoders]
    g_states = [opt(n, cfg.lr_g) for n in model.decoders]
    totals = []
    for it in range(cfg.iterations):
        scale = cfg.lr_scale(it)
        for st in d_states:
            st.learning_rate = cfg.lr_d * scale
        for st in f_states + g_states:
            st.learning_rate = cfg.lr_g * scale
        d_losses = [0.0] * M
        for _ in range(cfg.d_steps):
            for i in range(M):
                real = _real_batch(datasets[i], cfg.k_d, rng)
                src, rows = draw_mixture_rows(i, counts, cfg.k_d, rng)
                mix = mixture_batch(model, i, datasets, src, rows)
                d_loss, grads = discriminator_loss(model, i, real, mix, cfg, rng=rng)
                if not math.isfinite(d_loss):
                    raise TrainingDivergedError(it, {"domain": i, "d_loss": d_loss})
                d_losses[i] = d_loss
                model.discriminators[i], d_states[i] = adam_step(model.discriminators[i], d_states[i], grads)
        reals, mixes = [], []
        for i in range(M):
            reals.append(_real_batch(datasets[i], cfg.k_g, rng))
            src, rows = draw_mixture_rows(i, counts, cfg.k_g, rng)
            mixes.append(mixture_batch(model, i, datasets, src, rows))
        total, acc, breakdown = generator_objective(model, reals, mixes, cfg)
        if not math.isfinite(total):
            raise TrainingDivergedError(it, {"adv": [a for a, _ in breakdown], "cyc": [c for _, c in breakdown]})
        for j in range(M):
            if ("F", j) in acc:
                model.encoders[j], f_states[j] = adam_step(model.encoders[j], f_states[j], acc[("F", j)])
            if ("G", j) in acc:
                model.decoders[j], g_states[j] = adam_step(model.decoders[j], g_states[j], acc[("G", j)])
        trace.records.append(TrainRecord(it, [a for a, _ in breakdown], [c for _, c in breakdown], d_losses, total))
        totals.append(total)
        if callback is not None:
            callback(it, model, trace)
        if cfg.early_stop and len(totals) >= 2 * cfg.early_stop_window:
            wdw = cfg.early_stop_window
            now, prev = np.mean(totals[-wdw:]), np.mean(totals[-2 * wdw : -wdw])
            if abs(now - prev) < cfg.early_stop_tol * max(abs(prev), 1e-12):
                break
    return model, trace


# ---------------------------------------------------------------- translation

def translated_schema(model: RadialGanModel, i: int) -> DomainSchema:
    s = model.schemas[i]
    if model.mode == "continuous" and s.label_kind == "discrete":
        # generated binary labels stay probabilities
        return DomainSchema(s.domain_id, s.features, "continuous", None)
    return s


def translate(model: RadialGanModel, source: int, target: int, dataset: Dataset) -> Dataset:
    if source == target:
        raise ConfigError("translation needs two different domains")
    if dataset.schema.names != model.schemas[source].names:
        raise SchemaError(f"dataset does not match schema {model.schemas[source].domain_id!r}")
    out = model.decode(target, model.encode(source, dataset.x, dataset.y), dataset.y)
    schema = translated_schema(model, target)
    d = model.schemas[target].dim
    if model.mode == "continuous":
        return Dataset(schema, out[:, :d], out[:, d], dataset.ids)
    return Dataset(schema, out, dataset.y, dataset.ids)


# ---------------------------------------------------------------- checkpoints

def model_to_dict(model: RadialGanModel, train_config: TrainConfig | None = None) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "mode": model.mode,
        "latent_dim": model.latent_dim,
        "seed": model.seed,
        "hidden": to_dict(model.hidden),
        "schemas": [s.to_dict() for s in model.schemas],
        "encoders": [nn.mlp_to_dict(n) for n in model.encoders],
        "decoders": [nn.mlp_to_dict(n) for n in model.decoders],
        "discriminators": [nn.mlp_to_dict(n) for n in model.discriminators],
        "train_config": None if train_config is None else to_dict(train_config),
    }


def model_from_dict(d: dict) -> RadialGanModel:
    if d.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported model checkpoint version {d.get('format_version')!r}")
    return RadialGanModel(
        [DomainSchema.from_dict(s) for s in d["schemas"]],
        d["mode"],
        d["latent_dim"],
        [nn.mlp_from_dict(n) for n in d["encoders"]],
        [nn.mlp_from_dict(n) for n in d["decoders"]],
        [nn.mlp_from_dict(n) for n in d["discriminators"]],
        from_dict(HiddenConfig, d["hidden"]),
        d["seed"],
    )
