"""Two-dimensional toy experiments on how the noise source shapes what a GAN can learn.

shift_capacity: target N((2,2), I); generators of increasing capacity fed
Gaussian or uniform noise. A linear map can turn Gaussian noise into the
target by a pure shift but cannot reshape a uniform square into a Gaussian.

gmm_samplesize: target is a 5-mode ring; the source is Gaussian noise or a
4-mode ring. A multi-modal source lets a small generator cover more modes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .. import nn
from ..domains import sample_gmm
from ..errors import ConfigError
from ..gan import train_gan
from ..model import TrainConfig
from ..rng import derive_seed, make_rng, normal

SHIFT_MU = np.array([2.0, 2.0])
CAPACITIES = {"linear": [], "1-layer": [32], "2-layer": [32, 32]}
SHIFT_SOURCES = ("gaussian", "uniform")
SAMPLE_SIZES = (300, 500, 1000)
GMM_SOURCES = ("gaussian", "gmm4")

# quantile levels and projection directions for the fitted-translation check
LEVELS = np.array([0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99])
_ANGLES = np.arange(8) * np.pi / 8
DIRECTIONS = np.stack([np.cos(_ANGLES), np.sin(_ANGLES)], axis=1)


def ring(k: int, radius: float, phase: float) -> np.ndarray:
    a = 2 * np.pi * np.arange(k) / k + phase
    return radius * np.stack([np.cos(a), np.sin(a)], axis=1)


TARGET_MEANS = ring(5, 3.0, np.pi / 2)
TARGET_STD = 0.3
SOURCE_MEANS = ring(4, 3.0, np.pi / 4)
SOURCE_STD = 0.3


@dataclass
class ToyRun:
    source: np.ndarray  # noise fed to the generator
    generated: np.ndarray
    target: np.ndarray  # training sample of the target
    score: float  # translation error (shift) or modes covered (gmm)


def noise_fn(name: str):
    if name == "gaussian":
        return lambda rng, k: normal(rng, (k, 2))
    if name == "uniform":
        return lambda rng, k: rng.uniform(-1.0, 1.0, (k, 2))
    if name == "gmm4":
        return lambda rng, k: sample_gmm(rng, SOURCE_MEANS, np.full(4, SOURCE_STD), np.full(4, 0.25), k)[0]
    raise ConfigError(f"unknown toy source {name!r}")


def translation_error(generated: np.ndarray, mu=SHIFT_MU) -> float:
    """Worst gap between the generated sample and N(mu, I), read through 1-D quantiles.

    For each direction u and level p the fitted translation along u is
    Q_u(p) - Phi^-1(p); a pure shift by mu makes it u.mu at every level.
    """
    z = norm.ppf(LEVELS)
    worst = 0.0
    for u in DIRECTIONS:
        fitted = np.quantile(generated @ u, LEVELS) - z
        worst = max(worst, float(np.max(np.abs(fitted - u @ mu))))
    return worst


def mode_coverage(generated: np.ndarray, means=TARGET_MEANS, std=TARGET_STD, frac=0.05) -> int:
    """Number of modes with at least ``frac`` of the points within two stddevs of the mode mean."""
    dist = np.linalg.norm(generated[:, None, :] - means[None], axis=2)
    return int(np.sum((dist <= 2 * std).mean(axis=0) >= frac))


def _fit(real, source, hidden, d_hidden, cfg, seed, num_points):
    noise = noise_fn(source)
    gen = nn.xavier_init([2, *hidden, 2], ["tanh"] * len(hidden) + ["identity"], derive_seed(seed, 0))
    dis = nn.xavier_init([2, *d_hidden, 1], ["tanh"] * len(d_hidden) + ["identity"], derive_seed(seed, 1))
    gen, _, _ = train_gan(gen, dis, real, noise, cfg)
    z = noise(make_rng(derive_seed(seed, 2)), num_points)
    return z, gen(z)


def shift_run(seed: int, capacity: str = "linear", source: str = "gaussian", iterations: int = 4000,
              n: int = 2000, num_points: int = 20000) -> ToyRun:
    if capacity not in CAPACITIES:
        raise ConfigError(f"unknown capacity {capacity!r}")
    real = SHIFT_MU + normal(make_rng(derive_seed(seed, 100)), (n, 2))
    cfg = TrainConfig(iterations=iterations, k_d=128, k_g=128, lr_d=2e-3, lr_g=2e-3, seed=seed)
    z, out = _fit(real, source, CAPACITIES[capacity], [32, 32], cfg, seed, num_points)
    return ToyRun(z, out, real, translation_error(out))


def gmm_run(seed: int, n: int, source: str = "gmm4", iterations: int = 3000, num_points: int = 5000) -> ToyRun:
    rng = make_rng(derive_seed(seed, 100))
    real, _ = sample_gmm(rng, TARGET_MEANS, np.full(5, TARGET_STD), np.full(5, 0.2), n)
    cfg = TrainConfig(iterations=iterations, k_d=128, k_g=128, lr_d=2e-3, lr_g=2e-3, lr_schedule="linear", seed=seed)
    z, out = _fit(real, source, [64], [64, 64], cfg, seed, num_points)
    return ToyRun(z, out, real, float(mode_coverage(out)))


def write_scatter(path, run: ToyRun) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "source_tag"])
        for tag, pts in (("source", run.source), ("target", run.target), ("generated", run.generated)):
            for a, b in pts:
                w.writerow([repr(float(a)), repr(float(b)), tag])


def reproduce_toy(which: str, out_dir, seeds=(0,), iterations: int | None = None) -> dict:
    """Run one toy sweep, dump a scatter CSV per run and return (and write) a summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    if which == "shift_capacity":
        kw = {} if iterations is None else {"iterations": iterations}
        for seed in seeds:
            for cap in CAPACITIES:
                for src in SHIFT_SOURCES:
                    r = shift_run(seed, cap, src, **kw)
                    write_scatter(out / f"shift_{cap}_{src}_seed{seed}.csv", r)
                    runs.append({"seed": seed, "capacity": cap, "source": src, "translation_error": r.score,
                                 "within_tolerance": r.score <= 0.3})
    elif which == "gmm_samplesize":
        kw = {} if iterations is None else {"iterations": iterations}
        for seed in seeds:
            for n in SAMPLE_SIZES:
                for src in GMM_SOURCES:
                    r = gmm_run(seed, n, src, **kw)
                    write_scatter(out / f"gmm_n{n}_{src}_seed{seed}.csv", r)
                    runs.append({"seed": seed, "n": n, "source": src, "modes_covered": int(r.score),
                                 "modes_total": len(TARGET_MEANS)})
    else:
        raise ConfigError(f"unknown toy experiment {which!r}")
    summary = {"experiment": which, "seeds": list(seeds), "runs": runs}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
