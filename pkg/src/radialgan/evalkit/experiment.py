"""Repeated train/test evaluation of RadialGAN augmentation against baselines.

One *unit* is a (repeat, fold) pair: every domain is split, each domain is
min-max normalised on its own training rows, the translation model is trained
on the training rows only, and for every target domain each method fits a
predictor that is scored on that target's held-out rows. A *cell* is one
(domain, method, repeat, fold) score. Units are independent and may run in a
process pool; results are always reduced in unit order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from ..config import FORMAT_VERSION, to_dict
from ..domains import Dataset, MultiDomainSpec, embed_in_union, fit_normalizer, gen_synthetic, load_csv, union_schema
from ..domains import DomainSchema
from ..errors import ConfigError, DataError, RadialGanError
from ..gan import train_target_only_gan
from ..model import HiddenConfig, TrainConfig, build_model, reconstruction_error, train
from ..rng import derive_seed, make_rng
from .augment import augment_with_samples, build_augmented
from .metrics import apr, auc
from .predictors import PredictorConfig, fit_predictor

METHODS = ("target_only", "radialgan", "simple_combine", "target_only_gan")
BASELINE = "target_only"


@dataclass
class CsvDomain:
    path: str
    schema: str | None = None  # path to a schema JSON; inferred from the CSV when absent


@dataclass
class ExperimentSpec:
    synth: MultiDomainSpec | None = None
    csv: list[CsvDomain] | None = None
    methods: list[str] = field(default_factory=lambda: ["target_only", "radialgan"])
    repeats: int = 10
    folds: int = 1
    train_n: int | list[int] | None = 300  # None: every non-test row
    min_test_n: int = 200
    target_domains: list[int] | None = None  # None: all
    translated_cap: int | None = None
    cap_multiple: float | None = None  # cap = round(cap_multiple * n_i); overrides translated_cap
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    mode: str | None = None
    latent_dim: int | None = None
    hidden: HiddenConfig = field(default_factory=HiddenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gan_train: TrainConfig | None = None  # target-only GAN; defaults to ``train``
    seed: int = 0

    def __post_init__(self):
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown method(s) {sorted(bad)}")
        if self.repeats < 1 or self.folds < 1:
            raise ConfigError("repeats and folds must be >= 1")
        if (self.synth is None) == (self.csv is None):
            raise ConfigError("give exactly one of synth or csv")


def load_domains(spec: ExperimentSpec) -> list[Dataset]:
    if spec.synth is not None:
        return gen_synthetic(spec.synth)
    out = []
    for dom in spec.csv:
        schema = None
        if dom.schema is not None:
            schema = DomainSchema.from_dict(json.loads(Path(dom.schema).read_text()))
        out.append(load_csv(dom.path, schema))
    return out


# ---------------------------------------------------------------- splitting

def _train_n(spec: ExperimentSpec, j: int) -> int | None:
    if isinstance(spec.train_n, list):
        return spec.train_n[j]
    return spec.train_n


def split_domain(d: Dataset, j: int, spec: ExperimentSpec, repeat: int, fold: int) -> tuple[Dataset, Dataset]:
    """Train/test split of domain ``j``. With K folds, fold ``f`` is the test set and
    ``train_n`` rows are drawn from the remaining folds."""
    perm = make_rng(derive_seed(spec.seed, 1, repeat, j)).permutation(d.n)
    if spec.folds == 1:
        n_tr = _train_n(spec, j)
        if n_tr is None:
            raise ConfigError("folds=1 needs train_n")
        if not 0 < n_tr < d.n:
            raise DataError(f"domain {j}: train_n={n_tr} must be in 1..{d.n - 1}")
        train_idx, test_idx = perm[:n_tr], perm[n_tr:]
    else:
        chunks = np.array_split(perm, spec.folds)
        test_idx = chunks[fold]
        pool = np.concatenate([c for k, c in enumerate(chunks) if k != fold])
        n_tr = _train_n(spec, j)
        if n_tr is not None and n_tr > pool.size:
            raise DataError(f"domain {j}: train_n={n_tr} exceeds the {pool.size} rows outside the test fold")
        train_idx = pool if n_tr is None else pool[:n_tr]
    if test_idx.size < spec.min_test_n:
        raise DataError(f"domain {j}: {test_idx.size} test rows, below the floor of {spec.min_test_n}")
    return d.subset(np.sort(train_idx)), d.subset(np.sort(test_idx))


# ---------------------------------------------------------------- one unit

@dataclass
class Cell:
    domain: int
    method: str
    repeat: int
    fold: int
    auc: float | None
    apr: float | None
    error: str | None = None


class _Audit:
    """Row identities (per domain) handed to any trainer inside one unit."""

    def __init__(self, tests: list[Dataset]):
        self.test = [set(t.ids.tolist()) for t in tests]
        self.used: list[set[int]] = [set() for _ in tests]

    def saw(self, j: int, ids) -> None:
        self.used[j].update(np.asarray(ids).tolist())

    def violations(self) -> int:
        return sum(len(t & u) for t, u in zip(self.test, self.used))


def _score(pred, test_x, test_y):
    p = pred.predict_proba(test_x)
    return auc(p, test_y), apr(p, test_y)


def _cap_for(spec: ExperimentSpec, n_i: int) -> int | None:
    if spec.cap_multiple is not None:
        return int(round(spec.cap_multiple * n_i))
    return spec.translated_cap


def run_unit(spec: ExperimentSpec, datasets: list[Dataset], repeat: int, fold: int) -> dict:
    M = len(datasets)
    targets = spec.target_domains if spec.target_domains is not None else list(range(M))
    splits = [split_domain(d, j, spec, repeat, fold) for j, d in enumerate(datasets)]
    norms = [fit_normalizer(tr) for tr, _ in splits]
    trains = [nz.apply_dataset(tr) for nz, (tr, _) in zip(norms, splits)]
    tests = [nz.apply_dataset(te) for nz, (_, te) in zip(norms, splits)]
    audit = _Audit(tests)
    pcfg = spec.predictor
    unit_seed = derive_seed(spec.seed, 2, repeat, fold)

    model, model_error, cycle = None, None, []
    if "radialgan" in spec.methods:
        try:
            init = build_model([t.schema for t in trains], spec.mode, spec.latent_dim, spec.hidden,
                               seed=derive_seed(unit_seed, 0))
            cfg = TrainConfig(**{**to_dict(spec.train), "seed": derive_seed(unit_seed, 1)})
            for j, t in enumerate(trains):
                audit.saw(j, t.ids)
            model, _ = train(init, trains, cfg)
            for j in range(M):
                cycle.append({"repeat": repeat, "fold": fold, "domain": j,
                              "initial": reconstruction_error(init, j, tests[j]),
                              "final": reconstruction_error(model, j, tests[j])})
        except RadialGanError as e:
            model_error = f"{type(e).__name__}: {e}"

    cells = []
    for i in targets:
        tr, te = trains[i], tests[i]
        cap = _cap_for(spec, tr.n)
        extra_n = sum(t.n for j, t in enumerate(trains) if j != i)
        if cap is not None:
            extra_n = min(extra_n, cap)
        pseed = derive_seed(unit_seed, 3, i)
        for method in METHODS:
            if method != BASELINE and method not in spec.methods:
                continue
            try:
                if method == "target_only":
                    audit.saw(i, tr.ids)
                    pred = fit_predictor(pcfg.kind, tr, pseed, pcfg)
                    a, p = _score(pred, te.x, te.y)
                elif method == "radialgan":
                    if model is None:
                        raise RadialGanError(f"translation model unavailable ({model_error})")
                    aug = build_augmented(model, trains, i, cap, seed=derive_seed(unit_seed, 4, i))
                    for j, ids in aug.used_ids().items():
                        audit.saw(j, list(ids))
                    pred = fit_predictor(pcfg.kind, aug, pseed, pcfg)
                    a, p = _score(pred, te.x, te.y)
                elif method == "simple_combine":
                    schema = union_schema([t.schema for t in trains])
                    parts = [embed_in_union(t, schema) for t in trains]
                    for j, t in enumerate(trains):
                        audit.saw(j, t.ids)
                    pooled = Dataset(schema, np.vstack([q.x for q in parts]), np.concatenate([q.y for q in parts]))
                    pred = fit_predictor(pcfg.kind, pooled, pseed, pcfg)
                    a, p = _score(pred, embed_in_union(te, schema).x, te.y)
                else:
                    gcfg = spec.gan_train or spec.train
                    gcfg = TrainConfig(**{**to_dict(gcfg), "seed": derive_seed(unit_seed, 5, i)})
                    audit.saw(i, tr.ids)
                    tg = train_target_only_gan(tr, gcfg, spec.mode, spec.latent_dim, spec.hidden)
                    samples = tg.sample(extra_n, derive_seed(unit_seed, 6, i))
                    pred = fit_predictor(pcfg.kind, augment_with_samples(i, tr, samples), pseed, pcfg)
                    a, p = _score(pred, te.x, te.y)
                cells.append(Cell(i, method, repeat, fold, a, p))
            except RadialGanError as e:
                cells.append(Cell(i, method, repeat, fold, None, None, f"{type(e).__name__}: {e}"))
    return {"cells": cells, "cycle": cycle, "violations": audit.violations(),
            "test_rows": sum(len(t) for t in audit.test)}


def _unit_job(args):
    spec, datasets, r, f = args
    return run_unit(spec, datasets, r, f)


# ---------------------------------------------------------------- report

def _nan_to_none(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


def _mean_se(per_repeat: list[float]) -> tuple[float | None, float | None]:
    if not per_repeat:
        return None, None
    a = np.asarray(per_repeat)
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else None
    return float(a.mean()), se


def sign_test(deltas) -> dict:
    """One-sided sign test of 'positive more often than negative'; zeros are dropped."""
    d = np.asarray(deltas, dtype=np.float64)
    wins, losses = int((d > 0).sum()), int((d < 0).sum())
    p = 1.0 if wins + losses == 0 else float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)
    return {"wins": wins, "losses": losses, "p_value": p}


@dataclass
class EvalReport:
    config: dict
    cells: list[Cell]
    cycle: list[dict]
    leakage: dict
    summary: list[dict] = field(default_factory=list)

    def delta(self, cell: Cell, metric: str = "auc") -> float | None:
        base = self._index.get((cell.domain, BASELINE, cell.repeat, cell.fold))
        mine, ref = getattr(cell, metric), None if base is None else getattr(base, metric)
        return None if mine is None or ref is None else mine - ref

    @property
    def _index(self):
        if getattr(self, "_idx", None) is None or len(self._idx) != len(self.cells):
            self._idx = {(c.domain, c.method, c.repeat, c.fold): c for c in self.cells}
        return self._idx

    def per_repeat(self, domain, method: str, metric: str = "auc", delta: bool = False) -> list[float]:
        """Fold-averaged values per repeat (``domain=None`` also averages over domains)."""
        out = []
        for r in sorted({c.repeat for c in self.cells}):
            vals = []
            for c in self.cells:
                if c.method == method and c.repeat == r and (domain is None or c.domain == domain):
                    v = self.delta(c, metric) if delta else getattr(c, metric)
                    if v is not None:
                        vals.append(v)
            if vals:
                out.append(float(np.mean(vals)))
        return out

    def summarize(self) -> None:
        self.summary = []
        domains = sorted({c.domain for c in self.cells})
        methods = [m for m in METHODS if any(c.method == m for c in self.cells)]
        for dom in [*domains, None]:
            for m in methods:
                row = {"domain": "all" if dom is None else dom, "method": m}
                mine = [c for c in self.cells if c.method == m and (dom is None or c.domain == dom)]
                row["cells"] = len(mine)
                row["errors"] = sum(c.error is not None for c in mine)
                for metric in ("auc", "apr"):
                    row[f"{metric}_mean"], row[f"{metric}_se"] = _mean_se(self.per_repeat(dom, m, metric))
                    deltas = self.per_repeat(dom, m, metric, delta=True)
                    row[f"delta_{metric}_mean"], row[f"delta_{metric}_se"] = _mean_se(deltas)
                    row[f"delta_{metric}_sign_test"] = sign_test(deltas)
                self.summary.append(row)

    def row(self, domain, method: str) -> dict:
        key = "all" if domain is None else domain
        for r in self.summary:
            if r["domain"] == key and r["method"] == method:
                return r
        raise KeyError((domain, method))

    def to_dict(self) -> dict:
        cells = []
        for c in self.cells:
            d = {k: _nan_to_none(v) for k, v in c.__dict__.items()}
            d["delta_auc"], d["delta_apr"] = self.delta(c, "auc"), self.delta(c, "apr")
            cells.append(d)
        return {"format_version": FORMAT_VERSION, "config": self.config, "summary": self.summary,
                "leakage": self.leakage, "cycle": self.cycle, "cells": cells}

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        js = out / "report.json"
        js.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        flat = out / "report.csv"
        with open(flat, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["domain", "method", "repeat", "fold", "auc", "apr"])
            for c in self.cells:
                w.writerow([c.domain, c.method, c.repeat, c.fold,
                            "" if c.auc is None else repr(c.auc), "" if c.apr is None else repr(c.apr)])
        return js, flat


def run_experiment(spec: ExperimentSpec, datasets: list[Dataset] | None = None, jobs: int = 1) -> EvalReport:
    datasets = load_domains(spec) if datasets is None else datasets
    if len(datasets) < 2 and set(spec.methods) - {BASELINE}:
        raise DataError("augmentation methods need at least two domains")
    units = [(spec, datasets, r, f) for r in range(spec.repeats) for f in range(spec.folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_unit_job, units))
    else:
        results = [_unit_job(u) for u in units]
    cells = [c for res in results for c in res["cells"]]
    cycle = [c for res in results for c in res["cycle"]]
    leakage = {"units": len(results), "test_rows_checked": sum(r["test_rows"] for r in results),
               "violations": sum(r["violations"] for r in results)}
    report = EvalReport(to_dict(spec), cells, cycle, leakage)
    report.summarize()
    return report


# ---------------------------------------------------------------- benchmark

def benchmark_spec(num_domains: int = 3, repeats: int = 10, **overrides) -> ExperimentSpec:
    """The synthetic transfer benchmark: 300 training rows per domain, 2000 test rows.

    24 shared features of mixed marginal shapes, a third of them hidden from
    each domain, per-domain mean shifts; translation training uses a longer,
    linearly decayed schedule than the library default.
    """
    synth = MultiDomainSpec(num_domains=num_domains, shared_dim=24, noise_std=1.0, feature_shapes="mixed", n=2300)
    train_cfg = TrainConfig(iterations=8000, k_d=128, k_g=128, lr_d=2e-3, lr_g=2e-3, lr_schedule="linear")
    kw = {"synth": synth, "repeats": repeats, "train_n": 300, "train": train_cfg, **overrides}
    return ExperimentSpec(**kw)
