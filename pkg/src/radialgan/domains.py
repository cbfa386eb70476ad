"""Domain schemas, datasets, CSV I/O, normalization and synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError
from .rng import derive_seed, make_rng, normal

FEATURE_KINDS = ("continuous", "binary")
LABEL_COLUMN = "label"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str = "continuous"


@dataclass(frozen=True)
class DomainSchema:
    domain_id: str
    features: tuple[Feature, ...]
    label_kind: str = "discrete"
    num_classes: int | None = 2

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise SchemaError(f"schema {self.domain_id!r} has no features")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError(f"schema {self.domain_id!r} has duplicate feature names")
        if LABEL_COLUMN in names:
            raise SchemaError(f"feature name {LABEL_COLUMN!r} is reserved")
        for f in self.features:
            if f.kind not in FEATURE_KINDS:
                raise SchemaError(f"feature {f.name!r}: unknown kind {f.kind!r}")
        if self.label_kind == "discrete":
            if self.num_classes is None or self.num_classes < 2:
                raise SchemaError("discrete labels need num_classes >= 2")
        elif self.label_kind == "continuous":
            object.__setattr__(self, "num_classes", None)
        else:
            raise SchemaError(f"unknown label kind {self.label_kind!r}")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def dim(self) -> int:
        return len(self.features)

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([f.kind == "binary" for f in self.features])

    def to_dict(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "features": [{"name": f.name, "kind": f.kind} for f in self.features],
            "label_kind": self.label_kind,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSchema":
        unknown = set(d) - {"domain_id", "features", "label_kind", "num_classes"}
        if unknown:
            raise SchemaError(f"unknown schema fields {sorted(unknown)}")
        feats = tuple(Feature(f["name"], f.get("kind", "continuous")) for f in d["features"])
        return cls(d["domain_id"], feats, d.get("label_kind", "discrete"), d.get("num_classes"))


@dataclass
class Dataset:
    schema: DomainSchema
    x: np.ndarray
    y: np.ndarray
    ids: np.ndarray = field(default=None)  # row identities in the originating domain

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[1] != self.schema.dim:
            raise DataError(f"{self.schema.domain_id}: x shape {self.x.shape} does not fit {self.schema.dim} features")
        if self.schema.label_kind == "discrete":
            self.y = np.asarray(self.y, dtype=np.int64)
        else:
            self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.shape != (self.x.shape[0],):
            raise DataError(f"{self.schema.domain_id}: {self.x.shape[0]} rows but {self.y.shape} labels")
        if self.ids is None:
            self.ids = np.arange(self.n)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.shape != (self.n,):
            raise DataError("ids must have one entry per row")
        if not np.all(np.isfinite(self.x)):
            raise DataError(f"{self.schema.domain_id}: non-finite feature values")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.schema, self.x[idx], self.y[idx], self.ids[idx])

    def validate(self) -> None:
        """Strict checks on top of the constructor: binary cells and label range."""
        bad = self.schema.binary_mask
        if bad.any():
            cells = self.x[:, bad]
            if not np.all((cells == 0) | (cells == 1)):
                r, c = np.argwhere((cells != 0) & (cells != 1))[0]
                raise DataError(f"row {r}, column {np.array(self.schema.names)[bad][c]!r}: binary cell not in {{0,1}}")
        if self.schema.label_kind == "discrete" and self.n:
            if self.y.min() < 0 or self.y.max() >= self.schema.num_classes:
                raise DataError(f"labels outside 0..{self.schema.num_classes - 1}")

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.ids, other.ids)
        )


# ---------------------------------------------------------------- CSV

def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path, d: Dataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.schema.names + [LABEL_COLUMN])
        discrete = d.schema.label_kind == "discrete"
        for row, label in zip(d.x, d.y):
            w.writerow([_fmt(v) for v in row] + [str(int(label)) if discrete else _fmt(label)])


def _infer_schema(path: Path, header: list[str], rows: list[list[str]]) -> DomainSchema:
    names = [h for h in header if h != LABEL_COLUMN]
    feats = []
    for c, name in enumerate(header):
        if name == LABEL_COLUMN:
            continue
        vals = {r[c] for r in rows}
        feats.append(Feature(name, "binary" if vals and vals <= {"0", "1", "0.0", "1.0"} else "continuous"))
    if not names:
        raise SchemaError(f"{path}: no feature columns besides {LABEL_COLUMN!r}")
    li = header.index(LABEL_COLUMN)
    try:
        labels = [float(r[li]) for r in rows]
    except ValueError as e:
        raise DataError(f"{path}: unparsable label ({e})") from None
    if labels and all(v == int(v) and v >= 0 for v in labels):
        return DomainSchema(path.stem, tuple(feats), "discrete", max(2, int(max(labels)) + 1))
    return DomainSchema(path.stem, tuple(feats), "continuous", None)


def load_csv(path, schema: DomainSchema | None = None) -> Dataset:
    """Read a CSV with a header and a ``label`` column. Without a schema, one is inferred."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if LABEL_COLUMN not in header:
        raise DataError(f"{path}: missing column {LABEL_COLUMN!r}")
    if schema is None:
        schema = _infer_schema(path, header, rows)
    for name in schema.names:
        if name not in header:
            raise DataError(f"{path}: missing column {name!r}")
    extra = set(header) - set(schema.names) - {LABEL_COLUMN}
    if extra:
        raise DataError(f"{path}: columns not in schema: {sorted(extra)}")
    cols = [header.index(n) for n in schema.names]
    li = header.index(LABEL_COLUMN)
    x = np.empty((len(rows), len(cols)))
    y = np.empty(len(rows))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 1} has {len(row)} cells, header has {len(header)}")
        for c, col in enumerate(cols):
            try:
                x[r, c] = float(row[col])
            except ValueError:
                raise DataError(f"{path}: row {r + 1}, column {schema.names[c]!r}: cannot parse {row[col]!r}") from None
        try:
            y[r] = float(row[li])
        except ValueError:
            raise DataError(f"{path}: row {r + 1}, column {LABEL_COLUMN!r}: cannot parse {row[li]!r}") from None
    if not np.all(np.isfinite(x)):
        r, c = np.argwhere(~np.isfinite(x))[0]
        raise DataError(f"{path}: row {r + 1}, column {schema.names[c]!r}: non-finite value")
    if schema.label_kind == "discrete" and not np.all(y == np.round(y)):
        raise DataError(f"{path}: non-integer class label")
    d = Dataset(schema, x, y)
    try:
        d.validate()
    except DataError as e:
        raise DataError(f"{path}: {e}") from None
    return d


# ---------------------------------------------------------------- normalization

@dataclass
class Normalizer:
    lo: np.ndarray
    hi: np.ndarray
    scaled: np.ndarray  # which columns are min-max scaled (continuous ones)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = self.hi - self.lo
        const = span <= 0
        out = (x - self.lo) / np.where(const, 1.0, span)
        out = np.where(const, 0.5, out)
        return np.where(self.scaled, out, x)

    def invert(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = x * (self.hi - self.lo) + self.lo
        return np.where(self.scaled, out, x)

    def apply_dataset(self, d: Dataset) -> Dataset:
        return Dataset(d.schema, self.apply(d.x), d.y, d.ids)

    def invert_dataset(self, d: Dataset) -> Dataset:
        return Dataset(d.schema, self.invert(d.x), d.y, d.ids)


def fit_normalizer(d: Dataset) -> Normalizer:
    if d.n < 2:
        raise DataError("normalizer needs at least 2 rows")
    scaled = ~d.schema.binary_mask
    lo = np.where(scaled, d.x.min(axis=0), 0.0)
    hi = np.where(scaled, d.x.max(axis=0), 1.0)
    return Normalizer(lo, hi, scaled)


# ---------------------------------------------------------------- splitting / pooling

def split(d: Dataset, train_n: int, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 < train_n < d.n:
        raise DataError(f"train_n={train_n} must be in 1..{d.n - 1}")
    perm = make_rng(seed).permutation(d.n)
    return d.subset(np.sort(perm[:train_n])), d.subset(np.sort(perm[train_n:]))


def union_schema(schemas: list[DomainSchema], domain_id: str = "union") -> DomainSchema:
    kinds: dict[str, str] = {}
    for s in schemas:
        for f in s.features:
            if kinds.setdefault(f.name, f.kind) != f.kind:
                raise SchemaError(f"feature {f.name!r} is {kinds[f.name]} in one domain and {f.kind} in another")
    label_kinds = {(s.label_kind, s.num_classes) for s in schemas}
    if len(label_kinds) != 1:
        raise SchemaError(f"datasets disagree on label kind: {sorted(map(str, label_kinds))}")
    label_kind, k = label_kinds.pop()
    feats = [Feature(n, kind) for n, kind in kinds.items()]
    feats += [Feature(f"mask_{n}", "binary") for n in kinds]
    return DomainSchema(domain_id, tuple(feats), label_kind, k)


def embed_in_union(d: Dataset, schema: DomainSchema) -> Dataset:
    """Zero-fill + measured-mask embedding of one dataset into a union schema."""
    width = schema.dim // 2
    pos = {n: c for c, n in enumerate(schema.names[:width])}
    x = np.zeros((d.n, schema.dim))
    for c, name in enumerate(d.schema.names):
        if name not in pos:
            raise SchemaError(f"feature {name!r} not in union schema")
        x[:, pos[name]] = d.x[:, c]
        x[:, width + pos[name]] = 1.0
    return Dataset(schema, x, d.y, d.ids)


def union_with_mask(datasets: list[Dataset]) -> Dataset:
    if len(datasets) < 2:
        raise DataError("union_with_mask needs at least two datasets")
    schema = union_schema([d.schema for d in datasets])
    parts = [embed_in_union(d, schema) for d in datasets]
    return Dataset(
        schema,
        np.vstack([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.ids for p in parts]),
    )


# ---------------------------------------------------------------- synthetic data

@dataclass
class GaussianSpec:
    mean: list[float]
    n: int = 1000
    seed: int = 0
    kind: str = "gaussian"


@dataclass
class UniformSpec:
    low: list[float]
    high: list[float]
    n: int = 1000
    seed: int = 0
    kind: str = "uniform"


@dataclass
class GmmComponent:
    mean: list[float]
    std: float
    weight: float


@dataclass
class GmmSpec:
    components: list[GmmComponent]
    n: int = 1000
    seed: int = 0
    kind: str = "gmm"

    def __post_init__(self):
        self.components = [c if isinstance(c, GmmComponent) else GmmComponent(**c) for c in self.components]
        w = np.array([c.weight for c in self.components])
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DataError("gmm weights must be positive and sum to 1")
        if len({len(c.mean) for c in self.components}) != 1:
            raise DataError("gmm component means differ in dimension")


@dataclass
class MultiDomainSpec:
    """Several hospitals observing one latent patient population.

    Every domain sees the same population of full feature vectors (a low-rank
    factor model plus noise). Domain ``i`` observes the shared block minus a
    random ``drop_fraction`` of it, plus its own private block, each observed
    value offset by ``shift * v_i`` for a per-domain direction ``v_i``.

    ``label_model="logistic"`` draws labels from a logistic model on the full,
    unshifted vector; ``"class_conditional"`` draws the label first and moves
    the class means apart by ``label_weights`` (shared covariance, so the
    Bayes-optimal classifier is still linear). ``feature_shapes="mixed"``
    passes feature ``c`` through one of four monotone shapes by ``c % 4``
    (identity, log-normal skew, bounded tanh, binary threshold) so that
    features are told apart by their marginals.
    """

    num_domains: int = 3
    shared_dim: int = 12
    private_dim: int = 0
    shift: float = 1.0
    drop_fraction: float = 0.33
    label_weights: list[float] | None = None
    label_bias: float = 0.0
    label_scale: float = 1.0  # multiplies the label weights
    label_flip: float = 0.0  # probability that an observed label is flipped
    noise_std: float = 0.5
    factor_dim: int = 3
    label_model: str = "logistic"  # or "class_conditional"
    feature_shapes: str = "gaussian"  # or "mixed"
    n: int | list[int] = 2300
    seed: int = 0
    kind: str = "multidomain"

    def __post_init__(self):
        if self.num_domains < 1 or self.shared_dim + self.private_dim < 1:
            raise DataError("multidomain spec needs at least one domain and one feature")
        if not 0.0 <= self.drop_fraction < 1.0:
            raise DataError("drop_fraction must be in [0, 1)")
        if not 0.0 <= self.label_flip < 0.5:
            raise DataError("label_flip must be in [0, 0.5)")
        if self.label_model not in ("logistic", "class_conditional"):
            raise DataError(f"unknown label_model {self.label_model!r}")
        if self.feature_shapes not in ("gaussian", "mixed"):
            raise DataError(f"unknown feature_shapes {self.feature_shapes!r}")
        if self.label_weights is not None and len(self.label_weights) != self.universe_dim:
            raise DataError(f"label_weights needs {self.universe_dim} entries")

    @property
    def universe_dim(self) -> int:
        return self.shared_dim + self.num_domains * self.private_dim

    def counts(self) -> list[int]:
        if isinstance(self.n, int):
            return [self.n] * self.num_domains
        if len(self.n) != self.num_domains:
            raise DataError("n must be an int or one count per domain")
        return list(self.n)


SynthSpec = GaussianSpec | UniformSpec | GmmSpec | MultiDomainSpec
_SPEC_KINDS = {"gaussian": GaussianSpec, "uniform": UniformSpec, "gmm": GmmSpec, "multidomain": MultiDomainSpec}


def synth_spec_from_dict(d: dict) -> SynthSpec:
    from .config import from_dict

    kind = d.get("kind")
    if kind not in _SPEC_KINDS:
        raise DataError(f"unknown synth kind {kind!r}")
    return from_dict(_SPEC_KINDS[kind], d)


def _plain_schema(dim: int, domain_id: str, label_kind="continuous", k=None) -> DomainSchema:
    return DomainSchema(domain_id, tuple(Feature(f"x{c}") for c in range(dim)), label_kind, k)


def sample_gmm(rng, means: np.ndarray, stds: np.ndarray, weights: np.ndarray, n: int):
    comp = np.searchsorted(np.cumsum(weights), rng.random(n), side="right")
    comp = np.minimum(comp, len(weights) - 1)
    x = means[comp] + stds[comp, None] * normal(rng, (n, means.shape[1]))
    return x, comp


SHAPES = ("identity", "skew", "bounded", "binary")


def _shape(kind: str, v: np.ndarray, t: float = 0.5) -> np.ndarray:
    """Monotone reshaping of a roughly standard-normal column; ``t`` in [0, 1) varies its strength."""
    if kind == "skew":
        return np.exp((0.3 + 0.7 * t) * v)
    if kind == "bounded":
        return np.tanh((0.5 + 1.5 * t) * v)
    if kind == "binary":
        return (v > 2.0 * t - 1.0).astype(np.float64)
    return v


def _multidomain(spec: MultiDomainSpec) -> list[Dataset]:
    rng = make_rng(spec.seed)
    M, U = spec.num_domains, spec.universe_dim
    loadings = normal(rng, (U, spec.factor_dim)) / math.sqrt(max(spec.factor_dim, 1))
    if spec.label_weights is None:
        w = normal(rng, U) * (2.0 / math.sqrt(U))
    else:
        w = np.asarray(spec.label_weights, dtype=np.float64)
    w = spec.label_scale * w
    names = [f"s{c:02d}" for c in range(spec.shared_dim)]
    names += [f"p{i}_{c:02d}" for i in range(M) for c in range(spec.private_dim)]
    shapes = [SHAPES[c % 4] if spec.feature_shapes == "mixed" else "identity" for c in range(U)]
    n_drop = int(round(spec.drop_fraction * spec.shared_dim))
    out = []
    for i, n_i in enumerate(spec.counts()):
        direction = normal(rng, U)
        dropped = set(rng.permutation(spec.shared_dim)[:n_drop].tolist())
        observed = [c for c in range(spec.shared_dim) if c not in dropped]
        observed += [spec.shared_dim + i * spec.private_dim + c for c in range(spec.private_dim)]
        drng = make_rng(derive_seed(spec.seed, i + 1))
        h = normal(drng, (n_i, spec.factor_dim))
        full = h @ loadings.T + spec.noise_std * normal(drng, (n_i, U))
        if spec.label_model == "class_conditional":
            y = (drng.random(n_i) < 1.0 / (1.0 + math.exp(-spec.label_bias))).astype(np.int64)
            full = full + (y[:, None] - 0.5) * w
        else:
            p = 1.0 / (1.0 + np.exp(-(full @ w + spec.label_bias)))
            y = (drng.random(n_i) < p).astype(np.int64)
        if spec.label_flip > 0:
            y = np.where(drng.random(n_i) < spec.label_flip, 1 - y, y)
        x = np.empty((n_i, len(observed)))
        for k, c in enumerate(observed):
            t = (c * 0.618034) % 1.0  # spreads shape strengths over features
            if shapes[c] == "binary":
                x[:, k] = _shape("binary", full[:, c] + spec.shift * direction[c], t)
            else:
                x[:, k] = _shape(shapes[c], full[:, c], t) + spec.shift * direction[c]
        feats = tuple(Feature(names[c], "binary" if shapes[c] == "binary" else "continuous") for c in observed)
        out.append(Dataset(DomainSchema(f"domain{i}", feats, "discrete", 2), x, y))
    return out


def gen_synthetic(spec: SynthSpec) -> Dataset | list[Dataset]:
    rng = make_rng(spec.seed)
    if isinstance(spec, GaussianSpec):
        mean = np.asarray(spec.mean, dtype=np.float64)
        x = mean + normal(rng, (spec.n, mean.size))
        return Dataset(_plain_schema(mean.size, "gaussian"), x, np.zeros(spec.n))
    if isinstance(spec, UniformSpec):
        lo, hi = np.asarray(spec.low, dtype=np.float64), np.asarray(spec.high, dtype=np.float64)
        x = lo + (hi - lo) * rng.random((spec.n, lo.size))
        return Dataset(_plain_schema(lo.size, "uniform"), x, np.zeros(spec.n))
    if isinstance(spec, GmmSpec):
        means = np.array([c.mean for c in spec.components], dtype=np.float64)
        stds = np.array([c.std for c in spec.components], dtype=np.float64)
        weights = np.array([c.weight for c in spec.components], dtype=np.float64)
        x, comp = sample_gmm(rng, means, stds, weights, spec.n)
        k = max(2, len(spec.components))
        return Dataset(_plain_schema(means.shape[1], "gmm", "discrete", k), x, comp)
    if isinstance(spec, MultiDomainSpec):
        return _multidomain(spec)
    raise DataError(f"unsupported synth spec {type(spec).__name__}")
