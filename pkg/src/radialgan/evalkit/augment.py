from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domains import Dataset, DomainSchema
from ..errors import DataError
from ..model import RadialGanModel, translate
from ..rng import make_rng

GENERATED = -1


@dataclass
class AugmentedDataset:
    """Target rows plus extra rows, each tagged with where it came from.

    ``source[k] == target`` marks an original row, ``source[k] == j`` a row
    translated from domain ``j`` and ``GENERATED`` a row drawn from a
    noise-driven generator. ``source_ids`` are row ids in the source domain.
    """

    target: int
    schema: DomainSchema
    x: np.ndarray
    y: np.ndarray
    source: np.ndarray
    source_ids: np.ndarray

    def __post_init__(self):
        n = self.x.shape[0]
        if not (self.y.shape == (n,) and self.source.shape == (n,) and self.source_ids.shape == (n,)):
            raise DataError("augmented dataset columns disagree on row count")
        if self.x.shape[1] != self.schema.dim:
            raise DataError("augmented rows do not conform to the target schema")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def original_mask(self) -> np.ndarray:
        return self.source == self.target

    def tag(self, k: int) -> str:
        s = int(self.source[k])
        if s == self.target:
            return "original"
        if s == GENERATED:
            return "generated"
        return f"translated(from {s})"

    def used_ids(self) -> dict[int, set[int]]:
        """Source-domain row ids feeding this dataset, by domain."""
        out: dict[int, set[int]] = {}
        for s in np.unique(self.source):
            if s != GENERATED:
                out[int(s)] = set(self.source_ids[self.source == s].tolist())
        return out


def _assemble(target: int, original: Dataset, extras: list[tuple[int, Dataset]]) -> AugmentedDataset:
    xs = [original.x] + [d.x for _, d in extras]
    ys = [original.y.astype(np.float64)] + [d.y.astype(np.float64) for _, d in extras]
    src = [np.full(original.n, target)] + [np.full(d.n, j) for j, d in extras]
    ids = [original.ids] + [d.ids for _, d in extras]
    return AugmentedDataset(
        target, original.schema, np.vstack(xs), np.concatenate(ys), np.concatenate(src), np.concatenate(ids)
    )


def _cap(aug: AugmentedDataset, cap: int | None, seed: int) -> AugmentedDataset:
    extra = np.flatnonzero(~aug.original_mask)
    if cap is None or cap >= extra.size:
        return aug
    if cap < 0:
        raise DataError("translated_cap must be >= 0")
    keep = np.sort(make_rng(seed).choice(extra, size=cap, replace=False))
    rows = np.concatenate([np.flatnonzero(aug.original_mask), keep])
    return AugmentedDataset(aug.target, aug.schema, aug.x[rows], aug.y[rows], aug.source[rows], aug.source_ids[rows])


def build_augmented(
    model: RadialGanModel, datasets: list[Dataset], i: int, translated_cap: int | None = None, seed: int = 0
) -> AugmentedDataset:
    """D_i together with G_i(F_j(D_j)) for every j != i, optionally subsampled to ``translated_cap`` extra rows."""
    if not 0 <= i < model.num_domains:
        raise DataError(f"no domain {i}")
    extras = [(j, translate(model, j, i, d)) for j, d in enumerate(datasets) if j != i]
    return _cap(_assemble(i, datasets[i], extras), translated_cap, seed)


def augment_with_samples(target: int, original: Dataset, samples: Dataset) -> AugmentedDataset:
    if samples.schema.names != original.schema.names:
        raise DataError("generated samples do not match the target schema")
    aug = _assemble(target, original, [(GENERATED, samples)])
    return aug
