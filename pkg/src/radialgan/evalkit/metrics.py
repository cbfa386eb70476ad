from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import DataError


def _binary(labels) -> np.ndarray:
    y = np.asarray(labels)
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be binary 0/1")
    return y.astype(bool)


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic (ties count one half)."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes")
    ranks = rankdata(s, method="average")
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def apr(scores, labels) -> float:
    """Non-interpolated average precision.

    Rows are swept by (score desc, index asc); each positive contributes the
    precision at its position, divided by the number of positives.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DataError("APR needs at least one positive")
    order = np.lexsort((np.arange(s.size), -s))
    hits = y[order]
    precision = np.cumsum(hits) / np.arange(1, s.size + 1)
    return float(precision[hits].sum() / n_pos)
