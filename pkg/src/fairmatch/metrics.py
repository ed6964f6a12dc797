"""Group-fairness measures and the audits built on them.

Scores are probabilities in ``[0, 1]``; a "model" is any callable
``model(X, s) -> scores`` where ``s`` is a 0/1 scalar or per-row array.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
from scipy import stats

DEFAULT_TAU = 0.5

__all__ = [
    "DEFAULT_TAU",
    "FairnessReport",
    "dp_gap",
    "dp_bar_gap",
    "wasserstein_dp",
    "tv_dp",
    "ks_dp",
    "subset_dp_bar",
    "random_hyperplane_subsets",
    "eo_gaps",
    "consistency",
    "spearman_rank_corr",
    "flip_confusion",
    "split_by_group",
]


def _nonempty(x, name="scores"):
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return arr


def split_by_group(scores, groups):
    """Return ``(scores[groups == 0], scores[groups == 1])``."""
    scores = np.asarray(scores, dtype=float).ravel()
    groups = np.asarray(groups).ravel()
    if scores.shape != groups.shape:
        raise ValueError("scores and groups must have the same length")
    return scores[groups == 0], scores[groups == 1]


def dp_gap(scores0, scores1, tau: float = DEFAULT_TAU) -> float:
    """Gap in positive-prediction rates ``|P(f >= tau | s=0) - P(f >= tau | s=1)|``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    a = _nonempty(scores0, "scores0")
    b = _nonempty(scores1, "scores1")
    return float(abs(np.mean(a >= tau) - np.mean(b >= tau)))


def dp_bar_gap(scores0, scores1) -> float:
    """Gap in mean scores between the two groups."""
    a = _nonempty(scores0, "scores0")
    b = _nonempty(scores1, "scores1")
    return float(abs(a.mean() - b.mean()))


def wasserstein_dp(scores0, scores1) -> float:
    """1-Wasserstein distance between the empirical score distributions.

    Computed as the integral of the gap between the two quantile functions,
    i.e. by matching equal quantiles. Breakpoints ``k/n0`` and ``l/n1`` are
    merged in integer arithmetic so unequal sizes stay exact.
    """
    a = np.sort(_nonempty(scores0, "scores0"))
    b = np.sort(_nonempty(scores1, "scores1"))
    n0, n1 = len(a), len(b)
    if n0 == n1:
        return float(np.mean(np.abs(a - b)))
    # breakpoints on the common grid 1/(n0*n1)
    knots = np.union1d(np.arange(1, n0 + 1) * n1, np.arange(1, n1 + 1) * n0)
    widths = np.diff(np.concatenate(([0], knots)))
    left = knots - widths  # interval (left, knot]; quantile index = ceil(knot/n) - 1
    ia = left // n1
    ib = left // n0
    return float(np.sum(widths * np.abs(a[ia] - b[ib])) / (n0 * n1))


def tv_dp(scores0, scores1, num_bins: int = 100) -> float:
    """Total variation between score histograms on ``num_bins`` equal bins of [0, 1]."""
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    a = _nonempty(scores0, "scores0")
    b = _nonempty(scores1, "scores1")
    edges = np.linspace(0.0, 1.0, num_bins + 1)
    p0, _ = np.histogram(np.clip(a, 0.0, 1.0), bins=edges)
    p1, _ = np.histogram(np.clip(b, 0.0, 1.0), bins=edges)
    return float(0.5 * np.abs(p0 / len(a) - p1 / len(b)).sum())


def ks_dp(scores0, scores1) -> float:
    """Kolmogorov-Smirnov distance: largest gap between the empirical CDFs."""
    a = np.sort(_nonempty(scores0, "scores0"))
    b = np.sort(_nonempty(scores1, "scores1"))
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(cdf_a - cdf_b)))


def subset_dp_bar(scores, groups, subset_mask) -> float:
    """Mean-score gap restricted to the rows selected by ``subset_mask``.

    Raises ``ValueError`` ("undefined subset") when the subset misses a group.
    """
    mask = np.asarray(subset_mask, dtype=bool).ravel()
    a, b = split_by_group(np.asarray(scores, dtype=float).ravel()[mask], np.asarray(groups).ravel()[mask])
    if a.size == 0 or b.size == 0:
        raise ValueError("undefined subset: it must contain rows from both groups")
    return float(abs(a.mean() - b.mean()))


def random_hyperplane_subsets(X, num_subsets: int, seed=None) -> np.ndarray:
    """Boolean masks ``{i : v . x_i >= 0}`` for ``v ~ Unif[-1, 1]^d``.

    Returns an array of shape ``(num_subsets, n)``. A draw of ``v == 0`` is
    rejected and redrawn.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    rng = np.random.default_rng(seed)
    vs = np.empty((num_subsets, X.shape[1]))
    for k in range(num_subsets):
        v = rng.uniform(-1.0, 1.0, size=X.shape[1])
        while not np.any(v):
            v = rng.uniform(-1.0, 1.0, size=X.shape[1])
        vs[k] = v
    return (X @ vs.T).T >= 0


def eo_gaps(scores, labels, groups, tau: float = DEFAULT_TAU):
    """Return ``(tpr_gap, fpr_gap, eo)`` with ``eo`` the average of the two gaps."""
    pred = np.asarray(scores, dtype=float).ravel() >= tau
    y = np.asarray(labels).ravel()
    s = np.asarray(groups).ravel()
    rates = {}
    for g in (0, 1):
        for lab in (0, 1):
            cell = (s == g) & (y == lab)
            if not cell.any():
                raise ValueError(f"empty cell: no rows with group={g} and label={lab}")
            rates[g, lab] = pred[cell].mean()
    tpr = float(abs(rates[0, 1] - rates[1, 1]))
    fpr = float(abs(rates[0, 0] - rates[1, 0]))
    return tpr, fpr, (tpr + fpr) / 2.0


def consistency(model, X, groups=None, tau: float = DEFAULT_TAU) -> float:
    """Share of rows whose thresholded prediction survives flipping ``s``.

    ``groups`` is accepted for symmetry with the other audits; every row is
    scored under both values of the sensitive attribute.
    """
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise ValueError("X is empty")
    pred0 = np.asarray(model(X, 0)).ravel() >= tau
    pred1 = np.asarray(model(X, 1)).ravel() >= tau
    return float(np.mean(pred0 == pred1))


def spearman_rank_corr(scores_a, scores_b) -> float:
    """Spearman's rho with average ranks for ties."""
    a = _nonempty(scores_a, "scores_a")
    b = _nonempty(scores_b, "scores_b")
    if a.shape != b.shape:
        raise ValueError("score vectors must have the same length")
    rho = stats.spearmanr(a, b).statistic
    return float(rho)


def flip_confusion(scores_unfair, scores_fair, groups, tau: float = DEFAULT_TAU) -> dict:
    """Cross-tabulate unfair vs fair predictions per group.

    ``table[g][fair][unfair]`` counts rows of group ``g``. Undesirable flips
    are 0 -> 1 in group 1 and 1 -> 0 in group 0 (unfair -> fair).
    """
    u = np.asarray(scores_unfair, dtype=float).ravel() >= tau
    f = np.asarray(scores_fair, dtype=float).ravel() >= tau
    s = np.asarray(groups).ravel()
    if not (u.shape == f.shape == s.shape):
        raise ValueError("inputs must have the same length")
    tables = {}
    for g in (0, 1):
        sel = s == g
        tab = np.zeros((2, 2), dtype=int)
        np.add.at(tab, (f[sel].astype(int), u[sel].astype(int)), 1)
        tables[g] = tab
    undesirable = {0: int(tables[0][0, 1]), 1: int(tables[1][1, 0])}
    return {
        "confusion": {str(g): tables[g].tolist() for g in (0, 1)},
        "undesirable_flips": {str(g): undesirable[g] for g in (0, 1)},
        "undesirable_total": undesirable[0] + undesirable[1],
    }


@dataclass
class FairnessReport:
    """All test-time measures for one model on one split."""

    accuracy: float
    dp: float
    dp_bar: float
    wdp: float
    tvdp: float
    ksdp: float
    tpr_gap: float
    fpr_gap: float
    eo: float
    tau: float = DEFAULT_TAU
    mdp: Optional[float] = None
    transport_cost: Optional[float] = None
    consistency: Optional[float] = None

    CSV_COLUMNS = ("acc", "dp", "dp_bar", "wdp", "tvdp", "ksdp", "eo", "mdp", "transport_cost")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FairnessReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def csv_row(self) -> list:
        d = self.to_dict()
        d["acc"] = d["accuracy"]
        return ["" if d[c] is None else repr(float(d[c])) for c in self.CSV_COLUMNS]


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()
