"""Evaluation and audit routines that combine several measures."""
from __future__ import annotations

import numpy as np

from . import metrics as M
from .matching import estimate_fair_matching

__all__ = ["evaluate_model", "subset_audit", "tukey_summary", "prophecy_audit"]


def evaluate_model(model, data, tau: float = M.DEFAULT_TAU, m=None, num_batches: int = 0, seed=0,
                   num_bins: int = 100) -> M.FairnessReport:
    """Full :class:`~fairmatch.metrics.FairnessReport` for ``model`` on ``data``.

    With ``num_batches > 0`` the fair matching function is estimated on
    ``num_batches`` batch pairs of size ``m`` (default: the smaller group
    size, capped at 1024), filling ``mdp`` and ``transport_cost``.
    """
    scores = np.asarray(model(data.X, data.s), dtype=float)
    f0, f1 = M.split_by_group(scores, data.s)
    tpr, fpr, eo = M.eo_gaps(scores, data.y, data.s, tau)
    report = M.FairnessReport(
        accuracy=float(np.mean((scores >= tau) == data.y)),
        dp=M.dp_gap(f0, f1, tau),
        dp_bar=M.dp_bar_gap(f0, f1),
        wdp=M.wasserstein_dp(f0, f1),
        tvdp=M.tv_dp(f0, f1, num_bins),
        ksdp=M.ks_dp(f0, f1),
        tpr_gap=tpr,
        fpr_gap=fpr,
        eo=eo,
        tau=tau,
        consistency=M.consistency(model, data.X, data.s, tau),
    )
    if num_batches > 0:
        if m is None:
            m = int(min(1024, len(f0), len(f1)))
        report.mdp, report.transport_cost = estimate_fair_matching(model, data.X, data.s, m, num_batches, seed)
    return report


def tukey_summary(values) -> dict:
    """Boxplot statistics with Tukey's 1.5 * IQR outlier rule."""
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return {
        "count": int(v.size),
        "mean": float(v.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "iqr": float(iqr),
        "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "lower_fence": float(lo),
        "upper_fence": float(hi),
        "outliers": int(np.sum((v < lo) | (v > hi))),
    }


def subset_audit(model, data, num_subsets: int = 1000, seed=0):
    """Mean-score gap on random half-space subsets.

    Returns ``(rows, summary)`` where ``rows`` holds ``(subset_id, size,
    dp_bar)`` for every subset with both groups present and ``summary`` is
    :func:`tukey_summary` plus the number of skipped (undefined) subsets.
    """
    scores = np.asarray(model(data.X, data.s), dtype=float)
    masks = M.random_hyperplane_subsets(data.X, num_subsets, seed)
    rows = []
    skipped = 0
    for k, mask in enumerate(masks):
        try:
            rows.append((k, int(mask.sum()), M.subset_dp_bar(scores, data.s, mask)))
        except ValueError:
            skipped += 1
    summary = tukey_summary([r[2] for r in rows]) if rows else {"count": 0}
    summary["undefined"] = skipped
    return rows, summary


def prophecy_audit(unfair_model, fair_model, data, tau: float = M.DEFAULT_TAU) -> dict:
    """Rank agreement and undesirable prediction flips of a fair model vs an unfair one."""
    su = np.asarray(unfair_model(data.X, data.s), dtype=float)
    sf = np.asarray(fair_model(data.X, data.s), dtype=float)
    out = {"spearman": {}}
    for g in (0, 1):
        sel = data.s == g
        out["spearman"][str(g)] = M.spearman_rank_corr(su[sel], sf[sel]) if sel.sum() > 1 else None
    out.update(M.flip_confusion(su, sf, data.s, tau))
    return out
