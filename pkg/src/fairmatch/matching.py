"""Fair matching functions and Matched Demographic Parity (MDP).

On equal-size samples the MDP-minimising map pairs equal ranks of the two
score samples (quantile matching). For unequal sizes the minimiser is a
coupling, obtained from the Kantorovich problem on score gaps.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ot import TransportPlan, solve_kantorovich

__all__ = [
    "MatchResult",
    "quantile_match",
    "fair_matching_function",
    "estimate_fair_matching",
    "estimate_transport_cost",
    "stochastic_fair_match",
    "coupling_transport_cost",
    "sample_batch",
]


@dataclass(frozen=True)
class MatchResult:
    """Pairs ``(source_index[k], target_index[k])`` with score gap ``gaps[k]``."""

    source_group: int
    source_index: np.ndarray
    target_index: np.ndarray
    gaps: np.ndarray
    mdp: float
    transport_cost: Optional[float] = None

    @property
    def pairs(self) -> list:
        return list(zip(self.source_index.tolist(), self.target_index.tolist(), self.gaps.tolist()))


def _squared_distances(xs_src, xs_tgt):
    diff = np.asarray(xs_src, dtype=float) - np.asarray(xs_tgt, dtype=float)
    if diff.ndim == 1:
        diff = diff[:, None]
    return np.einsum("ij,ij->i", diff, diff)


def quantile_match(scores_src, scores_tgt, source_group: int = 0, xs_src=None, xs_tgt=None) -> MatchResult:
    """Match the rank-k source score to the rank-k target score.

    Ties keep their original order (stable sort). When the inputs ``xs_src``
    and ``xs_tgt`` are given, the mean squared distance between matched
    inputs is reported as ``transport_cost``.
    """
    a = np.asarray(scores_src, dtype=float).ravel()
    b = np.asarray(scores_tgt, dtype=float).ravel()
    if len(a) != len(b):
        raise ValueError(f"quantile matching needs equal sizes, got {len(a)} and {len(b)}")
    if len(a) == 0:
        raise ValueError("empty score list")
    src = np.argsort(a, kind="stable")
    tgt = np.argsort(b, kind="stable")
    gaps = np.abs(a[src] - b[tgt])
    cost = None
    if xs_src is not None and xs_tgt is not None:
        cost = float(np.mean(_squared_distances(np.asarray(xs_src)[src], np.asarray(xs_tgt)[tgt])))
    return MatchResult(
        source_group=source_group,
        source_index=src,
        target_index=tgt,
        gaps=gaps,
        mdp=float(gaps.mean()),
        transport_cost=cost,
    )


def fair_matching_function(model, batch0, batch1) -> MatchResult:
    """Fair matching function of ``model`` on two equal-size batches.

    Both directions (0 -> 1 and 1 -> 0) are matched by quantiles; the one
    with the smaller MDP wins, ties going to source group 0.
    """
    X0 = np.asarray(batch0, dtype=float)
    X1 = np.asarray(batch1, dtype=float)
    if len(X0) == 0 or len(X1) == 0:
        raise ValueError("empty batch")
    f0 = np.asarray(model(X0, 0), dtype=float).ravel()
    f1 = np.asarray(model(X1, 1), dtype=float).ravel()
    forward = quantile_match(f0, f1, 0, X0, X1)
    backward = quantile_match(f1, f0, 1, X1, X0)
    return backward if backward.mdp < forward.mdp else forward


def sample_batch(rng, index: np.ndarray, m: int) -> np.ndarray:
    """``m`` rows of ``index``: without replacement when possible, returned in dataset order."""
    index = np.asarray(index)
    if len(index) == 0:
        raise ValueError("cannot sample from an empty group")
    replace = len(index) < m
    return np.sort(rng.choice(index, size=m, replace=replace))


def _batch_rng(seed, b):
    return np.random.default_rng([int(seed), int(b)])


def estimate_fair_matching(model, X, groups, m: int = 1024, num_batches: int = 100, seed=0):
    """Mean ``(mdp, transport_cost)`` of the fair matching function over random batch pairs.

    Batch ``b`` draws from its own generator seeded by ``(seed, b)``, so the
    estimate is reproducible and independent of evaluation order.
    """
    X = np.asarray(X, dtype=float)
    groups = np.asarray(groups).ravel()
    idx0 = np.flatnonzero(groups == 0)
    idx1 = np.flatnonzero(groups == 1)
    if len(idx0) == 0 or len(idx1) == 0:
        raise ValueError("both groups need at least one row")
    mdps = np.empty(num_batches)
    costs = np.empty(num_batches)
    for b in range(num_batches):
        rng = _batch_rng(seed, b)
        res = fair_matching_function(model, X[sample_batch(rng, idx0, m)], X[sample_batch(rng, idx1, m)])
        mdps[b] = res.mdp
        costs[b] = res.transport_cost
    return float(mdps.mean()), float(costs.mean())


def estimate_transport_cost(model, X, groups, m: int = 1024, num_batches: int = 100, seed=0) -> float:
    """Transport cost of the fair matching function, averaged over mini-batches."""
    return estimate_fair_matching(model, X, groups, m, num_batches, seed)[1]


def stochastic_fair_match(scores0, scores1) -> TransportPlan:
    """MDP-minimising coupling for groups of any sizes.

    The plan's ``total_cost`` is the realised MDP.
    """
    a = np.asarray(scores0, dtype=float).ravel()
    b = np.asarray(scores1, dtype=float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty score list")
    return solve_kantorovich(np.abs(a[:, None] - b[None, :]))


def coupling_transport_cost(plan: TransportPlan, xs0, xs1) -> float:
    """Expected squared distance ``sum_ij gamma_ij ||x_i - x_j||^2`` under a plan."""
    A = np.asarray(xs0, dtype=float)
    B = np.asarray(xs1, dtype=float)
    if A.ndim == 1:
        A, B = A[:, None], B[:, None]
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2 * A @ B.T
    return float(np.sum(plan.as_matrix() * np.maximum(sq, 0.0)))
