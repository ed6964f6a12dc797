"""Exact discrete optimal transport: cost matrices, assignments and couplings.

Two solvers live here:

* :func:`solve_assignment` -- balanced ``m x m`` problems, solved with a
  shortest-augmenting-path (Jonker-Volgenant family) method that also keeps
  the dual potentials. The duals are reused to return the lexicographically
  smallest optimal permutation, so equal-cost optima never depend on
  floating-point accidents.
* :func:`solve_kantorovich` -- ``m0 x m1`` problems with uniform marginals,
  solved with the transportation (network) simplex on integer-scaled masses.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

__all__ = [
    "CostMatrix",
    "TransportPlan",
    "build_cost_matrix",
    "solve_assignment",
    "solve_kantorovich",
    "construct_common_point_coupling",
]


@dataclass(frozen=True)
class CostMatrix:
    """Dense non-negative cost matrix; rows index group 0, columns group 1."""

    entries: np.ndarray
    alpha: float = 0.0

    @property
    def shape(self) -> tuple:
        return self.entries.shape


@dataclass(frozen=True)
class TransportPlan:
    """Either a one-to-one assignment or a coupling matrix.

    ``kind`` is ``"assignment"`` (``permutation[i]`` is the column matched to
    row ``i``) or ``"coupling"`` (``coupling`` holds the joint weights).
    """

    kind: str
    total_cost: float
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    permutation: Optional[np.ndarray] = None
    coupling: Optional[np.ndarray] = None

    def as_matrix(self) -> np.ndarray:
        """Dense coupling matrix, also for assignments (entries ``1/m``)."""
        if self.coupling is not None:
            return self.coupling
        m = len(self.permutation)
        gamma = np.zeros((m, m))
        gamma[np.arange(m), self.permutation] = 1.0 / m
        return gamma


def _as_points(xs, name):
    arr = np.asarray(xs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a list of points (2-D array), got ndim={arr.ndim}")
    return arr


def build_cost_matrix(xs0, xs1, labels0=None, labels1=None, alpha: float = 0.0) -> CostMatrix:
    """Squared Euclidean cost, plus ``alpha * |y_i - y_j|`` when labels are used.

    With ``alpha == 0`` this is the marginal (input-only) cost; with
    ``alpha > 0`` it is the joint cost on inputs and labels.
    """
    a = _as_points(xs0, "xs0")
    b = _as_points(xs1, "xs1")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: xs0 has d={a.shape[1]}, xs1 has d={b.shape[1]}")
    if alpha < 0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be a finite non-negative number, got {alpha}")
    # difference form keeps exact zeros for identical points
    diff = a[:, None, :] - b[None, :, :]
    entries = np.einsum("ijk,ijk->ij", diff, diff)
    if alpha > 0:
        if labels0 is None or labels1 is None:
            raise ValueError("alpha > 0 requires labels for both point sets")
        y0 = np.asarray(labels0, dtype=float).ravel()
        y1 = np.asarray(labels1, dtype=float).ravel()
        if len(y0) != len(a) or len(y1) != len(b):
            raise ValueError("labels must have one entry per point")
        entries = entries + alpha * np.abs(y0[:, None] - y1[None, :])
    if not np.all(np.isfinite(entries)):
        raise ValueError("cost matrix has non-finite entries")
    return CostMatrix(entries=entries, alpha=float(alpha))


def _entries(cost) -> np.ndarray:
    c = cost.entries if isinstance(cost, CostMatrix) else cost
    c = np.ascontiguousarray(c, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    return c


# ---------------------------------------------------------------------------
# Balanced assignment
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _shortest_augmenting_path(c):
    """Min-cost perfect matching with dual potentials.

    Returns ``(col4row, u, v)`` with ``c[i, j] - u[i] - v[j] >= 0`` and
    equality on matched pairs (up to rounding).
    """
    n = c.shape[0]
    inf = np.inf
    # 1-based arrays; slot 0 is the virtual source column
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row4col = np.zeros(n + 1, dtype=np.int64)
    col4row_1 = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    # warm start: column then row reduction, greedy matching on tight edges
    for j in range(1, n + 1):
        best = inf
        for i in range(n):
            if c[i, j - 1] < best:
                best = c[i, j - 1]
        v[j] = best
    for i in range(1, n + 1):
        best = inf
        for j in range(1, n + 1):
            h = c[i - 1, j - 1] - v[j]
            if h < best:
                best = h
        u[i] = best
        for j in range(1, n + 1):
            if row4col[j] == 0 and c[i - 1, j - 1] - v[j] == best:
                row4col[j] = i
                col4row_1[i] = j
                break
    for i in range(1, n + 1):
        if col4row_1[i] != 0:
            continue
        row4col[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = inf
            used[j] = False
        while True:
            used[j0] = True
            i0 = row4col[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[row4col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row4col[j0] == 0:
                break
        while True:
            j1 = way[j0]
            row4col[j0] = row4col[j1]
            j0 = j1
            if j0 == 0:
                break
    col4row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col4row[row4col[j] - 1] = j - 1
    return col4row, u[1:].copy(), v[1:].copy()


@numba.njit(cache=True)
def _lexicographic_canonical(c, col4row, u, v, tol):
    """Rewrite an optimal matching into the lexicographically smallest one.

    Every perfect matching on the tight edges (zero reduced cost) is optimal,
    so rows are fixed greedily to their smallest tight column for which an
    alternating path still completes the matching.
    """
    n = c.shape[0]
    tight = np.empty((n, n), dtype=np.bool_)
    for i in range(n):
        for j in range(n):
            tight[i, j] = c[i, j] - u[i] - v[j] <= tol
        tight[i, col4row[i]] = True
    row4col = np.empty(n, dtype=np.int64)
    for i in range(n):
        row4col[col4row[i]] = i
    fixed_col = np.zeros(n, dtype=np.bool_)
    seen = np.zeros(n, dtype=np.bool_)
    parent_row = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for i in range(n):
        target = col4row[i]
        for j in range(target):
            if fixed_col[j] or not tight[i, j]:
                continue
            # row r must move off column j and reach the freed column `target`
            r = row4col[j]
            for k in range(n):
                seen[k] = False
            seen[j] = True
            head = 0
            tail = 0
            queue[tail] = r
            tail += 1
            found = False
            while head < tail and not found:
                row = queue[head]
                head += 1
                for cc in range(n):
                    if seen[cc] or fixed_col[cc] or not tight[row, cc]:
                        continue
                    seen[cc] = True
                    parent_row[cc] = row
                    if cc == target:
                        found = True
                        break
                    queue[tail] = row4col[cc]
                    tail += 1
            if not found:
                continue
            # shift the alternating path back from `target` to r
            cc = target
            while True:
                row = parent_row[cc]
                prev = col4row[row]
                col4row[row] = cc
                row4col[cc] = row
                if row == r:
                    break
                cc = prev
            col4row[i] = j
            row4col[j] = i
            break
        fixed_col[col4row[i]] = True
    return col4row


def solve_assignment(cost, canonical: bool = True) -> TransportPlan:
    """Optimal one-to-one assignment for a square cost matrix.

    The returned plan minimises ``sum_i cost[i, perm[i]] / m``. With
    ``canonical=True`` (default) ties between optimal permutations are broken
    towards the lexicographically smallest permutation.
    """
    c = _entries(cost)
    m, k = c.shape
    if m != k:
        raise ValueError(f"assignment needs a square cost matrix, got {m}x{k}")
    if m == 0:
        raise ValueError("empty cost matrix")
    if m == 1:
        perm = np.zeros(1, dtype=np.int64)
    else:
        perm, u, v = _shortest_augmenting_path(c)
        if canonical:
            scale = max(1.0, float(np.abs(c).max()))
            perm = _lexicographic_canonical(c, perm, u, v, 1e-11 * m * scale)
    total = float(c[np.arange(m), perm].sum() / m)
    marg = np.full(m, 1.0 / m)
    return TransportPlan(
        kind="assignment", total_cost=total, row_marginal=marg, col_marginal=marg.copy(), permutation=perm
    )


# ---------------------------------------------------------------------------
# Kantorovich problem (transportation simplex)
# ---------------------------------------------------------------------------


def _northwest_corner(supply, demand):
    """Initial basic feasible solution; always returns m0 + m1 - 1 cells."""
    s = supply.copy()
    d = demand.copy()
    m0, m1 = len(s), len(d)
    cells, flows = [], []
    i = j = 0
    while i < m0 and j < m1:
        f = min(s[i], d[j])
        cells.append((i, j))
        flows.append(f)
        s[i] -= f
        d[j] -= f
        if s[i] == 0 and i < m0 - 1:
            i += 1
        else:
            j += 1
    return cells, flows


def _tree_adjacency(cells, m0, m1):
    # nodes 0..m0-1 are rows, m0..m0+m1-1 are columns
    adj = [[] for _ in range(m0 + m1)]
    for k, (i, j) in enumerate(cells):
        adj[i].append((m0 + j, k))
        adj[m0 + j].append((i, k))
    return adj


def _potentials(c, cells, adj, m0, m1):
    u = np.zeros(m0)
    v = np.zeros(m1)
    done = np.zeros(m0 + m1, dtype=bool)
    done[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nxt, k in adj[node]:
            if done[nxt]:
                continue
            i, j = cells[k]
            if nxt >= m0:
                v[j] = c[i, j] - u[i]
            else:
                u[i] = c[i, j] - v[j]
            done[nxt] = True
            queue.append(nxt)
    return u, v


def _tree_path(adj, start, goal):
    """Basic-cell indices along the tree path from node ``start`` to ``goal``."""
    parent = {start: (None, None)}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nxt, k in adj[node]:
            if nxt not in parent:
                parent[nxt] = (node, k)
                queue.append(nxt)
    path = []
    node = goal
    while parent[node][0] is not None:
        node, k = parent[node]
        path.append(k)
    return path[::-1]


def solve_kantorovich(cost, max_iter: Optional[int] = None) -> TransportPlan:
    """Optimal coupling with uniform marginals ``1/m0`` (rows) and ``1/m1`` (columns).

    Masses are scaled to integers (row supply ``m1``, column demand ``m0``) so
    pivots are exact; the returned coupling divides by ``m0 * m1``.
    """
    c = _entries(cost)
    m0, m1 = c.shape
    if m0 == 0 or m1 == 0:
        raise ValueError("empty cost matrix")
    supply = np.full(m0, m1, dtype=np.int64)
    demand = np.full(m1, m0, dtype=np.int64)
    cells, flows = _northwest_corner(supply, demand)
    tol = 1e-12 * max(1.0, float(np.abs(c).max()))
    if max_iter is None:
        max_iter = 50 * (m0 + m1) * max(m0, m1) + 100
    degenerate_run = 0
    for _ in range(max_iter):
        adj = _tree_adjacency(cells, m0, m1)
        u, v = _potentials(c, cells, adj, m0, m1)
        reduced = c - u[:, None] - v[None, :]
        if degenerate_run < 2 * (m0 + m1):
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                break
        else:
            # Bland's rule after a long degenerate streak rules out cycling
            candidates = np.flatnonzero(reduced.ravel() < -tol)
            if candidates.size == 0:
                break
            flat = int(candidates[0])
        ei, ej = divmod(flat, m1)
        path = _tree_path(adj, m0 + ej, ei)
        # path runs column ej -> ... -> row ei; cells alternate -, +, -, ...
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flows[k] for k in minus)
        leave = min((k for k in minus if flows[k] == theta), key=lambda k: (cells[k][0], cells[k][1]))
        for k in minus:
            flows[k] -= theta
        for k in plus:
            flows[k] += theta
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
        cells[leave] = (ei, ej)
        flows[leave] = theta
    else:
        raise RuntimeError("transportation simplex did not converge")

    total_mass = m0 * m1
    gamma = np.zeros((m0, m1))
    for (i, j), f in zip(cells, flows):
        gamma[i, j] = f / total_mass
    return TransportPlan(
        kind="coupling",
        total_cost=float(np.sum(gamma * c)),
        row_marginal=np.full(m0, 1.0 / m0),
        col_marginal=np.full(m1, 1.0 / m1),
        coupling=gamma,
    )


def construct_common_point_coupling(scores0, scores1) -> TransportPlan:
    """Block coupling that pins common score values onto each other.

    Common values (multiset intersection, exact equality) are coupled with
    weight ``1/n1`` each; the leftover row and column masses are filled with
    the north-west corner rule. Requires ``n0 <= n1``. The coupling's cost
    (``total_cost``) is its MDP on the scores, at most ``1 - m / n1`` for
    ``m`` common values.
    """
    a = np.asarray(scores0, dtype=float).ravel()
    b = np.asarray(scores1, dtype=float).ravel()
    n0, n1 = len(a), len(b)
    if n0 == 0 or n1 == 0:
        raise ValueError("empty score list")
    if n0 > n1:
        raise ValueError("construct_common_point_coupling needs n0 <= n1; swap the groups")

    pool = {}
    for j, val in enumerate(b):
        pool.setdefault(val, deque()).append(j)
    common = []
    for i, val in enumerate(a):
        q = pool.get(val)
        if q:
            common.append((i, q.popleft()))
    m = len(common)
    common_rows = {i for i, _ in common}
    common_cols = {j for _, j in common}

    # integer masses over denominator n0 * n1
    flow = np.zeros((n0, n1), dtype=np.int64)
    for i, j in common:
        flow[i, j] = n0
    rows = [i for i, _ in common] + [i for i in range(n0) if i not in common_rows]
    supply = [n1 - n0] * m + [n1] * (n0 - m)
    cols = [j for j in range(n1) if j not in common_cols]
    demand = [n0] * len(cols)
    r = c = 0
    while r < len(rows) and c < len(cols):
        f = min(supply[r], demand[c])
        flow[rows[r], cols[c]] += f
        supply[r] -= f
        demand[c] -= f
        if supply[r] == 0:
            r += 1
        if c < len(cols) and demand[c] == 0:
            c += 1
    gamma = flow / float(n0 * n1)
    gaps = np.abs(a[:, None] - b[None, :])
    return TransportPlan(
        kind="coupling",
        total_cost=float(np.sum(gamma * gaps)),
        row_marginal=np.full(n0, 1.0 / n0),
        col_marginal=np.full(n1, 1.0 / n1),
        coupling=gamma,
    )
