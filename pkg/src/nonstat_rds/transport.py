"""Exact transportation-problem solver used as the Wasserstein oracle.

Primal transportation simplex (u-v method) on a spanning-tree basis.  The
initial basis comes from the north-west corner rule; entering and leaving
cells are chosen by Bland's smallest-index rule, so degenerate pivots cannot
cycle and results are deterministic.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .measures import DiscreteMeasure, SpaceMismatch, TransportPlan

ORACLE_SIZE_CAP = 400
FEAS_TOL = 1e-10


class OracleSizeCap(ValueError):
    pass


def _northwest(a: np.ndarray, b: np.ndarray):
    m, n = a.size, b.size
    x = np.zeros((m, n))
    ra, rb = a.copy(), b.copy()
    basis = []
    i = j = 0
    while True:
        q = max(0.0, min(ra[i], rb[j]))
        x[i, j] = q
        basis.append((i, j))
        ra[i] -= q
        rb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(cost: np.ndarray, basis, m: int, n: int):
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    rows = [[] for _ in range(m)]
    cols = [[] for _ in range(n)]
    for i, j in basis:
        rows[i].append(j)
        cols[j].append(i)
    u[0] = 0.0
    queue = deque([("r", 0)])
    while queue:
        kind, k = queue.popleft()
        if kind == "r":
            for j in rows[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    queue.append(("c", j))
        else:
            for i in cols[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    queue.append(("r", i))
    return u, v, rows, cols


def _tree_path(rows, cols, start_row: int, end_col: int):
    """Cells on the basis-tree path from row node ``start_row`` to column node ``end_col``."""
    prev = {("r", start_row): None}
    queue = deque([("r", start_row)])
    target = ("c", end_col)
    while queue:
        node = queue.popleft()
        if node == target:
            break
        kind, k = node
        nbrs = [("c", j) for j in rows[k]] if kind == "r" else [("r", i) for i in cols[k]]
        for nb in nbrs:
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    path = []
    node = target
    while prev[node] is not None:
        p = prev[node]
        cell = (p[1], node[1]) if p[0] == "r" else (node[1], p[1])
        path.append(cell)
        node = p
    return path[::-1]


def solve_transport(a, b, cost, max_iter: int = 100_000) -> np.ndarray:
    """Optimal plan for ``min <cost, x>`` subject to row sums ``a`` and column sums ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = a.size, b.size
    if cost.shape != (m, n):
        raise ValueError("cost matrix shape does not match the marginals")
    if abs(a.sum() - b.sum()) > FEAS_TOL:
        raise ValueError("marginals carry different total mass")
    x, basis = _northwest(a, b)
    scale = max(1.0, float(np.abs(cost).max()))
    for _ in range(max_iter):
        u, v, rows, cols = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        candidates = np.flatnonzero(reduced.ravel() < -1e-12 * scale)
        if candidates.size == 0:
            return x
        ei, ej = divmod(int(candidates[0]), n)
        # cycle: entering cell (+), then alternate along the tree path from column ej back to row ei
        path = _tree_path(rows, cols, ei, ej)
        # path runs row ei -> ... -> column ej; reversed order alternates -, +, -, ...
        cycle = list(reversed(path))
        minus = cycle[0::2]
        plus = cycle[1::2]
        theta = min(x[c] for c in minus)
        leaving = min((c for c in minus if x[c] <= theta + 1e-15), key=lambda c: c[0] * n + c[1])
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[ei, ej] += theta
        x[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ei, ej))
    raise RuntimeError("transportation simplex did not converge")


def wasserstein_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> TransportPlan:
    """Exact optimal transport plan between two small discrete measures."""
    if mu.space != nu.space:
        raise SpaceMismatch()
    if len(mu) * len(nu) > ORACLE_SIZE_CAP:
        raise OracleSizeCap("oracle size cap")
    cost = mu.space.dist(mu.support[:, None], nu.support[None, :])
    plan = solve_transport(mu.weights, nu.weights, cost)
    return TransportPlan(mu, nu, np.clip(plan, 0.0, None))
