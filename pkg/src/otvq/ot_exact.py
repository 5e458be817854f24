"""Exact discrete optimal transport via the transportation simplex.

This is the oracle end of the solver stack: small instances only (n*k <= 400),
determinism over speed. North-west-corner start, stepping-stone pivots, and
Bland's smallest-index rule on both the entering and the leaving cell so
degenerate instances cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DiscreteDist", "TransportPlan", "exact_ot", "cost_matrix", "OTError"]

_MAX_CELLS = 400
_RC_TOL = 1e-11  # reduced-cost threshold: entering candidates must beat this
_FEAS_TOL = 1e-9


class OTError(ValueError):
    """Infeasible or out-of-contract optimal-transport input."""


@dataclass(frozen=True)
class DiscreteDist:
    """Discrete probability measure: weights over explicit support atoms."""

    weights: np.ndarray
    atoms: np.ndarray  # (n, support_dim)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        a = np.asarray(self.atoms, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", a)
        if w.ndim != 1 or a.shape[0] != w.shape[0]:
            raise OTError(f"weights/atoms disagree: {w.shape} vs {a.shape}")
        if np.any(w < 0.0):
            raise OTError("negative weight")
        if abs(w.sum() - 1.0) > 1e-12:
            raise OTError(f"weights sum to {w.sum()!r}, not 1")

    @property
    def support_dim(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def uniform(cls, atoms) -> "DiscreteDist":
        atoms = np.asarray(atoms, dtype=np.float64)
        n = atoms.shape[0]
        return cls(np.full(n, 1.0 / n), atoms)


@dataclass(frozen=True)
class TransportPlan:
    """A coupling with its transported cost and achieved marginals."""

    matrix: np.ndarray
    value: float
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, cost: np.ndarray) -> "TransportPlan":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(
            matrix=matrix,
            value=float((matrix * cost).sum()),
            row_marginal=matrix.sum(axis=1),
            col_marginal=matrix.sum(axis=0),
        )


def cost_matrix(a: np.ndarray, b: np.ndarray, metric: str = "sqeuclidean") -> np.ndarray:
    """All-pairs ground cost between two atom lists; hook for other metrics.

    Computed from explicit differences, not the expanded quadratic: at
    oracle scale the memory is irrelevant and identical atoms get an exact
    zero, which the solvers' degenerate-instance behavior relies on.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if metric == "sqeuclidean":
        diff = a[:, None, :] - b[None, :, :]
        return (diff * diff).sum(axis=2)
    if metric == "euclidean":
        return np.sqrt(cost_matrix(a, b, "sqeuclidean"))
    raise OTError(f"unknown metric '{metric}'")


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    """Initial basic feasible solution with exactly n + k - 1 basis cells."""
    n, k = a.size, b.size
    x = np.zeros((n, k))
    rem_a = a.copy()
    rem_b = b.copy()
    basis = []
    i = j = 0
    while True:
        alloc = min(rem_a[i], rem_b[j])
        x[i, j] = alloc
        basis.append((i, j))
        rem_a[i] -= alloc
        rem_b[j] -= alloc
        if i == n - 1 and j == k - 1:
            break
        # advance exactly one of i, j per step: keeps the count at n+k-1
        if rem_a[i] <= rem_b[j] and i < n - 1:
            i += 1
        else:
            j += 1
    return x, basis


def _solve_duals(basis, cost, n, k):
    """u_i + v_j = c_ij on the basis tree, rooted at u_0 = 0."""
    rows = [[] for _ in range(n)]
    cols = [[] for _ in range(k)]
    for (i, j) in basis:
        rows[i].append(j)
        cols[j].append(i)
    u = np.full(n, np.nan)
    v = np.full(k, np.nan)
    u[0] = 0.0
    queue = [("r", 0)]
    while queue:
        kind, idx = queue.pop()
        if kind == "r":
            for j in rows[idx]:
                if np.isnan(v[j]):
                    v[j] = cost[idx, j] - u[idx]
                    queue.append(("c", j))
        else:
            for i in cols[idx]:
                if np.isnan(u[i]):
                    u[i] = cost[i, idx] - v[idx]
                    queue.append(("r", i))
    if np.any(np.isnan(u)) or np.any(np.isnan(v)):
        raise OTError("basis graph disconnected; simplex invariant broken")
    return u, v


def _find_cycle(basis, enter, n, k):
    """Unique alternating cycle closed by the entering cell.

    Returns the cycle as a cell list starting at `enter`; odd positions are
    the cells whose allocation decreases.
    """
    ie, je = enter
    rows = [[] for _ in range(n)]
    cols = [[] for _ in range(k)]
    for (i, j) in basis:
        rows[i].append(j)
        cols[j].append(i)
    # path from row ie to col je through the basis tree
    parent: dict = {("r", ie): None}
    stack = [("r", ie)]
    while stack:
        node = stack.pop()
        kind, idx = node
        if node == ("c", je):
            break
        if kind == "r":
            for j in rows[idx]:
                nxt = ("c", j)
                if nxt not in parent:
                    parent[nxt] = node
                    stack.append(nxt)
        else:
            for i in cols[idx]:
                nxt = ("r", i)
                if nxt not in parent:
                    parent[nxt] = node
                    stack.append(nxt)
    if ("c", je) not in parent:
        raise OTError("entering cell closes no cycle; simplex invariant broken")
    # walk back: nodes alternate c/r; consecutive pairs are basis cells
    path_nodes = [("c", je)]
    while parent[path_nodes[-1]] is not None:
        path_nodes.append(parent[path_nodes[-1]])
    path_nodes.reverse()  # starts at ("r", ie), ends at ("c", je)
    cycle = [enter]
    for a, b in zip(path_nodes, path_nodes[1:]):
        (ka, xa), (kb, xb) = a, b
        cell = (xa, xb) if ka == "r" else (xb, xa)
        cycle.append(cell)
    # cycle alternates +,-,+,-,... starting at the entering cell
    return cycle


def exact_ot(mu: DiscreteDist, nu: DiscreteDist, cost: np.ndarray,
             max_pivots: int = 20000) -> TransportPlan:
    """Globally optimal coupling of two small discrete measures.

    cost is the full n x k ground-cost matrix. The returned plan is a basic
    feasible (vertex) solution: at most n + k - 1 nonzero cells.
    """
    a = mu.weights
    b = nu.weights
    cost = np.asarray(cost, dtype=np.float64)
    n, k = a.size, b.size
    if cost.shape != (n, k):
        raise OTError(f"cost shape {cost.shape} != ({n}, {k})")
    if not np.all(np.isfinite(cost)):
        raise OTError("non-finite cost")
    if n * k > _MAX_CELLS:
        raise OTError(f"instance too large for the exact oracle: {n}x{k}")
    if abs(a.sum() - b.sum()) > _FEAS_TOL:
        raise OTError(f"marginal mismatch: {a.sum()!r} vs {b.sum()!r}")

    x, basis = _northwest_corner(a, b)
    basis_set = set(basis)

    for _ in range(max_pivots):
        u, v = _solve_duals(basis, cost, n, k)
        reduced = cost - u[:, None] - v[None, :]
        # Bland: entering cell is the smallest flat index with negative rc
        entering = None
        flat = reduced.ravel()
        order = np.flatnonzero(flat < -_RC_TOL)
        for f in order:
            cell = (int(f) // k, int(f) % k)
            if cell not in basis_set:
                entering = cell
                break
        if entering is None:
            achieved_row = x.sum(axis=1)
            achieved_col = x.sum(axis=0)
            if (np.max(np.abs(achieved_row - a)) > _FEAS_TOL
                    or np.max(np.abs(achieved_col - b)) > _FEAS_TOL):
                raise OTError("optimal plan violates marginals beyond tolerance")
            return TransportPlan.from_matrix(x, cost)

        cycle = _find_cycle(basis, entering, n, k)
        minus_cells = cycle[1::2]
        theta = min(x[c] for c in minus_cells)
        # Bland again: smallest-index minimizer leaves
        leaving = min(c for c in minus_cells if x[c] <= theta + 0.0)
        for pos, c in enumerate(cycle):
            x[c] += theta if pos % 2 == 0 else -theta
        x[leaving] = 0.0  # kill residual round-off on the leaving cell
        basis.remove(leaving)
        basis.append(entering)
        basis_set.remove(leaving)
        basis_set.add(entering)

    raise OTError(f"no optimum after {max_pivots} pivots (degenerate cycling?)")
