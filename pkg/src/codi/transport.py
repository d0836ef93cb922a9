"""Exact optimal transport between subject-token feature sets.

Identity transfer moves the reference subject's features onto each
target's subject tokens along an exact optimal transport plan. The
solver is a network simplex specialized to the dense transportation
problem: supplies are the reference token masses ``a``, demands the
target token masses ``b``, and costs the cosine distances between the
harvested feature rows.

The basis is a spanning tree on the bipartite row/column node graph.
Degeneracy is handled by solving a mass-perturbed problem (every supply
gets +EPS, the last demand absorbs the total) and re-deriving flows for
the unperturbed masses on the final basis, which is optimal for any
masses since dual feasibility does not depend on them. Entering and
leaving arcs follow Bland's lowest-index rule, so pivoting terminates
even on crafted ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleMassesError,
    NumericError,
    ParameterError,
    ShapeError,
    ValidationError,
)

EPS = 1e-12
_REDUCED_COST_TOL = 1e-11
_MASS_SUM_TOL = 1e-6


@dataclass(frozen=True)
class TransportPlan:
    """An optimal coupling and its transport cost.

    ``matrix`` has row sums equal to the supplies and column sums equal
    to the demands it was solved with, up to accumulated rounding; at
    most rows + cols - 1 entries are strictly positive.
    """

    matrix: np.ndarray
    objective: float


def cost_matrix(s_id: np.ndarray, s_n: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances 1 - cos(s_id[i], s_n[j]).

    Rows of either input with zero norm have no direction and make the
    distance undefined, so they are rejected. Output is clipped to the
    theoretical range [0, 2] to shed rounding spill.
    """
    x = np.asarray(s_id, dtype=np.float64)
    y = np.asarray(s_n, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError("feature sets must be rank 2 (tokens, d)")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature dims disagree: {x.shape[1]} vs {y.shape[1]}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValidationError("feature set contains NaN or Inf")
    xn = np.linalg.norm(x, axis=1)
    yn = np.linalg.norm(y, axis=1)
    if (xn == 0).any() or (yn == 0).any():
        raise ValidationError("zero-norm feature row has no cosine direction")
    cos = (x @ y.T) / np.outer(xn, yn)
    return np.clip(1.0 - cos, 0.0, 2.0)


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> tuple[list[tuple[int, int]], dict]:
    """Initial basic feasible solution by the staircase rule.

    Returns exactly m + n - 1 basis cells (some may carry zero flow)
    because each step advances one index and the walk ends at the
    bottom-right corner.
    """
    m, n = a.size, b.size
    ra, rb = a.copy(), b.copy()
    cells: list[tuple[int, int]] = []
    flows: dict[tuple[int, int], float] = {}
    i = j = 0
    for _ in range(m + n - 1):
        f = min(ra[i], rb[j])
        cells.append((i, j))
        flows[(i, j)] = f
        ra[i] -= f
        rb[j] -= f
        if ra[i] == 0.0 and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return cells, flows


class _SpanningTree:
    """Basis bookkeeping: rows are nodes 0..m-1, columns m..m+n-1."""

    def __init__(self, m: int, n: int, cells: list[tuple[int, int]]):
        self.m = m
        self.n = n
        # adj[x][y] -> basis cell joining nodes x and y (no parallel edges
        # exist: a cell is the unique edge between its row and column).
        self.adj: list[dict[int, tuple[int, int]]] = [{} for _ in range(m + n)]
        for cell in cells:
            self.add(cell)

    def add(self, cell: tuple[int, int]) -> None:
        i, j = cell
        self.adj[i][self.m + j] = cell
        self.adj[self.m + j][i] = cell

    def remove(self, cell: tuple[int, int]) -> None:
        i, j = cell
        del self.adj[i][self.m + j]
        del self.adj[self.m + j][i]

    def potentials(self, cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Dual variables with u[0] = 0, u[i] + v[j] = cost[i, j] on the tree."""
        m, n = self.m, self.n
        u = np.zeros(m)
        v = np.zeros(n)
        seen = np.zeros(m + n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            x = stack.pop()
            for y, (i, j) in self.adj[x].items():
                if seen[y]:
                    continue
                if x < m:
                    v[j] = cost[i, j] - u[i]
                else:
                    u[i] = cost[i, j] - v[j]
                seen[y] = True
                stack.append(y)
        if not seen.all():
            raise NumericError("basis is not a spanning tree")
        return u, v

    def path_cells(self, start: int, goal: int) -> list[tuple[int, int]]:
        """Basis cells along the unique tree path between two nodes."""
        parent: dict[int, tuple[int, tuple[int, int]]] = {start: (-1, (-1, -1))}
        stack = [start]
        while stack:
            x = stack.pop()
            if x == goal:
                break
            for y, cell in self.adj[x].items():
                if y not in parent:
                    parent[y] = (x, cell)
                    stack.append(y)
        cells: list[tuple[int, int]] = []
        x = goal
        while x != start:
            px, cell = parent[x]
            cells.append(cell)
            x = px
        cells.reverse()
        return cells

    def restore_flows(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Unique tree flows for the given masses, by stripping leaves.

        Each leaf's single edge must carry everything remaining at that
        node; removing it exposes the next leaf. Any mass imbalance ends
        up at the final root node, not in the flows.
        """
        m, n = self.m, self.n
        flow = np.zeros((m, n))
        rem = np.concatenate([a.astype(np.float64), b.astype(np.float64)])
        adj = [dict(d) for d in self.adj]
        order = [x for x in range(m + n) if len(adj[x]) == 1]
        while order:
            x = order.pop()
            if len(adj[x]) != 1:
                continue
            y, (i, j) = next(iter(adj[x].items()))
            f = rem[x]
            flow[i, j] = f
            rem[x] -= f
            rem[y] -= f
            del adj[x][y]
            del adj[y][x]
            if len(adj[y]) == 1:
                order.append(y)
        return flow


def solve_ot(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> TransportPlan:
    """Solve min <T, cost> s.t. T >= 0, T @ 1 = a, T.T @ 1 = b exactly.

    ``a`` and ``b`` are probability masses (each summing to 1 within
    1e-6, else the problem is rejected as infeasible). The returned plan
    is a vertex of the transportation polytope: optimal, with at most
    len(a) + len(b) - 1 strictly positive entries.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape != (a.size, b.size):
        raise ShapeError(f"cost shape {C.shape} does not match masses ({a.size}, {b.size})")
    if a.size == 0 or b.size == 0:
        raise ShapeError("transport requires at least one token on each side")
    if not np.isfinite(C).all():
        raise ValidationError("cost matrix contains NaN or Inf")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValidationError("masses contain NaN or Inf")
    if (a < 0).any() or (b < 0).any():
        raise ValidationError("masses must be nonnegative")
    if abs(a.sum() - 1.0) > _MASS_SUM_TOL or abs(b.sum() - 1.0) > _MASS_SUM_TOL:
        raise InfeasibleMassesError(
            f"masses must each sum to 1: got {a.sum():.9f} and {b.sum():.9f}"
        )
    m, n = a.size, b.size

    # Perturb away degeneracy; flows are re-derived for the true masses
    # after the basis converges.
    a_p = a + EPS
    b_p = b.copy()
    b_p[-1] += m * EPS

    cells, flows = _northwest_corner(a_p, b_p)
    tree = _SpanningTree(m, n, cells)

    max_pivots = 10000 + 100 * (m + n) ** 2
    for _ in range(max_pivots):
        u, v = tree.potentials(C)
        reduced = C - u[:, None] - v[None, :]
        candidates = np.flatnonzero(reduced.ravel() < -_REDUCED_COST_TOL)
        if candidates.size == 0:
            break
        enter = (int(candidates[0]) // n, int(candidates[0]) % n)

        path = tree.path_cells(enter[0], m + enter[1])
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flows[c] for c in minus)
        leaving = min(c for c in minus if flows[c] == theta)

        flows[enter] = theta
        for c in minus:
            flows[c] -= theta
        for c in plus:
            flows[c] += theta
        del flows[leaving]
        tree.remove(leaving)
        tree.add(enter)
    else:
        raise NumericError(f"simplex did not converge within {max_pivots} pivots")

    T = tree.restore_flows(a, b)
    clamp_tol = 10.0 * (m + n) * EPS
    if (T < -clamp_tol).any():
        raise NumericError(f"restored flow below -{clamp_tol:g}")
    T = np.maximum(T, 0.0)
    return TransportPlan(matrix=T, objective=float(np.sum(T * C)))


def transport_features(
    plan: TransportPlan | np.ndarray,
    s_id: np.ndarray,
    mode: str = "barycentric",
) -> np.ndarray:
    """Map reference subject rows onto target subject positions.

    ``literal`` applies the plan as-is: row j of the result is
    sum_i T[i, j] * s_id[i], scaled by the masses. ``barycentric`` (the
    default) divides each output row by the plan's column sum, making it
    a convex combination of reference rows; this keeps feature
    magnitudes independent of the mass resolution.
    """
    T = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    S = np.asarray(s_id, dtype=np.float64)
    if T.ndim != 2 or S.ndim != 2:
        raise ShapeError("plan and features must be rank 2")
    if T.shape[0] != S.shape[0]:
        raise ShapeError(f"plan has {T.shape[0]} supply rows, features have {S.shape[0]}")
    if mode not in ("literal", "barycentric"):
        raise ParameterError(f"unknown transport mode {mode!r}")
    out = T.T @ S
    if mode == "barycentric":
        col = T.sum(axis=0)
        if (col <= 0).any():
            raise ValidationError("plan column with zero mass cannot be normalized")
        out = out / col[:, None]
    return out


def compose_features(
    features: np.ndarray, mask: np.ndarray, transported: np.ndarray
) -> np.ndarray:
    """Write transported rows back into the masked positions of a feature map.

    Non-subject rows are untouched. The k-th transported row lands at
    the k-th True position of the mask, mirroring ``extract_subject``.
    """
    feats = np.asarray(features)
    m = np.asarray(mask, dtype=bool).ravel()
    rows = np.asarray(transported)
    if feats.ndim != 2 or rows.ndim != 2:
        raise ShapeError("features and transported rows must be rank 2")
    if m.size != feats.shape[0]:
        raise ShapeError(f"mask has {m.size} entries for {feats.shape[0]} tokens")
    if rows.shape[1] != feats.shape[1]:
        raise ShapeError(f"feature dims disagree: {rows.shape[1]} vs {feats.shape[1]}")
    count = int(m.sum())
    if count == 0:
        raise ValidationError("mask selects no tokens")
    if rows.shape[0] != count:
        raise ShapeError(f"{rows.shape[0]} transported rows for {count} masked tokens")
    out = np.array(feats, dtype=np.float64, copy=True)
    out[m] = rows
    return out


def saliency_scores(
    plans: list[TransportPlan | np.ndarray], costs: list[np.ndarray]
) -> np.ndarray:
    """Per-reference-token transport saliency, summed over targets.

    Score of token i is sum_n sum_j T_n[i, j] * (1 - C_n[i, j]): mass
    moved weighted by cosine similarity, so tokens whose features
    transferred far (high cost) score low.
    """
    if len(plans) == 0 or len(plans) != len(costs):
        raise ShapeError("need one cost matrix per plan, at least one pair")
    mats = [p.matrix if isinstance(p, TransportPlan) else np.asarray(p, dtype=np.float64) for p in plans]
    rows = mats[0].shape[0]
    total = np.zeros(rows)
    for T, C in zip(mats, costs):
        C = np.asarray(C, dtype=np.float64)
        if T.shape != C.shape:
            raise ShapeError(f"plan shape {T.shape} does not match cost shape {C.shape}")
        if T.shape[0] != rows:
            raise ShapeError("plans disagree on the number of reference tokens")
        total += (T * (1.0 - C)).sum(axis=1)
    return total
