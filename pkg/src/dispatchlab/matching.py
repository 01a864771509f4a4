"""Min-cost maximum-cardinality bipartite assignment between passengers and drivers.

The solver returns, among all maximum-cardinality matchings, one of minimum
total cost; ties between equal-cost optimal plans are broken by the
lexicographically smallest pair list (sorted by passenger index, then driver
index) so that seeded simulations are bit-reproducible. A brute-force
enumerator with the same tie-break serves as the testing oracle.

Internals: a shortest-augmenting-path solve produces the optimal matching and
dual potentials; complementary slackness then confines every optimal plan to
the zero-reduced-cost ("tight") subgraph, where the lexicographically smallest
plan is constructed greedily with pure matching-feasibility checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["CostMatrix", "MatchPlan", "solve_assignment", "brute_force_assignment"]

# Relative tolerance for "equal cost" when detecting and refining ties.
COST_RTOL = 1e-9

BRUTE_FORCE_MAX_SIDE = 8
BRUTE_FORCE_MAX_PLANS = 5_000_000

_PY_SOLVER_MAX = 64  # pure-python loops beat numpy dispatch below this size


@dataclass(frozen=True)
class CostMatrix:
    """Pickup-time costs (seconds) between I passengers and J idle drivers."""

    costs: np.ndarray
    passenger_ids: tuple = ()
    driver_ids: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if c.ndim != 2:
            raise ValueError("costs must be a 2-d matrix")
        if c.size and (not np.all(np.isfinite(c)) or np.any(c < 0)):
            raise ValueError("costs must be finite and non-negative")
        object.__setattr__(self, "costs", c)
        if not self.passenger_ids:
            object.__setattr__(self, "passenger_ids", tuple(range(c.shape[0])))
        if not self.driver_ids:
            object.__setattr__(self, "driver_ids", tuple(range(c.shape[1])))
        if len(self.passenger_ids) != c.shape[0] or len(self.driver_ids) != c.shape[1]:
            raise ValueError("id lists must match the cost matrix shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.costs.shape


@dataclass(frozen=True)
class MatchPlan:
    """Chosen (passenger index, driver index) pairs and their summed cost."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float

    def pair_for_passenger(self, i: int):
        for pi, pj in self.pairs:
            if pi == i:
                return pj
        return None


def _tie_tol(cost: np.ndarray) -> float:
    scale = float(np.max(cost)) if cost.size else 1.0
    return COST_RTOL * max(1.0, scale)


def _jv_python(cost):
    """Shortest-augmenting-path assignment on plain lists, nr <= nc."""
    nr = len(cost)
    nc = len(cost[0])
    inf = math.inf
    u = [0.0] * nr
    v = [0.0] * nc
    col4row = [-1] * nr
    row4col = [-1] * nc
    for cur_row in range(nr):
        shortest = [inf] * nc
        prev_row = [-1] * nc
        scanned_cols = [False] * nc
        scanned_rows = [False] * nr
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink < 0:
            scanned_rows[i] = True
            row = cost[i]
            ui = u[i]
            best = inf
            best_j = -1
            for j in range(nc):
                if scanned_cols[j]:
                    continue
                r = min_val + row[j] - ui - v[j]
                if r < shortest[j]:
                    shortest[j] = r
                    prev_row[j] = i
                if shortest[j] < best:
                    best = shortest[j]
                    best_j = j
            if best_j < 0 or best == inf:
                raise ValueError("assignment is infeasible")
            min_val = best
            if row4col[best_j] < 0:
                sink = best_j
            else:
                scanned_cols[best_j] = True
                i = row4col[best_j]
        u[cur_row] += min_val
        for k in range(nr):
            if scanned_rows[k] and k != cur_row:
                u[k] += min_val - shortest[col4row[k]]
        for j in range(nc):
            if scanned_cols[j]:
                v[j] += shortest[j] - min_val
        j = sink
        while True:
            i = prev_row[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break
    return col4row, u, v


def _jv_numpy(cost: np.ndarray):
    """Same algorithm with full-width vector ops, for larger matrices."""
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    col4row = np.full(nr, -1, dtype=np.intp)
    row4col = np.full(nc, -1, dtype=np.intp)
    for cur_row in range(nr):
        shortest = np.full(nc, np.inf)
        prev_row = np.full(nc, -1, dtype=np.intp)
        scanned_cols = np.zeros(nc, dtype=bool)
        scanned_rows = np.zeros(nr, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink < 0:
            scanned_rows[i] = True
            reduced = min_val + cost[i] - u[i] - v
            improve = (reduced < shortest) & ~scanned_cols
            shortest[improve] = reduced[improve]
            prev_row[improve] = i
            candidates = np.where(scanned_cols, np.inf, shortest)
            j = int(np.argmin(candidates))
            min_val = candidates[j]
            if not np.isfinite(min_val):
                raise ValueError("assignment is infeasible")
            if row4col[j] < 0:
                sink = j
            else:
                scanned_cols[j] = True
                i = row4col[j]
        u[cur_row] += min_val
        scanned_rows[cur_row] = False
        rows = np.flatnonzero(scanned_rows)
        if rows.size:
            u[rows] += min_val - shortest[col4row[rows]]
        cols = np.flatnonzero(scanned_cols)
        if cols.size:
            v[cols] += shortest[cols] - min_val
        j = sink
        while True:
            i = prev_row[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break
    return list(col4row), list(u), list(v)


def _jv_solve(cost: np.ndarray):
    """Dispatch on size; input must have nr <= nc. Returns (col4row, u, v) lists."""
    if max(cost.shape) <= _PY_SOLVER_MAX:
        return _jv_python(cost.tolist())
    return _jv_numpy(cost)


def _kuhn_augment(adj, match_left, match_right, start, avail_left, avail_right):
    """One augmenting-path search from left vertex `start`; returns success."""
    seen = set()
    stack = [(start, iter(adj[start]))]
    parent = {}
    while stack:
        left, it = stack[-1]
        advanced = False
        for right in it:
            if right in seen or not avail_right.get(right, False):
                continue
            seen.add(right)
            parent[right] = left
            owner = match_right.get(right, -1)
            if owner < 0 or not avail_left.get(owner, False):
                # free column: flip the path back to start
                j = right
                while True:
                    i = parent[j]
                    prev = match_left.get(i)
                    match_left[i] = j
                    match_right[j] = i
                    if i == start:
                        return True
                    j = prev
            else:
                stack.append((owner, iter(adj[owner])))
                advanced = True
                break
        if not advanced:
            stack.pop()
    return False


def _completion_exists(adj, rows, cols, must_rows, must_cols, pairs_needed) -> bool:
    """Can `pairs_needed` tight pairs be formed on (rows x cols) saturating the musts?

    By the Mendelsohn-Dulmage theorem, a matching saturating must_rows and one
    saturating must_cols imply a matching saturating both, and augmenting to
    maximum cardinality never unsaturates a vertex; so the three requirements
    can be checked independently.
    """
    avail_left = {i: True for i in rows}
    avail_right = {j: True for j in cols}

    # (1) all of must_rows saturatable
    match_left: dict = {}
    match_right: dict = {}
    for i in must_rows:
        if not _kuhn_augment(adj, match_left, match_right, i, avail_left, avail_right):
            return False

    # (2) all of must_cols saturatable
    if must_cols:
        radj = {j: [] for j in cols}
        for i in rows:
            for j in adj[i]:
                if j in radj:
                    radj[j].append(i)
        match_left = {}
        match_right = {}
        for j in must_cols:
            if not _kuhn_augment(radj, match_right, match_left, j, avail_right, avail_left):
                return False

    # (3) maximum matching reaches the needed cardinality
    if pairs_needed <= 0:
        return True
    match_left = {}
    match_right = {}
    size = 0
    for i in rows:
        if _kuhn_augment(adj, match_left, match_right, i, avail_left, avail_right):
            size += 1
            if size >= pairs_needed:
                return True
    return size >= pairs_needed


def _lex_smallest_tight_plan(n_rows, n_cols, adj, must_rows, must_cols, n_pairs):
    """Lexicographically smallest max-cardinality matching in the tight graph
    that saturates every must row/column (complementary slackness support)."""
    pairs = []
    used_cols = set()
    remaining_must_cols = set(must_cols)
    for i in range(n_rows):
        if len(pairs) == n_pairs:
            break
        rows_after = [r for r in range(i + 1, n_rows)]
        chosen = -1
        for j in adj[i]:
            if j in used_cols:
                continue
            cols_left = [c for c in range(n_cols) if c not in used_cols and c != j]
            if _completion_exists(adj, rows_after, cols_left,
                                  must_rows & set(rows_after),
                                  remaining_must_cols - {j},
                                  n_pairs - len(pairs) - 1):
                chosen = j
                break
        if chosen >= 0:
            pairs.append((i, chosen))
            used_cols.add(chosen)
            remaining_must_cols.discard(chosen)
        else:
            if i in must_rows:
                return None
            cols_left = [c for c in range(n_cols) if c not in used_cols]
            if not _completion_exists(adj, rows_after, cols_left,
                                      must_rows & set(rows_after),
                                      remaining_must_cols,
                                      n_pairs - len(pairs)):
                return None
    return pairs if len(pairs) == n_pairs else None


def solve_assignment(m: CostMatrix) -> MatchPlan:
    """Optimal matching: maximum cardinality first, minimum total cost second.

    Equivalent to minimizing sum((c(i,j) - B) * a_ij) for a large constant B,
    without materializing B. Ties between equal-cost optimal plans resolve to
    the lexicographically smallest pair list.
    """
    cost = np.asarray(m.costs, dtype=float)
    if cost.size and (not np.all(np.isfinite(cost)) or np.any(cost < 0)):
        raise ValueError("costs must be finite and non-negative")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return MatchPlan(pairs=(), total_cost=0.0)

    transposed = n_rows > n_cols
    work = cost.T if transposed else cost
    col4row, u, v = _jv_solve(work)
    if transposed:
        pairs = [(int(col4row[j]), j) for j in range(n_cols)]
    else:
        pairs = [(i, int(col4row[i])) for i in range(n_rows)]
    total = math.fsum(cost[i, j] for i, j in pairs)

    tol = _tie_tol(cost)
    # tight graph in passenger/driver orientation, with row duals a and col duals b
    if transposed:
        a = {i: v[i] for i in range(n_rows)}
        b = {j: u[j] for j in range(n_cols)}
    else:
        a = {i: u[i] for i in range(n_rows)}
        b = {j: v[j] for j in range(n_cols)}
    adj = [[j for j in range(n_cols) if cost[i, j] - a[i] - b[j] <= tol]
           for i in range(n_rows)]

    # fast path: if the smaller side's tight degrees are all 1, the plan is unique
    if transposed:
        deg = [0] * n_cols
        for i in range(n_rows):
            for j in adj[i]:
                deg[j] += 1
        unique = all(d == 1 for d in deg)
    else:
        unique = all(len(r) == 1 for r in adj)
    if unique:
        return MatchPlan(pairs=tuple(sorted(pairs)), total_cost=total)

    if transposed:
        must_rows = {i for i in range(n_rows) if a[i] < -tol}
        must_cols = set(range(n_cols))
    else:
        must_rows = set(range(n_rows))
        must_cols = {j for j in range(n_cols) if b[j] < -tol}
    refined = _lex_smallest_tight_plan(n_rows, n_cols, adj, must_rows, must_cols,
                                       min(n_rows, n_cols))
    if refined is not None:
        refined_total = math.fsum(cost[i, j] for i, j in refined)
        if refined_total <= total + tol * max(1, min(n_rows, n_cols)):
            return MatchPlan(pairs=tuple(sorted(refined)), total_cost=refined_total)
    # near-tie pathologies: keep the solver's deterministic plan
    return MatchPlan(pairs=tuple(sorted(pairs)), total_cost=total)


def brute_force_assignment(m: CostMatrix) -> MatchPlan:
    """Exhaustive oracle: enumerate every injection from the smaller side.

    Same objective and tie-break as solve_assignment; only usable on small
    instances (min side <= 8).
    """
    cost = np.asarray(m.costs, dtype=float)
    if cost.size and (not np.all(np.isfinite(cost)) or np.any(cost < 0)):
        raise ValueError("costs must be finite and non-negative")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return MatchPlan(pairs=(), total_cost=0.0)
    small, large = min(n_rows, n_cols), max(n_rows, n_cols)
    if small > BRUTE_FORCE_MAX_SIDE:
        raise ValueError(f"brute force capped at min side {BRUTE_FORCE_MAX_SIDE}, got {small}")
    n_plans = math.comb(large, small) * math.factorial(small)
    if n_plans > BRUTE_FORCE_MAX_PLANS:
        raise ValueError(f"brute force would enumerate {n_plans} plans; instance too large")

    tol = _tie_tol(cost) * small
    best_cost = math.inf
    best_pairs = None
    if n_rows <= n_cols:
        plan_iter = (
            tuple((i, j) for i, j in enumerate(perm))
            for perm in itertools.permutations(range(n_cols), n_rows)
        )
    else:
        plan_iter = (
            tuple(sorted(zip(rows, perm)))
            for rows in itertools.combinations(range(n_rows), n_cols)
            for perm in itertools.permutations(range(n_cols))
        )
    for pairs in plan_iter:
        total = math.fsum(cost[i, j] for i, j in pairs)
        if total < best_cost - tol:
            best_cost, best_pairs = total, pairs
        elif total <= best_cost + tol and pairs < best_pairs:
            best_pairs = pairs
            best_cost = min(best_cost, total)
    return MatchPlan(pairs=best_pairs, total_cost=math.fsum(cost[i, j] for i, j in best_pairs))
