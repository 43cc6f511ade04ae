"""Exact transport references: optimal assignment, 1-d monotone matching,
the closed-form 1-d geodesic, and the closed-form Gaussian penalty."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import Mollifier, gaussian_cross_term

# costs within TIE_RTOL * max(1, max cost entry) of each other count as ties
TIE_RTOL = 1e-10
BRUTE_FORCE_MAX_N = 10


@dataclass(eq=False)
class Assignment:
    permutation: np.ndarray  # source i is matched to target permutation[i]
    mean_cost: float

    def __post_init__(self):
        self.permutation = np.asarray(self.permutation, dtype=np.int64)
        n = len(self.permutation)
        if not np.array_equal(np.sort(self.permutation), np.arange(n)):
            raise ValueError("permutation is not a bijection")


def _as_cloud(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return points


def _prepare(sources, targets):
    z = _as_cloud(sources)
    w = _as_cloud(targets)
    if z.shape[0] != w.shape[0]:
        raise ValueError(f"unequal point counts: {z.shape[0]} sources, {w.shape[0]} targets")
    if z.shape[1] != w.shape[1]:
        raise ValueError("sources and targets have different dimensions")
    if z.shape[0] < 1:
        raise ValueError("need at least one point")
    return z, w


def squared_distance_matrix(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    diff = z[:, None, :] - w[None, :, :]
    with np.errstate(over="ignore"):
        return np.sum(diff * diff, axis=-1)


def mean_matching_cost(sources, targets, permutation) -> float:
    z, w = _prepare(sources, targets)
    diff = z - w[np.asarray(permutation)]
    return float(np.sum(diff * diff) / len(z))


def _tie_tol(cost: np.ndarray) -> float:
    return TIE_RTOL * max(1.0, float(np.max(np.abs(cost))))


def _hungarian(cost: np.ndarray):
    """Shortest augmenting path Hungarian method (square matrix).

    Returns (row -> column assignment, row potentials u, column potentials v)
    with cost[i, j] - u[i] - v[j] >= 0, equal to zero on matched pairs.
    """
    n = cost.shape[0]
    inf = math.inf
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = cost
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = np.empty(n, dtype=np.int64)
    assign[p[1:] - 1] = np.arange(n)
    return assign, u[1:], v[1:]


def _lex_smallest_matching(tight: np.ndarray, match: np.ndarray) -> np.ndarray:
    """Lexicographically smallest perfect matching inside the boolean graph ``tight``,
    starting from the perfect matching ``match``."""
    n = len(match)
    match = match.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[match] = np.arange(n)
    adjacency = [np.flatnonzero(row) for row in tight]

    for i in range(n):
        for j in adjacency[i]:
            if j == match[i]:
                break
            r = owner[j]
            if r < i:
                continue
            # tentatively i -> j; row r must reach the column i frees through rows > i
            freed = match[i]
            trial_match = match.copy()
            trial_owner = owner.copy()
            trial_owner[freed] = -1
            trial_match[i] = j
            trial_owner[j] = i
            seen = np.zeros(n, dtype=bool)
            seen[j] = True
            if _augment(r, i, adjacency, trial_match, trial_owner, seen):
                match, owner = trial_match, trial_owner
                break
    return match


def _augment(row, fixed_upto, adjacency, match, owner, seen) -> bool:
    for col in adjacency[row]:
        if seen[col]:
            continue
        seen[col] = True
        o = owner[col]
        if o == -1 or (o > fixed_upto and _augment(o, fixed_upto, adjacency, match, owner, seen)):
            match[row] = col
            owner[col] = row
            return True
    return False


def hungarian_assign(sources, targets) -> Assignment:
    """Minimum mean squared distance perfect matching.

    Among optimal matchings (up to a relative tie tolerance) the
    lexicographically smallest permutation is returned.
    """
    z, w = _prepare(sources, targets)
    cost = squared_distance_matrix(z, w)
    if not np.all(np.isfinite(cost)):
        raise ValueError("squared distances are not finite")
    assign, u, v = _hungarian(cost)
    reduced = cost - u[:, None] - v[None, :]
    tight = reduced <= _tie_tol(cost)
    tight[np.arange(len(assign)), assign] = True
    perm = _lex_smallest_matching(tight, assign)
    return Assignment(perm, mean_matching_cost(z, w, perm))


def brute_force_assign(sources, targets) -> Assignment:
    """Exhaustive search over all N! matchings; same tie-break as :func:`hungarian_assign`."""
    z, w = _prepare(sources, targets)
    n = len(z)
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, got {n}")
    cost = squared_distance_matrix(z, w)
    rows = np.arange(n)
    totals = []
    perms = itertools.permutations(range(n))  # lexicographic order
    while True:
        block = np.array(list(itertools.islice(perms, 50_000)), dtype=np.int64)
        if block.size == 0:
            break
        totals.append(cost[rows, block].sum(axis=1))
    totals = np.concatenate(totals)
    first = int(np.flatnonzero(totals <= totals.min() + _tie_tol(cost))[0])
    best_perm = np.array(next(itertools.islice(itertools.permutations(range(n)), first, None)))
    return Assignment(best_perm, mean_matching_cost(z, w, best_perm))


def monotone_map_1d(sources, targets) -> Assignment:
    """Sorted-order matching, optimal for quadratic cost on the line."""
    z, w = _prepare(sources, targets)
    if z.shape[1] != 1:
        raise ValueError("monotone matching is only defined in one dimension")
    zo = np.argsort(z[:, 0], kind="stable")
    wo = np.argsort(w[:, 0], kind="stable")
    perm = np.empty(len(z), dtype=np.int64)
    perm[zo] = wo
    return Assignment(perm, mean_matching_cost(z, w, perm))


def continuum_geodesic(y, t):
    """Displacement interpolation from uniform on [0, 1] to uniform on [2, 2.5]."""
    return (1.0 - t) * y + t * (0.5 * y + 2.0)


def gaussian_penalty_closed_form(mu_mean, mu_var, m1_mean, m1_var, mollifier: Mollifier, epsilon: float) -> float:
    """(1/eps) ||k_delta * mu - k_delta * m1||^2 for isotropic Gaussians (variance 0 = Dirac)."""
    if mu_var < 0 or m1_var < 0:
        raise ValueError("variances must be nonnegative")
    aa = gaussian_cross_term(mollifier, mu_mean, mu_var, mu_mean, mu_var)
    ab = gaussian_cross_term(mollifier, mu_mean, mu_var, m1_mean, m1_var)
    bb = gaussian_cross_term(mollifier, m1_mean, m1_var, m1_mean, m1_var)
    return max((aa - 2.0 * ab + bb) / epsilon, 0.0)
