"""Uniform spanning trees of the n x n torus (Wilson's algorithm) and
edge-process statistics to hold against determinantal predictions.

Vertex (x, y) has index x * n + y.  right[x, y] marks the edge
(x, y)-(x+1, y), up[x, y] the edge (x, y)-(x, y+1), coordinates mod n.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numba
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .spectral import CoeffTable

# the bundled TBB is too old for numba; pick OpenMP up front to skip the probe
if numba.config.THREADING_LAYER == "default":
    numba.config.THREADING_LAYER = "omp"

FINITE_SIZE_ALLOWANCE = 0.01


@numba.njit(cache=True)
def _wilson(n, nxt, in_tree):
    N = n * n
    for v in range(N):
        in_tree[v] = False
        nxt[v] = -1
    root = np.random.randint(0, N)
    in_tree[root] = True
    for start in range(N):
        u = start
        while not in_tree[u]:
            d = np.random.randint(0, 4)
            nxt[u] = d
            x = u // n
            y = u % n
            if d == 0:
                x = (x + 1) % n
            elif d == 1:
                x = (x - 1) % n
            elif d == 2:
                y = (y + 1) % n
            else:
                y = (y - 1) % n
            u = x * n + y
        # retrace: following nxt from start gives the loop-erased path
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            x = u // n
            y = u % n
            d = nxt[u]
            if d == 0:
                x = (x + 1) % n
            elif d == 1:
                x = (x - 1) % n
            elif d == 2:
                y = (y + 1) % n
            else:
                y = (y - 1) % n
            u = x * n + y
    return root


@numba.njit(cache=True)
def _edges_from_parents(n, nxt, root, right, up):
    for x in range(n):
        for y in range(n):
            right[x, y] = 0
            up[x, y] = 0
    for x in range(n):
        for y in range(n):
            v = x * n + y
            if v == root:
                continue
            d = nxt[v]
            if d == 0:
                right[x, y] = 1
            elif d == 1:
                right[(x - 1) % n, y] = 1
            elif d == 2:
                up[x, y] = 1
            else:
                up[x, (y - 1) % n] = 1


@numba.njit(cache=True, parallel=True)
def _wilson_batch(n, seeds, right, up):
    S = seeds.shape[0]
    for s in numba.prange(S):
        np.random.seed(seeds[s])
        nxt = np.empty(n * n, dtype=np.int64)
        in_tree = np.empty(n * n, dtype=np.bool_)
        root = _wilson(n, nxt, in_tree)
        _edges_from_parents(n, nxt, root, right[s], up[s])


def _seeds(seed, count):
    gen = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), 2]))
    return gen.integers(0, 2**32 - 1, size=count, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class TorusTree:
    n: int
    right: np.ndarray
    up: np.ndarray

    @property
    def edges(self):
        out = set()
        for x, y in zip(*np.nonzero(self.right)):
            out.add(((int(x), int(y)), "right"))
        for x, y in zip(*np.nonzero(self.up)):
            out.add(((int(x), int(y)), "up"))
        return out

    @property
    def n_edges(self):
        return int(self.right.sum() + self.up.sum())

    def is_spanning_tree(self):
        n = self.n
        if self.n_edges != n * n - 1:
            return False
        xs, ys = np.nonzero(self.right)
        a1 = xs * n + ys
        b1 = ((xs + 1) % n) * n + ys
        xs, ys = np.nonzero(self.up)
        a2 = xs * n + ys
        b2 = xs * n + (ys + 1) % n
        a = np.concatenate([a1, a2])
        b = np.concatenate([b1, b2])
        g = coo_matrix((np.ones(len(a)), (a, b)), shape=(n * n, n * n))
        ncomp, _ = connected_components(g, directed=False)
        # n^2 - 1 edges and connected means acyclic as well
        return ncomp == 1

    def to_csv(self):
        buf = io.StringIO()
        buf.write("x,y,direction\n")
        for (x, y), d in sorted(self.edges):
            buf.write(f"{x},{y},{d}\n")
        return buf.getvalue()


def wilson_batch(n: int, n_samples: int, seed=0):
    """(right, up) uint8 arrays of shape (n_samples, n, n)."""
    if n < 2 or n > 256:
        raise ValueError("torus side must be in [2, 256]")
    right = np.zeros((n_samples, n, n), dtype=np.uint8)
    up = np.zeros((n_samples, n, n), dtype=np.uint8)
    _wilson_batch(n, _seeds(seed, n_samples), right, up)
    return right, up


def wilson_ust(n: int, seed=0) -> TorusTree:
    right, up = wilson_batch(n, 1, seed)
    return TorusTree(n, right[0], up[0])


# --------------------------------------------------------------------------
# edge processes

AXES = ("horizontal", "x-axis", "diagonal", "zigzag")


def edge_lines(right, up, axis):
    """Edge indicators of every translate of a line.

    right/up have shape (S, n, n).  Returns (S, n, L): for each sample the
    n translates of the line, each a periodic sequence of length L.
    'horizontal' returns the full (S, n, n) field instead.
    """
    right = np.asarray(right)
    up = np.asarray(up)
    S, n, _ = right.shape
    if axis == "horizontal":
        return right
    if axis == "x-axis":
        # row y, sites x = 0..n-1
        return np.transpose(right, (0, 2, 1))
    k = np.arange(n)
    shifts = np.arange(n)
    if axis == "diagonal":
        # line c: right[k, k + c]
        return right[:, k[None, :], (k[None, :] + shifts[:, None]) % n]
    if axis == "zigzag":
        # eta(2k) = right[k, k + c], eta(2k + 1) = up[k + 1, k + c]
        even = right[:, k[None, :], (k[None, :] + shifts[:, None]) % n]
        odd = up[:, (k[None, :] + 1) % n, (k[None, :] + shifts[:, None]) % n]
        out = np.empty((S, n, 2 * n), dtype=right.dtype)
        out[:, :, 0::2] = even
        out[:, :, 1::2] = odd
        return out
    raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")


def edge_process(tree: TorusTree, axis):
    """Indicator field (horizontal) or the line through the origin."""
    arr = edge_lines(tree.right[None], tree.up[None], axis)[0]
    return arr if axis == "horizontal" else arr[0]


def _shift_products(X, lag):
    """Per-sample average of X * X shifted by lag (periodic)."""
    lag = tuple(np.atleast_1d(lag))
    if X.ndim == 3 and len(lag) == 2:  # field (S, n, n)
        Y = np.roll(X, shift=(-lag[0], -lag[1]), axis=(1, 2))
        return (X * Y).reshape(X.shape[0], -1).mean(1)
    if X.ndim == 3:  # lines (S, M, L)
        Y = np.roll(X, shift=-lag[0], axis=2)
        return (X * Y).reshape(X.shape[0], -1).mean(1)
    Y = np.roll(X, shift=-lag[0], axis=1)
    return (X * Y).mean(1)


def _jackknife(stat_fn, n, groups=50):
    idx = np.array_split(np.arange(n), min(groups, n))
    reps = []
    for g in idx:
        mask = np.ones(n, bool)
        mask[g] = False
        reps.append(stat_fn(mask))
    reps = np.array(reps)
    G = len(idx)
    return float(np.sqrt((G - 1) / G * ((reps - reps.mean()) ** 2).sum()))


@dataclass
class LagComparison:
    lag: tuple
    empirical: float
    predicted: float
    se: float
    allowance: float

    @property
    def discrepancy(self):
        return abs(self.empirical - self.predicted)

    @property
    def passed(self):
        return self.discrepancy <= 3 * self.se + self.allowance

    def to_dict(self):
        return {"lag": list(self.lag), "empirical": self.empirical, "predicted": self.predicted,
                "se": self.se, "allowance": self.allowance, "passed": self.passed}


@dataclass
class ComparisonReport:
    mean: float
    mean_se: float
    predicted_mean: float
    lags: list
    n_samples: int
    allowance: float

    @property
    def passed(self):
        mean_ok = abs(self.mean - self.predicted_mean) <= 3 * self.mean_se + self.allowance
        return mean_ok and all(c.passed for c in self.lags)

    def to_dict(self):
        return {"mean": self.mean, "mean_se": self.mean_se, "predicted_mean": self.predicted_mean,
                "lags": [c.to_dict() for c in self.lags], "n_samples": self.n_samples,
                "finite_size_allowance": self.allowance, "passed": self.passed}


def compare_to_symbol(samples, table: CoeffTable, lags, allowance=FINITE_SIZE_ALLOWANCE,
                      groups=50) -> ComparisonReport:
    """Empirical mean and lag covariances vs f^(0) and -|f^(k)|^2.

    samples: (S, L) periodic lines, (S, M, L) several translates of a
    line, or an (S, n, n) field when the table is two-dimensional.
    """
    X = np.asarray(samples, dtype=float)
    S = X.shape[0]
    per_mean = X.reshape(S, -1).mean(1)
    mean = float(per_mean.mean())
    mean_se = float(per_mean.std(ddof=1) / np.sqrt(S)) if S > 1 else np.inf
    out = []
    for lag in lags:
        lag_t = tuple(int(v) for v in np.atleast_1d(lag))
        prods = _shift_products(X, lag_t)
        emp = float(prods.mean() - mean * mean)
        se = _jackknife(lambda m: prods[m].mean() - per_mean[m].mean() ** 2, S, groups) \
            if S > 1 else np.inf
        pred = -abs(table[lag_t if table.dim > 1 else lag_t[0]]) ** 2
        out.append(LagComparison(lag_t, emp, float(pred), se, allowance))
    return ComparisonReport(mean, mean_se, float(table.zero), out, S, allowance)
