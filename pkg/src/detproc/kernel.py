"""Determinantal computations on finite windows.

Sites are lattice vectors (tuples of ints; plain ints are accepted for d = 1).
The kernel of a window is K[i, j] = f^(s_j - s_i).  A cylinder event with
ones on A and zeros on B has probability det M where M is K restricted to
A u B with the rows of B replaced by (I - K).

Pattern index convention everywhere: the first window site is the most
significant bit, so index = sum_i bit_i 2^(n-1-i).
"""
from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .spectral import CoeffTable, OuterSeries

DET_SLACK = 1e-10
PMF_SLACK = 1e-12
DEGENERATE_TOL = 1e-13
MAX_WINDOW = 20


class KernelError(ValueError):
    pass


class DegenerateConditioning(KernelError):
    """The conditioning event has (numerically) zero probability."""


class NegativeProbabilityError(KernelError):
    """A determinant came out clearly negative: the coefficient table is invalid."""


class WindowTooLarge(KernelError):
    pass


def as_site(s, dim=None):
    if isinstance(s, (int, np.integer)):
        t = (int(s),)
    else:
        t = tuple(int(v) for v in s)
    if dim is not None and len(t) != dim:
        raise KernelError(f"site {s!r} does not have {dim} coordinates")
    return t


def as_sites(sites, dim=None):
    return [as_site(s, dim) for s in sites]


@dataclass(frozen=True)
class CylinderEvent:
    ones: tuple = ()
    zeros: tuple = ()

    def __post_init__(self):
        ones = tuple(as_site(s) for s in self.ones)
        zeros = tuple(as_site(s) for s in self.zeros)
        object.__setattr__(self, "ones", ones)
        object.__setattr__(self, "zeros", zeros)
        if len(set(ones)) != len(ones) or len(set(zeros)) != len(zeros):
            raise KernelError("repeated site in cylinder event")
        if set(ones) & set(zeros):
            raise KernelError("a site cannot be both a one and a zero")

    @property
    def sites(self):
        return self.ones + self.zeros

    def with_one(self, site):
        return CylinderEvent(self.ones + (as_site(site),), self.zeros)

    def with_zero(self, site):
        return CylinderEvent(self.ones, self.zeros + (as_site(site),))


def kernel_matrix(table: CoeffTable, sites):
    """K[i, j] = f^(s_j - s_i)."""
    S = np.array(as_sites(sites, table.dim), dtype=int).reshape(-1, table.dim)
    if len({tuple(s) for s in S}) != len(S):
        raise KernelError("sites must be pairwise distinct")
    diffs = S[None, :, :] - S[:, None, :]
    K = table.lookup(diffs)
    return K.real.copy() if table.is_real else K


def _clamp_prob(v, slack=DET_SLACK):
    v = float(np.real(v))
    if v < -slack:
        raise NegativeProbabilityError(f"determinant {v:.3g} is negative beyond slack")
    if v > 1 + slack:
        raise NegativeProbabilityError(f"determinant {v:.3g} exceeds 1 beyond slack")
    return min(max(v, 0.0), 1.0)


def cylinder_det(K, ones_idx, zeros_idx):
    """det of the cylinder matrix for rows/cols ones_idx + zeros_idx of K."""
    idx = list(ones_idx) + list(zeros_idx)
    if not idx:
        return 1.0
    M = -K[np.ix_(idx, idx)]
    nA = len(ones_idx)
    M[:nA] *= -1
    M[nA:, nA:] += np.eye(len(idx) - nA)
    return np.linalg.det(M)


def prob_ones(table: CoeffTable, sites) -> float:
    """P[eta = 1 on every site]."""
    sites = as_sites(sites, table.dim)
    if not sites:
        return 1.0
    return _clamp_prob(np.linalg.det(kernel_matrix(table, sites)))


def prob_cylinder(table: CoeffTable, ev: CylinderEvent) -> float:
    sites = list(ev.sites)
    if not sites:
        return 1.0
    K = kernel_matrix(table, sites)
    nA = len(ev.ones)
    return _clamp_prob(cylinder_det(K, range(nA), range(nA, len(sites))))


def cond_prob(table: CoeffTable, site, ev: CylinderEvent, tol=DEGENERATE_TOL) -> float:
    """P[eta(site) = 1 | ev]."""
    site = as_site(site, table.dim)
    if site in ev.sites:
        raise KernelError("conditioned site is part of the event")
    den = prob_cylinder(table, ev)
    if den < tol:
        raise DegenerateConditioning(f"conditioning event has probability {den:.3g}")
    num = prob_cylinder(table, ev.with_one(site))
    return min(max(num / den, 0.0), 1.0)


# --------------------------------------------------------------------------
# all patterns at once

def conditioning_tree(K, n_cond):
    """Condition a kernel on every pattern of its first n_cond sites.

    Returns (probs, rest): probs[idx] is the probability of pattern idx on
    the first n_cond sites and rest[idx] the kernel of the remaining sites
    given that pattern.  Each step is a rank-one Schur update:
    a one divides by K00, a zero by 1 - K00.
    """
    K = np.asarray(K)
    if n_cond > K.shape[0]:
        raise KernelError("cannot condition on more sites than the kernel has")
    probs = np.ones(1)
    Ks = K[None].copy()
    for _ in range(n_cond):
        k00 = np.clip(Ks[:, 0, 0].real, 0.0, 1.0)
        col = Ks[:, 1:, 0]
        row = Ks[:, 0, 1:]
        rest = Ks[:, 1:, 1:]
        outer = col[:, :, None] * row[:, None, :]
        d1 = np.where(k00 > 1e-300, k00, 1.0)
        d0 = np.where(1 - k00 > 1e-300, 1 - k00, 1.0)
        K1 = rest - outer / d1[:, None, None]
        K0 = rest + outer / d0[:, None, None]
        probs = np.stack([probs * (1 - k00), probs * k00], axis=1).reshape(-1)
        Ks = np.stack([K0, K1], axis=1).reshape((2 * rest.shape[0],) + rest.shape[1:])
    return probs, Ks


@dataclass(frozen=True, eq=False)
class Pmf:
    window: tuple
    probs: np.ndarray

    @property
    def n(self):
        return len(self.window)

    def bits(self, idx):
        return tuple((idx >> (self.n - 1 - i)) & 1 for i in range(self.n))

    def index(self, bits):
        out = 0
        for b in bits:
            out = 2 * out + int(b)
        return out

    def __getitem__(self, bits):
        if isinstance(bits, str):
            bits = [int(c) for c in bits]
        return float(self.probs[self.index(bits)])

    def as_tensor(self):
        return self.probs.reshape((2,) * self.n)

    def marginal(self, keep):
        """Pmf of the sites at positions keep (in the given order)."""
        keep = list(keep)
        drop = tuple(i for i in range(self.n) if i not in keep)
        t = self.as_tensor().sum(axis=drop) if drop else self.as_tensor()
        kept_sorted = sorted(keep)
        t = np.transpose(t, [kept_sorted.index(i) for i in keep])
        return Pmf(tuple(self.window[i] for i in keep), t.reshape(-1))

    def pattern_strings(self):
        return ["".join(map(str, self.bits(i))) for i in range(len(self.probs))]

    def to_csv(self):
        lines = ["pattern,probability"]
        for s, p in zip(self.pattern_strings(), self.probs):
            lines.append(f"{s},{float(p)!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {"window": [list(s) for s in self.window],
                "probabilities": {s: float(p) for s, p in zip(self.pattern_strings(), self.probs)}}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def joint_pmf(table: CoeffTable, window, max_sites=MAX_WINDOW) -> Pmf:
    """Probabilities of all 2^n patterns on the window."""
    sites = as_sites(window, table.dim)
    if len(sites) > max_sites:
        raise WindowTooLarge(f"window has {len(sites)} sites, cap is {max_sites}")
    if not sites:
        return Pmf((), np.ones(1))
    K = kernel_matrix(table, sites)
    probs, _ = conditioning_tree(K, len(sites))
    if probs.min() < -PMF_SLACK:
        raise NegativeProbabilityError("negative pattern probability")
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if abs(total - 1) > 1e-9:
        raise KernelError(f"pattern probabilities sum to {total}")
    return Pmf(tuple(sites), probs / total)


# --------------------------------------------------------------------------
# Szego infimum and the conditional kernel given an infinite run of ones

def szego_inf(table: CoeffTable, B, cutoff=1e-12) -> float:
    """Minimum over trigonometric polynomials u with frequencies in B of
    the integral of |1 - u|^2 f, i.e. P[eta(0) = 1 | eta = 1 on B].

    Computed as the Schur complement f^(0) - K_0B G^+ K_B0 with an
    eigenvalue-cutoff pseudo-inverse, so singular Gram matrices are fine.
    """
    B = as_sites(B, table.dim)
    zero = (0,) * table.dim
    if zero in B:
        raise KernelError("B must not contain the origin")
    f0 = table.zero
    if not B:
        return f0
    K = kernel_matrix(table, [zero] + B)
    G = K[1:, 1:]
    w, V = np.linalg.eigh(G)
    keep = w > cutoff * max(w.max(), 0.0) if w.max() > 0 else np.zeros_like(w, bool)
    if not np.any(keep):
        return f0
    a = V[:, keep].conj().T @ K[1:, 0]
    b = K[0, 1:] @ V[:, keep]
    val = f0 - float(np.real(np.sum(b * a / w[keep])))
    return min(max(val, 0.0), f0)


@dataclass(frozen=True, eq=False)
class NuKernel:
    matrix: np.ndarray

    @property
    def size(self):
        return self.matrix.shape[0]


def nu_kernel(outer: OuterSeries, m: int) -> NuKernel:
    """(m+1)x(m+1) kernel with entries sum_{l <= min(j,k)} conj(phi(j-l)) phi(k-l)."""
    phi = np.asarray(outer.coeffs)
    if len(phi) < m + 1:
        raise KernelError(f"outer series has {len(phi)} terms, need {m + 1}")
    n = m + 1
    j = np.arange(n)
    diff = j[:, None] - j[None, :]
    L = np.where(diff >= 0, phi[np.clip(diff, 0, None)], 0)
    Q = np.conj(L) @ L.T
    if np.all(np.abs(Q.imag) < 1e-15):
        Q = Q.real.copy()
    return NuKernel(Q)


def nu_cylinder(kernel: NuKernel, ev: CylinderEvent) -> float:
    """Cylinder probability for the conditional kernel; sites are indices 0..m."""
    ones = [s[0] for s in ev.ones]
    zeros = [s[0] for s in ev.zeros]
    for i in ones + zeros:
        if not 0 <= i < kernel.size:
            raise KernelError(f"index {i} outside 0..{kernel.size - 1}")
    return _clamp_prob(cylinder_det(kernel.matrix, ones, zeros))


# --------------------------------------------------------------------------
# increasing events, domination, thinning

@functools.lru_cache(maxsize=None)
def increasing_events(n: int) -> np.ndarray:
    """All up-sets of {0,1}^n as a boolean matrix (one row per up-set).

    Built recursively: an up-set splits on the first coordinate into two
    up-sets g0 <= g1 of one dimension lower.
    """
    if n < 0 or n > 5:
        raise ValueError("increasing_events supports n <= 5")
    if n == 0:
        return np.array([[False], [True]])
    prev = increasing_events(n - 1)
    ok = np.all(~prev[:, None, :] | prev[None, :, :], axis=-1)
    i, j = np.nonzero(ok)
    return np.concatenate([prev[i], prev[j]], axis=1)


def domination_gap(lower: np.ndarray, upper: np.ndarray) -> float:
    """min over increasing events U of upper(U) - lower(U).

    Nonnegative (up to rounding) iff the law 'lower' is stochastically
    dominated by 'upper'.  Both are pmf vectors in pattern-index order.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    n = int(round(np.log2(len(lower))))
    U = increasing_events(n)
    return float(np.min(U @ (upper - lower)))


def thinning_transform(pmf: Pmf, p: float) -> Pmf:
    """Law after each 1 is independently kept with probability p."""
    T = np.array([[1.0, 1 - p], [0.0, p]])  # T[y, x]
    t = pmf.as_tensor()
    for ax in range(pmf.n):
        t = np.moveaxis(np.tensordot(T, t, axes=([1], [ax])), 0, ax)
    return Pmf(pmf.window, t.reshape(-1))


def product_pmf(ps) -> np.ndarray:
    """Pmf vector of independent bits with P[bit_i = 1] = ps[i]."""
    out = np.ones(1)
    for p in ps:
        out = np.outer(out, [1 - p, p]).reshape(-1)
    return out


def window_1d(start, stop):
    return [(i,) for i in range(start, stop)]


def box_window(shape, origin=None):
    """Lexicographically ordered sites of a box with the given side lengths."""
    origin = origin or (0,) * len(shape)
    return [tuple(o + i for o, i in zip(origin, idx))
            for idx in itertools.product(*[range(s) for s in shape])]
