"""Entropy bounds (nats) for the determinantal process of a symbol."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import symbol as sym
from .kernel import (DEGENERATE_TOL, KernelError, box_window, conditioning_tree, joint_pmf,
                     kernel_matrix, nu_kernel, window_1d)
from .spectral import (DEFAULT_QUAD, CoeffTable, MeansReport, OuterSeries, QuadParams,
                       fourier_coeffs, l1_distance, outer_coeffs)

LOG2 = math.log(2.0)
MAX_REFINED_M = 20
MAX_BOX_SITES = 16


class EntropyError(ValueError):
    pass


@dataclass
class EntropyInterval:
    lo: float
    hi: float
    method: str
    m: int | None = None
    pruned_mass: float = 0.0
    flags: list = field(default_factory=list)
    symbol: str | None = None

    def __post_init__(self):
        if not (-1e-12 <= self.lo <= self.hi + 1e-12 and self.hi <= LOG2 + 1e-12):
            raise EntropyError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, other, tol=0.0):
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def to_dict(self, bits=False):
        s = 1 / LOG2 if bits else 1.0
        return {"symbol": self.symbol, "method": self.method, "m": self.m,
                "lo": self.lo * s, "hi": self.hi * s, "pruned_mass": self.pruned_mass,
                "flags": list(self.flags), "units": "bits" if bits else "nats"}


def binary_entropy(p):
    """H[p] in nats, vectorized; H[0] = H[1] = 0."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log(p) - (1 - p) * np.log1p(-p)
    h = np.where((p <= 0) | (p >= 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def shannon(probs):
    p = np.asarray(probs, float)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def gm_lower_bound(report: MeansReport) -> float:
    """min(H[GM(f)], H[GM(1-f)]); a divergent GM counts as 0."""
    g = 0.0 if report.gm_divergent else report.gm
    gc = 0.0 if report.gm_complement_divergent else report.gm_complement
    return min(binary_entropy(g), binary_entropy(gc))


# --------------------------------------------------------------------------
# block bounds

def _block_window(table: CoeffTable, m):
    if table.dim == 1:
        if not isinstance(m, (int, np.integer)):
            raise EntropyError("d = 1 block bound takes an integer length")
        return window_1d(0, int(m))
    if table.dim == 2:
        shape = (int(m), int(m)) if isinstance(m, (int, np.integer)) else tuple(m)
        if shape[0] * shape[1] > MAX_BOX_SITES:
            raise EntropyError(f"box {shape} has more than {MAX_BOX_SITES} sites")
        return box_window(shape)
    raise EntropyError("block bounds are implemented for d <= 2")


def block_entropies(table: CoeffTable, m):
    """(H_n, H_{n-1}) for the window of size n and that window minus its last site."""
    pmf = joint_pmf(table, _block_window(table, m))
    full = shannon(pmf.probs)
    less = shannon(pmf.probs.reshape(-1, 2).sum(1))
    return full, less, pmf.n


def block_upper_bound(table: CoeffTable, m, average=False) -> float:
    """Conditional block entropy H_n - H_{n-1} (or H_n / n with average=True).

    In d = 2 the last site of the lexicographically ordered box is
    conditioned on the rest of the box, which is part of its past.
    """
    full, less, n = block_entropies(table, m)
    if average:
        return full / n
    return min(max(full - less, 0.0), LOG2)


# --------------------------------------------------------------------------
# refined bounds via the conditional kernels given an infinite run

def _leaf_probs(Q, m):
    probs, rest = conditioning_tree(Q, m)
    return probs, rest[:, 0, 0].real


def refined_bounds_from(table: CoeffTable, outer_f: OuterSeries, outer_c: OuterSeries, m: int,
                        symbol=None, tol=DEGENERATE_TOL) -> EntropyInterval:
    """Refined interval from precomputed coefficients.

    For each word w on -m..-1 the conditional probability of a 1 at the
    origin lies in [L(w), U(w)], where L comes from the all-ones past
    (kernel of outer_f) and U from the all-zeros past (kernel of outer_c).
    """
    if table.dim != 1:
        raise EntropyError("refined bounds need d = 1")
    if m > MAX_REFINED_M:
        raise EntropyError(f"m = {m} exceeds {MAX_REFINED_M}")
    flags = []
    if outer_f.gm <= 0 and outer_c.gm <= 0:
        return EntropyInterval(0.0, LOG2, f"refined({m})", m, 1.0,
                               ["gm-both-zero: method uninformative"], symbol)
    if m == 0:
        P = np.ones(1)
    else:
        P = joint_pmf(table, window_1d(-m, 0)).probs
    nf = nu_kernel(outer_f, m).matrix
    nc = nu_kernel(outer_c, m).matrix
    pf, L = _leaf_probs(nf, m)
    pc, Uc = _leaf_probs(nc, m)
    # complement of word index i is (2^m - 1) - i
    pc = pc[::-1]
    U = 1 - Uc[::-1]
    L = np.clip(L, 0.0, 1.0)
    U = np.clip(U, 0.0, 1.0)
    deg_f = pf < tol
    deg_c = pc < tol
    both = deg_f & deg_c
    # one side degenerate: fall back to the trivial bound on that side
    L = np.where(deg_f, 0.0, L)
    U = np.where(deg_c, 1.0, U)
    bad = (~both) & (U < L - 1e-9)
    if np.any(bad & (P > 0)):
        raise EntropyError(f"upper extreme below lower extreme for {int(bad.sum())} words")
    HL = binary_entropy(L)
    HU = binary_entropy(U)
    lo_w = np.minimum(HL, HU)
    hi_w = np.where((L <= 0.5) & (0.5 <= U), LOG2, np.maximum(HL, HU))
    lo_w = np.where(both, 0.0, lo_w)
    hi_w = np.where(both, LOG2, hi_w)
    pruned = float(P[both].sum())
    if pruned > 0:
        flags.append("pruned-words")
    if deg_f.any() and not both.all():
        flags.append("lower-extreme-fallback")
    if deg_c.any() and not both.all():
        flags.append("upper-extreme-fallback")
    lo = float(np.dot(P, lo_w))
    hi = float(np.dot(P, hi_w))
    lo = min(max(lo, 0.0), LOG2)
    hi = min(max(hi, lo), LOG2)
    return EntropyInterval(lo, hi, f"refined({m})", m, pruned, flags, symbol)


def refined_bounds(spec: sym.SymbolSpec, m: int, quad: QuadParams = DEFAULT_QUAD,
                   method="auto") -> EntropyInterval:
    if spec.dim != 1:
        raise EntropyError("refined bounds need d = 1")
    table = fourier_coeffs(spec, max(m, 1), quad, method)
    outer_f = outer_coeffs(spec, m, quad, method)
    outer_c = outer_coeffs(sym.complement(spec), m, quad, method)
    return refined_bounds_from(table, outer_f, outer_c, m, symbol=spec.label)


# --------------------------------------------------------------------------
# exact and transferred values

def renewal_entropy(a: float, tol=1e-14) -> float:
    """Entropy of the renewal process with parameter a, summed over the
    distance N to the previous 1 until the remaining mass times log 2 < tol."""
    if not 0 < a < 1:
        raise EntropyError("a must be in (0, 1)")
    total = 0.0
    n = 1
    c = (1 - a) / (1 + a)
    while True:
        denom = n - (n - 1) * a
        weight = c * denom * a ** (n - 1)
        q = (1 - a) ** 2 * n / denom
        total += weight * binary_entropy(q)
        # sum_{k > n} k a^(k-1) = a^n ((n+1) - n a) / (1-a)^2
        tail = c * LOG2 * a**n * ((n + 1) - n * a) / (1 - a) ** 2
        if tail < tol or n > 100000:
            break
        n += 1
    return total


def perturbation_transfer(interval: EntropyInterval, f: sym.SymbolSpec, g: sym.SymbolSpec,
                          quad: QuadParams = DEFAULT_QUAD, distance=None) -> EntropyInterval:
    """Interval for f from an interval for g, widened by H[integral |f - g|]."""
    if distance is None:
        distance, _ = l1_distance(f, g, quad)
    if distance >= 0.5:
        raise EntropyError(f"L1 distance {distance:.4g} is not below 1/2")
    w = binary_entropy(distance)
    return EntropyInterval(max(interval.lo - w, 0.0), min(interval.hi + w, LOG2),
                           "perturbation", interval.m, interval.pruned_mass,
                           list(interval.flags) + [f"l1-distance={distance:.6g}"], f.label)


def hoffman_bounds(p: float):
    """The two entropy lower bounds valid under mu_p <= mu <= mu_{1-p}."""
    if not 0 < p <= 0.5:
        raise EntropyError("p must be in (0, 1/2]")

    def xlog_inv(x):
        return 0.0 if x <= 0 else -x * math.log(x)
    a_p = xlog_inv(1 - p) - 0.5 * xlog_inv(1 - 2 * p)
    b_p = 2 * xlog_inv(1 - p) - xlog_inv(1 - 2 * p) - (1 - 2 * p) * LOG2
    return a_p, b_p
