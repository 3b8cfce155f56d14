"""Fourier analysis of symbols.

Coefficient tables, arithmetic / geometric / harmonic means, coefficients
of (1/2) log f and of the outer function whose squared modulus is f.

Quadrature is the midpoint rule on 2^m points per axis, refined in m and
extrapolated (Richardson, error orders 1, 2, 3, ...).  Midpoint nodes never
touch the cell edges, so zeros and jumps sitting on dyadic points (x = 0,
1/2, ...) are handled without special casing.  For d >= 3 the means use
plain Monte Carlo.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import symbol as sym
from .symbol import BinOp, Builtin, Dilate, Neg, Num, Pi, Subsample, SymbolSpec

CATALAN = 0.915965594177219015054603514932384110774
LOG_DIVERGENCE = -40.0
INV_DIVERGENCE = 1e16
CACHE_VERSION = 1
CACHE_ENV = "DETPROC_CACHE_DIR"


class SpectralError(ValueError):
    pass


class QuadratureError(SpectralError):
    """Refinement did not reach the requested tolerance."""

    def __init__(self, msg, last_delta):
        super().__init__(f"{msg} (last delta {last_delta:.3g})")
        self.last_delta = last_delta


class DivergentGMError(SpectralError):
    """log f is not integrable (geometric mean zero)."""


class CoeffRangeError(SpectralError, IndexError):
    pass


@dataclass(frozen=True)
class QuadParams:
    """Quadrature settings.  None means the per-dimension default."""
    tol: Optional[float] = None
    m_min: Optional[int] = None
    m_max: Optional[int] = None
    max_order: int = 6
    mc_points: int = 10 ** 7
    mc_chunk: int = 500_000
    seed: int = 0

    def resolved(self, d, kmax=0):
        tol = self.tol
        if tol is None:
            tol = {1: 1e-10, 2: 1e-8}.get(d, 1e-3)
        need = max(2, math.ceil(math.log2(4 * (kmax + 1))))
        m_min = self.m_min if self.m_min is not None else max({1: 5, 2: 4}.get(d, 2), need)
        m_max = self.m_max if self.m_max is not None else {1: 20, 2: 11}.get(d, max(22 // d, 2))
        return tol, m_min, max(m_max, m_min + 1)

    def key(self):
        return [self.tol, self.m_min, self.m_max, self.max_order, self.mc_points, self.seed]


DEFAULT_QUAD = QuadParams()


# --------------------------------------------------------------------------
# coefficient tables

@dataclass(frozen=True, eq=False)
class CoeffTable:
    """Fourier coefficients on the box |k_j| <= kmax_j.

    data is indexed by k + kmax (so data[kmax] is the zeroth coefficient).
    """
    dim: int
    kmax: tuple
    data: np.ndarray
    provenance: str = "closed-form"
    error: float = 0.0

    def __post_init__(self):
        shape = tuple(2 * k + 1 for k in self.kmax)
        if len(self.kmax) != self.dim or self.data.shape != shape:
            raise SpectralError(f"table shape {self.data.shape} does not match kmax {self.kmax}")

    @classmethod
    def from_function(cls, dim, kmax, fn, provenance="closed-form", error=0.0):
        kmax = _kmax_tuple(kmax, dim)
        grids = np.meshgrid(*[np.arange(-K, K + 1) for K in kmax], indexing="ij")
        ks = np.stack(grids, axis=-1)
        data = np.asarray(fn(ks), dtype=complex)
        return cls(dim, kmax, _hermitian(data), provenance, error)

    @property
    def zero(self):
        return float(self.data[tuple(self.kmax)].real)

    def _index(self, k):
        # k has shape (..., dim)
        K = np.asarray(self.kmax)
        if k.shape[-1] != self.dim:
            raise CoeffRangeError(f"coefficient index needs {self.dim} components")
        if np.any(np.abs(k) > K):
            raise CoeffRangeError(f"coefficient index outside table radius {self.kmax}")
        return tuple(np.moveaxis(k + K, -1, 0))

    def __getitem__(self, k):
        k = np.atleast_1d(np.asarray(k, dtype=int))
        return complex(self.data[self._index(k)])

    def lookup(self, diffs):
        """Vectorised access; diffs has shape (..., dim)."""
        return self.data[self._index(np.asarray(diffs, dtype=int))]

    @property
    def is_real(self):
        return bool(np.all(np.abs(self.data.imag) <= 1e-15))

    def one_sided(self, n):
        """f^(0..n) for d = 1."""
        if self.dim != 1:
            raise SpectralError("one_sided needs d = 1")
        if n > self.kmax[0]:
            raise CoeffRangeError(f"need radius {n}, table has {self.kmax[0]}")
        K = self.kmax[0]
        return self.data[K:K + n + 1].copy()

    def restrict(self, kmax):
        kmax = _kmax_tuple(kmax, self.dim)
        if any(a > b for a, b in zip(kmax, self.kmax)):
            raise CoeffRangeError("cannot widen a table")
        sl = tuple(slice(K - k, K + k + 1) for K, k in zip(self.kmax, kmax))
        return replace(self, kmax=kmax, data=self.data[sl].copy())

    def to_dict(self):
        return {"version": CACHE_VERSION, "dim": self.dim, "kmax": list(self.kmax),
                "provenance": self.provenance, "error": self.error,
                "re": self.data.real.ravel().tolist(), "im": self.data.imag.ravel().tolist()}

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != CACHE_VERSION:
            raise SpectralError("unsupported table version")
        kmax = tuple(d["kmax"])
        shape = tuple(2 * k + 1 for k in kmax)
        data = (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(shape)
        return cls(d["dim"], kmax, data, d["provenance"], d["error"])

    def entries(self):
        """(k, value) pairs in lexicographic order of k."""
        for idx in np.ndindex(*self.data.shape):
            yield tuple(i - K for i, K in zip(idx, self.kmax)), complex(self.data[idx])


def _kmax_tuple(kmax, d):
    if np.isscalar(kmax):
        return (int(kmax),) * d
    kmax = tuple(int(k) for k in kmax)
    if len(kmax) != d:
        raise SpectralError("kmax needs one entry per axis")
    return kmax


def _hermitian(data):
    # entries(-k) = conj(entries(k)) exactly
    flipped = np.conj(data[tuple(slice(None, None, -1) for _ in range(data.ndim))])
    return 0.5 * (data + flipped)


# --------------------------------------------------------------------------
# closed forms

def _arc_coeff(a, b, k):
    k = np.asarray(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (np.exp(-2j * np.pi * k * a) - np.exp(-2j * np.pi * k * b)) / (2j * np.pi * k)
    return np.where(k == 0, b - a, v)


def _zigzag_coeff(k):
    k = np.abs(np.asarray(k))
    out = np.zeros(k.shape)
    out[k == 0] = 0.5
    odd = k % 2 == 1
    if np.any(odd):
        top = int(k[odd].max())
        # partial sums of the Leibniz series, index (k-1)/2
        terms = np.array([(-1) ** j / (2 * j + 1) for j in range((top - 1) // 2 + 1)])
        partial = np.cumsum(terms)
        ko = k[odd]
        h = (ko - 1) // 2
        sign = np.where(h % 2 == 0, 1.0, -1.0)
        out[odd] = sign * (-0.5 + (2 / np.pi) * partial[h]) - 1 / (np.pi * ko)
    return out


def _sin2half_coeff(k):
    k = np.asarray(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = 2j * k / ((2 * k - 1) * (2 * k + 1) * np.pi)
    return np.where(k == 0, 0.5, v)


def _finite_coeff(vals):
    def fn(k):
        k = np.abs(np.asarray(k))
        out = np.zeros(k.shape)
        for j, v in enumerate(vals):
            out[k == j] = v
        return out
    return fn


@functools.lru_cache(maxsize=64)
def _recip_trig_data(c):
    """Factor T = c0 + 2 sum c_k cos = |kappa prod(1 - rho_i z)|^2 with |rho_i| < 1.

    Returns (kappa, rho, psi, fhat) where psi are the power-series coefficients
    of 1/q and fhat(k) = sum_l psi_l psi_{l+k} for k >= 0.
    """
    c = np.asarray(c, dtype=float)
    n = len(c) - 1
    if n == 0:
        psi = np.array([1 / math.sqrt(c[0])])
        return math.sqrt(c[0]), np.zeros(0), psi, np.array([1 / c[0]])
    # z^n T(z) has coefficients c_n .. c_1 c_0 c_1 .. c_n
    poly = np.concatenate([c[::-1], c[1:]])
    roots = np.roots(poly)
    inside = roots[np.abs(roots) < 1]
    if len(inside) != n:
        raise SpectralError("recip_trig: polynomial has zeros on the unit circle")
    rho = inside  # q(z) = kappa prod(1 - rho z), roots 1/rho outside the disc
    qz1 = np.prod(1 - rho)
    kappa = math.sqrt(float(np.sum(c[0] + 2 * np.sum(c[1:]))) / abs(qz1) ** 2)
    # power series of 1/q
    qcoef = np.array([1.0 + 0j])
    for r in rho:
        qcoef = np.convolve(qcoef, [1.0, -r])
    qcoef = kappa * qcoef
    L = 64
    decay = float(np.max(np.abs(rho)))
    if decay > 0:
        L = max(64, int(math.ceil(-40 / math.log(decay))) + 8)
    psi = np.zeros(L, dtype=complex)
    for j in range(L):
        acc = 1.0 if j == 0 else 0.0
        for i in range(1, min(j, n) + 1):
            acc -= qcoef[i] * psi[j - i]
        psi[j] = acc / qcoef[0]
    fhat = np.array([np.sum(np.conj(psi[: L - k]) * psi[k:]) for k in range(L)])
    return kappa, rho, psi.real.copy() if np.all(np.abs(psi.imag) < 1e-14) else psi, fhat.real


def _recip_trig_coeff(params):
    _, _, _, fhat = _recip_trig_data(tuple(params))

    def fn(k):
        k = np.abs(np.asarray(k))
        out = np.zeros(k.shape)
        ok = k < len(fhat)
        out[ok] = fhat[k[ok]]
        return out
    return fn


def _builtin_coeff_fn(node: Builtin):
    """Closed-form coefficient function of a 1-d builtin, or None."""
    p = node.params
    name = node.name
    if name == "const":
        return lambda k: np.where(np.asarray(k) == 0, p[0], 0.0)
    if name == "arc":
        return lambda k: _arc_coeff(p[0], p[1], k)
    if name == "half_ind":
        return lambda k: _arc_coeff(0.0, 0.5, k)
    if name == "lozenge":
        return lambda k: _arc_coeff(1 / 3, 2 / 3, k)
    if name == "sin2":
        return _finite_coeff([0.5, -0.25])
    if name == "sin2half":
        return _sin2half_coeff
    if name == "zigzag":
        return _zigzag_coeff
    if name == "renewal":
        a = p[0]
        return lambda k: (1 - a) / (1 + a) * a ** np.abs(np.asarray(k))
    if name == "poly3":
        return _finite_coeff([1 / 3, 2 / 9, 1 / 9])
    if name == "recip_trig":
        return _recip_trig_coeff(p)
    return None


def _closed_coeff_fn(node, d):
    """Coefficient function k (int array (..., d)) -> complex array, or None."""
    c = sym._const_value(node)
    if c is not None:
        return lambda ks: np.where(np.all(ks == 0, axis=-1), c, 0.0)
    if isinstance(node, Builtin):
        if sym.builtin_dim(node) != 1:
            return None
        f1 = _builtin_coeff_fn(node)
        if f1 is None:
            return None
        return lambda ks: np.where(np.all(ks[..., 1:] == 0, axis=-1), f1(ks[..., 0]), 0.0)
    if isinstance(node, Neg):
        g = _closed_coeff_fn(node.arg, d)
        return None if g is None else (lambda ks: -g(ks))
    if isinstance(node, BinOp):
        if node.op in "+-":
            a, b = _closed_coeff_fn(node.left, d), _closed_coeff_fn(node.right, d)
            if a is None or b is None:
                return None
            return (lambda ks: a(ks) + b(ks)) if node.op == "+" else (lambda ks: a(ks) - b(ks))
        if node.op == "*":
            for s, o in ((node.left, node.right), (node.right, node.left)):
                cs = sym._const_value(s)
                if cs is not None:
                    g = _closed_coeff_fn(o, d)
                    return None if g is None else (lambda ks, g=g, cs=cs: cs * g(ks))
            return None
        if node.op == "/":
            cs = sym._const_value(node.right)
            if cs is None or cs == 0:
                return None
            g = _closed_coeff_fn(node.left, d)
            return None if g is None else (lambda ks: g(ks) / cs)
        return None
    if isinstance(node, Dilate):
        g = _closed_coeff_fn(node.arg, d)
        if g is None:
            return None
        n = node.n

        def dil(ks):
            ok = np.all(ks % n == 0, axis=-1)
            return np.where(ok, g(ks // n), 0.0)
        return dil
    if isinstance(node, Subsample):
        g = _closed_coeff_fn(node.arg, d)
        return None if g is None else (lambda ks: g(ks * node.r))
    return None


def closed_form_available(spec: SymbolSpec) -> bool:
    return _closed_coeff_fn(spec.body, spec.dim) is not None


# step functions (affine combinations of arcs and constants)

def _step_pieces(node):
    """[(a, b, value)] partition of [0, 1) when node is a step function of x1."""
    cuts = set()

    def collect(n):
        if sym._const_value(n) is not None:
            return True
        if isinstance(n, Builtin) and n.name in ("arc", "half_ind", "lozenge", "const"):
            if n.name == "arc":
                cuts.update(n.params)
            elif n.name == "half_ind":
                cuts.update((0.0, 0.5))
            elif n.name == "lozenge":
                cuts.update((1 / 3, 2 / 3))
            return True
        if isinstance(n, Neg):
            return collect(n.arg)
        if isinstance(n, BinOp) and n.op in "+-":
            return collect(n.left) and collect(n.right)
        if isinstance(n, BinOp) and n.op == "*":
            return ((sym._const_value(n.left) is not None and collect(n.right))
                    or (sym._const_value(n.right) is not None and collect(n.left)))
        if isinstance(n, BinOp) and n.op == "/":
            return sym._const_value(n.right) not in (None, 0) and collect(n.left)
        return False

    if not collect(node):
        return None
    pts = sorted({0.0, 1.0} | {float(c) for c in cuts})
    pieces = []
    spec = SymbolSpec(1, node)
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            v = float(sym.evaluate(spec, [np.array([0.5 * (a + b)])])[0])
            pieces.append((a, b, v))
    return pieces


def _split_complement(node):
    """(inner, complemented) for bodies of the form 1 - inner."""
    if isinstance(node, BinOp) and node.op == "-" and sym._const_value(node.left) == 1:
        return node.right, True
    return node, False


_SQ2 = math.sqrt(2)
_POLY3C_ALPHA = (math.sqrt(6) + _SQ2) / 6
_POLY3C_RHO = -(2 - math.sqrt(3))
_AXIS_R = (_SQ2 - 1) ** 2


def _log_half_closed_builtin(node: Builtin, comp: bool, N):
    """F^(0..N) for F = (1/2) log f (or of 1 - f when comp)."""
    k = np.arange(1, N + 1, dtype=float)
    out = np.zeros(N + 1, dtype=complex)
    name, p = node.name, node.params
    if name == "sin2":
        out[0] = -math.log(2)
        out[1:] = -((-1.0) ** k if comp else 1.0) / (2 * k)
    elif name == "sin2half":
        out[0] = -math.log(2)
        h = np.cumsum(1 / (2 * k - 1))
        out[1:] = -1 / (4 * k) + 1j * h / (k * np.pi)
        if comp:
            out = np.conj(out)
    elif name == "renewal":
        a = p[0]
        if comp:
            out[0] = 0.5 * math.log(a)
            out[1:] = (a ** k - 1) / (2 * k)
        else:
            out[0] = math.log(1 - a)
            out[1:] = a ** k / (2 * k)
    elif name == "poly3":
        if comp:
            out[0] = math.log(_POLY3C_ALPHA)
            out[1:] = -(1 + _POLY3C_RHO ** k) / (2 * k)
        else:
            out[0] = -math.log(3)
            out[1:] = -np.cos(2 * np.pi * k / 3) / k
    elif name == "ust_axis_g" and not comp:
        out[0] = 0.5 * math.log(_SQ2 - 1)
        out[1:] = (_AXIS_R ** k - 1) / (4 * k)
    elif name == "recip_trig" and not comp:
        kappa, rho, _, _ = _recip_trig_data(tuple(p))
        out[0] = -math.log(kappa)
        for r in rho:
            out[1:] += r ** k / (2 * k)
        if np.all(np.abs(out.imag) < 1e-14):
            out = out.real.astype(complex)
    else:
        return None
    return out


def _log_half_closed(node, N):
    inner, comp = _split_complement(node)
    if isinstance(inner, Builtin):
        r = _log_half_closed_builtin(inner, comp, N)
        if r is not None:
            return r
    pieces = _step_pieces(node)
    if pieces is not None:
        out = np.zeros(N + 1, dtype=complex)
        ks = np.arange(N + 1)
        for a, b, v in pieces:
            if v <= 0:
                raise DivergentGMError("symbol vanishes on a set of positive measure")
            out += 0.5 * math.log(v) * _arc_coeff(a, b, ks)
        return out
    if isinstance(node, Dilate):
        inner_n = N // node.n
        sub = _log_half_closed(node.arg, inner_n)
        if sub is None:
            return None
        out = np.zeros(N + 1, dtype=complex)
        out[:: node.n] = sub[: len(out[:: node.n])]
        return out
    return None


def _closed_means_builtin(node: Builtin):
    """dict with am/gm/hm/gm_c/hm_c for builtins with known values (None = unknown)."""
    name, p = node.name, node.params
    G = CATALAN
    if name == "sin2" or name == "sin2half":
        return dict(am=0.5, gm=0.25, hm=0.0, gm_c=0.25, hm_c=0.0)
    if name == "poly3":
        return dict(am=1 / 3, gm=1 / 9, hm=0.0, gm_c=(2 + math.sqrt(3)) / 9, hm_c=0.0)
    if name == "renewal":
        a = p[0]
        return dict(am=(1 - a) / (1 + a), gm=(1 - a) ** 2, hm=(1 - a) ** 2 / (1 + a * a),
                    gm_c=a, hm_c=0.0)
    if name == "ust_axis_g":
        return dict(am=0.5, gm=_SQ2 - 1, hm=0.0,
                    gm_c=2 * (_SQ2 - 1) * math.exp(-2 * G / math.pi),
                    hm_c=math.pi / (1 + 2 * math.pi))
    if name == "ust2d":
        v = math.exp(-4 * G / math.pi)
        return dict(am=0.5, gm=v, hm=0.0, gm_c=v, hm_c=0.0)
    if name == "zigzag":
        v = math.exp(-2 * G / math.pi) / _SQ2
        return dict(am=0.5, gm=v, hm=0.0, gm_c=v, hm_c=0.0)
    if name == "recip_trig":
        kappa, _, _, fhat = _recip_trig_data(tuple(p))
        return dict(am=float(fhat[0]), gm=1 / kappa ** 2, hm=1 / p[0], gm_c=None, hm_c=None)
    return None


def _closed_means(node):
    inner, comp = _split_complement(node)
    while isinstance(inner, Dilate):
        inner = inner.arg
    if isinstance(inner, Builtin):
        r = _closed_means_builtin(inner)
        if r is not None:
            if comp:
                r = dict(am=1 - r["am"], gm=r["gm_c"], hm=r["hm_c"], gm_c=r["gm"], hm_c=r["hm"])
            return r
    pieces = _step_pieces(node)
    if pieces is not None:
        def gm(vals):
            if any(v <= 0 for _, _, v in vals):
                return 0.0
            return math.exp(sum((b - a) * math.log(v) for a, b, v in vals))

        def hm(vals):
            if any(v <= 0 for _, _, v in vals):
                return 0.0
            return 1 / sum((b - a) / v for a, b, v in vals)
        comp_pieces = [(a, b, 1 - v) for a, b, v in pieces]
        return dict(am=sum((b - a) * v for a, b, v in pieces), gm=gm(pieces), hm=hm(pieces),
                    gm_c=gm(comp_pieces), hm_c=hm(comp_pieces))
    return None


# --------------------------------------------------------------------------
# quadrature

def midpoint_nodes(m):
    N = 1 << m
    return (np.arange(N) + 0.5) / N


def grid_values(spec: SymbolSpec, m: int):
    """Symbol values on the tensor midpoint grid with 2^m points per axis."""
    x = midpoint_nodes(m)
    d = spec.dim
    coords = [x.reshape([-1 if j == i else 1 for j in range(d)]) for i in range(d)]
    return sym.evaluate(spec, coords)


def _log_values(spec: SymbolSpec, m: int):
    x = midpoint_nodes(m)
    d = spec.dim
    coords = [x.reshape([-1 if j == i else 1 for j in range(d)]) for i in range(d)]
    return sym.log_evaluate(spec, coords)


def richardson(levels, max_order=6):
    """Extrapolate a sequence of estimates at h, h/2, h/4, ...

    Returns (best, err) where err is the change between the last two entries
    of the highest column that has two entries.
    """
    cols = [[np.asarray(v) for v in levels]]
    for p in range(1, max_order + 1):
        prev = cols[-1]
        if len(prev) < 3:
            break
        f = 2.0 ** p
        cols.append([(f * prev[i + 1] - prev[i]) / (f - 1) for i in range(len(prev) - 1)])
    col = cols[-1]
    if len(col) < 2:
        return col[-1], np.inf
    return col[-1], float(np.max(np.abs(col[-1] - col[-2])))


def _fft_coeffs(vals, kmax):
    """Midpoint-rule Fourier coefficients for |k_j| <= kmax_j from grid values."""
    d = vals.ndim
    N = vals.shape[0]
    F = np.fft.fftn(vals) / vals.size
    idx = []
    for K in kmax:
        ks = np.arange(-K, K + 1)
        idx.append(ks)
    sub = F[np.ix_(*[k % N for k in idx])]
    phase = np.ones(sub.shape, dtype=complex)
    for ax, ks in enumerate(idx):
        shape = [1] * d
        shape[ax] = -1
        phase = phase * np.exp(-1j * np.pi * ks / N).reshape(shape)
    return sub * phase


def _refine(compute, d, kmax, quad, what):
    tol, m_min, m_max = quad.resolved(d, max(kmax) if kmax else 0)
    levels = []
    err = np.inf
    for m in range(m_min, m_max + 1):
        levels.append(compute(m))
        if len(levels) >= 3:
            best, err = richardson(levels, quad.max_order)
            if err < tol:
                return best, err, m
    raise QuadratureError(f"{what}: no convergence to {tol:g} by 2^{m_max} points/axis", err)


def fourier_coeffs(spec: SymbolSpec, kmax, quad: QuadParams = DEFAULT_QUAD, method="auto") -> CoeffTable:
    """Coefficient table f^(k), |k_j| <= kmax.

    method: 'auto' (closed form when known), 'closed' or 'quadrature'.
    """
    d = spec.dim
    kmax = _kmax_tuple(kmax, d)
    if method in ("auto", "closed"):
        fn = _closed_coeff_fn(spec.body, d)
        if fn is not None:
            return CoeffTable.from_function(d, kmax, fn, "closed-form")
        if method == "closed":
            raise SpectralError(f"no closed-form coefficients for {spec.label}")
    elif method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    best, err, m = _refine(lambda m: _fft_coeffs(grid_values(spec, m), kmax), d, kmax,
                           quad, "fourier_coeffs")
    data = _hermitian(best)
    return CoeffTable(d, kmax, data, f"quadrature(m={m}, tol={quad.resolved(d)[0]:g})", err)


# --------------------------------------------------------------------------
# means

@dataclass
class MeansReport:
    symbol: str
    am: float
    gm: float
    hm: float
    gm_complement: float
    hm_complement: float
    gm_divergent: bool = False
    hm_divergent: bool = False
    gm_complement_divergent: bool = False
    hm_complement_divergent: bool = False
    errors: dict = field(default_factory=dict)
    method: str = "closed-form"
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "symbol": self.symbol, "method": self.method,
            "am": self.am, "gm": self.gm, "hm": self.hm,
            "gm_complement": self.gm_complement, "hm_complement": self.hm_complement,
            "flags": {"gm_divergent": self.gm_divergent, "hm_divergent": self.hm_divergent,
                      "gm_complement_divergent": self.gm_complement_divergent,
                      "hm_complement_divergent": self.hm_complement_divergent},
            "errors": {k: float(v) for k, v in self.errors.items()},
            "notes": list(self.notes),
        }


def _divergence_check(raw, kind, min_levels=5):
    """raw midpoint estimates of an integral that may diverge to -inf (log) or +inf (inv)."""
    if len(raw) < 2:
        return False
    last, prev = raw[-1], raw[-2]
    if kind == "log" and last < LOG_DIVERGENCE and last < prev:
        return True
    if kind == "inv" and last > INV_DIVERGENCE and last > prev:
        return True
    if len(raw) < min_levels:
        return False
    inc = np.diff(raw[-4:])
    sign = -1 if kind == "log" else 1
    if not np.all(sign * inc > 0):
        return False
    ratios = np.abs(inc[1:]) / np.abs(inc[:-1])
    return bool(np.all(ratios >= 0.9))


class _Integral:
    """Tracks one integral across refinement levels."""

    def __init__(self, kind):
        self.kind = kind  # 'plain', 'log' or 'inv'
        self.raw = []
        self.value = None
        self.err = np.inf
        self.divergent = False
        self.done = False

    def push(self, v, tol, max_order):
        if self.done:
            return
        if not np.isfinite(v):
            self.divergent = self.done = True
            return
        self.raw.append(float(v))
        if self.kind != "plain" and _divergence_check(self.raw, self.kind):
            self.divergent = self.done = True
            return
        if len(self.raw) >= 3:
            best, err = richardson(self.raw, max_order)
            self.value, self.err = float(best), err
            if err < tol:
                self.done = True


def _integrands(vals, logf=None):
    with np.errstate(divide="ignore", over="ignore"):
        if logf is None:
            logf = np.log(vals)
        log1 = np.log1p(-vals)
        inv = np.where(vals > 0, 1 / np.where(vals > 0, vals, 1), np.inf)
        inv1 = np.where(vals < 1, 1 / np.where(vals < 1, 1 - vals, 1), np.inf)
    return {"am": vals, "log": logf, "inv": inv, "log_c": log1, "inv_c": inv1}


def _quadrature_means(spec, quad, want):
    d = spec.dim
    tol, m_min, m_max = quad.resolved(d)
    kinds = {"am": "plain", "log": "log", "inv": "inv", "log_c": "log", "inv_c": "inv"}
    ints = {k: _Integral(kinds[k]) for k in want}
    m = m_min
    for m in range(m_min, m_max + 1):
        vals = grid_values(spec, m)
        its = _integrands(vals, _log_values(spec, m) if "log" in want else None)
        for k, it in ints.items():
            with np.errstate(invalid="ignore"):
                it.push(np.mean(its[k]), tol, quad.max_order)
        if all(it.done for it in ints.values()):
            break
    return ints, m


def _mc_means(spec, quad, want):
    d = spec.dim
    gen = np.random.Generator(np.random.Philox(key=np.array([quad.seed, 7], dtype=np.uint64)))
    n_total = int(quad.mc_points)
    sums = {k: 0.0 for k in want}
    sq = {k: 0.0 for k in want}
    biggest = {k: 0.0 for k in want}
    done = 0
    while done < n_total:
        n = min(quad.mc_chunk, n_total - done)
        pts = gen.random((d, n))
        vals = sym.evaluate(spec, list(pts))
        its = _integrands(vals, sym.log_evaluate(spec, list(pts)) if "log" in want else None)
        for k in want:
            v = its[k]
            sums[k] += float(np.sum(v))
            sq[k] += float(np.sum(v * v))
            if k in ("inv", "inv_c"):
                biggest[k] = max(biggest[k], float(np.max(v)))
        done += n
    out = {}
    for k in want:
        it = _Integral({"am": "plain", "log": "log", "inv": "inv",
                        "log_c": "log", "inv_c": "inv"}[k])
        mean = sums[k] / n_total
        var = max(sq[k] / n_total - mean * mean, 0.0)
        it.value, it.err, it.done = mean, math.sqrt(var / n_total), True
        if not np.isfinite(mean):
            it.divergent = True
        elif it.kind == "log" and mean < LOG_DIVERGENCE:
            it.divergent = True
        elif it.kind == "inv" and (mean > INV_DIVERGENCE or biggest[k] > 0.1 * sums[k]):
            # a single sample carrying a tenth of the total signals an infinite mean
            it.divergent = True
        out[k] = it
    return out


def means(spec: SymbolSpec, quad: QuadParams = DEFAULT_QUAD, method="auto") -> MeansReport:
    """AM, GM, HM of f and of 1 - f.

    method: 'auto' uses closed forms where known and numerics elsewhere;
    'quadrature' forces numerics (midpoint/Richardson for d <= 2, Monte Carlo
    for d >= 3); 'closed' fails unless every entry has a closed form.
    """
    closed = _closed_means(spec.body) if method in ("auto", "closed") else None
    if method == "closed" and (closed is None or any(v is None for v in closed.values())):
        raise SpectralError(f"no closed-form means for {spec.label}")
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    keymap = {"am": "am", "gm": "log", "hm": "inv", "gm_c": "log_c", "hm_c": "inv_c"}
    vals, errs, div = {}, {}, {}
    notes = []
    need = []
    for name, key in keymap.items():
        v = None if closed is None else closed.get(name)
        if v is None:
            need.append(key)
        else:
            vals[name] = float(v)
            errs[name] = 0.0
            div[name] = name != "am" and v == 0.0
    used = "closed-form"
    if need:
        if spec.dim <= 2:
            ints, m = _quadrature_means(spec, quad, need)
            used = f"quadrature(m<={m})"
        else:
            ints = _mc_means(spec, quad, need)
            used = f"monte-carlo(n={quad.mc_points})"
        if len(need) < len(keymap):
            used = "mixed: " + used
        for name, key in keymap.items():
            if key not in need:
                continue
            it = ints[key]
            if it.divergent:
                vals[name], errs[name], div[name] = 0.0, 0.0, True
                continue
            if it.value is None:
                it.value = it.raw[-1]
            if not it.done:
                notes.append(f"{name}: refinement stopped before tolerance")
            div[name] = False
            if key == "am":
                vals[name], errs[name] = it.value, it.err
            elif key.startswith("log"):
                vals[name] = math.exp(it.value)
                errs[name] = vals[name] * it.err
            else:
                vals[name] = 1 / it.value
                errs[name] = it.err / it.value ** 2
    for k in vals:
        vals[k] = min(max(vals[k], 0.0), 1.0)
    return MeansReport(spec.label, vals["am"], vals["gm"], vals["hm"], vals["gm_c"], vals["hm_c"],
                       div["gm"], div["hm"], div["gm_c"], div["hm_c"],
                       {"am": errs["am"], "gm": errs["gm"], "hm": errs["hm"],
                        "gm_complement": errs["gm_c"], "hm_complement": errs["hm_c"]},
                       used, notes)


def integrate(spec: SymbolSpec, transform, quad: QuadParams = DEFAULT_QUAD):
    """(value, err) of the integral of transform(f) over the torus (d <= 2)."""
    if spec.dim > 2:
        raise SpectralError("integrate supports d <= 2")
    best, err, _ = _refine(lambda m: np.mean(transform(grid_values(spec, m))), spec.dim, (0,),
                           quad, "integrate")
    return float(np.real(best)), err


def l1_distance(f: SymbolSpec, g: SymbolSpec, quad: QuadParams = DEFAULT_QUAD):
    """Integral of |f - g| over the torus (d <= 2)."""
    if f.dim != g.dim:
        raise SpectralError("symbols live on different tori")
    tol, m_min, m_max = quad.resolved(f.dim)

    def level(m):
        return np.mean(np.abs(grid_values(f, m) - grid_values(g, m)))
    best, err, _ = _refine(level, f.dim, (0,), quad, "l1_distance")
    return float(best), err


# --------------------------------------------------------------------------
# log-coefficients and outer functions

def log_half_coeffs(spec: SymbolSpec, N: int, quad: QuadParams = DEFAULT_QUAD, method="auto"):
    """Coefficients F^(0..N) of F = (1/2) log f on the circle."""
    if spec.dim != 1:
        raise sym.DimensionError("log_half_coeffs needs d = 1")
    if method in ("auto", "closed"):
        r = _log_half_closed(spec.body, N)
        if r is not None:
            return r
        if method == "closed":
            raise SpectralError(f"no closed-form log coefficients for {spec.label}")

    def level(m):
        logv = _log_values(spec, m)
        if np.any(np.isneginf(logv)):
            raise DivergentGMError(f"{spec.label} vanishes at quadrature nodes")
        return _fft_coeffs(0.5 * logv, (N,))
    try:
        best, err, m = _refine(level, 1, (N,), quad, "log_half_coeffs")
    except QuadratureError:
        if means(spec, quad, method="quadrature").gm_divergent:
            raise DivergentGMError(f"{spec.label}: log f is not integrable") from None
        raise
    full = _hermitian(best)
    return full[N:].copy()


@dataclass(frozen=True, eq=False)
class OuterSeries:
    coeffs: np.ndarray
    gm: float

    @property
    def n_terms(self):
        return len(self.coeffs)

    def __len__(self):
        return len(self.coeffs)


def exp_series(S, N):
    """Coefficients 0..N of exp(S(z)) for a power series S."""
    S = np.zeros(N + 1, dtype=complex) if S is None else np.asarray(S, dtype=complex)
    psi = np.zeros(N + 1, dtype=complex)
    psi[0] = np.exp(S[0])
    mS = np.arange(len(S)) * S
    for n in range(1, N + 1):
        top = min(n, len(S) - 1)
        m = np.arange(1, top + 1)
        psi[n] = np.dot(mS[1:top + 1], psi[n - m]) / n
    return psi


def outer_from_log_half(F, N):
    S = np.array(F[: N + 1], dtype=complex)
    S[1:] *= 2
    if len(S) < N + 1:
        S = np.concatenate([S, np.zeros(N + 1 - len(S))])
    return exp_series(S, N)


def outer_coeffs(spec: SymbolSpec, N: int, quad: QuadParams = DEFAULT_QUAD, method="auto") -> OuterSeries:
    """Coefficients 0..N of the outer function with |phi|^2 = f."""
    try:
        F = log_half_coeffs(spec, N, quad, method)
    except DivergentGMError:
        return OuterSeries(np.zeros(N + 1, dtype=complex), 0.0)
    psi = outer_from_log_half(F, N)
    return OuterSeries(psi, float(math.exp(2 * F[0].real)))


# --------------------------------------------------------------------------
# Toeplitz determinant ratios

@dataclass(frozen=True, eq=False)
class SzegoRatios:
    ratios: np.ndarray  # d_{n+1}/d_n for n = 0, 1, ... (d_0 = 1)
    truncated: bool
    log_dets: np.ndarray

    def __len__(self):
        return len(self.ratios)


def toeplitz_matrix(table: CoeffTable, n):
    """[f^(j - i)] for i, j in 0..n-1."""
    idx = np.arange(n)
    return table.lookup((idx[None, :] - idx[:, None])[..., None])


def szego_ratio_gm(table: CoeffTable, nmax: int, tol=1e-13) -> SzegoRatios:
    """Ratios of successive Toeplitz determinants, computed as Schur pivots."""
    if table.dim != 1:
        raise sym.DimensionError("szego_ratio_gm needs d = 1")
    if nmax - 1 > table.kmax[0]:
        raise CoeffRangeError(f"need radius {nmax - 1}, table has {table.kmax[0]}")
    K = toeplitz_matrix(table, nmax).astype(complex)
    ratios = []
    truncated = False
    for i in range(nmax):
        piv = K[i, i].real
        if piv < tol:
            truncated = True
            break
        ratios.append(piv)
        col = K[i + 1:, i].copy()
        K[i + 1:, i + 1:] -= np.outer(col, K[i, i + 1:]) / piv
    ratios = np.array(ratios)
    return SzegoRatios(ratios, truncated, np.cumsum(np.log(ratios)) if len(ratios) else ratios)


# --------------------------------------------------------------------------
# cache

def cache_dir(explicit=None):
    d = explicit or os.environ.get(CACHE_ENV)
    return Path(d) if d else None


def cache_key(spec: SymbolSpec, kmax, quad: QuadParams, method):
    payload = json.dumps({"v": CACHE_VERSION, "symbol": sym.to_text(spec), "dim": spec.dim,
                          "kmax": list(_kmax_tuple(kmax, spec.dim)), "quad": quad.key(),
                          "method": method}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:32]


def cached_fourier_coeffs(spec, kmax, quad=DEFAULT_QUAD, method="auto", directory=None):
    """fourier_coeffs with an on-disk JSON cache (no cache when no directory is set)."""
    root = cache_dir(directory)
    if root is None:
        return fourier_coeffs(spec, kmax, quad, method)
    path = root / f"coeffs-{cache_key(spec, kmax, quad, method)}.json"
    if path.exists():
        try:
            return CoeffTable.from_dict(json.loads(path.read_text()))
        except (ValueError, KeyError):
            pass  # stale or corrupt entry, recompute
    table = fourier_coeffs(spec, kmax, quad, method)
    root.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(table.to_dict()))
    tmp.replace(path)
    return table
