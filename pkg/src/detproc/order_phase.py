"""Domination thresholds, phase-uniqueness verdicts, regeneration checks."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from . import symbol as sym
from .kernel import (DEGENERATE_TOL, CylinderEvent, as_site, joint_pmf, prob_cylinder,
                     prob_ones, szego_inf, window_1d)
from .spectral import (DEFAULT_QUAD, CoeffTable, MeansReport, OuterSeries, QuadParams,
                       fourier_coeffs, means, outer_coeffs)

TAGS = ("finite-order-zeros-d1", "positive-measure-zero-set", "flat-zero",
        "algebraic-variety-d2", "non-algebraic-curve-d2", "no-profile")


@dataclass
class DominationReport:
    symbol: str
    p_strong: float
    q_strong: float
    p_full: float
    q_full: float
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def domination_report(report: MeansReport) -> DominationReport:
    """mu_p <= P^f strongly iff p <= p_strong, fully iff p <= p_full;
    P^f <= mu_q likewise with q_strong, q_full."""
    p_strong = 0.0 if report.gm_divergent else report.gm
    q_strong = 1.0 if report.gm_complement_divergent else 1 - report.gm_complement
    p_full = 0.0 if report.hm_divergent else report.hm
    q_full = 1.0 if report.hm_complement_divergent else 1 - report.hm_complement
    flags = {
        "gm_zero": p_strong == 0.0, "gm_complement_zero": q_strong == 1.0,
        "hm_zero": p_full == 0.0, "hm_complement_zero": q_full == 1.0,
        "gm_divergent": report.gm_divergent,
        "gm_complement_divergent": report.gm_complement_divergent,
        "hm_divergent": report.hm_divergent,
        "hm_complement_divergent": report.hm_complement_divergent,
    }
    return DominationReport(report.symbol, p_strong, q_strong, p_full, q_full, flags)


# --------------------------------------------------------------------------
# verdicts

def strong_k(report: MeansReport) -> dict:
    """Yes iff GM(f) GM(1-f) > 0, decided from the numeric flags."""
    gm = 0.0 if report.gm_divergent else report.gm
    gmc = 0.0 if report.gm_complement_divergent else report.gm_complement
    verdict = "Yes" if gm > 0 and gmc > 0 else "No"
    caveat = ("decided from quadrature divergence thresholds"
              if report.method != "closed-form" else "closed form")
    return {"verdict": verdict, "gm": gm, "gm_complement": gmc,
            "gm_divergent": report.gm_divergent,
            "gm_complement_divergent": report.gm_complement_divergent, "caveat": caveat}


def strong_full_k(spec: sym.SymbolSpec) -> dict:
    """Decision table over the declared zero profile of f and 1 - f."""
    prof = spec.zero_profile
    if prof is None:
        return {"verdict": "Unknown", "tag": "no-profile"}
    entries = list(prof)
    if any(e.kind == "positive-measure" for e in entries):
        return {"verdict": "No", "tag": "positive-measure-zero-set"}
    if any(e.flat for e in entries):
        return {"verdict": "No", "tag": "flat-zero"}
    if spec.dim == 1:
        if all(e.kind == "point" and e.order is not None for e in entries):
            return {"verdict": "Yes", "tag": "finite-order-zeros-d1"}
        return {"verdict": "Unknown", "tag": "no-profile"}
    if spec.dim == 2:
        if any(e.kind == "non-algebraic-curve" for e in entries):
            return {"verdict": "No", "tag": "non-algebraic-curve-d2"}
        if all(e.kind in ("point", "algebraic-curve") for e in entries):
            return {"verdict": "Yes", "tag": "algebraic-variety-d2"}
    return {"verdict": "Unknown", "tag": "no-profile"}


def one_sided_mass(outer: OuterSeries, N: int) -> float:
    """sum_{l=0}^{N} |phi(l)|^2."""
    c = np.asarray(outer.coeffs)
    if N >= len(c):
        raise ValueError(f"N = {N} needs {N + 1} outer coefficients, have {len(c)}")
    return float(np.sum(np.abs(c[: N + 1]) ** 2))


@dataclass
class PhaseVerdict:
    symbol: str
    strong_k: str
    gm: float
    gm_complement: float
    strong_full_k: str
    tag: str
    one_sided_plus_mass: float | None
    one_sided_minus_mass: float | None
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def phase_verdict(spec: sym.SymbolSpec, quad: QuadParams = DEFAULT_QUAD, N=200,
                  report: MeansReport | None = None) -> PhaseVerdict:
    report = report or means(spec, quad)
    sk = strong_k(report)
    sf = strong_full_k(spec)
    plus = minus = None
    if spec.dim == 1:
        plus = one_sided_mass(outer_coeffs(spec, N, quad), N)
        minus = one_sided_mass(outer_coeffs(sym.complement(spec), N, quad), N)
    flags = {"gm_divergent": report.gm_divergent,
             "gm_complement_divergent": report.gm_complement_divergent,
             "caveat": sk["caveat"], "mass_terms": N + 1}
    return PhaseVerdict(spec.label, sk["verdict"], sk["gm"], sk["gm_complement"],
                        sf["verdict"], sf["tag"], plus, minus, flags)


# --------------------------------------------------------------------------
# probes

def annulus_sites(dim, n, N):
    if not 0 < n <= N:
        raise ValueError("need 0 < n <= N")
    rng = range(-N, N + 1)
    return [k for k in itertools.product(rng, repeat=dim) if n <= max(abs(v) for v in k)]


def annulus_probe(table: CoeffTable, n: int, N: int) -> float:
    """P[1 at the origin | 1s on the annulus n <= |k| <= N] (sup norm in d = 2)."""
    if table.dim > 2:
        raise ValueError("annulus probes are for d <= 2")
    return szego_inf(table, annulus_sites(table.dim, n, N))


def annulus_sequence(table: CoeffTable, n: int, Ns):
    return [annulus_probe(table, n, N) for N in Ns]


@dataclass
class RegenerationResult:
    residual: float
    pruned: int
    n: int
    h: int


def regeneration_test(source, n: int, h: int, quad: QuadParams = DEFAULT_QUAD,
                      tol=DEGENERATE_TOL) -> RegenerationResult:
    """max over past a, future b of |P[b | R, a] - P[b | R]|, R = ones on 0..n-1.

    Window is -h..n+h-1.  Past patterns with P[a, R] < tol are pruned.
    """
    if h > 6:
        raise ValueError("h must be at most 6")
    if isinstance(source, sym.SymbolSpec):
        if source.dim != 1:
            raise ValueError("regeneration needs d = 1")
        table = fourier_coeffs(source, max(n + 2 * h, 1), quad)
    else:
        table = source
    pmf = joint_pmf(table, window_1d(-h, n + h))
    t = pmf.as_tensor()
    t = t[(slice(None),) * h + (1,) * n]
    J = t.reshape(2**h, 2**h)
    row = J.sum(1)
    keep = row >= tol
    total = J.sum()
    if total < tol:
        return RegenerationResult(0.0, 2**h, n, h)
    marg = J.sum(0) / total
    cond = J[keep] / row[keep, None]
    res = float(np.max(np.abs(cond - marg))) if keep.any() else 0.0
    return RegenerationResult(res, int((~keep).sum()), n, h)


# --------------------------------------------------------------------------
# renewal

@dataclass
class RenewalCheck:
    a: float
    items: list  # (name, max abs error)
    tol: float

    @property
    def passed(self):
        return all(err <= self.tol for _, err in self.items)

    def failures(self):
        return [(n, e) for n, e in self.items if e > self.tol]


def renewal_checks(a: float, n_max=8, tol=1e-9, quad: QuadParams = DEFAULT_QUAD) -> RenewalCheck:
    """Coefficients, interrenewal law, conditional formula, convolution identity."""
    if not 0 < a < 1:
        raise ValueError("a must be in (0, 1)")
    spec = sym.builtin_symbol("renewal", a)
    c = (1 - a) / (1 + a)
    K = 2 * n_max + 2
    items = []

    numeric = fourier_coeffs(spec, K, quad, method="quadrature")
    closed = np.array([c * a ** abs(k) for k in range(-K, K + 1)])
    items.append(("coefficients", float(np.max(np.abs(numeric.data - closed)))))

    table = fourier_coeffs(spec, K, quad, method="closed")
    f0 = table.zero
    q_emp = []
    for n in range(1, n_max + 1):
        ev = CylinderEvent(ones=[0, n], zeros=list(range(1, n)))
        q_emp.append(prob_cylinder(table, ev) / f0)
    q_exact = [n * (1 - a) ** 2 * a ** (n - 1) for n in range(1, n_max + 1)]
    items.append(("interrenewal", float(np.max(np.abs(np.subtract(q_emp, q_exact))))))

    c_emp = [prob_ones(table, [-1, j]) / f0 for j in range(0, n_max + 1)]
    c_exact = [c * (1 - a ** (2 * j + 2)) for j in range(0, n_max + 1)]
    items.append(("conditional", float(np.max(np.abs(np.subtract(c_emp, c_exact))))))

    # c_j = q_{j+1} + sum_{k=1}^{j} q_k c_{j-k}, with the kernel-derived values
    q_all = [n * (1 - a) ** 2 * a ** (n - 1) for n in range(1, n_max + 2)]
    q_all[:n_max] = q_emp
    conv = []
    for j in range(0, n_max):
        rhs = q_all[j] + sum(q_all[k - 1] * c_emp[j - k] for k in range(1, j + 1))
        conv.append(abs(c_emp[j] - rhs))
    items.append(("convolution", float(max(conv))))
    return RenewalCheck(a, items, tol)
