"""Reproduction table: rows live in data/reproduce.json, computations here.

Each row names a computation and carries the reference value, tolerance and
comparison ('abs': |c - v| <= tol, 'le': c <= v + tol, 'ge': c >= v - tol).
"""
from __future__ import annotations

import functools
import json
import math
import time
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import entropy, kernel, order_phase, sampling, spectral, ust_oracle
from .symbol import builtin_symbol, parse_symbol

CONSTANTS = {
    "quarter": 0.25,
    "sqrt2_minus_1": math.sqrt(2) - 1,
    "exp_minus_4G_over_pi": math.exp(-4 * spectral.CATALAN / math.pi),
    "one_plus_pi_over_one_plus_2pi": (1 + math.pi) / (1 + 2 * math.pi),
    "sin2_m2_lo": 3 / 8 * entropy.binary_entropy(1 / 4) + 5 / 8 * entropy.binary_entropy(11 / 28),
    "sin2_m2_hi": 3 / 8 * entropy.binary_entropy(7 / 20) + 5 / 8 * entropy.binary_entropy(5 / 12),
    "half_log2": 0.5 * math.log(2),
}


@dataclass
class ReproRow:
    id: str
    description: str
    computed: float | None
    reference: float
    tolerance: float
    compare: str
    passed: bool
    runtime_ms: float | None = None
    error: str | None = None

    def to_dict(self):
        return asdict(self)


def load_rows():
    text = resources.files("detproc").joinpath("data/reproduce.json").read_text()
    return json.loads(text)["rows"]


def _value(v):
    return CONSTANTS[v] if isinstance(v, str) else float(v)


def check(computed, reference, tol, compare):
    if computed is None or not np.isfinite(computed):
        return False
    if compare == "abs":
        return abs(computed - reference) <= tol
    if compare == "le":
        return computed <= reference + tol
    if compare == "ge":
        return computed >= reference - tol
    raise ValueError(f"unknown comparison {compare!r}")


# --------------------------------------------------------------------------
# computations (memoised so rows sharing work do not repeat it)

@functools.lru_cache(maxsize=None)
def _means(name, *params, method="auto"):
    return spectral.means(builtin_symbol(name, *params), method=method)


@functools.lru_cache(maxsize=None)
def _refined(text, m):
    return entropy.refined_bounds(parse_symbol(text), m)


@functools.lru_cache(maxsize=None)
def _transfer(m):
    ft = parse_symbol("0.99*arc(0,0.5)+0.01*arc(0.5,1)")
    arc = builtin_symbol("arc", 0, 0.5)
    return entropy.perturbation_transfer(_refined("0.99*arc(0,0.5)+0.01*arc(0.5,1)", m), arc, ft)


@functools.lru_cache(maxsize=None)
def _ust_batch(n, samples, seed):
    return ust_oracle.wilson_batch(n, samples, seed)


def _ust_report(axis, lags):
    r, u = _ust_batch(64, 10_000, 2024)
    if axis == "horizontal":
        table = spectral.fourier_coeffs(builtin_symbol("ust2d"), (2, 2))
    elif axis == "x-axis":
        table = spectral.fourier_coeffs(builtin_symbol("ust_axis_g"), 2)
    else:
        table = spectral.fourier_coeffs(builtin_symbol("const", 0.5), 2)
    return ust_oracle.compare_to_symbol(ust_oracle.edge_lines(r, u, axis), table, lags)


def _sampler_tv(name, *params, samples=100_000):
    table = spectral.fourier_coeffs(builtin_symbol(name, *params), 8)
    w = kernel.window_1d(0, 8)
    b = sampling.sample_batch(table, w, samples, seed=11)
    return sampling.tv_distance(sampling.empirical_pmf(b), kernel.joint_pmf(table, w).probs)


def _c_gm_closed(name):
    return _means(name).gm


def _c_gm_quad(name):
    return _means(name, method="quadrature").gm


def _c_q_strong_quad(name):
    return 1 - _means(name, method="quadrature").gm_complement


def _c_q_full_quad(name):
    return 1 - _means(name, method="quadrature").hm_complement


def _c_four_g_over_pi():
    return -math.log(_means("ust2d", method="quadrature").gm)


def _c_szego_ratio(name, n):
    t = spectral.fourier_coeffs(builtin_symbol(name), n + 1)
    return float(spectral.szego_ratio_gm(t, n + 1).ratios[n])


def _c_ustd4_q_full():
    return 1 - _means("ustd", 4, method="quadrature").hm_complement


def _c_ustd4_hm_complement():
    return _means("ustd", 4, method="quadrature").hm_complement


def _c_refined(text, m, side):
    r = _refined(text, m)
    return r.lo if side == "lo" else r.hi


def _c_block(name, m):
    spec = builtin_symbol(name)
    if spec.dim == 1:
        t = spectral.fourier_coeffs(spec, m)
    else:
        t = spectral.fourier_coeffs(spec, (m[0], m[1]))
        m = tuple(m)
    return entropy.block_upper_bound(t, m)


def _c_transfer(m):
    return _transfer(m).lo


def _c_renewal_checks(a):
    return max(err for _, err in order_phase.renewal_checks(a).items)


def _c_regeneration(a):
    return order_phase.regeneration_test(builtin_symbol("renewal", a), 1, 3).residual


def _c_depends_margin():
    return _refined("sin2half", 8).lo - _refined("sin2", 15).hi


def _c_ust_mean():
    rep = _ust_report("horizontal", [(0, 1)])
    return rep.mean


def _c_ust_lag(axis):
    rep = _ust_report(axis, [1])
    return rep.lags[0].empirical


def _c_sampler_tv(name, *params):
    return _sampler_tv(name, *params)


def _c_sampler_repro():
    t = spectral.fourier_coeffs(builtin_symbol("sin2"), 8)
    w = kernel.window_1d(0, 8)
    a = sampling.sample_batch(t, w, 2000, seed=3).to_csv()
    b = sampling.sample_batch(t, w, 2000, seed=3).to_csv()
    return float(a == b)


COMPUTE = {
    "gm_closed": _c_gm_closed,
    "gm_quadrature": _c_gm_quad,
    "q_strong_quadrature": _c_q_strong_quad,
    "q_full_quadrature": _c_q_full_quad,
    "four_g_over_pi": _c_four_g_over_pi,
    "szego_ratio": _c_szego_ratio,
    "ustd4_q_full": _c_ustd4_q_full,
    "ustd4_hm_complement": _c_ustd4_hm_complement,
    "refined": _c_refined,
    "block": _c_block,
    "transfer": _c_transfer,
    "renewal_checks": _c_renewal_checks,
    "regeneration": _c_regeneration,
    "depends_margin": _c_depends_margin,
    "ust_mean": _c_ust_mean,
    "ust_lag": _c_ust_lag,
    "sampler_tv": _c_sampler_tv,
    "sampler_repro": _c_sampler_repro,
}


def run_row(row, timing=False) -> ReproRow:
    fn = COMPUTE[row["compute"]]
    reference = _value(row["reference"])
    t0 = time.perf_counter()
    err = None
    try:
        val = float(fn(*row.get("args", [])))
    except Exception as exc:  # a crashing row is a failing row
        val, err = None, f"{type(exc).__name__}: {exc}"
    ms = (time.perf_counter() - t0) * 1000 if timing else None
    ok = check(val, reference, row["tolerance"], row.get("compare", "abs"))
    return ReproRow(row["id"], row["description"], val, reference, row["tolerance"],
                    row.get("compare", "abs"), ok, ms, err)


def run(only=None, skip_slow=False, timing=False):
    out = []
    for row in load_rows():
        if only and row["id"] not in only:
            continue
        if skip_slow and row.get("slow"):
            continue
        out.append(run_row(row, timing))
    return out
