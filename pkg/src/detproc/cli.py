"""Command-line front end: ``detproc <command> [options]``.

Exit codes: 0 success, 1 a reproduce row failed, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import entropy, kernel, order_phase, reproduce, sampling, spectral, ust_oracle
from . import symbol as sym

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers

def parse_sites(text, dim):
    """'0;2;5' or '0,2,5' (d = 1); '0,0;1,1' (d >= 2)."""
    if text is None or not text.strip():
        return []
    text = text.strip()
    if dim == 1:
        parts = text.replace(";", ",").split(",")
        try:
            return [(int(p),) for p in parts if p.strip()]
        except ValueError:
            raise UsageError(f"bad site list {text!r}") from None
    out = []
    for chunk in text.split(";"):
        try:
            site = tuple(int(v) for v in chunk.split(","))
        except ValueError:
            raise UsageError(f"bad site {chunk!r}") from None
        if len(site) != dim:
            raise UsageError(f"site {chunk!r} needs {dim} coordinates")
        out.append(site)
    return out


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def emit(args, obj, text=None, csv=None):
    fmt = args.format
    if fmt == "json":
        sys.stdout.write(json.dumps(obj, indent=2, default=_json_default) + "\n")
    elif fmt == "csv":
        if csv is None:
            raise UsageError("this command has no CSV output")
        sys.stdout.write(csv)
    else:
        if text is None:
            text = "\n".join(f"{k}: {v}" for k, v in obj.items()) + "\n"
        sys.stdout.write(text)


def quad_params(args):
    return spectral.QuadParams(tol=args.quad_tol, seed=args.seed)


def get_symbol(args, required=True):
    if args.symbol is None:
        if required:
            raise UsageError("--symbol is required")
        return None
    config = sym.load_symbols(args.config) if args.config else None
    return sym.resolve_symbol(args.symbol, args.dim, config)


def get_table(args, spec, kmax):
    if args.kmax is not None:
        kmax = args.kmax
    return spectral.cached_fourier_coeffs(spec, kmax, quad_params(args), args.method_coeffs,
                                          args.cache_dir)


def _window(args, spec):
    if args.window:
        return parse_sites(args.window, spec.dim)
    if args.n is None:
        raise UsageError("give --window or --n")
    if spec.dim == 1:
        return kernel.window_1d(0, args.n)
    side = int(round(args.n ** (1 / spec.dim)))
    if side ** spec.dim != args.n:
        raise UsageError(f"--n must be a perfect {spec.dim}-th power in dimension {spec.dim}")
    return kernel.box_window((side,) * spec.dim)


def _radius(sites):
    arr = np.array(sites)
    if arr.size == 0:
        return 0
    return tuple(int(v) for v in (arr.max(0) - arr.min(0)))


# --------------------------------------------------------------------------
# commands

def cmd_coeffs(args):
    spec = get_symbol(args)
    table = get_table(args, spec, args.kmax if args.kmax is not None else 8)
    rows = ["k," + "re,im"]
    for k, v in table.entries():
        rows.append(f"{' '.join(map(str, k))},{v.real!r},{v.imag!r}")
    emit(args, table.to_dict(), csv="\n".join(rows) + "\n",
         text="\n".join(f"{k}: {v.real:.12g}{v.imag:+.12g}j" for k, v in table.entries()) + "\n")


def cmd_prob(args):
    spec = get_symbol(args)
    ones = parse_sites(args.ones, spec.dim)
    zeros = parse_sites(args.zeros, spec.dim)
    ev = kernel.CylinderEvent(ones, zeros)
    table = get_table(args, spec, _radius(ones + zeros) or 1)
    p = kernel.prob_cylinder(table, ev)
    emit(args, {"symbol": spec.label, "ones": ones, "zeros": zeros, "probability": p},
         text=f"{p!r}\n")


def cmd_pmf(args):
    spec = get_symbol(args)
    w = _window(args, spec)
    table = get_table(args, spec, _radius(w) or 1)
    pmf = kernel.joint_pmf(table, w)
    emit(args, pmf.to_dict(), csv=pmf.to_csv(), text=pmf.to_csv())


def cmd_sample(args):
    spec = get_symbol(args)
    w = _window(args, spec)
    table = get_table(args, spec, _radius(w) or 1)
    batch = sampling.sample_batch(table, w, args.samples, seed=args.seed)
    if args.thin is not None:
        batch = sampling.thin(batch, args.thin, seed=args.seed)
    if args.out:
        batch.save(args.out)
    st = sampling.empirical_stats(batch, with_counts=False)
    summary = {"symbol": spec.label, "n_samples": len(batch), "seed": args.seed,
               "window": [list(s) for s in batch.window], "site_frequency": st.freq.tolist()}
    emit(args, summary, csv=batch.to_csv())


def cmd_means(args):
    spec = get_symbol(args)
    rep = spectral.means(spec, quad_params(args), args.method)
    emit(args, rep.to_dict())


def cmd_dominate(args):
    spec = get_symbol(args)
    rep = order_phase.domination_report(spectral.means(spec, quad_params(args), args.method))
    emit(args, rep.to_dict())


def cmd_entropy(args):
    t0 = time.perf_counter()
    method = args.method
    quad = quad_params(args)
    if method == "renewal":
        if args.a is None:
            raise UsageError("--a is required for the renewal series")
        v = entropy.renewal_entropy(args.a)
        iv = entropy.EntropyInterval(v, v, "renewal-exact", None, 0.0, [], f"renewal({args.a})")
    else:
        spec = get_symbol(args)
        if method == "block":
            m = args.m if spec.dim == 1 else tuple(int(v) for v in (args.box or "4,4").split(","))
            table = get_table(args, spec, m)
            hi = entropy.block_upper_bound(table, m)
            iv = entropy.EntropyInterval(0.0, hi, "block", args.m if spec.dim == 1 else None,
                                         0.0, [], spec.label)
        elif method == "refined":
            iv = entropy.refined_bounds(spec, args.m, quad)
        elif method == "gm":
            lo = entropy.gm_lower_bound(spectral.means(spec, quad))
            iv = entropy.EntropyInterval(lo, math.log(2), "gm-lower", None, 0.0, [], spec.label)
        elif method == "perturb":
            if args.near is None:
                raise UsageError("--near (the nearby symbol) is required for perturb")
            config = sym.load_symbols(args.config) if args.config else None
            g = sym.resolve_symbol(args.near, spec.dim, config)
            iv = entropy.perturbation_transfer(entropy.refined_bounds(g, args.m, quad), spec, g, quad)
        else:
            raise UsageError(f"unknown entropy method {method!r}")
    out = iv.to_dict(bits=args.bits)
    out["runtime_ms"] = (time.perf_counter() - t0) * 1000 if args.timing else None
    emit(args, out)


def cmd_phase(args):
    spec = get_symbol(args)
    v = order_phase.phase_verdict(spec, quad_params(args), N=args.N)
    emit(args, v.to_dict())


def cmd_regen(args):
    spec = get_symbol(args)
    r = order_phase.regeneration_test(spec, args.run, args.h, quad_params(args))
    emit(args, {"symbol": spec.label, "run": r.n, "h": r.h, "residual": r.residual,
                "pruned": r.pruned})


def cmd_ust(args):
    right, up = ust_oracle.wilson_batch(args.n, args.samples, args.seed)
    axis = args.axis
    if axis == "horizontal":
        table = spectral.fourier_coeffs(sym.builtin_symbol("ust2d"), (3, 3))
        lags = [(0, 1), (1, 0), (1, 1)]
    elif axis == "x-axis":
        table = spectral.fourier_coeffs(sym.builtin_symbol("ust_axis_g"), 3)
        lags = [1, 2, 3]
    elif axis == "zigzag":
        table = spectral.fourier_coeffs(sym.builtin_symbol("zigzag"), 3)
        lags = [1, 2, 3]
    else:
        table = spectral.fourier_coeffs(sym.builtin_symbol("const", 0.5), 3)
        lags = [1, 2, 3]
    rep = ust_oracle.compare_to_symbol(ust_oracle.edge_lines(right, up, axis), table, lags)
    out = rep.to_dict()
    out.update({"axis": axis, "n": args.n, "seed": args.seed})
    emit(args, out)
    return EXIT_OK


def cmd_reproduce(args):
    only = set(args.only.split(",")) if args.only else None
    rows = reproduce.run(only=only, skip_slow=args.skip_slow, timing=args.timing)
    if args.format == "json":
        emit(args, {"rows": [r.to_dict() for r in rows],
                    "all_passed": all(r.passed for r in rows)})
    else:
        for r in rows:
            mark = "PASS" if r.passed else "FAIL"
            val = "error" if r.computed is None else f"{r.computed:.10g}"
            sys.stdout.write(f"{mark} {r.id}: computed={val} reference={r.reference:.10g} "
                             f"({r.compare}, tol={r.tolerance:g})\n")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


# --------------------------------------------------------------------------
# parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--symbol", help="builtin call, expression, or a name from --config")
    g.add_argument("--dim", type=int, default=None, help="torus dimension (default: inferred)")
    g.add_argument("--kmax", type=int, default=None, help="coefficient table radius")
    g.add_argument("--quad-tol", type=float, default=None, help="quadrature tolerance")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=["json", "csv", "text"], default=None,
                   help="output format (default json; text for reproduce)")
    g.add_argument("--cache-dir", default=None,
                   help=f"coefficient cache directory (or ${spectral.CACHE_ENV})")
    g.add_argument("--bits", action="store_true", help="report entropies in bits")
    g.add_argument("--config", default=None, help="INI file with symbol definitions")
    g.add_argument("--timing", action="store_true", help="include wall-clock runtimes")
    g.add_argument("--coeff-method", dest="method_coeffs", default="auto",
                   choices=["auto", "closed", "quadrature"])

    p = argparse.ArgumentParser(prog="detproc",
                                description="Stationary determinantal processes from symbols.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("coeffs", parents=[common], help="Fourier coefficient table")
    s.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("prob", parents=[common], help="cylinder probability")
    s.add_argument("--ones", default="")
    s.add_argument("--zeros", default="")
    s.set_defaults(func=cmd_prob)

    for name, fn, helptext in (("pmf", cmd_pmf, "all pattern probabilities on a window"),
                               ("sample", cmd_sample, "exact samples on a window")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--window", default=None, help="site list, e.g. '0;1;2' or '0,0;0,1'")
        s.add_argument("--n", type=int, default=None, help="window 0..n-1 (or a box)")
        if name == "sample":
            s.add_argument("--samples", type=int, default=1000)
            s.add_argument("--thin", type=float, default=None)
            s.add_argument("--out", default=None, help="CSV path; a .json sidecar is written")
        s.set_defaults(func=fn)

    for name, fn in (("means", cmd_means), ("dominate", cmd_dominate)):
        s = sub.add_parser(name, parents=[common], help=f"{name} report")
        s.add_argument("--method", choices=["auto", "closed", "quadrature"], default="auto")
        s.set_defaults(func=fn)

    s = sub.add_parser("entropy", parents=[common], help="entropy bounds")
    s.add_argument("--method", choices=["block", "refined", "gm", "renewal", "perturb"],
                   default="refined")
    s.add_argument("--m", type=int, default=8, help="depth / block length")
    s.add_argument("--box", default=None, help="box shape for d = 2 block bounds, e.g. 4,4")
    s.add_argument("--a", type=float, default=None, help="renewal parameter")
    s.add_argument("--near", default=None, help="nearby symbol for the perturbation method")
    s.set_defaults(func=cmd_entropy)

    s = sub.add_parser("phase", parents=[common], help="phase-uniqueness verdicts")
    s.add_argument("--N", type=int, default=200, help="outer-series terms for one-sided masses")
    s.set_defaults(func=cmd_phase)

    s = sub.add_parser("regen", parents=[common], help="regeneration residual")
    s.add_argument("--run", type=int, default=1, help="length of the run of ones")
    s.add_argument("--h", type=int, default=3)
    s.set_defaults(func=cmd_regen)

    s = sub.add_parser("ust", parents=[common], help="spanning-tree Monte Carlo check")
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--axis", choices=list(ust_oracle.AXES), default="horizontal")
    s.set_defaults(func=cmd_ust)

    s = sub.add_parser("reproduce", parents=[common], help="run the reference table")
    s.add_argument("--only", default=None, help="comma-separated row ids")
    s.add_argument("--skip-slow", action="store_true")
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.format is None:
        args.format = "text" if args.command == "reproduce" else "json"
    try:
        rc = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"detproc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (sym.SymbolError, spectral.SpectralError, kernel.KernelError,
            entropy.EntropyError, ValueError, OSError) as exc:
        print(f"detproc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if rc is None else rc


def run(argv):
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
