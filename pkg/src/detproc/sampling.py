"""Exact sequential sampling on finite windows, thinning, empirical stats.

RNG: numpy's Philox counter-based generator keyed by (seed, stream).  The
sampler uses stream 0 and consumes an (n_samples, n_sites) array of
uniforms in row-major order, so sample i uses row i no matter how the
batch is chunked.  Thinning uses stream 1.  Site i of sample s is set to 1
iff u[s, i] < P[eta(site i) = 1 | earlier sites].
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .kernel import (DEGENERATE_TOL, DegenerateConditioning, KernelError, CylinderEvent,
                     as_sites, cond_prob, kernel_matrix)
from .spectral import CoeffTable

MAX_SAMPLE_WINDOW = 4096
STREAM_SAMPLE = 0
STREAM_THIN = 1


def philox(seed, stream=0):
    seed = int(seed) & (2**64 - 1)
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


@dataclass(frozen=True)
class Pattern:
    window: tuple
    bits: tuple

    def __post_init__(self):
        if len(self.window) != len(self.bits):
            raise ValueError("window and bits differ in length")

    def as_string(self):
        return "".join(str(int(b)) for b in self.bits)


@dataclass(eq=False)
class SampleBatch:
    window: tuple
    bits: np.ndarray  # (n_samples, n_sites) uint8
    seed: int = 0
    _counts: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2 or self.bits.shape[1] != len(self.window):
            raise ValueError("bits must be (n_samples, len(window))")

    def __len__(self):
        return self.bits.shape[0]

    @property
    def patterns(self):
        return [Pattern(self.window, tuple(int(b) for b in row)) for row in self.bits]

    def pattern_indices(self):
        n = len(self.window)
        w = (1 << np.arange(n - 1, -1, -1)).astype(np.int64)
        return self.bits.astype(np.int64) @ w

    def counts(self):
        """Pattern counts in index order (first site = most significant bit)."""
        if "all" not in self._counts:
            n = len(self.window)
            if n > 24:
                raise KernelError("pattern counts need a window of at most 24 sites")
            self._counts["all"] = np.bincount(self.pattern_indices(), minlength=2**n)
        return self._counts["all"]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample"] + ["s" + "_".join(map(str, s)) for s in self.window])
        for i, row in enumerate(self.bits):
            w.writerow([i] + [int(b) for b in row])
        return buf.getvalue()

    def sidecar(self):
        return {"seed": int(self.seed), "n_samples": len(self),
                "window": [list(s) for s in self.window],
                "rng": "numpy Philox4x64, key=[seed, stream], stream 0, row-major uniforms"}

    def save(self, path):
        path = str(path)
        with open(path, "w") as fh:
            fh.write(self.to_csv())
        with open(path + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=2)


def _lex_order(sites):
    return sorted(range(len(sites)), key=lambda i: sites[i])


def _sample_kernel(K, U):
    """Sequential sampling of a batch given the window kernel K and uniforms U.

    Works on a stack of conditioned kernels, one per sample, updated by
    the same rank-one Schur step as the conditioning tree.
    """
    S, n = U.shape
    out = np.zeros((S, n), dtype=np.uint8)
    Ks = np.broadcast_to(K, (S, n, n)).copy()
    for i in range(n):
        k00 = Ks[:, 0, 0].real
        if np.any(k00 < -1e-9) or np.any(k00 > 1 + 1e-9):
            raise KernelError("conditional probability outside [0,1]")
        k00 = np.clip(k00, 0.0, 1.0)
        one = U[:, i] < k00
        out[:, i] = one
        if i == n - 1:
            break
        den = np.where(one, k00, 1 - k00)
        if np.any(den < DEGENERATE_TOL):
            raise DegenerateConditioning("sampled pattern has vanishing probability")
        col = Ks[:, 1:, 0]
        row = Ks[:, 0, 1:]
        sign = np.where(one, -1.0, 1.0) / den
        Ks = Ks[:, 1:, 1:] + sign[:, None, None] * (col[:, :, None] * row[:, None, :])
    return out


def sample_batch(table: CoeffTable, window, n_samples: int, seed=0, chunk_elems=2**24) -> SampleBatch:
    """n_samples independent exact samples of the process on the window."""
    sites = as_sites(window, table.dim)
    n = len(sites)
    if n > MAX_SAMPLE_WINDOW:
        raise KernelError(f"window of {n} sites exceeds cap {MAX_SAMPLE_WINDOW}")
    order = _lex_order(sites)
    ordered = [sites[i] for i in order]
    K = kernel_matrix(table, ordered) if n else np.zeros((0, 0))
    rng = philox(seed, STREAM_SAMPLE)
    chunk = max(1, chunk_elems // max(n * n, 1))
    parts = []
    done = 0
    while done < n_samples:
        s = min(chunk, n_samples - done)
        U = rng.random((s, n))
        parts.append(_sample_kernel(K, U) if n else np.zeros((s, 0), np.uint8))
        done += s
    bits = np.concatenate(parts) if parts else np.zeros((0, n), np.uint8)
    # report in lexicographic order
    return SampleBatch(tuple(ordered), bits, seed)


def sample_window(table: CoeffTable, window, seed=0) -> Pattern:
    b = sample_batch(table, window, 1, seed)
    return Pattern(b.window, tuple(int(x) for x in b.bits[0]))


def sample_naive(table: CoeffTable, window, n_samples, seed=0, order=None) -> SampleBatch:
    """Reference sampler: every conditional recomputed from determinants.

    Slow, used only to cross-check the batched sampler.  `order` permutes
    the visiting order (results are still reported in that order).
    """
    sites = as_sites(window, table.dim)
    if order is None:
        order = _lex_order(sites)
    ordered = [sites[i] for i in order]
    rng = philox(seed, STREAM_SAMPLE)
    U = rng.random((n_samples, len(ordered)))
    bits = np.zeros(U.shape, np.uint8)
    for s in range(n_samples):
        ev = CylinderEvent()
        for i, site in enumerate(ordered):
            p = cond_prob(table, site, ev)
            if U[s, i] < p:
                bits[s, i] = 1
                ev = ev.with_one(site)
            else:
                ev = ev.with_zero(site)
    return SampleBatch(tuple(ordered), bits, seed)


def thin(batch: SampleBatch, p: float, seed=0) -> SampleBatch:
    """Keep each 1 independently with probability p."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    U = philox(seed, STREAM_THIN).random(batch.bits.shape)
    keep = U < p
    return SampleBatch(batch.window, batch.bits & keep.astype(np.uint8), batch.seed)


def reorder(batch: SampleBatch, window) -> SampleBatch:
    """Same samples with columns permuted to the given window order."""
    pos = {s: i for i, s in enumerate(batch.window)}
    idx = [pos[s] for s in as_sites(window)]
    return SampleBatch(tuple(batch.window[i] for i in idx), batch.bits[:, idx], batch.seed)


@dataclass
class EmpiricalStats:
    n_samples: int
    freq: np.ndarray
    freq_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    counts: np.ndarray | None


def _jackknife_cov(X, groups):
    S = X.shape[0]
    g = np.array_split(np.arange(S), groups)
    tot = X.sum(0)
    totxx = X.T @ X
    reps = []
    for idx in g:
        m = S - len(idx)
        sx = (tot - X[idx].sum(0)) / m
        sxx = (totxx - X[idx].T @ X[idx]) / m
        reps.append(sxx - np.outer(sx, sx))
    reps = np.array(reps)
    G = len(g)
    return np.sqrt((G - 1) / G * ((reps - reps.mean(0)) ** 2).sum(0))


def empirical_stats(batch: SampleBatch, groups=50, with_counts=True) -> EmpiricalStats:
    if len(batch) == 0:
        raise ValueError("empty batch")
    X = batch.bits.astype(float)
    S = X.shape[0]
    freq = X.mean(0)
    freq_se = np.sqrt(freq * (1 - freq) / max(S - 1, 1))
    cov = (X.T @ X) / S - np.outer(freq, freq)
    cov_se = _jackknife_cov(X, min(groups, S)) if S >= 2 else np.full_like(cov, np.inf)
    counts = batch.counts() if with_counts and len(batch.window) <= 24 else None
    return EmpiricalStats(S, freq, freq_se, cov, cov_se, counts)


def empirical_pmf(batch: SampleBatch) -> np.ndarray:
    c = batch.counts()
    return c / c.sum()


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def chi2_test(counts, probs, min_expected=5.0):
    """Pearson chi-square p-value, pooling cells with small expectation."""
    from scipy import stats

    counts = np.asarray(counts, float)
    exp = np.asarray(probs, float) * counts.sum()
    small = exp < min_expected
    if small.any():
        c = np.append(counts[~small], counts[small].sum())
        e = np.append(exp[~small], exp[small].sum())
    else:
        c, e = counts, exp
    keep = e > 0
    res = stats.chisquare(c[keep], e[keep] * c[keep].sum() / e[keep].sum())
    return float(res.pvalue)
