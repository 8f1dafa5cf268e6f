"""Recovery of the spatial unrolling vector and its efficiency coefficients.

Measured efficiency ``u = ops / (time * p_peak)`` of a compute-bound layer
drops whenever a mapped dimension is not a multiple of the array size along
that axis. Fitting proceeds in three steps:

1. preliminary peaks from the best observed throughput,
2. a discrete search over unrolling factors with alpha fitted per candidate
   (bounded, golden-section coordinate descent on the mean squared error),
3. final peaks re-measured on records the fitted model calls fully efficient.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

S_CANDIDATES = (1, 2, 3, 4, 6, 8, 12, 14, 16, 24, 32, 48, 64, 96, 128, 256)
AXES = ("h", "w", "c", "f")
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
# records whose data throughput is this close to the peak are treated as bandwidth bound
_BW_MARGIN = 0.9


class UnrollingFitError(ValueError):
    pass


@dataclass(frozen=True)
class UnrollingFit:
    s: tuple[int, ...]
    alpha: tuple[float, ...]
    axis_map: tuple[str, ...]
    p_peak_prelim: float
    b_peak_prelim: float
    p_peak_final: float
    b_peak_final: float
    residual_mse: float

    @property
    def unrolled(self) -> tuple[tuple[str, int, float], ...]:
        """(axis, s_i, alpha_i) for axes that are actually unrolled."""
        return tuple((a, s, al) for a, s, al in zip(self.axis_map, self.s, self.alpha) if s > 1)


def efficiency(x: np.ndarray, s, alpha) -> np.ndarray:
    """Utilization efficiency for rows of mapped dimensions ``x`` (n, A)."""
    x = np.asarray(x, dtype=float)
    u = np.ones(x.shape[0])
    for i, (si, ai) in enumerate(zip(s, alpha)):
        if si == 1:
            continue
        ratio = np.ceil(x[:, i] / si) / (x[:, i] / si)
        u /= ai + ratio * (1.0 - ai)
    return u


def golden_min(fn, lo: float, hi: float, tol: float = 1e-9, max_iter: int = 200) -> tuple[float, float]:
    """Minimise a 1-D function on [lo, hi]; returns (argmin, min)."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    best = min(((fn(lo), lo), (fn(hi), hi), (fc, c), (fd, d)))
    return best[1], best[0]


def bounded_min(fn, lo: float = 0.0, hi: float = 1.0, grid: int = 21, tol: float = 1e-9) -> tuple[float, float]:
    """Coarse grid to bracket the best basin, then golden-section inside it."""
    pts = np.linspace(lo, hi, grid)
    vals = np.array([fn(p) for p in pts])
    k = int(np.argmin(vals))
    a, b = pts[max(k - 1, 0)], pts[min(k + 1, grid - 1)]
    x, fx = golden_min(fn, a, b, tol)
    if vals[k] < fx:
        return float(pts[k]), float(vals[k])
    return float(x), float(fx)


def _arrays(records, byte_width):
    def col(name):
        return np.array([getattr(r, name) for r in records], dtype=float)

    x = {a: col(a) for a in AXES}
    ops = col("num_ops")
    data = (col("num_in") + col("num_weights") + col("num_out")) * byte_width
    t = col("time_sec")
    others = np.stack([col(n) for n in ("h", "w", "c", "f", "k_h", "k_w", "stride")], axis=1)
    return x, ops, data, t, others


def _series(others: np.ndarray, axis_idx: int, keep: np.ndarray) -> list[np.ndarray]:
    """Row groups that share every parameter except the swept axis."""
    key = np.delete(others, axis_idx, axis=1)
    groups: dict[tuple, list[int]] = {}
    for i in np.nonzero(keep)[0]:
        groups.setdefault(tuple(key[i]), []).append(i)
    out = []
    for rows in groups.values():
        rows = np.array(rows)
        if len(np.unique(others[rows, axis_idx])) >= 3:
            out.append(rows)
    return out


def _screen_axis(xa, u, series, s_grid, tol):
    """MSE and alpha per s for one axis, with a free scale per series."""
    rows = np.concatenate(series)
    seg = np.concatenate([np.full(len(r), i) for i, r in enumerate(series)])
    xs, us = xa[rows], u[rows]
    nseg = len(series)

    def objective(si, ai):
        g = 1.0 / (ai + (np.ceil(xs / si) / (xs / si)) * (1.0 - ai))
        num = np.bincount(seg, us * g, nseg)
        den = np.bincount(seg, g * g, nseg)
        k = num / den
        return float(np.mean((us - k[seg] * g) ** 2))

    results = []
    for si in s_grid:
        if si == 1:
            results.append((objective(1, 1.0), 1, 1.0))
            continue
        a, m = bounded_min(lambda al: objective(si, al), tol=tol)
        results.append((m, si, a))
    return results


def _rank(cands, rtol, atol):
    """Order (mse, s_tuple, payload) entries: MSE, with near-equal MSEs by (prod s, s)."""
    best = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] <= best + rtol * abs(best) + atol]
    return sorted(tied, key=lambda c: (prod(c[1]), c[1]))


def _parsimonious(fits, rtol, atol, min_gain):
    """Best fit per number of unrolled axes; another axis must cut the MSE by ``min_gain``."""
    by_count: dict[int, tuple] = {}
    for n in sorted({sum(v > 1 for v in f[1]) for f in fits}):
        by_count[n] = _rank([f for f in fits if sum(v > 1 for v in f[1]) == n], rtol, atol)[0]
    chosen = None
    for n in sorted(by_count):
        cand = by_count[n]
        if chosen is None or cand[0] < (1.0 - min_gain) * chosen[0] - atol:
            chosen = cand
    return chosen


def fit_unrolling(records: Sequence, candidate_axes: Sequence[str] = AXES,
                  s_candidates: Sequence[int] = S_CANDIDATES, byte_width: int = 1,
                  max_unrolled: int = 3, top_k: int = 3, mse_rtol: float = 1e-6,
                  mse_atol: float = 1e-14, tol: float = 1e-9, max_iter: int = 200,
                  min_gain: float = 0.1) -> UnrollingFit:
    """Fit (s, alpha, axis_map) and the peak rates to axis-sweep records.

    ``records`` need ``h, w, c, f, k_h, k_w, stride, num_ops, num_in,
    num_out, num_weights, time_sec`` attributes. The returned vectors span
    all ``candidate_axes``; axes that are not unrolled get ``s = 1`` and
    ``alpha = 1``. An additional unrolled axis is only accepted when it
    lowers the residual by the relative ``min_gain``.
    """
    candidate_axes = tuple(candidate_axes)
    if not records:
        raise UnrollingFitError("no sweep records")
    for a in candidate_axes:
        if a not in AXES:
            raise UnrollingFitError(f"unknown axis {a!r}")
    s_grid = sorted(set(int(v) for v in s_candidates) | {1})
    x, ops, data, t, others = _arrays(records, byte_width)
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise UnrollingFitError("sweep times must be positive and finite")

    p_prelim = float(np.max(ops / t))
    b_prelim = float(np.max(data / t))
    u = ops / (t * p_prelim)
    compute_bound = data / t < _BW_MARGIN * b_prelim

    # per-axis screening
    screened: dict[str, list] = {}
    for a in candidate_axes:
        ai = AXES.index(a)
        series = _series(others, ai, compute_bound)
        distinct = len(np.unique(np.concatenate([others[r, ai] for r in series]))) if series else 0
        if distinct < 8:
            raise UnrollingFitError(f"insufficient sweep coverage on axis {a!r}: {distinct} distinct values")
        res = _screen_axis(x[a], u, series, s_grid, tol)
        ranked = sorted(res, key=lambda r: (r[0], r[1]))
        screened[a] = ranked
        log.debug("axis %s screen: %s", a, ranked[:top_k + 1])

    X = np.stack([x[a] for a in candidate_axes], axis=1)

    Xc, uc = X[compute_bound], u[compute_bound]

    def mse(s, alpha):
        # the free scale absorbs the upward bias of a max-based preliminary peak under noise
        g = efficiency(Xc, s, alpha)
        k = float(np.dot(uc, g) / np.dot(g, g))
        return float(np.mean((uc - k * g) ** 2))

    options = []
    for a in candidate_axes:
        opts = [(1, 1.0)]
        for m, si, al in screened[a]:
            if si != 1 and len(opts) <= top_k:
                opts.append((si, al))
        options.append(opts)

    fits = []
    for combo in itertools.product(*options):
        s = tuple(o[0] for o in combo)
        if sum(v > 1 for v in s) > max_unrolled:
            continue
        alpha = [o[1] for o in combo]
        free = [i for i, v in enumerate(s) if v > 1]
        cur = mse(s, alpha)
        for it in range(max_iter):
            prev = list(alpha)
            prev_mse = cur
            for i in free:
                def f1(al, i=i):
                    trial = list(alpha)
                    trial[i] = al
                    return mse(s, trial)
                a_i, m_i = (bounded_min(f1, tol=tol) if it == 0 else golden_min(f1, 0.0, 1.0, tol))
                if m_i <= cur:
                    alpha[i], cur = min(max(a_i, 0.0), 1.0), m_i
            moved = max((abs(p - q) for p, q in zip(prev, alpha)), default=0.0)
            if moved < tol or prev_mse - cur <= 1e-15 * max(prev_mse, 1e-300):
                break
        fits.append((cur, s, tuple(alpha)))

    if not fits:
        raise UnrollingFitError("no admissible unrolling candidates")
    best_mse, s, alpha = _parsimonious(fits, mse_rtol, mse_atol, min_gain)
    if not np.isfinite(best_mse):
        raise UnrollingFitError("degenerate fit: non-finite residual")
    alpha = tuple(1.0 if si == 1 else float(al) for si, al in zip(s, alpha))

    full = np.abs(efficiency(X, s, alpha) - 1.0) <= 1e-12
    p_final = float(np.max(ops[full] / t[full])) if full.any() else p_prelim
    # only bandwidth-bound records measure the bandwidth
    bw_full = full & ~compute_bound
    b_final = float(np.max(data[bw_full] / t[bw_full])) if bw_full.any() else b_prelim
    return UnrollingFit(s, alpha, candidate_axes, p_prelim, b_prelim, p_final, b_final, best_mse)
