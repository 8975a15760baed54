"""Dichotomy (Sacker--Sell) spectrum on a finite horizon.

Estimation runs in two stages: windowed (Steklov) averages of the QR
log-growth seed candidate intervals, then a gamma scan of dichotomy
certificates of ``A - gamma I`` validates and refines every endpoint.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dichotomy import CERTIFIED, DichotomyConfig, has_dichotomy
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, qr_evolve
from .linalg import spectral_norm
from .systems import LinearSystem, MatrixFunction, perturb, shift, translate

__all__ = [
    "SpectrumConfig",
    "SpectrumEstimate",
    "lyapunov_intervals",
    "sacker_sell",
    "hausdorff",
    "merge_intervals",
    "check_shift_law",
    "check_triangular_union",
    "check_vanishing_perturbation",
    "block_system",
    "TriangularUnionReport",
]


@dataclass(frozen=True)
class SpectrumConfig:
    horizon: float = 100.0
    window: float = 10.0
    resolution: float = 0.05
    step: float = 0.05
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    n_pairs: int = 500
    max_interior_probes: int = 40
    burn_in: float = 0.1

    @property
    def start(self) -> float:
        """Certificates for the gamma scan are fitted on ``[start, horizon]``."""
        return round(self.burn_in * self.horizon / self.step) * self.step

    def dichotomy(self) -> DichotomyConfig:
        return DichotomyConfig(horizon=self.horizon - self.start, step=self.step, n_pairs=self.n_pairs, rtol=self.rtol, atol=self.atol)


@dataclass
class SpectrumEstimate:
    intervals: list[tuple[float, float]]
    resolution: float
    window: float
    horizon: float
    gamma_table: list[dict] = field(default_factory=list)
    seeds: list[tuple[float, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def contains(self, gamma: float) -> bool:
        return any(a <= gamma <= b for a, b in self.intervals)

    def translated(self, delta: float) -> list[tuple[float, float]]:
        return [(a + delta, b + delta) for a, b in self.intervals]

    def max_endpoint(self) -> float:
        return max(b for _, b in self.intervals)

    def to_dict(self) -> dict:
        return {
            "intervals": [[_r(a), _r(b)] for a, b in self.intervals],
            "resolution": self.resolution,
            "window": self.window,
            "horizon": self.horizon,
            "seeds": [[_r(a), _r(b)] for a, b in self.seeds],
            "gamma_table": self.gamma_table,
            "notes": list(self.notes),
        }

    def gamma_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "verdict", "rank", "K", "alpha"])
        for row in self.gamma_table:
            w.writerow([row["gamma"], row["verdict"], row["rank"], row["K"], row["alpha"]])
        return buf.getvalue()


def _r(x: float) -> float:
    return float(round(float(x), 10))


# ---------------------------------------------------------------------------


def lyapunov_intervals(
    sys: LinearSystem,
    horizon: float = 100.0,
    window: float = 10.0,
    *,
    step: float = 0.05,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> list[tuple[float, float]]:
    """Per-direction ranges ``[min, max]`` of Steklov averages of the QR log-growth.

    Averages ``(L_i(t + H) - L_i(t)) / H`` are taken for burn-in
    ``T/10 <= t <= T - H``.
    """
    if window > horizon / 5 + 1e-12:
        raise ValueError("window must be at most horizon / 5")
    series = qr_evolve(sys, horizon, step, rtol=rtol, atol=atol)
    L = series.log_growth
    N = L.shape[0] - 1
    w = int(round(window / step))
    start = int(math.ceil(N / 10))
    stop = N - w
    avg = (L[start + w : stop + w + 1] - L[start : stop + 1]) / (w * step)
    return [(float(avg[:, i].min()), float(avg[:, i].max())) for i in range(L.shape[1])]


def merge_intervals(intervals: Sequence[tuple[float, float]], min_gap: float = 0.0) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for a, b in sorted((min(a, b), max(a, b)) for a, b in intervals):
        if out and a - out[-1][1] < min_gap or out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def hausdorff(A: Sequence[tuple[float, float]], B: Sequence[tuple[float, float]]) -> float:
    """Hausdorff distance between two finite unions of closed intervals."""
    A = merge_intervals(A)
    B = merge_intervals(B)
    if not A and not B:
        return 0.0
    if not A or not B:
        return math.inf
    return max(_directed(A, B), _directed(B, A))


def _dist(x: float, S) -> float:
    return min(0.0 if a <= x <= b else min(abs(x - a), abs(x - b)) for a, b in S)


def _directed(A, B) -> float:
    # sup over A of distance to B: attained at A's endpoints or at midpoints of B's gaps
    cands = [x for ab in A for x in ab]
    for (a1, b1), (a2, b2) in zip(B, B[1:]):
        mid = 0.5 * (b1 + a2)
        for a, b in A:
            if a <= mid <= b:
                cands.append(mid)
    return max(_dist(x, B) for x in cands)


class _Scanner:
    """Memoised dichotomy verdicts for shifts of one system.

    The half-line spectrum does not change when a finite initial segment is
    dropped (it only enlarges K), so certificates are fitted after the same
    burn-in that the windowed averages discard.
    """

    def __init__(self, sys: LinearSystem, cfg: SpectrumConfig):
        self.sys = translate(sys, cfg.start)
        self.cfg = cfg
        self.dcfg = cfg.dichotomy()
        self.table: dict[float, dict] = {}

    def certified(self, gamma: float) -> bool:
        key = round(float(gamma), 10)
        row = self.table.get(key)
        if row is None:
            verdict, cert = has_dichotomy(shift(self.sys, key), config=self.dcfg)
            row = {
                "gamma": key,
                "verdict": verdict,
                "rank": int(cert.rank),
                "K": _r(cert.K) if math.isfinite(cert.K) else None,
                "alpha": _r(cert.alpha),
            }
            self.table[key] = row
        return row["verdict"] == CERTIFIED

    def rank(self, gamma: float) -> int:
        self.certified(gamma)
        return self.table[round(float(gamma), 10)]["rank"]

    def locate_rank_change(self, lo: float, hi: float, tol: float) -> float:
        """A spectral point between two certified shifts with different projector ranks.

        Rank is constant on each connected component of the resolvent set, so
        a change of rank brackets a point of the spectrum.  Bisection stops at
        the first uncertified shift or when the bracket is below ``tol``.
        """
        r_lo = self.rank(lo)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if not self.certified(mid):
                return mid
            if self.rank(mid) == r_lo:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def rows(self) -> list[dict]:
        return [self.table[k] for k in sorted(self.table)]


def sacker_sell(
    sys: LinearSystem,
    gamma_range: tuple[float, float] | None = None,
    resolution: float | None = None,
    horizon: float | None = None,
    config: SpectrumConfig | None = None,
) -> SpectrumEstimate:
    """Estimate ``Sigma^+(A)`` as a union of at most ``n`` closed intervals.

    The scan range is derived from finite-time growth rates; ``gamma_range``
    widens it, its ends are always probed, and the estimate is clipped to it.
    """
    cfg = config or SpectrumConfig()
    over = {}
    if resolution is not None:
        over["resolution"] = float(resolution)
    if horizon is not None:
        over["horizon"] = float(horizon)
    if over:
        cfg = SpectrumConfig(**{**cfg.__dict__, **over})
    dg = cfg.resolution
    if not dg > 0:
        raise ValueError("resolution must be positive")
    n = sys.dim
    dirs = lyapunov_intervals(sys, cfg.horizon, cfg.window, step=cfg.step, rtol=cfg.rtol, atol=cfg.atol)
    seeds = merge_intervals(dirs, 2 * dg)
    lo_all = min(a for a, _ in seeds) - 3 * dg
    hi_all = max(b for _, b in seeds) + 3 * dg
    if gamma_range is not None:
        if not float(gamma_range[0]) < float(gamma_range[1]):
            raise ValueError("gamma_range must satisfy lo < hi")
        lo_all = min(lo_all, float(gamma_range[0]))
        hi_all = max(hi_all, float(gamma_range[1]))
    scan = _Scanner(sys, cfg)
    notes: list[str] = []

    refined: list[tuple[float, float]] = []
    for idx, (a, b) in enumerate(seeds):
        pieces = _seed_pieces(scan, a, b, dg, cfg.max_interior_probes, notes)
        if not pieces:
            notes.append(f"candidate [{_r(a)}, {_r(b)}] certified throughout; kept unvalidated")
            pieces = [(a, b)]
        lower_limit = refined[-1][1] + dg if refined else lo_all
        upper_limit = seeds[idx + 1][0] - dg if idx + 1 < len(seeds) else hi_all
        first, last = pieces[0], pieces[-1]
        lo = _outer(scan, first[0], -1, min(lower_limit, first[0]), dg, notes)
        hi = _outer(scan, last[1], +1, max(upper_limit, last[1]), dg, notes)
        pieces[0] = (lo, pieces[0][1])
        pieces[-1] = (pieces[-1][0], hi)
        for piece in pieces:
            if refined and piece[0] <= refined[-1][1]:
                refined[-1] = (refined[-1][0], max(refined[-1][1], piece[1]))
            else:
                refined.append(piece)

    # every gap midpoint must be certified, otherwise the gap is not credible
    merged: list[tuple[float, float]] = []
    for piece in refined:
        if merged:
            mid = 0.5 * (merged[-1][1] + piece[0])
            if not scan.certified(mid):
                notes.append(f"gap midpoint {_r(mid)} not certified; intervals merged")
                merged[-1] = (merged[-1][0], piece[1])
                continue
        merged.append(piece)
    while len(merged) > n:
        gaps = [merged[i + 1][0] - merged[i][1] for i in range(len(merged) - 1)]
        i = int(np.argmin(gaps))
        notes.append(f"more than {n} intervals; merged across gap {_r(gaps[i])}")
        merged[i : i + 2] = [(merged[i][0], merged[i + 1][1])]
    if gamma_range is not None:
        g_lo, g_hi = float(gamma_range[0]), float(gamma_range[1])
        for g in (g_lo, g_hi):
            if not scan.certified(g):
                notes.append(f"range end {_r(g)} not certified; the spectrum may extend beyond the range")
        clipped = [(max(a, g_lo), min(b, g_hi)) for a, b in merged if b >= g_lo and a <= g_hi]
        if clipped != merged:
            notes.append(f"estimate clipped to the requested range [{_r(g_lo)}, {_r(g_hi)}]")
        merged = clipped
    if not merged:
        notes.append("no uncertified shift found; spectrum estimate empty")
    return SpectrumEstimate(
        [(_r(a), _r(b)) for a, b in merged],
        dg,
        cfg.window,
        cfg.horizon,
        scan.rows(),
        [(_r(a), _r(b)) for a, b in dirs],
        notes,
    )


def _outer(scan: _Scanner, end: float, direction: int, limit: float, dg: float, notes) -> float:
    """Push an endpoint outward until the next probe is certified (bisection to ``dg``)."""
    probe = end + direction * dg
    if scan.certified(probe):
        return end
    inside, step = probe, dg
    while True:
        nxt = inside + direction * step
        if direction * (nxt - limit) >= 0:
            nxt = limit + direction * dg
            if not scan.certified(nxt):
                notes.append(f"endpoint pushed to scan limit {_r(limit)}")
                return limit
            outside = nxt
            break
        if scan.certified(nxt):
            outside = nxt
            break
        inside, step = nxt, 2 * step
    while abs(outside - inside) > dg + 1e-12:
        mid = 0.5 * (inside + outside)
        if scan.certified(mid):
            outside = mid
        else:
            inside = mid
    return inside


def _seed_pieces(scan: _Scanner, a: float, b: float, dg: float, max_probes: int, notes) -> list[tuple[float, float]]:
    """Probe a candidate interval on a grid finer than ``dg``; return runs of uncertified shifts."""
    count = max(2, int(math.ceil((b - a) / (0.5 * dg))) + 1)
    count = min(count, max(2, max_probes))
    pts = sorted(set(np.linspace(a, b, count).tolist()) | {0.5 * (a + b)}) if b > a else [a]
    flags = [not scan.certified(g) for g in pts]
    extra = []
    for (g0, b0), (g1, b1) in zip(zip(pts, flags), zip(pts[1:], flags[1:])):
        if not b0 and not b1 and scan.rank(g0) != scan.rank(g1):
            extra.append(scan.locate_rank_change(g0, g1, 0.25 * dg))
    if extra:
        merged = sorted(set(pts) | set(extra))
        bad = {g for g, f in zip(pts, flags) if f} | set(extra)
        pts, flags = merged, [g in bad for g in merged]
    runs: list[list[float]] = []
    prev = False
    for g, bad in zip(pts, flags):
        if bad:
            if prev:
                runs[-1][1] = g
            else:
                runs.append([g, g])
        prev = bad
    if len(runs) > 1:
        holes = [_r(g) for g, bad in zip(pts, flags) if not bad and runs[0][0] < g < runs[-1][1]]
        deep = [g for g in holes if any(r[0] < g - dg for r in runs) and any(r[1] > g + dg for r in runs)]
        if deep:
            notes.append(f"certified shifts inside [{_r(a)}, {_r(b)}] at {holes}; resolution too coarse, interval split")
        else:
            # separation below resolution is not credible
            runs = [[runs[0][0], runs[-1][1]]]
    return [(lo, hi) for lo, hi in runs]


# ---------------------------------------------------------------------------
# laws


@dataclass
class HorizonConsistency:
    """Estimates on ``[0, T]`` and ``[0, 2T]`` and their Hausdorff distance."""

    short: SpectrumEstimate
    long: SpectrumEstimate
    distance: float
    tolerance: float

    @property
    def consistent(self) -> bool:
        return self.distance <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "horizons": [self.short.horizon, self.long.horizon],
            "intervals": [self.short.to_dict()["intervals"], self.long.to_dict()["intervals"]],
            "distance": _r(self.distance),
            "tolerance": self.tolerance,
            "consistent": self.consistent,
        }


def horizon_consistency(sys: LinearSystem, config: SpectrumConfig | None = None, tolerance: float | None = None) -> HorizonConsistency:
    """Re-estimate with the horizon doubled; finite-horizon estimates are only trusted when they agree."""
    cfg = config or SpectrumConfig()
    short = sacker_sell(sys, config=cfg)
    long = sacker_sell(sys, config=SpectrumConfig(**{**cfg.__dict__, "horizon": 2.0 * cfg.horizon}))
    tol = 2.0 * cfg.resolution if tolerance is None else float(tolerance)
    return HorizonConsistency(short, long, hausdorff(short.intervals, long.intervals), tol)


def check_shift_law(sys: LinearSystem, gamma: float, resolution: float = 0.05, config: SpectrumConfig | None = None) -> tuple[bool, float]:
    """Spectrum of ``A - gamma I`` versus spectrum of ``A`` translated by ``-gamma``."""
    cfg = config or SpectrumConfig(resolution=resolution)
    base = sacker_sell(sys, config=cfg)
    shifted = sacker_sell(shift(sys, gamma), config=cfg)
    d = hausdorff(shifted.intervals, base.translated(-gamma))
    return d <= 2 * cfg.resolution, d


class _BlockMatrix(MatrixFunction):
    def __init__(self, base: MatrixFunction, idx: Sequence[int]):
        self.base = base
        self.idx = np.asarray(idx)
        self.dim = len(idx)
        self.t_min = base.t_min

    @property
    def is_constant(self) -> bool:
        return self.base.is_constant

    def batch(self, ts):
        m = self.base.batch(ts)
        return m[..., self.idx[:, None], self.idx[None, :]]

    def local(self, t_left, s, h):
        m = self.base.local(t_left, s, h)
        return m[..., self.idx[:, None], self.idx[None, :]]


def block_system(sys: LinearSystem, idx: Sequence[int]) -> LinearSystem:
    """Diagonal block of ``sys`` on the coordinates ``idx``."""
    return LinearSystem(_BlockMatrix(sys.a, list(idx)), f"{sys.label}[{','.join(str(i) for i in idx)}]")


@dataclass
class TriangularUnionReport:
    passed: bool
    distance: float
    full: SpectrumEstimate
    blocks: list[SpectrumEstimate]
    union: list[tuple[float, float]]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "distance": _r(self.distance),
            "full": self.full.to_dict(),
            "blocks": [b.to_dict() for b in self.blocks],
            "union": [[_r(a), _r(b)] for a, b in self.union],
        }


def check_triangular_union(
    sys: LinearSystem,
    blocks: Sequence[Sequence[int]] | None = None,
    resolution: float = 0.05,
    config: SpectrumConfig | None = None,
    probe_times: Sequence[float] | None = None,
) -> TriangularUnionReport:
    """Spectrum of an upper block-triangular system versus the union of its block spectra."""
    cfg = config or SpectrumConfig(resolution=resolution)
    n = sys.dim
    if blocks is None:
        blocks = [[i] for i in range(n)]
    owner = np.empty(n, dtype=int)
    for b_i, blk in enumerate(blocks):
        owner[list(blk)] = b_i
    ts = np.linspace(0.0, cfg.horizon, 257) if probe_times is None else np.asarray(probe_times)
    mats = sys.a.batch(ts)
    below = owner[:, None] > owner[None, :]
    if np.any(np.abs(mats[..., below]) > 0.0):
        bad = ts[np.argmax(np.any(np.abs(mats[..., below]) > 0.0, axis=-1))]
        raise ValueError(f"system is not block upper-triangular (nonzero entry below the blocks at t={bad:.6g})")
    full = sacker_sell(sys, config=cfg)
    parts = [sacker_sell(block_system(sys, blk), config=cfg) for blk in blocks]
    union = merge_intervals([iv for p in parts for iv in p.intervals])
    d = hausdorff(full.intervals, union)
    return TriangularUnionReport(d <= 2 * cfg.resolution, d, full, parts, union)


def check_vanishing_perturbation(
    sys: LinearSystem,
    pert: LinearSystem,
    resolution: float = 0.05,
    config: SpectrumConfig | None = None,
) -> tuple[bool, float]:
    """Spectra of ``A`` and ``A + B`` for ``||B(t)|| -> 0`` agree."""
    cfg = config or SpectrumConfig(resolution=resolution)
    T = cfg.horizon
    probe = spectral_norm(pert.a.batch(np.linspace(T / 2, T, 101)))
    if float(np.max(probe)) >= 0.05:
        raise ValueError(f"perturbation does not vanish numerically: max ||B(t)|| on [T/2, T] = {np.max(probe):.3g}")
    s1 = sacker_sell(sys, config=cfg)
    s2 = sacker_sell(perturb(sys, pert), config=cfg)
    d = hausdorff(s1.intervals, s2.intervals)
    return d <= 2 * cfg.resolution, d
