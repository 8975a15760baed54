"""Verification harness for the nonautonomous Markus--Yamabe statements.

* :func:`check_hypotheses` tests (G1)--(G4) for ``x' = g(t, x)``.
* :func:`verify_uas` fits and validates a uniform exponential envelope
  ``|x(t)| <= K exp(-alpha (t - t0)) |x(t0)|``.
* The ``*_experiment`` functions run the scalar theorem, the perturbation
  theorem and the global-attractor result end to end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from ._parallel import pmap
from .dichotomy import CERTIFIED, fit_certificate
from .expr import ExprDomainError
from .integrate import IntegrationError, solve
from .linalg import spectral_norm, vector_norm
from .spectrum import SpectrumConfig, SpectrumEstimate, check_vanishing_perturbation, sacker_sell
from .systems import (
    ExprMatrix,
    LinearSystem,
    NonlinearSystem,
    PathSample,
    builtin,
    constant_system,
    linearize_along,
    reduce_cg,
    sample_paths,
    state_names,
)

__all__ = [
    "NMYCConfig",
    "HypothesisReport",
    "StabilityReport",
    "ExperimentReport",
    "check_hypotheses",
    "verify_uas",
    "validate_envelope",
    "theta_paths",
    "recover_theta",
    "scalar_theorem_experiment",
    "perturbation_theorem_experiment",
    "cg_attractor_experiment",
    "random_perturbation",
    "random_scalar_system",
    "combine",
]

G1_NOTE = "assumed-from-construction"


def _r(x) -> float | None:
    x = float(x)
    return float(round(x, 10)) if math.isfinite(x) else None


@dataclass(frozen=True)
class NMYCConfig:
    """Shared knobs; spectra use ``spectrum`` and envelopes the ``uas_*`` fields."""

    paths: int = 20
    margin: float = 0.05
    box: float = 2.0
    seed: int = 0
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    g2_times: int = 11
    g2_points: int = 64
    uas_horizon: float = 20.0
    uas_t0s: tuple[float, ...] = tuple(2.5 * k for k in range(13))
    uas_per_axis: int = 5
    uas_step: float = 0.1
    uas_ratio: float = 1.05
    uas_floor: float = 1e-10
    uas_refinements: int = 2
    rtol: float = 1e-10
    atol: float = 1e-16
    jobs: int = 1

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "spectrum"}
        d["uas_t0s"] = list(self.uas_t0s)
        d["spectrum"] = dict(self.spectrum.__dict__)
        return d


# ---------------------------------------------------------------------------
# hypotheses


@dataclass
class G4Entry:
    path: str
    spectrum: SpectrumEstimate
    negative: bool

    def to_dict(self) -> dict:
        return {"path": self.path, "negative": self.negative, "spectrum": self.spectrum.to_dict()}


@dataclass
class HypothesisReport:
    g1: str
    g2_passed: bool
    g2_witness: dict | None
    g3_sup: float
    g4: list[G4Entry]
    paths_used: list[str]
    notes: list[str]
    config: NMYCConfig

    @property
    def g3_passed(self) -> bool:
        return math.isfinite(self.g3_sup)

    @property
    def g4_passed(self) -> bool:
        return bool(self.g4) and all(e.negative for e in self.g4)

    @property
    def passed(self) -> bool:
        return self.g2_passed and self.g3_passed and self.g4_passed

    def g4_margin(self) -> float:
        """Distance of the largest spectral endpoint from zero, over all paths."""
        return -max(e.spectrum.max_endpoint() for e in self.g4)

    def to_dict(self) -> dict:
        return {
            "G1": self.g1,
            "G2": {"passed": self.g2_passed, "witness": self.g2_witness},
            "G3": {"passed": self.g3_passed, "sup_norm": _r(self.g3_sup)},
            "G4": {
                "passed": self.g4_passed,
                "margin": self.config.margin,
                "paths": [e.to_dict() for e in self.g4],
            },
            "passed": self.passed,
            "paths_used": list(self.paths_used),
            "notes": list(self.notes),
            "config": self.config.to_dict(),
        }


def _g2_check(sys: NonlinearSystem, cfg: NMYCConfig, horizon: float):
    n = sys.dim
    rng = np.random.default_rng(cfg.seed + 7919)
    ts = np.linspace(0.0, horizon, cfg.g2_times)
    pts = rng.uniform(-cfg.box, cfg.box, size=(cfg.g2_points, n))
    axes = np.concatenate([np.eye(n) * s for s in (cfg.box, -cfg.box, 1e-6, -1e-6)])
    pts = np.concatenate([pts, axes])
    pts = pts[vector_norm(pts) > 0]
    tt = np.repeat(ts, pts.shape[0])
    xx = np.tile(pts, (ts.size, 1))
    g = vector_norm(sys.f(tt, xx))
    zero = vector_norm(sys.f(ts, np.zeros((ts.size, n))))
    if np.any(~np.isfinite(zero)) or np.any(zero > 1e-12):
        k = int(np.argmax(np.where(np.isfinite(zero), zero, np.inf)))
        return False, {"t": _r(ts[k]), "x": [0.0] * n, "norm_g": _r(zero[k]), "requirement": "g(t, 0) = 0"}
    bad = ~(g > 0.0)
    if np.any(bad):
        k = int(np.argmax(bad))
        return False, {"t": _r(tt[k]), "x": [_r(v) for v in xx[k]], "norm_g": _r(g[k]), "requirement": "g(t, x) != 0 for x != 0"}
    return True, None


def _sup_jacobian_along(sys: NonlinearSystem, path: PathSample, horizon: float, step: float) -> float:
    ts = np.arange(0.0, horizon + 0.5 * step, step)
    ys = path(ts)
    try:
        J = sys.jacobian(ts, ys)
    except ExprDomainError:
        return math.inf
    return float(np.max(spectral_norm(J)))


def check_hypotheses(
    sys: NonlinearSystem,
    paths: int | Sequence[PathSample] | None = None,
    config: NMYCConfig | None = None,
) -> HypothesisReport:
    """Test (G1)--(G4) for ``x' = g(t, x)`` along sampled measurable paths.

    ``paths`` is a path count (sampled with ``config.seed``) or an explicit
    list.  G4 requires every spectral endpoint of the linearisation along
    every path to be at most ``-config.margin``.
    """
    cfg = config or NMYCConfig()
    T = cfg.spectrum.horizon
    notes: list[str] = []
    if paths is None or isinstance(paths, int):
        M = cfg.paths if paths is None else int(paths)
        if M < 1:
            raise ValueError("need at least one path")
        plist = sample_paths(sys, T, M, seed=cfg.seed, box=cfg.box, step=cfg.spectrum.step)
        dropped = M - len(plist)
        if dropped:
            notes.append(f"{dropped} escaped solution path(s) excluded")
        if not plist:
            raise ValueError("every sampled path escaped; nothing to linearise along")
    else:
        plist = list(paths)
        if not plist:
            raise ValueError("need at least one path")
    g2_ok, witness = _g2_check(sys, cfg, T)
    g3 = max(_sup_jacobian_along(sys, p, T, cfg.spectrum.step) for p in plist)
    if not math.isfinite(g3):
        notes.append("Jacobian not finite along some path")

    def one(p: PathSample):
        return sacker_sell(linearize_along(sys, p), config=cfg.spectrum)

    spectra = pmap(one, plist, cfg.jobs)
    g4 = [G4Entry(p.label, s, bool(s.intervals) and s.max_endpoint() <= -cfg.margin) for p, s in zip(plist, spectra)]
    return HypothesisReport(G1_NOTE, g2_ok, witness, g3, g4, [p.label for p in plist], notes, cfg)


# ---------------------------------------------------------------------------
# uniform asymptotic stability


@dataclass
class StabilityReport:
    x0s: np.ndarray
    t0s: np.ndarray
    horizon: float
    K: float
    alpha: float
    fit_ratio: float
    holdout_ratio: float
    uniformity_ratio: float
    passed: bool
    radius: float
    witness: dict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def worst_ratio(self) -> float:
        return max(self.fit_ratio, self.holdout_ratio)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "K": _r(self.K),
            "alpha": _r(self.alpha),
            "worst_ratio": _r(self.worst_ratio),
            "fit_ratio": _r(self.fit_ratio),
            "holdout_ratio": _r(self.holdout_ratio),
            "uniformity_ratio": _r(self.uniformity_ratio),
            "horizon": self.horizon,
            "radius": self.radius,
            "n_x0": int(self.x0s.shape[0]),
            "t0s": [float(t) for t in self.t0s],
            "witness": self.witness,
            "notes": list(self.notes),
        }


def default_x0_grid(n: int, box: float, per_axis: int = 5) -> np.ndarray:
    """Lattice in ``[-box, box]^n`` without the origin, plus a copy scaled by 1e-3."""
    axis = np.linspace(-box, box, per_axis)
    pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pts = pts[vector_norm(pts) > 0]
    return np.concatenate([pts, 1e-3 * pts])


def _holdout_x0(n: int, box: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed + 104729)
    d = rng.standard_normal((count, n))
    d /= vector_norm(d)[:, None]
    radius = box * 10.0 ** rng.uniform(-3.0, 0.0, size=count)
    return d * radius[:, None]


@dataclass
class _Samples:
    taus: np.ndarray
    logr: np.ndarray  # (n_t0, len(taus), n_x0), NaN below floor
    escaped: list[tuple[float, np.ndarray, float]]


def _log_ratios(sys, x0s, t0s, horizon, step, cfg: NMYCConfig) -> _Samples:
    taus = np.round(np.arange(0.0, horizon + 0.5 * step, step), 12)
    out = np.empty((len(t0s), taus.size, x0s.shape[0]))
    esc = []
    norms0 = vector_norm(x0s)
    for i, t0 in enumerate(t0s):
        tr = solve(sys, float(t0), x0s, float(t0) + horizon, rtol=cfg.rtol, atol=cfg.atol, t_eval=float(t0) + taus)
        nrm = vector_norm(tr.states)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = nrm / norms0
            lr = np.log(r)
        lr[~(r >= cfg.uas_floor)] = np.nan
        out[i] = lr
        for k in np.flatnonzero(np.atleast_1d(tr.escaped)):
            esc.append((float(t0), x0s[k], float(np.atleast_1d(tr.escape_time)[k])))
    return _Samples(taus, out, esc)


def _fit_envelope(*samples: _Samples) -> tuple[float, float]:
    """Least-squares fit of ``ln K - alpha tau`` to the pointwise maximum of ``samples``."""
    env = np.max(np.stack([np.max(np.where(np.isnan(s.logr), -np.inf, s.logr), axis=(0, 2)) for s in samples]), axis=0)
    taus = samples[0].taus
    ok = np.isfinite(env)
    if ok.sum() < 2:
        return math.nan, math.nan
    slope, _ = np.polyfit(taus[ok], env[ok], 1)
    alpha = -float(slope)
    K = max(1.0, float(np.exp(np.max(env[ok] + alpha * taus[ok]))))
    return K, alpha


def _max_ratio(s: _Samples, K: float, alpha: float) -> tuple[float, tuple[int, int, int] | None]:
    if not (math.isfinite(K) and math.isfinite(alpha)):
        return math.inf, None
    excess = s.logr - (math.log(K) - alpha * s.taus)[None, :, None]
    if not np.any(np.isfinite(excess)):
        return math.inf, None
    idx = np.unravel_index(np.argmax(np.where(np.isnan(excess), -np.inf, excess)), excess.shape)
    return float(np.exp(excess[idx])), tuple(int(i) for i in idx)


def validate_envelope(
    sys: NonlinearSystem | LinearSystem,
    K: float,
    alpha: float,
    x0s,
    t0s,
    horizon: float,
    step: float = 0.025,
    config: NMYCConfig | None = None,
) -> float:
    """Worst ratio ``|x(t)| / (K e^{-alpha (t - t0)} |x0|)`` over the given samples."""
    cfg = config or NMYCConfig()
    s = _log_ratios(sys, np.asarray(x0s, float), np.asarray(t0s, float), horizon, step, cfg)
    if s.escaped:
        return math.inf
    return _max_ratio(s, K, alpha)[0]


def verify_uas(
    sys: NonlinearSystem | LinearSystem,
    x0s=None,
    t0s=None,
    horizon: float | None = None,
    config: NMYCConfig | None = None,
) -> StabilityReport:
    """Fit one exponential envelope for all ``(t0, x0)`` and validate it.

    The envelope ``ln max |x(t0 + tau)| / |x0|`` (maximum over every
    ``(t0, x0)``) is fitted by least squares in ``tau``; ``K`` is raised
    until the fit grid is covered.  Validation uses a four times finer
    ``tau`` grid and a held-out set of initial times and states; when the
    hold-out set is not covered it joins the fit data and a fresh set is
    drawn, at most ``config.uas_refinements`` times.
    """
    cfg = config or NMYCConfig()
    n = sys.dim
    T = float(horizon if horizon is not None else cfg.uas_horizon)
    x0s = default_x0_grid(n, cfg.box, cfg.uas_per_axis) if x0s is None else np.atleast_2d(np.asarray(x0s, float))
    t0s = np.asarray(cfg.uas_t0s if t0s is None else t0s, dtype=float).reshape(-1)
    if x0s.size == 0 or t0s.size == 0:
        raise ValueError("initial-condition and initial-time grids must be non-empty")
    radius = float(np.max(vector_norm(x0s)))
    notes: list[str] = []
    fine = cfg.uas_step / 4.0
    try:
        dense = _log_ratios(sys, x0s, t0s, T, fine, cfg)
    except (IntegrationError, ExprDomainError) as exc:
        return StabilityReport(x0s, t0s, T, math.nan, math.nan, math.inf, math.inf, math.inf, False, radius, {"error": str(exc)}, notes)
    if dense.escaped:
        t0, x0, te = dense.escaped[0]
        wit = {"t0": t0, "x0": [_r(v) for v in x0], "escape_time": _r(te), "reason": "trajectory escaped"}
        return StabilityReport(x0s, t0s, T, math.nan, math.nan, math.inf, math.inf, math.inf, False, radius, wit, notes)
    coarse = _Samples(dense.taus[::4], dense.logr[:, ::4, :], [])
    K, alpha = _fit_envelope(coarse)
    fit_ratio, idx = _max_ratio(dense, K, alpha)
    # held out: initial times between grid points and random states in the box.
    # A failed hold-out set joins the fit data and a fresh one is drawn.
    fit_sets, fit_dense = [coarse], [dense]
    spacing = float(np.min(np.diff(t0s))) if t0s.size > 1 else cfg.uas_step
    hold_ratio = math.inf
    for round_, offset in enumerate((0.5, 0.25, 0.75)[: cfg.uas_refinements + 1]):
        t0h = (t0s[:-1] if t0s.size > 1 else t0s) + offset * spacing
        x0h = _holdout_x0(n, cfg.box, max(8, x0s.shape[0] // 4), cfg.seed + round_)
        hold = _log_ratios(sys, x0h, t0h, T, fine, cfg)
        if hold.escaped:
            hold_ratio = math.inf
            break
        hold_ratio = _max_ratio(hold, K, alpha)[0]
        if hold_ratio <= cfg.uas_ratio or round_ == cfg.uas_refinements:
            break
        notes.append(f"hold-out ratio {_r(hold_ratio)} in round {round_}; refitted with the hold-out samples")
        fit_dense.append(hold)
        fit_sets.append(_Samples(hold.taus[::4], hold.logr[:, ::4, :], []))
        K, alpha = _fit_envelope(*fit_sets)
        fit_ratio, idx = _max_ratio(dense, K, alpha)
        fit_ratio = max([fit_ratio] + [_max_ratio(d, K, alpha)[0] for d in fit_dense[1:]])
    # uniformity: envelope fitted on the first half of t0s, checked on the second half
    half = max(1, t0s.size // 2)
    if t0s.size > 1:
        K1, a1 = _fit_envelope(_Samples(coarse.taus, coarse.logr[:half], []))
        uni = _max_ratio(_Samples(dense.taus, dense.logr[half:], []), K1, a1)[0]
    else:
        uni = math.nan
    passed = bool(math.isfinite(alpha) and alpha > 0 and fit_ratio <= cfg.uas_ratio and hold_ratio <= cfg.uas_ratio)
    witness = None
    if not passed:
        if idx is not None:
            i, k, j = idx
            witness = {
                "t0": float(t0s[i]),
                "x0": [_r(v) for v in x0s[j]],
                "t": _r(t0s[i] + dense.taus[k]),
                "norm_ratio": _r(math.exp(dense.logr[i, k, j])),
            }
        if not (alpha > 0):
            notes.append("no decay: fitted rate is not positive")
    return StabilityReport(x0s, t0s, T, K, alpha, fit_ratio, hold_ratio, uni, passed, radius, witness, notes)


# ---------------------------------------------------------------------------
# scalar theorem


def theta_paths(solutions: Sequence[PathSample], seed: int, knot_step: float = 0.5) -> list[PathSample]:
    """Paths ``theta(t)`` drawn uniformly in ``(0, x(t))`` along each scalar solution.

    Values are held constant between knots spaced ``knot_step`` apart.
    """
    rng = np.random.default_rng(seed + 31337)
    out = []
    for p in solutions:
        if p.kind != "solution":
            continue
        knots = np.round(np.arange(p.times[0], p.times[-1], knot_step), 12)
        x = p(knots)
        u = rng.uniform(0.0, 1.0, size=x.shape)
        u = np.clip(u, 1e-9, 1 - 1e-9)
        out.append(PathSample("piecewise-constant", knots, u * x, seed=seed, label=f"theta[{p.label}]"))
    return out


def recover_theta(sys: NonlinearSystem, t, x, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Mean-value points ``theta`` in ``(0, x)`` with ``g_x(t, theta) = g(t, x) / x``.

    Vectorised over probe pairs ``(t, x)``.  A 65-point scan brackets the
    roots; the bracket nearest to zero is refined by bisection to ``tol``.
    Returns ``(theta, ambiguous)``; ``ambiguous`` flags several sign
    changes, a flat residual (every point is a root) or a missing bracket.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t, x = np.broadcast_arrays(t, x)
    target = sys.f(t, x[:, None])[:, 0] / x

    def h(tt, th):
        return sys.jacobian(tt, th[..., None])[..., 0, 0] - target.reshape(target.shape + (1,) * (th.ndim - 1))

    frac = np.linspace(0.0, 1.0, 65)[1:-1]
    grid = x[:, None] * frac[None, :]
    vals = h(np.broadcast_to(t[:, None], grid.shape), grid)
    scale = 1.0 + np.abs(target)
    flat = np.all(np.abs(vals) <= 1e-12 * scale[:, None], axis=1)
    change = (np.sign(vals[:, :-1]) * np.sign(vals[:, 1:]) < 0) | (vals[:, :-1] == 0.0)
    n_roots = change.sum(axis=1)
    has = n_roots > 0
    k = np.where(has, np.argmax(change, axis=1), np.argmin(np.abs(vals), axis=1))
    k = np.minimum(k, grid.shape[1] - 2)
    rows = np.arange(x.size)
    lo, hi = grid[rows, k].copy(), grid[rows, k + 1].copy()
    f_lo = vals[rows, k]
    exact = f_lo == 0.0
    while np.any((np.abs(hi - lo) > tol) & has & ~exact):
        mid = 0.5 * (lo + hi)
        fm = h(t, mid)
        left = np.sign(fm) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, fm, f_lo)
        hi = np.where(left, hi, mid)
    theta = np.where(exact | ~has, grid[rows, k], 0.5 * (lo + hi))
    theta = np.where(flat, grid[:, 0], theta)
    ambiguous = flat | ~has | (n_roots > 1)
    return theta, ambiguous


@dataclass
class ReductionCheck:
    max_relative_error: float
    ambiguous_points: int
    probe_count: int
    oracle_rate: float

    def to_dict(self) -> dict:
        return {
            "max_relative_error": float(f"{self.max_relative_error:.4g}"),
            "ambiguous_points": self.ambiguous_points,
            "probe_count": self.probe_count,
            "oracle_rate": _r(self.oracle_rate),
        }


def reduction_check(
    sys: NonlinearSystem,
    x0s: Sequence[float],
    t0s: Sequence[float],
    horizon: float,
    step: float = 0.0025,
) -> ReductionCheck:
    """Compare ``x(t)`` with ``x0 exp(int g_x(s, theta*(s)) ds)`` along recovered mean-value paths.

    Also returns the slowest time-average decay rate over all sampled
    trajectories, ``min -(1/L) int g_x(s, theta*(s)) ds``, the oracle for the
    envelope rate.
    """
    taus = np.round(np.arange(0.0, horizon + 0.5 * step, step), 12)
    worst = 0.0
    amb = 0
    count = 0
    rate = math.inf
    for t0 in t0s:
        xs = np.asarray(x0s, dtype=float).reshape(-1, 1)
        tr = solve(sys, float(t0), xs, float(t0) + horizon, rtol=1e-12, atol=1e-300, t_eval=float(t0) + taus)
        for j in range(xs.shape[0]):
            traj = tr.states[:, j, 0]
            ts = float(t0) + taus
            th, a = recover_theta(sys, ts, traj)
            amb += int(np.sum(a))
            integrand = sys.jacobian(ts, th[:, None])[:, 0, 0]
            count += taus.size
            logs = cumulative_simpson(integrand, x=taus, initial=0.0)
            pred = xs[j, 0] * np.exp(logs)
            rel = np.abs(pred - traj) / np.maximum(np.abs(traj), 1e-300)
            worst = max(worst, float(np.max(rel)))
            rate = min(rate, -float(logs[-1]) / horizon)
            if not np.all(np.isfinite(rel)):
                worst = math.inf
    return ReductionCheck(worst, amb, count, rate)


@dataclass
class ExperimentReport:
    name: str
    passed: bool
    rows: list[dict]
    details: dict
    claim: str = "asserted"

    def to_dict(self) -> dict:
        return {"experiment": self.name, "passed": self.passed, "claim": self.claim, "rows": self.rows, "details": self.details}


def _row(quantity, expected, measured, ok, basis) -> dict:
    return {"quantity": quantity, "expected": expected, "measured": measured, "ok": bool(ok), "basis": basis}


def scalar_theorem_experiment(sys: NonlinearSystem, config: NMYCConfig | None = None, label: str | None = None) -> ExperimentReport:
    """Hypotheses, stability and the mean-value reduction for a scalar field."""
    cfg = config or NMYCConfig()
    if sys.dim != 1:
        raise ValueError("scalar theorem experiment needs a 1-D system")
    T = cfg.spectrum.horizon
    plist = sample_paths(sys, T, cfg.paths, seed=cfg.seed, box=cfg.box, step=cfg.spectrum.step)
    plist += theta_paths([p for p in plist if p.kind == "solution"], cfg.seed)
    hyp = check_hypotheses(sys, plist, cfg)
    name = label or sys.label
    rows = [
        _row("G2 g(t,0)=0, g(t,x)!=0", "pass", "pass" if hyp.g2_passed else "fail", hyp.g2_passed, "hypothesis"),
        _row("G3 sup |Jg| along paths", "finite", _r(hyp.g3_sup), hyp.g3_passed, "hypothesis"),
        _row("G4 max spectral endpoint", f"<= {-cfg.margin}", _r(-hyp.g4_margin()) if hyp.g4 else None, hyp.g4_passed, "hypothesis"),
    ]
    details = {"system": name, "hypotheses": hyp.to_dict()}
    if not hyp.passed:
        return ExperimentReport("scalar", True, rows, details | {"verdict": "hypotheses not satisfied"}, claim="none")
    uas = verify_uas(sys, config=cfg)
    red = reduction_check(sys, [cfg.box, 0.5 * cfg.box, -cfg.box], cfg.uas_t0s[:2], cfg.uas_horizon)
    rows += [
        _row("UAS envelope", "pass", "pass" if uas.passed else "fail", uas.passed, "theorem"),
        _row("alpha_hat vs time-average rate", f"within 0.1 of {_r(red.oracle_rate)}", _r(uas.alpha), abs(uas.alpha - red.oracle_rate) <= 0.1, "oracle"),
        _row("reduction max relative error", "<= 1e-6", float(f"{red.max_relative_error:.4g}"), red.max_relative_error <= 1e-6, "oracle"),
    ]
    details |= {"stability": uas.to_dict(), "reduction": red.to_dict()}
    return ExperimentReport("scalar", all(r["ok"] for r in rows), rows, details)


def random_scalar_system(seed: int) -> NonlinearSystem:
    """``x' = -(c - d sin(w t + phi)) x - e x^3`` with ``c >= 0.6``, ``d <= 0.3``."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.6, 1.5)
    d = rng.uniform(0.0, 0.3)
    w = rng.uniform(0.5, 2.0)
    phi = rng.uniform(0.0, 2 * math.pi)
    e = rng.uniform(0.0, 0.5)
    rhs = f"-({c!r} - {d!r}*sin({w!r}*t + {phi!r}))*x1 - {e!r}*x1^3"
    return NonlinearSystem.from_strings([rhs], label=f"scalar[{seed}]", params={"c": c, "d": d, "w": w, "phi": phi, "e": e})


# ---------------------------------------------------------------------------
# perturbation theorem


def combine(linear: LinearSystem, f: NonlinearSystem, label: str | None = None) -> NonlinearSystem:
    """``x' = A(t) x + f(t, x)`` as one expression system."""
    if not isinstance(linear.a, ExprMatrix):
        raise TypeError("linear part must be expression-backed")
    if linear.dim != f.dim:
        raise ValueError("dimension mismatch")
    names = state_names(linear.dim)
    rhs = []
    for row, fi in zip(linear.a.to_strings(), f.rhs_strings()):
        lin = " + ".join(f"({e})*{x}" for e, x in zip(row, names))
        rhs.append(f"{lin} + ({fi})")
    return NonlinearSystem.from_strings(rhs, label=label or f"{linear.label}+{f.label}")


def random_perturbation(n: int, seed: int, bound: float = 0.2) -> NonlinearSystem:
    """``f(t, x) = s(t) M tanh(x)`` with ``s = (2 + sin(w t)) / 3`` and ``||M|| = bound``.

    Since ``|s| <= 1`` and ``tanh' <= 1``, ``sup ||Jf|| <= bound``.
    """
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    M *= bound / float(spectral_norm(M))
    w = rng.uniform(0.5, 3.0)
    s = f"((2 + sin({w!r}*t))/3)"
    names = state_names(n)
    rhs = []
    for i in range(n):
        rhs.append(" + ".join(f"{s}*({float(M[i, j])!r})*tanh({x})" for j, x in enumerate(names)))
    return NonlinearSystem.from_strings(rhs, label=f"f[{seed}]", params={"M": M.tolist(), "w": w})


def dense_jacobian_sup(f: NonlinearSystem, box: float, horizon: float, per_axis: int = 9, times: int = 41) -> float:
    n = f.dim
    axis = np.linspace(-box, box, per_axis)
    pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    ts = np.linspace(0.0, horizon, times)
    tt = np.repeat(ts, pts.shape[0])
    xx = np.tile(pts, (ts.size, 1))
    return float(np.max(spectral_norm(f.jacobian(tt, xx))))


def perturbation_theorem_experiment(
    linear: LinearSystem,
    f: NonlinearSystem,
    config: NMYCConfig | None = None,
    *,
    K: float | None = None,
    alpha: float | None = None,
) -> ExperimentReport:
    """Decay of ``x' = A(t) x + f(t, x)`` when ``sup ||Jf|| < alpha / (4 K^2)``.

    ``K`` and ``alpha`` default to a fitted certificate with ``P = I``.
    """
    cfg = config or NMYCConfig()
    details: dict = {"linear": linear.label, "f": f.rhs_strings()}
    if K is None or alpha is None:
        cert = fit_certificate(linear, np.eye(linear.dim), config=cfg.spectrum.dichotomy())
        if cert.verdict != CERTIFIED:
            raise ValueError(f"linear part has no dichotomy with P = I ({cert.verdict})")
        K, alpha = cert.K, cert.alpha
        details["certificate"] = cert.to_dict()
    K, alpha = float(K), float(alpha)
    bound = alpha / (4.0 * K * K)
    grid_sup = dense_jacobian_sup(f, cfg.box, cfg.spectrum.horizon)
    plist = sample_paths(f, cfg.spectrum.horizon, max(1, cfg.paths // 2), seed=cfg.seed, mode="random", box=cfg.box)
    path_sup = max(_sup_jacobian_along(f, p, cfg.spectrum.horizon, cfg.spectrum.step) for p in plist)
    sup = max(grid_sup, path_sup)
    rows = [_row("sup |Jf|", f"< alpha/(4K^2) = {_r(bound)}", _r(sup), sup < bound, "hypothesis")]
    details |= {"K": K, "alpha": alpha, "bound": bound, "grid_sup": grid_sup, "path_sup": path_sup}
    if not sup < bound:
        details["verdict"] = "hypothesis violated"
        return ExperimentReport("perturbation", True, rows, details, claim="none")
    full = combine(linear, f)
    uas = verify_uas(full, config=cfg)
    rate = alpha * (1.0 - 1.0 / (4.0 * K)) - 0.05
    rows += [
        _row("UAS envelope", "pass", "pass" if uas.passed else "fail", uas.passed, "theorem"),
        _row("alpha_hat", f">= alpha(1-1/(4K)) - 0.05 = {_r(rate)}", _r(uas.alpha), uas.alpha >= rate, "theorem"),
    ]
    details["stability"] = uas.to_dict()
    return ExperimentReport("perturbation", all(r["ok"] for r in rows), rows, details)


# ---------------------------------------------------------------------------
# global attractor


def _cg_poly_label(c) -> str:
    return "[" + ",".join(f"{v:g}" for v in c) + "]"


def cg_attractor_experiment(
    lam: float = -1.0,
    a: Sequence[float] = (1.0,),
    b: Sequence[float] = (1.0,),
    g: Sequence[float] = (0.0, 1.0),
    z0s: Sequence[float] = (0.0, 1.0, -1.0, 5.0, -5.0),
    box: float = 10.0,
    per_axis: int = 9,
    config: NMYCConfig | None = None,
) -> ExperimentReport:
    """Spectrum, dichotomy and convergence for the 3-D field ``lam I + H``."""
    cfg = config or NMYCConfig()
    scfg = cfg.spectrum
    field_sys = builtin("cg_field", {"lambda": lam, "a": list(a), "b": list(b), "g": list(g)})
    T = 40.0 / abs(lam)
    axis = np.linspace(-box, box, per_axis)
    xy = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    rows: list[dict] = []
    per_z = []
    for z0 in z0s:
        if z0 == 0:
            C = constant_system(lam * np.eye(2), "lambda I")
            pert = None
        else:
            red = reduce_cg(lam, a, b, g, z0)
            C, pert = red.system, red.perturbation
        est = sacker_sell(C, config=scfg)
        spec_ok = len(est.intervals) == 1 and all(abs(v - lam) <= 0.05 for v in est.intervals[0])
        cert = fit_certificate(C, np.eye(2), config=scfg.dichotomy())
        x0s = np.column_stack([xy, np.full(xy.shape[0], float(z0))])
        tr = solve(field_sys, 0.0, x0s, T, rtol=1e-10, atol=1e-14, t_eval=np.array([0.0, T]))
        final = vector_norm(tr.states[-1])
        limit = 1e-6 * np.maximum(1.0, vector_norm(x0s))
        conv = np.where(np.isfinite(final), final / limit, np.inf)
        conv_ok = bool(np.all(conv <= 1.0)) and not np.any(np.atleast_1d(tr.escaped))
        if pert is not None:
            vp_ok, vp_d = check_vanishing_perturbation(constant_system(lam * np.eye(2), "lambda I"), pert, config=scfg)
        else:
            vp_ok, vp_d = True, 0.0
        rows += [
            _row(f"z0={z0:g} spectrum of C", f"{{{lam:g}}}", [[_r(x), _r(y)] for x, y in est.intervals], spec_ok, "theorem"),
            _row(f"z0={z0:g} dichotomy P=I", "certified", cert.verdict, cert.certified, "theorem"),
            _row(f"z0={z0:g} max |x(T)|/(1e-6 max(1,|x0|))", "<= 1", _r(float(np.max(conv))), conv_ok, "theorem"),
            _row(f"z0={z0:g} vanishing-perturbation distance", "<= 0.1", _r(vp_d), vp_ok, "law"),
        ]
        per_z.append({"z0": z0, "spectrum": est.to_dict(), "certificate": cert.to_dict(), "n_trajectories": int(x0s.shape[0])})
    details = {
        "lambda": lam,
        "a": list(a),
        "b": list(b),
        "g": list(g),
        "T": T,
        "box": box,
        "per_z0": per_z,
    }
    return ExperimentReport("cg-attractor", all(r["ok"] for r in rows), rows, details)
