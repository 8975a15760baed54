"""Finite-horizon exponential dichotomy certificates.

A certificate records a projector ``P`` and constants ``K >= 1``,
``alpha > 0`` such that on sampled pairs of the horizon

    ||Phi(t) P Phi^{-1}(s)||       <= K exp(-alpha (t - s)),  t >= s
    ||Phi(t) (I - P) Phi^{-1}(s)|| <= K exp(-alpha (s - t)),  s >= t.

Both norms are evaluated in a QR frame whose leading columns span
``Phi(t) ker P``.  In that frame the system is upper triangular, the range
of ``P(t) = Phi(t) P Phi^{-1}(t)`` is the graph of a matrix ``X(t)`` over
the trailing coordinates, and every quantity above is a product of
triangular blocks, so nothing ill-conditioned (such as ``Phi(s)^{-1}``
itself) is ever formed.  ``X`` is obtained by a backward recursion, which
is the numerically stable direction for the stable subspace.

Shifting ``A`` by ``gamma`` multiplies both norms by ``exp(-+gamma (t - s))``
while leaving frames and ``X`` untouched, so one table of pair norms per
(system, frame, split) serves a whole gamma scan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, qr_evolve
from .linalg import spectral_norm
from .systems import LinearSystem, ShiftedMatrix

__all__ = [
    "CERTIFIED",
    "REFUTED",
    "INCONCLUSIVE",
    "DichotomyConfig",
    "DichotomyCertificate",
    "RoughnessBounds",
    "NoGapError",
    "estimate_projector",
    "fit_certificate",
    "has_dichotomy",
    "roughness_bounds",
    "generic_frame",
]

CERTIFIED = "certified"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"

# a projector whose range lies this close to the computed stable subspace
# (in frame coordinates) is identified with it
RANGE_MATCH_TOL = 1e-8


class NoGapError(ValueError):
    """No exponential gap separates growing from decaying directions."""


@dataclass(frozen=True)
class DichotomyConfig:
    horizon: float = 100.0
    step: float = 0.05
    n_pairs: int = 500
    K_cap: float = 1e6
    alpha_factor: float = 0.9
    refute_margin: float = 0.05
    min_rate: float = 0.02
    gap_rate: float = 0.1
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL


@dataclass
class DichotomyCertificate:
    projector: np.ndarray
    rank: int
    K: float
    alpha: float
    horizon: tuple[float, float]
    residual: float
    verdict: str
    rate: float = float("nan")
    n_pairs: int = 0
    note: str = ""

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> dict:
        return {
            "projector": np.round(self.projector, 12).tolist(),
            "rank": int(self.rank),
            "K": _finite_or_none(self.K),
            "alpha": _finite_or_none(self.alpha),
            "horizon": [float(self.horizon[0]), float(self.horizon[1])],
            "residual": _finite_or_none(self.residual),
            "verdict": self.verdict,
            "rate": _finite_or_none(self.rate),
            "n_pairs": int(self.n_pairs),
            "note": self.note,
        }


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class RoughnessBounds:
    """Perturbation sizes that preserve the dichotomy.

    ``coppel``: ``sup ||B(t)|| < alpha / (4 K^2)`` keeps the null space.
    ``wiggins``: ``limsup ||B(t)|| < alpha / (2 K)`` keeps a similar projector.
    """

    coppel: float
    wiggins: float


def roughness_bounds(cert: DichotomyCertificate | None = None, *, K: float | None = None, alpha: float | None = None) -> RoughnessBounds:
    if cert is not None:
        if not cert.certified:
            raise ValueError(f"certificate is {cert.verdict}, not certified")
        K, alpha = cert.K, cert.alpha
    if K is None or alpha is None:
        raise ValueError("need a certificate or explicit K and alpha")
    if K < 1 or not alpha > 0:
        raise ValueError("need K >= 1 and alpha > 0")
    return RoughnessBounds(alpha / (4.0 * K * K), alpha / (2.0 * K))


# ---------------------------------------------------------------------------
# frames and invariant graphs


def generic_frame(n: int) -> np.ndarray:
    """Fixed pseudo-random orthonormal frame (positive-diagonal QR of a seeded Gaussian)."""
    rng = np.random.default_rng(20240607 + n)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diagonal(r))


def _frame_for(P: np.ndarray) -> tuple[np.ndarray, int]:
    """Orthonormal frame whose leading ``n - k`` columns span ``ker P``."""
    n = P.shape[0]
    k = int(round(float(np.trace(P))))
    if k in (0, n):
        return np.eye(n), k
    u, s, _ = np.linalg.svd(np.eye(n) - P)
    kernel = u[:, : n - k]
    q, r = np.linalg.qr(np.hstack([kernel, np.eye(n)]), mode="complete")
    q = q[:, :n]
    q = q * np.where(np.diagonal(r)[:n] < 0, -1.0, 1.0)
    # re-orthonormalise: first block spans ker P exactly
    q[:, : n - k] = kernel
    comp = q[:, n - k :] - kernel @ (kernel.T @ q[:, n - k :])
    comp, _ = np.linalg.qr(comp)
    return np.hstack([kernel, comp]), k


def _base_of(sys: LinearSystem):
    a = sys.a
    if isinstance(a, ShiftedMatrix):
        return LinearSystem(a.base, sys.label.split("@shift=")[0]), a.gamma
    return sys, 0.0


_GRAPH_CACHE: dict = {}
_TABLE_CACHE: dict = {}
_CACHE_LIMIT = 128


def _remember(cache, key, anchor, value):
    if len(cache) > _CACHE_LIMIT:
        cache.clear()
    cache[key] = (anchor, value)
    return value


def _stable_graph(factors: np.ndarray, u: int) -> np.ndarray:
    """``X_j`` with ``X_N = 0`` and ``X_j = R11^{-1} (X_{j+1} R22 - R12)``."""
    key = (id(factors), u)
    hit = _GRAPH_CACHE.get(key)
    if hit is not None and hit[0] is factors:
        return hit[1]
    N, n, _ = factors.shape
    k = n - u
    X = np.zeros((N + 1, u, k))
    for j in range(N - 1, -1, -1):
        R = factors[j]
        rhs = X[j + 1] @ R[u:, u:] - R[:u, u:]
        X[j] = solve_triangular(R[:u, :u], rhs, lower=False, check_finite=False)
    return _remember(_GRAPH_CACHE, key, factors, X)


# ---------------------------------------------------------------------------
# pair plans and base norm tables


def _pair_plan(N: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (lo, hi) grid-index pairs: anchors spread over the horizon,
    gaps log-spaced from one step to the remaining horizon."""
    n_anchor = max(2, int(round(math.sqrt(m))))
    per = max(2, int(math.ceil(m / n_anchor)))
    anchors = np.unique(np.linspace(0, N - 1, n_anchor).round().astype(int))
    lo, hi = [], []
    for a in anchors:
        top = N - a
        gaps = np.unique(np.geomspace(1, top, per).round().astype(int))
        lo.extend([a] * gaps.size)
        hi.extend((a + gaps).tolist())
    return np.array(lo), np.array(hi)


@dataclass
class _NormTable:
    gaps: np.ndarray  # t - s >= 0 in time units
    log_g: np.ndarray  # ln ||Phi(t,s) P(s)||, -inf when P = 0
    log_h: np.ndarray  # ln ||Phi(s,t) (I - P(t))||, -inf when P = I
    k: int
    X0: np.ndarray
    frame: np.ndarray
    D_norm: float = 0.0
    notes: list = field(default_factory=list)


def _log_norm_stack(mats: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(spectral_norm(mats)) + log_scale


def _normalise(M, logs):
    s = np.max(np.abs(M), axis=(-2, -1))
    s = np.where((s > 0) & np.isfinite(s), s, 1.0)
    return M / s[:, None, None], logs + np.log(s)


def _base_table(base: LinearSystem, frame: np.ndarray, k: int, X0: np.ndarray | None, cfg: DichotomyConfig) -> _NormTable:
    series = qr_evolve(base, cfg.horizon, cfg.step, Q0=frame, rtol=cfg.rtol, atol=cfg.atol)
    factors = series.factors
    N, n, _ = factors.shape
    u = n - k
    X = _stable_graph(factors, u) if 0 < k < n else np.zeros((N + 1, u, k))
    if X0 is None:
        D = np.zeros((u, k))
    else:
        D = X0 - X[0]
        if np.max(np.abs(D), initial=0.0) <= RANGE_MATCH_TOL * (1.0 + np.max(np.abs(X0), initial=0.0)):
            D = np.zeros((u, k))
    key = (id(factors), k, D.tobytes(), cfg.n_pairs)
    hit = _TABLE_CACHE.get(key)
    if hit is not None and hit[0] is factors:
        return hit[1]

    lo, hi = _pair_plan(N, cfg.n_pairs)
    h = cfg.step
    n_pairs = lo.size
    anchors, a_index = np.unique(lo, return_inverse=True)
    log_g = np.full(n_pairs, -np.inf)
    log_h = np.full(n_pairs, -np.inf)
    has_D = bool(np.any(D != 0.0))

    R11 = factors[:, :u, :u]
    R22 = factors[:, u:, u:]
    inv11 = np.linalg.inv(R11) if u else R11
    A = anchors.size
    P22 = np.broadcast_to(np.eye(k), (A, k, k)).copy()
    l22 = np.zeros(A)
    P11i = np.broadcast_to(np.eye(u), (A, u, u)).copy()
    l11 = np.zeros(A)
    # cumulative R11(t, 0) and R22(t, 0)^{-1} for the range-mismatch term
    if has_D:
        C11 = np.eye(u)
        c11 = 0.0
        C22i = np.eye(k)
        c22 = 0.0
        cum11 = np.empty((N + 1, u, u))
        cum11l = np.empty(N + 1)
        cum22i = np.empty((N + 1, k, k))
        cum22l = np.empty(N + 1)
        cum11[0], cum11l[0], cum22i[0], cum22l[0] = C11, c11, C22i, c22
        inv22 = np.linalg.inv(R22)
        for j in range(N):
            C11 = R11[j] @ C11
            C22i = C22i @ inv22[j]
            s1 = max(np.max(np.abs(C11)), 1e-300)
            s2 = max(np.max(np.abs(C22i)), 1e-300)
            C11 /= s1
            C22i /= s2
            c11 += math.log(s1)
            c22 += math.log(s2)
            cum11[j + 1], cum11l[j + 1], cum22i[j + 1], cum22l[j + 1] = C11, c11, C22i, c22

    order = np.argsort(hi, kind="stable")
    hi_sorted = hi[order]
    ptr = 0
    start = anchors
    for j in range(N):
        active = start <= j
        if not np.any(active):
            continue
        if k:
            P22[active] = R22[j] @ P22[active]
            P22[active], l22[active] = _normalise(P22[active], l22[active])
        if u:
            P11i[active] = P11i[active] @ inv11[j]
            P11i[active], l11[active] = _normalise(P11i[active], l11[active])
        while ptr < n_pairs and hi_sorted[ptr] == j + 1:
            p = order[ptr]
            ai = a_index[p]
            t_idx = j + 1
            s_idx = lo[p]
            ptr += 1
            if k:
                # Phi(t,s) P(s) in frame coords: [X(t) R22(t,s); R22(t,s)]
                M22 = P22[ai]
                top = X[t_idx] @ M22
                log_s = l22[ai]
                if has_D:
                    E = cum11[t_idx] @ D @ cum22i[s_idx]
                    e_log = cum11l[t_idx] + cum22l[s_idx]
                    top, M22, log_s = _combine(top, M22, log_s, E, e_log)
                log_g[p] = _log_norm_stack(np.vstack([top, M22])[None], np.array([log_s]))[0]
            if u:
                # Phi(s,t) (I - P(t)) for s < t: R11(t,s)^{-1} [I, -X(t)]
                Mi = P11i[ai]
                right = -Mi @ X[t_idx]
                log_s = l11[ai]
                if has_D:
                    E = cum11[s_idx] @ D @ cum22i[t_idx]
                    e_log = cum11l[s_idx] + cum22l[t_idx]
                    right, Mi, log_s = _combine(right, Mi, log_s, -E, e_log)
                log_h[p] = _log_norm_stack(np.hstack([Mi, right])[None], np.array([log_s]))[0]
    gaps = (hi - lo) * h
    table = _NormTable(gaps, log_g, log_h, k, X[0].copy(), frame, float(np.max(np.abs(D), initial=0.0)))
    return _remember(_TABLE_CACHE, key, factors, table)


def _combine(A, B, la, E, le):
    """Return ``(A*e^{la} + E*e^{le}, B*e^{la})`` rescaled to a common log factor."""
    m = max(la, le)
    if not np.isfinite(m):
        return A + E, B, la
    with np.errstate(over="ignore", invalid="ignore"):
        return A * math.exp(la - m) + E * math.exp(le - m), B * math.exp(la - m), m


# ---------------------------------------------------------------------------
# fitting


def _envelope_rate(gaps: np.ndarray, logs: np.ndarray) -> float:
    """Decay rate of the upper envelope of ``logs`` over the largest-gap decade."""
    if logs.size == 0:
        return float("nan")
    gmax = float(np.max(gaps))
    sel = gaps >= 0.1 * gmax
    g, v = gaps[sel], logs[sel]
    if np.any(~np.isfinite(v)):
        return -np.inf if np.any(v == np.inf) else float("nan")
    edges = np.linspace(0.1 * gmax, gmax, 9)
    xs, ys = [], []
    for b in range(8):
        inb = (g >= edges[b]) & (g <= edges[b + 1]) if b == 7 else (g >= edges[b]) & (g < edges[b + 1])
        if np.any(inb):
            i = np.argmax(v[inb])
            xs.append(g[inb][i])
            ys.append(v[inb][i])
    if len(xs) < 2:
        return float("nan")
    slope = np.polyfit(np.array(xs), np.array(ys), 1)[0]
    return float(-slope)


def _fit_from_table(table: _NormTable, gamma: float, cfg: DichotomyConfig, P: np.ndarray, t0: float) -> DichotomyCertificate:
    gaps = table.gaps
    parts = []
    if table.k > 0:
        parts.append(table.log_g - gamma * gaps)
    if table.k < P.shape[0]:
        parts.append(table.log_h + gamma * gaps)
    rates = [_envelope_rate(gaps, v) for v in parts]
    horizon = (t0, t0 + cfg.horizon)
    rank = table.k
    if any(r == -np.inf for r in rates) or any(np.any(v == np.inf) for v in parts):
        return DichotomyCertificate(P, rank, np.inf, 0.0, horizon, np.inf, REFUTED, -np.inf, gaps.size, "overflow: unbounded growth")
    if any(not np.isfinite(r) for r in rates):
        return DichotomyCertificate(P, rank, np.inf, 0.0, horizon, np.inf, INCONCLUSIVE, float("nan"), gaps.size, "too few pairs to fit")
    rate = min(rates)
    if rate < -cfg.refute_margin:
        return DichotomyCertificate(P, rank, np.inf, 0.0, horizon, np.inf, REFUTED, rate, gaps.size, "growth where decay is required")
    if rate <= cfg.min_rate:
        return DichotomyCertificate(P, rank, np.inf, 0.0, horizon, np.inf, INCONCLUSIVE, rate, gaps.size, "no exponential separation at this horizon")
    alpha = cfg.alpha_factor * rate
    logK = max(float(np.max(v + alpha * gaps)) for v in parts)
    K = max(1.0, math.exp(min(logK, 700.0)))
    big = gaps >= 0.1 * float(np.max(gaps))
    residual = max(float(np.max(v[big] + alpha * gaps[big])) for v in parts)
    residual = math.exp(min(residual - math.log(K), 700.0))
    if K >= cfg.K_cap:
        return DichotomyCertificate(P, rank, K, alpha, horizon, residual, INCONCLUSIVE, rate, gaps.size, "K above cap")
    return DichotomyCertificate(P, rank, K, alpha, horizon, residual, CERTIFIED, rate, gaps.size, "")


def fit_certificate(
    sys: LinearSystem,
    P: np.ndarray,
    horizon: float | None = None,
    m: int | None = None,
    config: DichotomyConfig | None = None,
) -> DichotomyCertificate:
    """Fit ``(K, alpha)`` for a given projector at ``t = 0``."""
    cfg = _cfg(config, horizon, m)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = sys.dim
    if P.shape != (n, n):
        raise ValueError(f"projector must be {n}x{n}")
    if np.max(np.abs(P @ P - P)) > 1e-8 * max(1.0, float(np.max(np.abs(P)))):
        raise ValueError("P is not a projection (P^2 != P)")
    frame, k = _frame_for(P)
    Pf = frame.T @ P @ frame
    X0 = Pf[: n - k, n - k :] if 0 < k < n else None
    base, gamma = _base_of(sys)
    table = _base_table(base, frame, k, X0, cfg)
    cert = _fit_from_table(table, gamma, cfg, P, 0.0)
    if table.D_norm > 0 and cert.verdict != CERTIFIED:
        cert.note = (cert.note + "; " if cert.note else "") + "range of P differs from the computed stable subspace"
    return cert


def estimate_projector(
    sys: LinearSystem,
    horizon: float | None = None,
    rank: int | None = None,
    config: DichotomyConfig | None = None,
) -> np.ndarray:
    """Orthogonal projector onto the estimated stable subspace at ``t = 0``.

    Growth of ``Phi(t, 0)`` is read from a QR propagation started in a
    generic frame (its cumulative log-diagonals approximate log singular
    values).  Directions with negative growth rate form the stable part; a
    singular-value gap of at least ``exp(gap_rate * T)`` is required at the
    split unless ``rank`` is given.
    """
    cfg = _cfg(config, horizon, None)
    n = sys.dim
    series = qr_evolve(sys, cfg.horizon, cfg.step, Q0=generic_frame(n), rtol=cfg.rtol, atol=cfg.atol)
    # growth rates: least-squares slopes of the log-diagonals after a T/10 burn-in,
    # robust to bounded oscillations that can flip the sign of L_i(T)
    start = series.grid.size // 10
    rates = np.polyfit(series.grid[start:], series.log_growth[start:], 1)[0]
    rates = np.atleast_1d(rates)
    if rank is None:
        stable = rates < 0.0
        k = int(np.sum(stable))
        if 0 < k < n:
            if not np.all(stable[n - k :]):
                raise NoGapError("growth directions are not separated (unsorted growth)")
            gap = (rates[n - k - 1] - rates[n - k]) * cfg.horizon
            if gap < cfg.gap_rate * cfg.horizon:
                raise NoGapError(f"singular value gap e^{gap:.3g} below threshold e^{cfg.gap_rate * cfg.horizon:.3g}")
    else:
        k = int(rank)
        if not 0 <= k <= n:
            raise ValueError("rank out of range")
    if k == 0:
        return np.zeros((n, n))
    if k == n:
        return np.eye(n)
    u = n - k
    X = _stable_graph(series.base_factors, u)
    basis = series.frames[0] @ np.vstack([X[0], np.eye(k)])
    q, _ = np.linalg.qr(basis)
    return q @ q.T


def has_dichotomy(sys: LinearSystem, horizon: float | None = None, config: DichotomyConfig | None = None):
    """``(verdict, certificate)``; tries ``P = I``, ``P = 0`` then an estimated projector."""
    cfg = _cfg(config, horizon, None)
    n = sys.dim
    tried = []
    for P in (np.eye(n), np.zeros((n, n))):
        cert = fit_certificate(sys, P, config=cfg)
        if cert.certified:
            return cert.verdict, cert
        tried.append(cert)
    try:
        P = estimate_projector(sys, config=cfg)
    except NoGapError as exc:
        best = _least_bad(tried)
        best.verdict = INCONCLUSIVE
        best.note = f"projector estimate failed: {exc}"
        return INCONCLUSIVE, best
    k = int(round(np.trace(P)))
    if k in (0, n):
        best = _least_bad(tried)
        return best.verdict, best
    cert = fit_certificate(sys, P, config=cfg)
    return cert.verdict, cert


def _least_bad(certs):
    for c in certs:
        if c.verdict == INCONCLUSIVE:
            return c
    return max(certs, key=lambda c: c.rate if np.isfinite(c.rate) else -np.inf)


def _cfg(config, horizon, m) -> DichotomyConfig:
    cfg = config or DichotomyConfig()
    kw = {}
    if horizon is not None:
        kw["horizon"] = float(horizon)
    if m is not None:
        kw["n_pairs"] = int(m)
    if kw:
        cfg = DichotomyConfig(**{**cfg.__dict__, **kw})
    return cfg
