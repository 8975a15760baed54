"""Trajectories, transition matrices and QR-factored growth series.

Everything runs on one embedded Runge--Kutta 5(4) pair (Dormand--Prince)
with a 4th order continuous extension for dense output.  States may carry
leading batch axes; step size is shared across the batch and the error norm
is the maximum over all components, so every member meets the tolerance.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .systems import LinearSystem, MatrixFunction, NonlinearSystem, ShiftedMatrix

__all__ = [
    "IntegrationError",
    "RankCollapseError",
    "Trajectory",
    "TransitionRecord",
    "QRGrowthSeries",
    "dopri54",
    "solve",
    "transition",
    "step_propagators",
    "qr_evolve",
    "ESCAPE_GUARD",
]

ESCAPE_GUARD = 1e12
DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (t reached = {t_reached:.6g})")
        self.t_reached = t_reached


class RankCollapseError(IntegrationError):
    pass


# Dormand--Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between 5th and embedded 4th order weights (7th stage is FSAL)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Shampine), rows: stages, cols: powers theta^1..theta^4
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


@dataclass
class _Result:
    ts: np.ndarray
    ys: np.ndarray
    t_final: float
    y_final: np.ndarray
    escaped: np.ndarray
    escape_time: np.ndarray
    max_error: float
    n_steps: int
    h_last: float


def _initial_step(fun, t0, y0, f0, direction, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = fun(t0 + h0 * direction, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri54(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_end: float,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    t_eval: np.ndarray | None = None,
    h0: float | None = None,
    guard: float | None = None,
    max_steps: int = 2_000_000,
) -> _Result:
    """Adaptive Dormand--Prince integration of ``y' = fun(t, y)`` on ``[t0, t_end]``.

    With ``guard`` set, batch members (leading axes, last axis = state) whose
    norm exceeds it are frozen and flagged as escaped instead of raising.
    """
    if not rtol > 0 or not atol > 0:
        raise ValueError("tolerances must be positive")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    y = np.array(y0, dtype=float)
    t = float(t0)
    t_end = float(t_end)
    if t_eval is None:
        t_eval = np.array([t_end])
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.full((t_eval.size,) + y.shape, np.nan)
    k_out = 0
    while k_out < t_eval.size and t_eval[k_out] <= t:
        out[k_out] = y
        k_out += 1

    batch_shape = y.shape[:-1] if guard is not None else ()
    escaped = np.zeros(batch_shape, dtype=bool)
    escape_time = np.full(batch_shape, np.nan)

    f = fun(t, y)
    h = h0 if h0 is not None else _initial_step(fun, t, y, f, 1.0, rtol, atol)
    h_min_rel = 1e-14
    max_err = 0.0
    n_steps = 0
    K = [None] * 7
    while t < t_end:
        if n_steps >= max_steps:
            raise IntegrationError("too many steps", t)
        h = min(h, t_end - t)
        if h <= h_min_rel * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", t)
        K[0] = f
        for i in range(1, 6):
            dy = sum(a * K[j] for j, a in enumerate(_A[i]) if a != 0.0)
            K[i] = fun(t + _C[i] * h, y + h * dy)
        y_new = y + h * sum(b * K[j] for j, b in enumerate(_B) if b != 0.0)
        f_new = fun(t + h, y_new)
        K[6] = f_new
        err = h * sum(e * K[j] for j, e in enumerate(_E) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            ratio = np.abs(err) / scale
        if guard is not None and np.any(escaped):
            ratio = np.where(escaped[..., None], 0.0, ratio)
        err_norm = float(np.max(ratio)) if ratio.size else 0.0
        if not np.isfinite(err_norm):
            err_norm = np.inf
        if err_norm <= 1.0:
            t_new = t + h
            if t_end - t_new < 1e-12 * max(1.0, abs(t_end)):
                t_new = t_end
            # dense output for every requested point in (t, t_new]
            while k_out < t_eval.size and t_eval[k_out] <= t_new:
                theta = (t_eval[k_out] - t) / h
                powers = theta ** np.arange(1, 5)
                w = _P @ powers
                out[k_out] = y + h * sum(wj * K[j] for j, wj in enumerate(w) if wj != 0.0)
                k_out += 1
            max_err = max(max_err, err_norm)
            if guard is not None:
                norms = np.linalg.norm(y_new, axis=-1)
                newly = (norms > guard) & ~escaped
                if np.any(newly):
                    escape_time[newly] = t_new
                    escaped |= newly
                y_new = np.where(escaped[..., None], y, y_new)
                f_new = np.where(escaped[..., None], 0.0, f_new)
                if np.all(escaped):
                    t, y = t_new, y_new
                    n_steps += 1
                    break
            t, y, f = t_new, y_new, f_new
            n_steps += 1
            factor = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            h *= factor
        else:
            h *= max(0.2, 0.9 * err_norm ** -0.2) if np.isfinite(err_norm) else 0.2
    if guard is not None and np.any(escaped):
        for k in range(t_eval.size):
            late = escape_time < t_eval[k]
            if np.any(late):
                out[k][late] = np.nan
    return _Result(t_eval, out, t, y, escaped, escape_time, max_err, n_steps, h)


# ---------------------------------------------------------------------------
# Records


@dataclass
class Trajectory:
    """Solution samples; ``states`` has shape ``(len(grid), [batch,] n)``.

    Samples after an escape are NaN; ``escaped``/``escape_time`` are per
    batch member (scalars for a single initial condition).
    """

    grid: np.ndarray
    states: np.ndarray
    t0: float
    x0: np.ndarray
    rtol: float
    atol: float
    escaped: np.ndarray
    escape_time: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        states = self.states.reshape(self.grid.size, -1)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(states.shape[1])])
        for t, row in zip(self.grid, states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass
class TransitionRecord:
    grid: np.ndarray
    matrices: np.ndarray
    errors: np.ndarray

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.grid - t)))
        return self.matrices[k]


@dataclass
class QRGrowthSeries:
    """Discrete QR propagation ``Phi(t_{k+1}, t_k) Q_k = Q_{k+1} R_{k+1}``.

    ``log_growth[k, i]`` is the cumulative sum of ``ln (R_j)_{ii}``,
    ``frames[k]`` is ``Q_k`` and ``factors[k]`` is ``R_{k+1}``.
    """

    grid: np.ndarray
    log_growth: np.ndarray
    frames: np.ndarray
    factors: np.ndarray
    base_factors: np.ndarray | None = None
    gamma: float = 0.0

    def __post_init__(self):
        if self.base_factors is None:
            self.base_factors = self.factors

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.log_growth.shape[1]
        w.writerow(["t"] + [f"L{i + 1}" for i in range(n)])
        for t, row in zip(self.grid, self.log_growth):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Operations


def solve(
    sys: NonlinearSystem | LinearSystem,
    t0: float,
    x0,
    T: float,
    tol: float | None = None,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    t_eval=None,
    guard: float = ESCAPE_GUARD,
) -> Trajectory:
    """Integrate ``x' = g(t, x)`` from ``(t0, x0)`` to ``T``.

    ``x0`` may be a single state ``(n,)`` or a batch ``(m, n)``.  ``tol``,
    when given, overrides ``rtol``.  Trajectories whose norm exceeds
    ``guard`` are truncated and flagged as escaped.
    """
    if tol is not None:
        rtol = tol
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != sys.dim:
        raise ValueError(f"x0 has {x0.shape[-1]} components, system has {sys.dim}")
    if t_eval is None:
        t_eval = np.linspace(t0, T, 201)
    t_eval = np.asarray(t_eval, dtype=float)

    def fun(t, x):
        return sys.f(t, x)

    res = dopri54(fun, t0, x0, T, rtol=rtol, atol=atol, t_eval=t_eval, guard=guard)
    esc = res.escaped if x0.ndim > 1 else np.asarray(bool(res.escaped.reshape(-1)[0]) if res.escaped.size else False)
    esc_t = res.escape_time if x0.ndim > 1 else np.asarray(res.escape_time.reshape(-1)[0] if res.escape_time.size else np.nan)
    return Trajectory(t_eval, res.ys, float(t0), x0.copy(), rtol, atol, esc, esc_t)


def transition(
    sys: LinearSystem,
    t0: float,
    t1: float,
    tol: float | None = None,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    grid=None,
) -> TransitionRecord:
    """``Phi(t, t0)`` on ``grid`` (default: ``[t0, t1]``) by integrating ``X' = A X``."""
    if tol is not None:
        rtol = tol
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    n = sys.dim
    grid = np.array([t0, t1] if grid is None else grid, dtype=float)
    a = sys.a

    def fun(t, x):
        return a(t) @ x

    res = dopri54(fun, t0, np.eye(n), t1, rtol=rtol, atol=atol, t_eval=grid)
    mats = res.ys
    mats[grid == t0] = np.eye(n)
    errs = np.full(grid.size, res.max_error * rtol)
    errs[grid == t0] = 0.0
    return TransitionRecord(grid, mats, errs)


def step_propagators(
    sys: LinearSystem | MatrixFunction,
    t0: float,
    h: float,
    N: int,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> np.ndarray:
    """``Phi(t_{k+1}, t_k)`` for ``t_k = t0 + k h``, ``k < N``; shape ``(N, n, n)``.

    All cells are integrated simultaneously in local time ``s in [0, h]``.
    For shifted systems the propagators of the base system are reused:
    ``Phi_gamma = e^{-gamma h} Phi``.
    """
    a = sys.a if isinstance(sys, LinearSystem) else sys
    gamma = 0.0
    if isinstance(a, ShiftedMatrix):
        a, gamma = a.base, a.gamma
    props = _base_propagators(a, float(t0), float(h), int(N), float(rtol), float(atol))
    if gamma != 0.0:
        props = props * math.exp(-gamma * h)
    return props


@lru_cache(maxsize=64)
def _base_propagators(a: MatrixFunction, t0, h, N, rtol, atol):
    n = a.dim
    if a.is_constant:
        res = dopri54(lambda s, x: a(t0) @ x, 0.0, np.eye(n), h, rtol=rtol, atol=atol)
        out = np.broadcast_to(res.y_final, (N, n, n)).copy()
        out.setflags(write=False)
        return out
    t_left = t0 + h * np.arange(N)

    def fun(s, x):
        return np.matmul(a.local(t_left, s, h), x)

    x0 = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    res = dopri54(fun, 0.0, x0, h, rtol=rtol, atol=atol)
    out = res.y_final
    out.setflags(write=False)
    return out


def _positive_qr(z: np.ndarray):
    q, r = np.linalg.qr(z)
    s = np.sign(np.diagonal(r))
    s[s == 0] = 1.0
    return q * s, r * s[:, None]


def _givens_qr_2(props: np.ndarray, q: np.ndarray):
    """Positive-diagonal QR of ``props[k] @ Q_k`` for 2 x 2 propagators by one rotation per step."""
    N = props.shape[0]
    frames = np.empty((N + 1, 2, 2))
    factors = np.zeros((N, 2, 2))
    frames[0] = q
    P = props.tolist()
    q00, q01, q10, q11 = (float(v) for v in q.reshape(-1))
    for k in range(N):
        (p00, p01), (p10, p11) = P[k]
        a, b = p00 * q00 + p01 * q10, p00 * q01 + p01 * q11
        c, d = p10 * q00 + p11 * q10, p10 * q01 + p11 * q11
        r11 = math.hypot(a, c)
        if r11 == 0.0:
            cs, sn = 1.0, 0.0
        else:
            cs, sn = a / r11, c / r11
        r12 = cs * b + sn * d
        r22 = -sn * b + cs * d
        s2 = -1.0 if r22 < 0 else 1.0
        q00, q01, q10, q11 = cs, -sn * s2, sn, cs * s2
        frames[k + 1] = ((q00, q01), (q10, q11))
        factors[k, 0, 0], factors[k, 0, 1], factors[k, 1, 1] = r11, r12, r22 * s2
    return frames, factors


def qr_evolve(
    sys: LinearSystem,
    T: float,
    h: float = 0.05,
    *,
    t0: float = 0.0,
    Q0: np.ndarray | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> QRGrowthSeries:
    """Discrete QR iteration on the uniform grid ``t0, t0 + h, ..., t0 + N h``.

    ``R`` diagonals are made positive by column sign flips.  Shifted systems
    share the frames of their base system; only ``R`` and the log-growth
    are rescaled.
    """
    if not h > 0:
        raise ValueError("QR step must be positive")
    N = int(round((T - t0) / h))
    if N < 1:
        raise ValueError("horizon shorter than one QR step")
    n = sys.dim
    a = sys.a
    gamma = 0.0
    if isinstance(a, ShiftedMatrix):
        a, gamma = a.base, a.gamma
    q0 = np.eye(n) if Q0 is None else np.asarray(Q0, dtype=float)
    if q0.shape != (n, n) or np.max(np.abs(q0.T @ q0 - np.eye(n))) > 1e-10:
        raise ValueError("Q0 must be an orthonormal n x n matrix")
    frames, factors, logs = _base_qr(a, float(t0), float(h), N, q0.tobytes(), n, float(rtol), float(atol))
    grid = t0 + h * np.arange(N + 1)
    base_factors = factors
    if gamma != 0.0:
        factors = factors * math.exp(-gamma * h)
        logs = logs - gamma * (grid - t0)[:, None]
    return QRGrowthSeries(grid, logs, frames, factors, base_factors, gamma)


@lru_cache(maxsize=64)
def _base_qr(a, t0, h, N, q0_bytes, n, rtol, atol):
    props = _base_propagators(a, t0, h, N, rtol, atol)
    q = np.frombuffer(q0_bytes, dtype=float).reshape(n, n).copy()
    if n == 1:
        p = props[:, 0, 0]
        signs = np.where(p < 0, -1.0, 1.0)
        frames = np.empty((N + 1, 1, 1))
        frames[0] = q
        frames[1:, 0, 0] = q[0, 0] * np.cumprod(signs)
        factors = np.abs(p).reshape(N, 1, 1)
    elif n == 2:
        frames, factors = _givens_qr_2(props, q)
    else:
        frames = np.empty((N + 1, n, n))
        factors = np.empty((N, n, n))
        frames[0] = q
        for k in range(N):
            q, r = _positive_qr(props[k] @ q)
            frames[k + 1] = q
            factors[k] = r
    diag = np.diagonal(factors, axis1=1, axis2=2)
    if np.any(diag < 1e-300):
        k = int(np.argmax(np.any(diag < 1e-300, axis=1)))
        raise RankCollapseError("rank collapse in QR propagation", t0 + (k + 1) * h)
    logs = np.zeros((N + 1, n))
    logs[1:] = np.cumsum(np.log(diag), axis=0)
    for arr in (frames, factors, logs):
        arr.setflags(write=False)
    return frames, factors, logs
