"""Linear and nonlinear nonautonomous systems, built-in examples and paths."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import Expression, ExprDomainError, differentiate, parse
from .linalg import spectral_norm

__all__ = [
    "MatrixFunction",
    "ExprMatrix",
    "SampledMatrix",
    "ShiftedMatrix",
    "SumMatrix",
    "PathJacobianMatrix",
    "LinearSystem",
    "NonlinearSystem",
    "FundamentalMatrix",
    "PathSample",
    "CGReduction",
    "BUILTINS",
    "builtin",
    "shift",
    "perturb",
    "constant_system",
    "reduce_cg",
    "as_nonlinear",
    "linearize_along",
    "sample_paths",
    "state_names",
]


def state_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


# ---------------------------------------------------------------------------
# Matrix functions


class MatrixFunction:
    """Square-matrix valued function of time on ``[t_min, inf)``.

    Subclasses implement :meth:`batch`; ``local`` is the hook used by the
    cell-wise propagator integration (see :func:`sackersell.integrate.step_propagators`).
    """

    dim: int
    t_min: float = 0.0

    def batch(self, ts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def local(self, t_left: np.ndarray, s: float, h: float) -> np.ndarray:
        return self.batch(np.asarray(t_left) + s)

    def __call__(self, t: float) -> np.ndarray:
        return self.batch(np.array([float(t)]))[0]

    @property
    def is_constant(self) -> bool:
        return False


class ExprMatrix(MatrixFunction):
    def __init__(self, entries: Sequence[Sequence[Expression | str]], t_min: float = 0.0):
        rows = [[e if isinstance(e, Expression) else parse(str(e), ["t"]) for e in row] for row in entries]
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("expression matrix must be square and non-empty")
        for r in rows:
            for e in r:
                extra = e.free_variables - {"t"}
                if extra:
                    raise ValueError(f"matrix entry {e} depends on {sorted(extra)}; only t is allowed")
        self.entries = tuple(tuple(r) for r in rows)
        self.dim = n
        self.t_min = float(t_min)
        self._funcs = [[e.vectorized() for e in r] for r in self.entries]
        self._const = all(e.is_constant for r in rows for e in r)
        self._const_value = None

    @property
    def is_constant(self) -> bool:
        return self._const

    def batch(self, ts):
        ts = np.asarray(ts, dtype=float)
        if self._const:
            if self._const_value is None:
                self._const_value = np.array([[f({}) for f in r] for r in self._funcs], dtype=float)
            return np.broadcast_to(self._const_value, ts.shape + (self.dim, self.dim)).copy()
        out = np.empty(ts.shape + (self.dim, self.dim))
        b = {"t": ts}
        for i, r in enumerate(self._funcs):
            for j, f in enumerate(r):
                out[..., i, j] = f(b)
        return out

    def to_strings(self) -> list[list[str]]:
        return [[str(e) for e in r] for r in self.entries]


class SampledMatrix(MatrixFunction):
    """Linear interpolation between knots; held constant outside the knot range."""

    def __init__(self, times: Sequence[float], matrices: Sequence, t_min: float | None = None):
        times = np.asarray(times, dtype=float)
        mats = np.asarray(matrices, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("sampled matrix needs at least 2 knots")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if mats.ndim != 3 or mats.shape[0] != times.size or mats.shape[1] != mats.shape[2]:
            raise ValueError("matrices must have shape (knots, n, n)")
        if not np.all(np.isfinite(mats)):
            raise ValueError("sampled matrices must be finite")
        self.times = times
        self.values = mats
        self.dim = mats.shape[1]
        self.t_min = float(times[0] if t_min is None else t_min)

    def batch(self, ts):
        ts = np.asarray(ts, dtype=float)
        flat = ts.reshape(-1)
        k = np.clip(np.searchsorted(self.times, flat, side="right") - 1, 0, self.times.size - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        w = np.clip((flat - t0) / (t1 - t0), 0.0, 1.0)[:, None, None]
        out = (1.0 - w) * self.values[k] + w * self.values[k + 1]
        return out.reshape(ts.shape + (self.dim, self.dim))


class ShiftedMatrix(MatrixFunction):
    """``A(t) - gamma I``; kept symbolic so propagators of ``A`` can be reused."""

    def __init__(self, base: MatrixFunction, gamma: float):
        self.base = base
        self.gamma = float(gamma)
        self.dim = base.dim
        self.t_min = base.t_min

    @property
    def is_constant(self) -> bool:
        return self.base.is_constant

    def batch(self, ts):
        return self.base.batch(ts) - self.gamma * np.eye(self.dim)

    def local(self, t_left, s, h):
        return self.base.local(t_left, s, h) - self.gamma * np.eye(self.dim)


class TranslatedMatrix(MatrixFunction):
    """``t -> A(t + tau)``: the same system observed from time ``tau`` on."""

    def __init__(self, base: MatrixFunction, tau: float):
        self.base = base
        self.tau = float(tau)
        self.dim = base.dim
        self.t_min = 0.0

    @property
    def is_constant(self) -> bool:
        return self.base.is_constant

    def batch(self, ts):
        return self.base.batch(np.asarray(ts, dtype=float) + self.tau)

    def local(self, t_left, s, h):
        return self.base.local(np.asarray(t_left, dtype=float) + self.tau, s, h)


class SumMatrix(MatrixFunction):
    def __init__(self, parts: Sequence[MatrixFunction]):
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ValueError("summands must share a dimension")
        self.parts = tuple(parts)
        self.dim = dims.pop()
        self.t_min = max(p.t_min for p in parts)

    @property
    def is_constant(self) -> bool:
        return all(p.is_constant for p in self.parts)

    def batch(self, ts):
        return sum(p.batch(ts) for p in self.parts)

    def local(self, t_left, s, h):
        return sum(p.local(t_left, s, h) for p in self.parts)


class PathJacobianMatrix(MatrixFunction):
    """``t -> Jg(t, y(t))`` for a nonlinear system and a path."""

    def __init__(self, system: "NonlinearSystem", path: "PathSample"):
        if path.dim != system.dim:
            raise ValueError("path and system dimensions differ")
        self.system = system
        self.path = path
        self.dim = system.dim
        self.t_min = 0.0

    def _jac(self, ts, ys):
        try:
            return self.system.jacobian(ts, ys)
        except ExprDomainError as exc:
            bad = _first_bad_time(self.system, ts, ys)
            raise ExprDomainError(f"Jacobian domain error at t={bad:.6g}: {exc}") from exc

    def batch(self, ts):
        ts = np.asarray(ts, dtype=float)
        return self._jac(ts, self.path(ts))

    def local(self, t_left, s, h):
        t_left = np.asarray(t_left, dtype=float)
        return self._jac(t_left + s, self.path.in_cell(t_left, s, h))


def _first_bad_time(system, ts, ys):
    flat_t = np.broadcast_to(ts, ys.shape[:-1]).reshape(-1)
    flat_y = ys.reshape(-1, ys.shape[-1])
    for t, y in zip(flat_t, flat_y):
        try:
            system.jacobian(np.array(t), y)
        except ExprDomainError:
            return float(t)
    return float("nan")


# ---------------------------------------------------------------------------
# Systems


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``x' = A(t) x``."""

    a: MatrixFunction
    label: str = "linear"

    @property
    def dim(self) -> int:
        return self.a.dim

    def __call__(self, t: float) -> np.ndarray:
        return self.a(t)

    def f(self, t, x):
        x = np.asarray(x, dtype=float)
        ts = np.asarray(t, dtype=float)
        if ts.ndim == 0:
            return x @ self.a(float(ts)).T
        return np.einsum("...ij,...j->...i", self.a.batch(ts), x)

    def jacobian(self, t, x):
        x = np.asarray(x, dtype=float)
        ts = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
        return self.a.batch(ts)

    @property
    def is_triangular_form(self) -> bool:
        return isinstance(self.a, ExprMatrix) and all(
            self.a.entries[i][j].is_constant and self.a.entries[i][j]() == 0.0 for i in range(self.dim) for j in range(i)
        )


@dataclass(frozen=True, eq=False)
class NonlinearSystem:
    """``x' = g(t, x)`` with expression right-hand side over ``t, x1..xn``."""

    rhs: tuple[Expression, ...]
    jacobian_exprs: tuple[tuple[Expression, ...], ...] = field(default=())
    label: str = "nonlinear"
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.rhs)
        if n == 0:
            raise ValueError("system must have at least one equation")
        env = ["t"] + state_names(n)
        for e in self.rhs:
            extra = e.free_variables - set(env)
            if extra:
                raise ValueError(f"rhs {e} uses undeclared variables {sorted(extra)}")
        if not self.jacobian_exprs:
            jac = tuple(tuple(differentiate(_reenv(e, env), x) for x in env[1:]) for e in self.rhs)
            object.__setattr__(self, "jacobian_exprs", jac)
        elif len(self.jacobian_exprs) != n or any(len(r) != n for r in self.jacobian_exprs):
            raise ValueError("jacobian must be n x n")
        object.__setattr__(self, "_f", [e.vectorized() for e in self.rhs])
        object.__setattr__(self, "_j", [[e.vectorized() for e in r] for r in self.jacobian_exprs])

    @classmethod
    def from_strings(cls, rhs: Sequence[str], label: str = "nonlinear", jacobian=None, params=None):
        env = ["t"] + state_names(len(rhs))
        exprs = tuple(parse(s, env) for s in rhs)
        jac = ()
        if jacobian is not None:
            jac = tuple(tuple(parse(s, env) for s in row) for row in jacobian)
        return cls(exprs, jac, label, dict(params or {}))

    @property
    def dim(self) -> int:
        return len(self.rhs)

    def _bindings(self, t, x):
        x = np.asarray(x, dtype=float)
        b = {"t": np.asarray(t, dtype=float)}
        for i, name in enumerate(state_names(self.dim)):
            b[name] = x[..., i]
        return x, b

    def f(self, t, x):
        x, b = self._bindings(t, x)
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(b["t"]))
        out = np.empty(shape + (self.dim,))
        for i, fi in enumerate(self._f):
            out[..., i] = fi(b)
        return out

    def jacobian(self, t, x):
        x, b = self._bindings(t, x)
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(b["t"]))
        out = np.empty(shape + (self.dim, self.dim))
        for i, row in enumerate(self._j):
            for j, fij in enumerate(row):
                out[..., i, j] = fij(b)
        return out

    def rhs_strings(self) -> list[str]:
        return [str(e) for e in self.rhs]


def _reenv(e: Expression, env) -> Expression:
    return Expression(e.ast, env)


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    """A closed-form fundamental matrix ``Phi(t)`` used as an oracle."""

    phi: ExprMatrix
    label: str

    @property
    def dim(self) -> int:
        return self.phi.dim

    def __call__(self, t: float) -> np.ndarray:
        return self.phi(t)

    def transition(self, t: float, s: float) -> np.ndarray:
        return self.phi(t) @ np.linalg.inv(self.phi(s))


def constant_system(m, label: str = "constant") -> LinearSystem:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return LinearSystem(ExprMatrix([[repr(float(v)) if v >= 0 else f"-{repr(float(-v))}" for v in row] for row in m]), label)


def shift(sys: LinearSystem, gamma: float) -> LinearSystem:
    """The shifted system ``x' = [A(t) - gamma I] x``."""
    gamma = float(gamma)
    a = sys.a
    base, total = (a.base, a.gamma + gamma) if isinstance(a, ShiftedMatrix) else (a, gamma)
    label = sys.label.split("@shift=")[0]
    return LinearSystem(ShiftedMatrix(base, total), f"{label}@shift={total:g}")


def translate(sys: LinearSystem, tau: float) -> LinearSystem:
    """The system ``x' = A(t + tau) x`` (time origin moved to ``tau``)."""
    tau = float(tau)
    if tau == 0.0:
        return sys
    a = sys.a
    if isinstance(a, TranslatedMatrix):
        a, tau = a.base, a.tau + tau
    return LinearSystem(TranslatedMatrix(a, tau), f"{sys.label}@from={tau:g}")


def perturb(sys: LinearSystem, pert: LinearSystem) -> LinearSystem:
    """``x' = [A(t) + B(t)] x``."""
    return LinearSystem(SumMatrix([sys.a, pert.a]), f"{sys.label}+{pert.label}")


def as_nonlinear(sys: LinearSystem) -> NonlinearSystem:
    """View an expression-backed linear system as ``g(t, x) = A(t) x``."""
    if not isinstance(sys.a, ExprMatrix):
        raise TypeError("only expression-backed linear systems can be rewritten as nonlinear systems")
    names = state_names(sys.dim)
    rhs = []
    for row in sys.a.to_strings():
        rhs.append(" + ".join(f"({entry})*{x}" for entry, x in zip(row, names)))
    return NonlinearSystem.from_strings(rhs, label=sys.label)


# ---------------------------------------------------------------------------
# Paths


@dataclass(frozen=True, eq=False)
class PathSample:
    """A measurable path ``t -> y(t)`` used to build linearisations.

    ``kind`` is ``"solution"`` (linear interpolation of a trajectory),
    ``"piecewise-constant"`` (value ``values[k]`` on ``[times[k], times[k+1])``)
    or ``"expression"``.
    """

    kind: str
    times: np.ndarray | None = None
    values: np.ndarray | None = None
    exprs: tuple[Expression, ...] = ()
    seed: int | None = None
    label: str = ""

    @property
    def dim(self) -> int:
        return len(self.exprs) if self.kind == "expression" else self.values.shape[1]

    def __call__(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.kind == "expression":
            out = np.empty(ts.shape + (self.dim,))
            for i, e in enumerate(self.exprs):
                out[..., i] = e.vectorized()({"t": ts})
            return out
        if self.kind == "piecewise-constant":
            k = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, len(self.times) - 1)
            return self.values[k]
        out = np.empty(ts.shape + (self.dim,))
        for i in range(self.dim):
            out[..., i] = np.interp(ts, self.times, self.values[:, i])
        return out

    def in_cell(self, t_left, s, h):
        """Path value inside the open cell ``(t_left, t_left + h)`` at offset ``s``.

        For piecewise-constant paths whose switch times lie on the cell lattice
        this is the left limit at the right cell edge.
        """
        if self.kind == "piecewise-constant":
            return self(np.asarray(t_left) + 0.5 * h)
        return self(np.asarray(t_left) + s)

    def max_abs(self) -> float:
        if self.kind == "expression":
            return float("nan")
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# Linearisation and path sampling


def linearize_along(sys: NonlinearSystem | LinearSystem, path: PathSample) -> LinearSystem:
    """The variational system ``z' = Jg(t, y(t)) z`` along ``path``."""
    if isinstance(sys, LinearSystem):
        return sys
    return LinearSystem(PathJacobianMatrix(sys, path), f"{sys.label}|{path.label or path.kind}")


def sample_paths(
    sys: NonlinearSystem,
    horizon: float,
    count: int,
    seed: int = 0,
    *,
    mode: str = "mixed",
    box: float | Sequence[float] = 2.0,
    x0s: Sequence[Sequence[float]] | None = None,
    exprs: Sequence[Sequence[str]] = (),
    step: float = 0.05,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> list[PathSample]:
    """Deterministic family of paths on ``[0, horizon]``.

    ``mode`` is ``"solutions"``, ``"random"`` or ``"mixed"`` (half each,
    solutions first).  Random paths are piecewise constant with exponential
    (mean 1) switching times rounded up to multiples of ``step`` and values
    uniform in ``[-box, box]^n``.  Expression paths from ``exprs`` are
    appended.
    """
    from .integrate import solve

    if count < 1:
        raise ValueError("count must be >= 1")
    n = sys.dim
    lo, hi = _box(box, n)
    rng = np.random.default_rng(seed)
    if mode == "solutions":
        n_sol, n_rand = count, 0
    elif mode == "random":
        n_sol, n_rand = 0, count
    elif mode == "mixed":
        n_sol = (count + 1) // 2
        n_rand = count - n_sol
    else:
        raise ValueError(f"unknown path mode {mode!r}")

    paths: list[PathSample] = []
    if n_sol:
        if x0s is None:
            x0s = _grid_points(lo, hi, n_sol, rng)
        x0s = np.asarray(x0s, dtype=float).reshape(-1, n)[:n_sol]
        grid = np.arange(0.0, horizon + 0.5 * step, step)
        traj = solve(sys, 0.0, x0s, horizon, rtol=rtol, atol=atol, t_eval=grid)
        for k in range(x0s.shape[0]):
            vals = traj.states[:, k, :]
            times = traj.grid
            if traj.escaped[k]:
                continue
            paths.append(PathSample("solution", times, vals, label=f"solution[{k}]"))
    for k in range(n_rand):
        knots = [0.0]
        while knots[-1] < horizon:
            dt = max(step, math.ceil(rng.exponential(1.0) / step) * step)
            knots.append(round(knots[-1] + dt, 12))
        knots = np.array(knots[:-1])
        values = rng.uniform(lo, hi, size=(knots.size, n))
        paths.append(PathSample("piecewise-constant", knots, values, seed=seed, label=f"random[{k}]"))
    env = ["t"]
    for k, row in enumerate(exprs):
        paths.append(PathSample("expression", exprs=tuple(parse(s, env) for s in row), label=f"expr[{k}]"))
    return paths


def _box(box, n):
    b = np.asarray(box, dtype=float)
    if b.ndim == 0:
        return -abs(float(b)) * np.ones(n), abs(float(b)) * np.ones(n)
    b = b.reshape(-1)
    if b.size == 2:
        return b[0] * np.ones(n), b[1] * np.ones(n)
    raise ValueError("box must be a half-width or a (lo, hi) pair")


def _grid_points(lo, hi, m, rng):
    n = lo.size
    per = max(2, math.ceil(m ** (1.0 / n)))
    axes = [np.linspace(lo[i], hi[i], per) for i in range(n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    order = rng.permutation(len(pts))
    return pts[order[:m]]


# ---------------------------------------------------------------------------
# Built-in registry


def _poly_str(coeffs, var: str) -> str:
    if isinstance(coeffs, (int, float)):
        coeffs = [coeffs]
    terms = []
    for k, c in enumerate(coeffs):
        c = float(c)
        if c == 0.0:
            continue
        mono = "" if k == 0 else (var if k == 1 else f"{var}^{k}")
        cs = repr(abs(c))
        body = cs if not mono else (mono if abs(c) == 1.0 else f"{cs}*{mono}")
        terms.append(("-" if c < 0 else "+", body))
    if not terms:
        return "0"
    text = ("-" if terms[0][0] == "-" else "") + terms[0][1]
    for sign, body in terms[1:]:
        text += f" {sign} {body}"
    return f"({text})"


def _poly_list(value, name) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, str):
        return [float(v) for v in value.strip("[]").split(",") if v.strip()]
    try:
        return [float(v) for v in value]
    except TypeError:
        raise ValueError(f"parameter {name!r} must be a number or a coefficient list") from None


def _cg_params(params):
    p = dict(params or {})
    lam = float(p.pop("lambda", p.pop("lam", -1.0)))
    if not lam < 0:
        raise ValueError("lambda must be negative")
    a = _poly_list(p.pop("a", [1.0]), "a")
    b = _poly_list(p.pop("b", [1.0]), "b")
    g = _poly_list(p.pop("g", [0.0, 1.0]), "g")
    return lam, a, b, g, p


@dataclass(frozen=True, eq=False)
class CGReduction:
    """Planar reduction ``C(t) = lam I + C0(t)`` of the 3-D field."""

    system: LinearSystem
    perturbation: LinearSystem
    lam: float
    z0: float
    c0_norms: np.ndarray
    c0_times: np.ndarray


def reduce_cg(lam: float, a, b, g, z0: float) -> CGReduction:
    """Planar linear system solved by ``(x, y)`` when ``z(t) = z0 e^{lam t}``."""
    lam = float(lam)
    if not lam < 0:
        raise ValueError("lambda must be negative")
    if z0 == 0:
        raise ValueError("z0 = 0 is the trivial branch (x' = lam x); no reduction needed")
    z = f"({float(z0)!r}*exp({lam!r}*t))"
    A, B, G = (_poly_str(_poly_list(c, nm), z) for c, nm in ((a, "a"), (b, "b"), (g, "g")))
    c0 = [
        [f"-{A}*{B}*{G}", f"-{B}^2*{G}"],
        [f"{A}^2*{G}", f"{A}*{B}*{G}"],
    ]
    lam_s = repr(lam)
    c = [
        [f"{lam_s} - {A}*{B}*{G}", f"-{B}^2*{G}"],
        [f"{A}^2*{G}", f"{lam_s} + {A}*{B}*{G}"],
    ]
    label = f"cg_reduced(lambda={lam:g},z0={z0:g})"
    system = LinearSystem(ExprMatrix(c), label)
    pert = LinearSystem(ExprMatrix(c0), label + ".C0")
    # ||C0|| must vanish: check the tail of a log grid is non-increasing and tiny
    ts = np.concatenate([[0.0], np.logspace(-2, math.log10(60.0 / abs(lam)), 80)])
    norms = spectral_norm(pert.a.batch(ts))
    tail = norms[len(norms) // 2 :]
    if not (np.all(np.diff(tail) <= 1e-12 * (1 + norms.max())) and tail[-1] <= 1e-8 * (1 + norms.max())):
        raise ValueError("C0(t) does not vanish as t grows; need g(0) a(0) = g(0) b(0) = 0")
    return CGReduction(system, pert, lam, float(z0), norms, ts)


def _my1960(params):
    return LinearSystem(
        ExprMatrix(
            [
                ["-1 + 1.5*cos(t)^2", "1 - 1.5*cos(t)*sin(t)"],
                ["-1 - 1.5*cos(t)*sin(t)", "-1 + 1.5*sin(t)^2"],
            ]
        ),
        "my1960",
    )


def _my1960_exact(params):
    return FundamentalMatrix(
        ExprMatrix(
            [
                ["exp(t/2)*cos(t)", "exp(-t)*sin(t)"],
                ["-exp(t/2)*sin(t)", "exp(-t)*cos(t)"],
            ]
        ),
        "my1960_exact_fundamental",
    )


def _scalar_decay(params):
    lam = float(dict(params or {}).get("lambda", -1.0))
    return LinearSystem(ExprMatrix([[repr(lam) if lam >= 0 else f"-{-lam!r}"]]), "scalar_decay")


def _triangular_demo(params):
    p = dict(params or {})
    c = float(p.get("coupling", 0.5))
    return NonlinearSystem.from_strings(
        [
            f"-(1 + 0.5*sin(t)^2)*x1 + 0.25*sin(x1) + {c!r}*sin(x2)",
            "-(1.5 + 0.5*cos(t))*x2 - 0.5*sin(x2)",
        ],
        label="triangular_demo",
        params={"coupling": c},
    )


def _cg_field(params):
    lam, a, b, g, _ = _cg_params(params)
    A, B, G = (_poly_str(c, "x3") for c in (a, b, g))
    s = f"{G}*({A}*x1 + {B}*x2)"
    lam_s = repr(lam)
    return NonlinearSystem.from_strings(
        [f"{lam_s}*x1 - {s}*{B}", f"{lam_s}*x2 + {s}*{A}", f"{lam_s}*x3"],
        label="cg_field",
        params={"lambda": lam, "a": a, "b": b, "g": g},
    )


def _cg_reduced(params):
    lam, a, b, g, rest = _cg_params(params)
    z0 = float(rest.get("z0", 1.0))
    red = reduce_cg(lam, a, b, g, z0)
    return LinearSystem(red.system.a, "cg_reduced")


BUILTINS: dict[str, tuple[Callable, str]] = {
    "my1960": (_my1960, "planar periodic system with Hurwitz A(t) and an unbounded solution"),
    "my1960_exact_fundamental": (_my1960_exact, "closed-form fundamental matrix of my1960"),
    "scalar_decay": (_scalar_decay, "x' = lambda x (param lambda, default -1)"),
    "triangular_demo": (_triangular_demo, "2-D upper-triangular nonlinear system satisfying G1-G4"),
    "cg_field": (_cg_field, "3-D Hurwitz field lambda I + H (params lambda, a, b, g as coefficient lists)"),
    "cg_reduced": (_cg_reduced, "planar reduction C(t) of cg_field (params lambda, a, b, g, z0)"),
}

LINEAR_BUILTINS = ("my1960", "scalar_decay", "cg_reduced")


def builtin(name: str, params: Mapping[str, object] | None = None, **kw):
    """Instantiate a registry system; ``label`` is the registry name."""
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
    p = dict(params or {})
    p.update(kw)
    return BUILTINS[name][0](p)
