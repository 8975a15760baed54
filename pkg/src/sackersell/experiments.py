"""Named end-to-end experiments with expected-versus-measured reports.

Every experiment is a function ``(params, seed, run) -> ExperimentReport``
where ``run`` carries the resolved spectrum and harness configuration.
Reports contain no timings, so equal inputs give byte-identical JSON.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ._parallel import pmap
from .integrate import solve
from .nmyc import (
    ExperimentReport,
    NMYCConfig,
    _r,
    _row,
    cg_attractor_experiment,
    check_hypotheses,
    perturbation_theorem_experiment,
    random_perturbation,
    random_scalar_system,
    scalar_theorem_experiment,
    verify_uas,
)
from .spectrum import SpectrumConfig, check_shift_law, check_triangular_union, check_vanishing_perturbation, hausdorff, sacker_sell
from .systems import (
    LINEAR_BUILTINS,
    ExprMatrix,
    LinearSystem,
    as_nonlinear,
    builtin,
    constant_system,
    linearize_along,
    sample_paths,
)

__all__ = ["EXPERIMENTS", "run_experiment", "random_constant_matrix", "ExperimentContext"]


@dataclass(frozen=True)
class ExperimentContext:
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    nmyc: NMYCConfig = field(default_factory=NMYCConfig)
    jobs: int = 1


def random_constant_matrix(rng: np.random.Generator, max_dim: int = 4, min_gap: float = 0.3, bound: float = 3.0):
    """Real matrix with prescribed eigenvalue real parts.

    Returns ``(A, real_parts)``; distinct real parts are at least
    ``min_gap`` apart and bounded by ``bound`` in modulus.  Complex pairs
    come from 2x2 rotation blocks; the similarity is an orthogonal matrix
    times a unit upper-triangular one, so it stays well conditioned.
    """
    while True:
        n = int(rng.integers(1, max_dim + 1))
        blocks, reals = [], []
        k = 0
        while k < n:
            if n - k >= 2 and rng.random() < 0.4:
                r = rng.uniform(-bound, bound)
                w = rng.uniform(0.3, 2.0)
                blocks.append(np.array([[r, w], [-w, r]]))
                reals.append(r)
                k += 2
            else:
                r = rng.uniform(-bound, bound)
                blocks.append(np.array([[r]]))
                reals.append(r)
                k += 1
        rs = np.sort(reals)
        if rs.size > 1 and np.min(np.diff(rs)) < min_gap:
            continue
        D = np.zeros((n, n))
        i = 0
        for b in blocks:
            m = b.shape[0]
            D[i : i + m, i : i + m] = b
            i += m
        V = np.eye(n) + 0.5 * np.triu(rng.standard_normal((n, n)), 1)
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        V = Q @ V
        return V @ D @ np.linalg.inv(V), [float(v) for v in rs]


def _num(params: Mapping, key: str, default):
    v = params.get(key, default)
    return type(default)(v) if isinstance(default, (int, float)) and not isinstance(default, bool) else v


# ---------------------------------------------------------------------------


def exp_autonomous(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    count = _num(params, "count", 50)
    rng = np.random.default_rng(seed)
    cases = [random_constant_matrix(rng) for _ in range(count)]

    def one(case):
        A, reals = case
        est = sacker_sell(constant_system(A, "random"), config=ctx.spectrum)
        ok = len(est.intervals) == len(reals) and all(
            abs(a - r) <= 0.05 and abs(b - r) <= 0.05 for (a, b), r in zip(est.intervals, reals)
        )
        return ok, est

    results = pmap(one, cases, ctx.jobs)
    worst = 0.0
    details = []
    for (A, reals), (ok, est) in zip(cases, results):
        d = hausdorff(est.intervals, [(r, r) for r in reals])
        worst = max(worst, d)
        details.append({"matrix": np.round(A, 12).tolist(), "real_parts": [_r(r) for r in reals], "intervals": est.to_dict()["intervals"], "ok": ok})
    n_ok = sum(ok for ok, _ in results)
    rows = [
        _row("matrices with one point interval per real part (within 0.05)", f"{count}/{count}", f"{n_ok}/{count}", n_ok == count, "oracle"),
        _row("worst Hausdorff distance to real parts", "<= 0.05", _r(worst), worst <= 0.05, "oracle"),
    ]
    return ExperimentReport("autonomous", all(r["ok"] for r in rows), rows, {"cases": details})


def exp_my1960(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    sys = builtin("my1960")
    ts = np.linspace(0.0, 2 * math.pi, 100)
    eig = np.linalg.eigvals(sys.a.batch(ts))
    re_err = float(np.max(np.abs(eig.real + 0.25)))
    im_err = float(np.max(np.abs(np.abs(eig.imag) - math.sqrt(7) / 4)))
    est = sacker_sell(sys, config=ctx.spectrum)
    target = [(-1.0, -1.0), (0.5, 0.5)]
    spec_ok = len(est.intervals) == 2 and all(abs(a - t) <= 0.05 and abs(b - t) <= 0.05 for (a, b), (t, _) in zip(est.intervals, target))
    tr = solve(sys, 0.0, np.array([1.0, 0.0]), 4 * math.pi, t_eval=np.array([0.0, 4 * math.pi]))
    reach = float(np.linalg.norm(tr.states[-1]))
    thresh = 0.9 * math.exp(2 * math.pi)
    nl = as_nonlinear(sys)
    uas = verify_uas(nl, x0s=np.array([[1e-3, 0.0], [1.0, 0.0]]), t0s=[0.0, 1.0], config=ctx.nmyc)
    hyp = check_hypotheses(nl, sample_paths(nl, ctx.spectrum.horizon, 1, seed=seed, mode="random"), ctx.nmyc)
    rows = [
        _row("max |Re(eig A(t)) + 1/4| at 100 times", "<= 1e-9", _r(re_err), re_err <= 1e-9, "closed form"),
        _row("max ||Im(eig A(t))| - sqrt(7)/4|", "<= 1e-9", _r(im_err), im_err <= 1e-9, "closed form"),
        _row("spectrum", "{[-1,-1],[0.5,0.5]} within 0.05", est.to_dict()["intervals"], spec_ok, "fundamental matrix"),
        _row("|x(4 pi)| from (1,0)", f">= 0.9 e^(2 pi) = {_r(thresh)}", _r(reach), reach >= thresh, "fundamental matrix"),
        _row("G4 along linearisation", "fail", "pass" if hyp.g4_passed else "fail", not hyp.g4_passed, "counterexample"),
        _row("uniform asymptotic stability", "fail", "pass" if uas.passed else "fail", not uas.passed, "counterexample"),
    ]
    details = {"spectrum": est.to_dict(), "stability": uas.to_dict()}
    return ExperimentReport("my1960-counterexample", all(r["ok"] for r in rows), rows, details)


def exp_shift_law(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    gammas = [float(g) for g in params.get("gammas", [-1.0, 0.5, 2.0])]
    rows = []
    for name in LINEAR_BUILTINS:
        sys = builtin(name)
        for g in gammas:
            ok, d = check_shift_law(sys, g, config=ctx.spectrum)
            rows.append(_row(f"{name} gamma={g:g} Hausdorff distance", "<= 0.1", _r(d), d <= 0.1, "law"))
    return ExperimentReport("shift-law", all(r["ok"] for r in rows), rows, {"gammas": gammas, "systems": list(LINEAR_BUILTINS)})


def exp_triangular(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    count = _num(params, "paths", 20)
    tri = builtin("triangular_demo", {k: v for k, v in params.items() if k == "coupling"})
    paths = sample_paths(tri, ctx.spectrum.horizon, count, seed=seed, box=ctx.nmyc.box, step=ctx.spectrum.step)

    def one(p):
        return check_triangular_union(linearize_along(tri, p), config=ctx.spectrum)

    reports = pmap(one, paths, ctx.jobs)
    worst = max(r.distance for r in reports)
    n_ok = sum(r.passed for r in reports)
    uas = verify_uas(tri, config=ctx.nmyc)
    rows = [
        _row("paths where full spectrum = union of block spectra", f"{len(paths)}/{len(paths)}", f"{n_ok}/{len(paths)}", n_ok == len(paths), "corollary"),
        _row("worst Hausdorff distance", "<= 0.1", _r(worst), worst <= 0.1, "corollary"),
        _row("uniform asymptotic stability", "pass", "pass" if uas.passed else "fail", uas.passed, "corollary"),
        _row("alpha_hat", "> 0", _r(uas.alpha), uas.alpha > 0, "corollary"),
        _row("envelope uniformity ratio (second half of t0 grid)", "<= 1.1", _r(uas.uniformity_ratio), uas.uniformity_ratio <= 1.1, "definition"),
    ]
    details = {"paths": [{"path": p.label, **r.to_dict()} for p, r in zip(paths, reports)], "stability": uas.to_dict()}
    return ExperimentReport("triangular", all(r["ok"] for r in rows), rows, details)


def exp_scalar(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    count = _num(params, "count", 10)
    rows, details = [], []
    for i in range(count):
        sys = random_scalar_system(seed * 1000 + i)
        rep = scalar_theorem_experiment(sys, ctx.nmyc)
        margin = -max(p["spectrum"]["intervals"][-1][1] for p in rep.details["hypotheses"]["G4"]["paths"])
        ok = rep.passed and rep.claim == "asserted" and margin >= 0.3
        rows.append(_row(f"{sys.label}: hypotheses, UAS, rate, reduction", "pass (G4 margin >= 0.3)", f"{'pass' if rep.passed else 'fail'} (margin {_r(margin)})", ok, "theorem"))
        details.append({"system": sys.rhs_strings(), "rows": rep.rows, "stability": rep.details.get("stability"), "reduction": rep.details.get("reduction")})
    return ExperimentReport("scalar", all(r["ok"] for r in rows), rows, {"systems": details})


def exp_perturbation(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    count = _num(params, "count", 10)
    n = _num(params, "dim", 2)
    bound = _num(params, "bound", 0.2)
    K = _num(params, "K", 1.0)
    alpha = _num(params, "alpha", 1.0)
    A = constant_system(-alpha * np.eye(n), "-alpha I")
    rows, details = [], []
    for i in range(count):
        f = random_perturbation(n, seed * 1000 + i, bound)
        rep = perturbation_theorem_experiment(A, f, ctx.nmyc, K=K, alpha=alpha)
        a_hat = rep.details.get("stability", {}).get("alpha")
        rows.append(_row(f"{f.label}: alpha_hat", f">= {_r(alpha * (1 - 1 / (4 * K)) - 0.05)}", a_hat, rep.passed and rep.claim == "asserted", "theorem"))
        details.append({"f": f.rhs_strings(), "rows": rep.rows})
    return ExperimentReport("perturbation", all(r["ok"] for r in rows), rows, {"K": K, "alpha": alpha, "cases": details})


_CG_DEFAULT_SETS = [
    {"lambda": -1.0, "a": [1.0], "b": [1.0], "g": [0.0, 1.0]},
    {"lambda": -0.5, "a": [0.0, 1.0], "b": [1.0, -1.0], "g": [0.0, 0.0, 1.0]},
]


def exp_cg(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    if any(k in params for k in ("lambda", "a", "b", "g")):
        base = dict(_CG_DEFAULT_SETS[0])
        base.update({k: params[k] for k in ("lambda", "a", "b", "g") if k in params})
        sets = [base]
    else:
        sets = _CG_DEFAULT_SETS
    z0s = [float(z) for z in params.get("z0s", [0.0, 1.0, -1.0, 5.0, -5.0])]
    rows, details = [], []
    for s in sets:
        a = [float(v) for v in np.atleast_1d(s["a"])]
        b = [float(v) for v in np.atleast_1d(s["b"])]
        g = [float(v) for v in np.atleast_1d(s["g"])]
        rep = cg_attractor_experiment(float(s["lambda"]), a, b, g, z0s, config=ctx.nmyc)
        tag = f"lambda={float(s['lambda']):g}: "
        rows += [dict(r, quantity=tag + r["quantity"]) for r in rep.rows]
        details.append(rep.details)
    return ExperimentReport("cg-attractor", all(r["ok"] for r in rows), rows, {"sets": details})


def exp_vanishing(params, seed, ctx: ExperimentContext) -> ExperimentReport:
    count = _num(params, "count", 5)
    rng = np.random.default_rng(seed)
    rows, details = [], []
    for i in range(count):
        while True:
            A, reals = random_constant_matrix(rng)
            if max(reals) <= -0.3:
                break
        n = A.shape[0]
        M = rng.standard_normal((n, n))
        M *= rng.uniform(0.1, 1.0) / np.linalg.norm(M, 2)
        B = LinearSystem(ExprMatrix([[f"{float(v)!r}*exp(-t)" for v in row] for row in M]), "e^-t M")
        ok, d = check_vanishing_perturbation(constant_system(A, "A"), B, config=ctx.spectrum)
        rows.append(_row(f"pair {i}: Hausdorff distance", "<= 0.1", _r(d), d <= 0.1, "law"))
        details.append({"A": np.round(A, 12).tolist(), "M": np.round(M, 12).tolist()})
    return ExperimentReport("vanishing-perturbation", all(r["ok"] for r in rows), rows, {"pairs": details})


EXPERIMENTS: dict[str, tuple[Callable, str]] = {
    "autonomous": (exp_autonomous, "random constant matrices: spectrum = eigenvalue real parts"),
    "my1960-counterexample": (exp_my1960, "Hurwitz at every t, yet a positive spectral interval and no UAS"),
    "shift-law": (exp_shift_law, "spectrum of A - gamma I is the spectrum of A translated by -gamma"),
    "triangular": (exp_triangular, "triangular system: full spectrum = union of block spectra, plus UAS"),
    "scalar": (exp_scalar, "scalar theorem on seeded scalar fields"),
    "perturbation": (exp_perturbation, "perturbation theorem with A = -I and random small f"),
    "cg-attractor": (exp_cg, "3-D Hurwitz field: spectrum {lambda} and global convergence"),
    "vanishing-perturbation": (exp_vanishing, "spectrum unchanged by perturbations that vanish at infinity"),
}


def run_experiment(name: str, params: Mapping | None = None, seed: int = 0, ctx: ExperimentContext | None = None) -> ExperimentReport:
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    return EXPERIMENTS[name][0](dict(params or {}), int(seed), ctx or ExperimentContext())
