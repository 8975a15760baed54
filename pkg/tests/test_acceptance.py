"""Acceptance suite: the nine end-to-end criteria at their fixed tolerances.

Each experiment is run twice through the command-line interface with seed 0
and ``--no-timestamp``. Criteria 1-8 are checked against the first run's JSON
report, re-deriving what can be re-derived (eigenvalues, interval distances,
trajectories) instead of trusting the report's own ``ok`` flags. Criterion 9
compares the two runs byte for byte.

Run ``python3 tests/test_acceptance.py`` (or ``pytest tests/test_acceptance.py``)
for one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from sackersell.systems import BUILTINS, LinearSystem, builtin, constant_system, perturb
from sackersell.systems import ExprMatrix
from sackersell.spectrum import sacker_sell

pytestmark = pytest.mark.slow

EXPERIMENTS = {
    1: "autonomous",
    2: "my1960-counterexample",
    3: "shift-law",
    4: "triangular",
    5: "scalar",
    6: "perturbation",
    7: "cg-attractor",
    8: "vanishing-perturbation",
}

RUNTIME_LIMITS = {1: 120.0, 2: 30.0, 7: 60.0}


def _run(name: str) -> tuple[bytes, float, int]:
    cmd = [sys.executable, "-m", "sackersell.cli", "experiment", name, "--format", "json", "--no-timestamp"]
    start = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, timeout=1800)
    return proc.stdout, time.perf_counter() - start, proc.returncode


@pytest.fixture(scope="module")
def runs():
    """``{criterion: (first_stdout, second_stdout, first_runtime, first_rc)}``."""
    out = {}
    for k, name in EXPERIMENTS.items():
        first, elapsed, rc = _run(name)
        second, _, _ = _run(name)
        out[k] = (first, second, elapsed, rc)
    return out


def _report(runs, k):
    first, _, _, rc = runs[k]
    assert rc in (0, 1), f"experiment {EXPERIMENTS[k]} exited with {rc}"
    return json.loads(first)["report"]


def _hausdorff(A, B):
    """Hausdorff distance between two finite unions of closed intervals."""
    A = [tuple(map(float, a)) for a in A]
    B = [tuple(map(float, b)) for b in B]
    if not A and not B:
        return 0.0
    if not A or not B:
        return math.inf

    def dist(x, ivs):
        return min(max(lo - x, 0.0, x - hi) for lo, hi in ivs)

    def one_side(X, Y):
        # Distance from an interval to a union is maximized at an endpoint or at
        # a midpoint between two consecutive members of Y inside it.
        worst = 0.0
        for lo, hi in X:
            cands = [lo, hi]
            for (_, h1), (l2, _) in zip(sorted(Y), sorted(Y)[1:]):
                m = 0.5 * (h1 + l2)
                if lo <= m <= hi:
                    cands.append(m)
            worst = max(worst, max(dist(c, Y) for c in cands))
        return worst

    return max(one_side(A, B), one_side(B, A))


def _distinct(values, tol=1e-6):
    out = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


def _check_runtime(runs, k):
    if k in RUNTIME_LIMITS:
        elapsed = runs[k][2]
        assert elapsed < RUNTIME_LIMITS[k], f"runtime {elapsed:.1f}s >= {RUNTIME_LIMITS[k]}s"


def test_criterion_1_autonomous_oracle(runs):
    rep = _report(runs, 1)
    cases = rep["details"]["cases"]
    assert len(cases) == 50
    for case in cases:
        A = np.array(case["matrix"])
        assert A.shape[0] <= 4
        reals = _distinct(np.linalg.eigvals(A).real)
        assert all(abs(r) <= 3.0 for r in reals)
        assert all(b - a >= 0.3 for a, b in zip(reals, reals[1:]))
        intervals = sorted(case["intervals"])
        assert len(intervals) == len(reals), f"{intervals} vs {reals}"
        for (lo, hi), r in zip(intervals, reals):
            assert abs(lo - r) <= 0.05 and abs(hi - r) <= 0.05, f"{intervals} vs {reals}"
    _check_runtime(runs, 1)


def test_criterion_2_markus_yamabe_counterexample(runs):
    rep = _report(runs, 2)
    sys_ = builtin("my1960")
    # (a) frozen-time eigenvalues, recomputed here.
    for t in np.linspace(0.0, 2 * np.pi, 100):
        ev = np.linalg.eigvals(sys_(float(t)))
        assert np.max(np.abs(ev.real + 0.25)) <= 1e-9
    # (b) estimated spectrum from the CLI report.
    intervals = sorted(rep["details"]["spectrum"]["intervals"])
    assert len(intervals) == 2
    for (lo, hi), want in zip(intervals, (-1.0, 0.5)):
        assert abs(lo - want) <= 0.05 and abs(hi - want) <= 0.05, intervals
    # (c) escaping trajectory, integrated independently.
    sol = solve_ivp(lambda t, x: sys_(t) @ x, (0.0, 4 * np.pi), [1.0, 0.0], rtol=1e-10, atol=1e-12)
    assert np.linalg.norm(sol.y[:, -1]) >= 0.9 * np.exp(2 * np.pi)
    _check_runtime(runs, 2)


def test_criterion_3_shift_law(runs):
    rep = _report(runs, 3)
    linear = {name for name in BUILTINS if isinstance(builtin(name), LinearSystem)}
    assert set(rep["details"]["systems"]) == linear
    assert sorted(rep["details"]["gammas"]) == [-1.0, 0.5, 2.0]
    rows = rep["rows"]
    assert len(rows) == len(linear) * 3
    for row in rows:
        assert float(row["measured"]) <= 0.1, row


def test_criterion_4_triangular_union(runs):
    rep = _report(runs, 4)
    paths = rep["details"]["paths"]
    assert len(paths) == 20
    for p in paths:
        union = [iv for block in p["blocks"] for iv in block["intervals"]]
        assert _hausdorff(p["full"]["intervals"], union) <= 0.1, p["path"]
    stab = rep["details"]["stability"]
    assert stab["passed"]
    assert stab["alpha"] > 0


def test_criterion_5_scalar_theorem(runs):
    rep = _report(runs, 5)
    systems = rep["details"]["systems"]
    assert len(systems) == 10
    for s in systems:
        rows = {r["quantity"]: r for r in s["rows"]}
        assert rows["G4 max spectral endpoint"]["measured"] <= -0.3
        hyp = [r for r in s["rows"] if r["basis"] == "hypothesis"]
        assert hyp and all(r["ok"] for r in hyp)
        assert s["stability"]["passed"]
        assert abs(s["stability"]["alpha"] - s["reduction"]["oracle_rate"]) <= 0.1


def test_criterion_6_perturbation_theorem(runs):
    rep = _report(runs, 6)
    K, alpha = rep["details"]["K"], rep["details"]["alpha"]
    assert (K, alpha) == (1.0, 1.0)
    cases = rep["details"]["cases"]
    assert len(cases) == 10
    for c in cases:
        rows = {r["quantity"]: r for r in c["rows"]}
        assert rows["sup |Jf|"]["measured"] <= 0.2
        assert rows["sup |Jf|"]["measured"] < alpha / (4 * K**2)
        assert rows["alpha_hat"]["measured"] >= alpha * (1 - 1 / (4 * K)) - 0.05


def test_criterion_7_attractor(runs):
    rep = _report(runs, 7)
    sets = rep["details"]["sets"]
    assert sorted(s["lambda"] for s in sets) == [-1.0, -0.5]
    for s in sets:
        lam = s["lambda"]
        assert s["box"] == 10.0
        assert s["T"] == pytest.approx(40.0 / abs(lam))
        assert sorted(z["z0"] for z in s["per_z0"]) == [-5.0, -1.0, 0.0, 1.0, 5.0]
        for z in s["per_z0"]:
            ivs = z["spectrum"]["intervals"]
            assert len(ivs) == 1
            assert abs(ivs[0][0] - lam) <= 0.05 and abs(ivs[0][1] - lam) <= 0.05
            cert = z["certificate"]
            assert cert["verdict"] == "certified"
            assert np.allclose(cert["projector"], np.eye(len(cert["projector"])), atol=1e-9)
    traj = [r for r in rep["rows"] if "max |x(T)|" in r["quantity"]]
    assert len(traj) == 10
    assert all(r["measured"] <= 1.0 for r in traj)
    _check_runtime(runs, 7)


def test_criterion_8_vanishing_perturbation(runs):
    rep = _report(runs, 8)
    pairs = rep["details"]["pairs"]
    assert len(pairs) == 5
    for p in pairs:
        A, M = np.array(p["A"]), np.array(p["M"])
        assert np.max(np.linalg.eigvals(A).real) < 0
        assert np.linalg.norm(M, 2) <= 1.0 + 1e-9
        B = LinearSystem(ExprMatrix([[f"{float(v)!r}*exp(-t)" for v in row] for row in M]), "B")
        base = sacker_sell(constant_system(A))
        pert = sacker_sell(perturb(constant_system(A), B))
        assert _hausdorff(base.intervals, pert.intervals) <= 0.1
    for row in rep["rows"]:
        assert float(row["measured"]) <= 0.1


def test_criterion_9_reproducibility(runs):
    for k, (first, second, _, _) in runs.items():
        assert first, f"{EXPERIMENTS[k]} produced no output"
        assert first == second, f"{EXPERIMENTS[k]} output differs between runs"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
