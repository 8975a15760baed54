import numpy as np
import pytest

from sackersell.nmyc import (
    NMYCConfig,
    check_hypotheses,
    combine,
    dense_jacobian_sup,
    perturbation_theorem_experiment,
    random_perturbation,
    recover_theta,
    reduction_check,
    scalar_theorem_experiment,
    verify_uas,
)
from sackersell.systems import NonlinearSystem, as_nonlinear, builtin, constant_system

SMALL = NMYCConfig(paths=4)


def test_periodic_scalar_hypotheses():
    g = NonlinearSystem.from_strings(["(-1 + 0.25*sin(t))*x1"])
    rep = check_hypotheses(g, config=SMALL)
    assert rep.passed
    for e in rep.g4:
        for a, b in e.spectrum.intervals:
            assert -1.25 - 0.05 <= a <= b <= -0.70


def test_my1960_fails_g4():
    g = as_nonlinear(builtin("my1960"))
    rep = check_hypotheses(g, 2, NMYCConfig(seed=1))
    assert not rep.g4_passed
    assert rep.g4_margin() == pytest.approx(-0.5, abs=0.05)


def test_triangular_demo_g2():
    rep = check_hypotheses(builtin("triangular_demo"), 2)
    assert rep.g2_passed


def test_g2_detects_nonzero_origin():
    rep = check_hypotheses(NonlinearSystem.from_strings(["-x1 + 0.1"]), 1)
    assert not rep.g2_passed


def test_uas_linear_decay():
    rep = verify_uas(NonlinearSystem.from_strings(["-x1"]))
    assert rep.passed
    assert rep.K == pytest.approx(1.0, abs=0.02)
    assert rep.alpha == pytest.approx(1.0, abs=0.02)


def test_uas_my1960_fails_with_witness():
    rep = verify_uas(as_nonlinear(builtin("my1960")), x0s=[[1e-3, 0.0]], t0s=[0.0, 1.0])
    assert not rep.passed
    assert rep.witness is not None


def test_uas_triangular_demo():
    rep = verify_uas(builtin("triangular_demo"))
    assert rep.passed and rep.alpha > 0


def test_recover_theta_for_cubic():
    g = NonlinearSystem.from_strings(["-x1 - x1^3"])
    x = np.array([0.5, -1.2, 2.0])
    th, amb = recover_theta(g, np.zeros(3), x)
    # mean value: -1 - 3 theta^2 = g(x)/x = -1 - x^2  =>  |theta| = |x|/sqrt(3)
    np.testing.assert_allclose(np.abs(th), np.abs(x) / np.sqrt(3), rtol=1e-8)
    assert not amb.any()


def test_reduction_matches_solutions():
    g = NonlinearSystem.from_strings(["-x1*(1 + 0.5*cos(t)) - x1^3"])
    chk = reduction_check(g, [1.5, -0.7], [0.0, 3.0], 10.0)
    assert chk.max_relative_error <= 1e-6
    # -(1/L) int (1 + 0.5 cos + 3 theta^2) >= 1 - 0.5 * 2 / L over a window of length L = 10
    assert chk.oracle_rate >= 0.9


@pytest.mark.parametrize("rhs", ["-x1*(1 + 0.5*cos(t))", "-x1^3 - x1"])
def test_scalar_theorem_passes(rhs):
    rep = scalar_theorem_experiment(NonlinearSystem.from_strings([rhs]), NMYCConfig(paths=6))
    assert rep.claim == "asserted"
    assert rep.passed, rep.rows


def test_scalar_theorem_unstable_makes_no_claim():
    rep = scalar_theorem_experiment(NonlinearSystem.from_strings(["x1"]), NMYCConfig(paths=2))
    assert rep.claim == "none"
    assert rep.details["verdict"] == "hypotheses not satisfied"


def test_perturbation_theorem_rate():
    A = constant_system(-np.eye(2))
    f = NonlinearSystem.from_strings(["0.2*sin(x1)", "0.2*sin(x2)"])
    rep = perturbation_theorem_experiment(A, f, SMALL, K=1.0, alpha=1.0)
    assert rep.passed and rep.claim == "asserted"
    assert rep.details["stability"]["alpha"] >= 0.70


def test_perturbation_unperturbed_rate():
    A = constant_system(-np.eye(2))
    f = NonlinearSystem.from_strings(["0*x1", "0*x2"])
    rep = perturbation_theorem_experiment(A, f, SMALL, K=1.0, alpha=1.0)
    assert rep.details["stability"]["alpha"] == pytest.approx(1.0, abs=0.02)


def test_perturbation_hypothesis_violated():
    A = constant_system(-np.eye(2))
    f = NonlinearSystem.from_strings(["0.3*x1", "0.3*x2"])
    rep = perturbation_theorem_experiment(A, f, SMALL, K=1.0, alpha=1.0)
    assert rep.claim == "none"
    assert rep.details["verdict"] == "hypothesis violated"


def test_random_perturbation_respects_bound():
    for seed in range(3):
        f = random_perturbation(2, seed)
        assert dense_jacobian_sup(f, 2.0, 100.0) <= 0.2 + 1e-12


def test_combine_adds_fields():
    A = constant_system(-np.eye(2))
    f = NonlinearSystem.from_strings(["x2^2", "0*x1"])
    g = combine(A, f)
    np.testing.assert_allclose(g.f(0.0, np.array([1.0, 2.0])), [-1.0 + 4.0, -2.0])
