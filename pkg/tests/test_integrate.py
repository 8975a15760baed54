import numpy as np
import pytest

from sackersell.integrate import qr_evolve, solve, transition
from sackersell.systems import NonlinearSystem, builtin, constant_system


def test_exponential_decay():
    s = builtin("scalar_decay")
    tr = solve(s, 0.0, [1.0], 1.0, rtol=1e-10, atol=1e-14)
    assert tr.states[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-8)


def test_my1960_solution_grows():
    tr = solve(builtin("my1960"), 0.0, [1.0, 0.0], 4 * np.pi, rtol=1e-10, atol=1e-14)
    assert np.linalg.norm(tr.states[-1]) >= 0.9 * np.exp(2 * np.pi)


def test_cg_field_third_component():
    g = builtin("cg_field", **{"lambda": -1, "a": [1], "b": [1], "g": [0, 1]})
    tr = solve(g, 0.0, [1.0, -2.0, 0.5], 5.0, rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(tr.states[:, 2], 0.5 * np.exp(-tr.grid), atol=1e-8)


def test_escape_is_flagged_not_raised():
    g = NonlinearSystem.from_strings(["x1^2"])
    tr = solve(g, 0.0, [1.0], 2.0)
    assert bool(tr.escaped)
    assert float(tr.escape_time) < 1.0 + 1e-3
    assert np.isnan(tr.states[-1, 0])


def test_transition_diagonal():
    rec = transition(constant_system(np.diag([-1.0, -2.0])), 0.0, 1.0, rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(rec.matrices[-1], np.diag([np.exp(-1), np.exp(-2)]), atol=1e-8)
    np.testing.assert_array_equal(rec.matrices[0], np.eye(2))


def test_transition_my1960_against_closed_form():
    rec = transition(builtin("my1960"), 0.0, 2 * np.pi, rtol=1e-12, atol=1e-14)
    want = np.array([[np.exp(np.pi), 0.0], [0.0, np.exp(-2 * np.pi)]])
    np.testing.assert_allclose(rec.matrices[-1], want, rtol=1e-6, atol=1e-6 * np.exp(np.pi))


def test_transition_cocycle():
    s = builtin("my1960")
    rng = np.random.default_rng(4)
    for _ in range(20):
        t0, t1, t2 = np.sort(rng.uniform(0, 6, 3))
        a = transition(s, t1, t2, rtol=1e-12, atol=1e-14).matrices[-1]
        b = transition(s, t0, t1, rtol=1e-12, atol=1e-14).matrices[-1]
        c = transition(s, t0, t2, rtol=1e-12, atol=1e-14).matrices[-1]
        np.testing.assert_allclose(a @ b, c, rtol=1e-7, atol=1e-8 * np.abs(c).max())


def test_qr_diagonal_rates():
    q = qr_evolve(constant_system(np.diag([-1.0, -2.0])), 50.0)
    rates = sorted(q.log_growth[-1] / q.grid[-1])
    np.testing.assert_allclose(rates, [-2.0, -1.0], atol=1e-6)


def test_qr_my1960_rates():
    q = qr_evolve(builtin("my1960"), 100.0)
    np.testing.assert_allclose(q.log_growth[-1] / 100.0, [0.5, -1.0], atol=2e-2)


def test_qr_scalar_matches_integral():
    from sackersell.systems import LinearSystem, ExprMatrix

    s = LinearSystem(ExprMatrix([["-1 + 0.5*sin(t)"]]))
    q = qr_evolve(s, 20.0)
    exact = -q.grid + 0.5 * (1 - np.cos(q.grid))
    np.testing.assert_allclose(q.log_growth[:, 0], exact, atol=1e-7)
