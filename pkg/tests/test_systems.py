import numpy as np
import pytest

from sackersell.expr import parse
from sackersell.systems import (
    LINEAR_BUILTINS,
    NonlinearSystem,
    PathSample,
    as_nonlinear,
    builtin,
    constant_system,
    linearize_along,
    reduce_cg,
    sample_paths,
    shift,
)


def test_my1960_at_zero():
    np.testing.assert_allclose(builtin("my1960")(0.0), [[0.5, 1.0], [-1.0, -1.0]], atol=1e-15)


def test_my1960_eigenvalues_are_constant():
    A = builtin("my1960")
    for t in np.linspace(0, 20, 50):
        ev = np.linalg.eigvals(A(t))
        np.testing.assert_allclose(ev.real, [-0.25, -0.25], atol=1e-12)
        np.testing.assert_allclose(sorted(ev.imag), [-np.sqrt(7) / 4, np.sqrt(7) / 4], atol=1e-12)


def test_my1960_closed_form_solves_the_system():
    A = builtin("my1960")
    Phi = builtin("my1960_exact_fundamental")
    for t in [0.0, 0.7, 3.0, 10.0]:
        h = 1e-6
        dphi = (Phi(t + h) - Phi(t - h)) / (2 * h)
        np.testing.assert_allclose(dphi, A(t) @ Phi(t), rtol=1e-6, atol=1e-6 * np.abs(Phi(t)).max())


def test_scalar_decay():
    s = builtin("scalar_decay", **{"lambda": -1})
    assert s.dim == 1
    assert s(3.0)[0, 0] == -1.0


def test_cg_reduced_at_zero():
    C = builtin("cg_reduced", **{"lambda": -1, "a": [1], "b": [1], "g": [0, 1], "z0": 1})
    np.testing.assert_allclose(C(0.0), [[-2.0, -1.0], [1.0, 0.0]], atol=1e-14)


def test_cg_reduction_trace_and_limit():
    red = reduce_cg(-1.0, [1], [1], [0, 1], 1.0)
    for t in np.linspace(0, 10, 21):
        C = red.system(t)
        assert np.trace(C) == pytest.approx(-2.0, abs=1e-12)
        assert np.abs(C - np.diag([-1.0, -1.0])).max() <= 2 * np.exp(-t) + 1e-15


def test_cg_reduction_without_coupling_is_diagonal():
    red = reduce_cg(-1.0, [1], [1], [0], 1.0)
    for t in [0.0, 1.0, 5.0]:
        np.testing.assert_allclose(red.system(t), np.diag([-1.0, -1.0]), atol=0)


def test_cg_reduction_rejects_bad_input():
    with pytest.raises(ValueError):
        reduce_cg(1.0, [1], [1], [0, 1], 1.0)
    with pytest.raises(ValueError):
        reduce_cg(-1.0, [1], [1], [0, 1], 0.0)


def test_shift_examples():
    s = shift(builtin("scalar_decay", **{"lambda": -1}), -1)
    assert s(2.0)[0, 0] == 0.0
    m = builtin("my1960")
    for t in [0.0, 1.3]:
        np.testing.assert_array_equal(shift(m, 0)(t), m(t))
    d = shift(constant_system(np.diag([-1.0, -2.0])), 0.5)
    np.testing.assert_allclose(d(4.0), np.diag([-1.5, -2.5]), atol=0)


@pytest.mark.parametrize("name", LINEAR_BUILTINS)
def test_shift_composes_additively(name):
    s = builtin(name)
    rng = np.random.default_rng(3)
    for g1, g2 in rng.uniform(-3, 3, size=(5, 2)):
        a = shift(shift(s, g1), g2)
        b = shift(s, g1 + g2)
        for t in rng.uniform(0, 50, 10):
            np.testing.assert_allclose(a(t), b(t), rtol=0, atol=1e-12)


def test_linearize_scalar_at_zero_path():
    g = NonlinearSystem.from_strings(["-x1 + 0.1*sin(x1)"])
    zero = PathSample("expression", exprs=(parse("0", ["t"]),))
    lin = linearize_along(g, zero)
    for t in [0.0, 5.0]:
        assert lin(t)[0, 0] == pytest.approx(-0.9, abs=1e-15)


def test_linear_system_as_nonlinear_recovers_matrix():
    m = builtin("my1960")
    g = as_nonlinear(m)
    paths = sample_paths(g, 10.0, 3, seed=1, mode="random")
    for p in paths:
        lin = linearize_along(g, p)
        for t in [0.1, 2.3, 7.7]:
            np.testing.assert_allclose(lin(t), m(t), atol=1e-12)


def test_triangular_demo_jacobian_is_upper_triangular():
    g = builtin("triangular_demo")
    for p in sample_paths(g, 20.0, 6, seed=2):
        lin = linearize_along(g, p)
        for t in np.linspace(0, 20, 15):
            assert lin(t)[1, 0] == 0.0


def test_sample_paths_zero_solution():
    g = builtin("triangular_demo")
    (p,) = sample_paths(g, 10.0, 1, seed=0, mode="solutions", x0s=[[0.0, 0.0]])
    np.testing.assert_array_equal(p(np.linspace(0, 10, 11)), 0.0)


def test_sample_paths_deterministic_and_in_box():
    g = builtin("triangular_demo")
    a = sample_paths(g, 30.0, 50, seed=7, mode="random", box=2.0)
    b = sample_paths(g, 30.0, 50, seed=7, mode="random", box=2.0)
    assert len(a) == 50
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.times, q.times)
        np.testing.assert_array_equal(p.values, q.values)
        assert p.max_abs() <= 2.0


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin("nope")
