import numpy as np
import pytest

from sackersell.dichotomy import (
    CERTIFIED,
    REFUTED,
    DichotomyConfig,
    estimate_projector,
    fit_certificate,
    has_dichotomy,
    roughness_bounds,
)
from sackersell.systems import builtin, constant_system, shift


def test_projector_for_saddle():
    P = estimate_projector(constant_system(np.diag([-1.0, 1.0])))
    np.testing.assert_allclose(P, np.diag([1.0, 0.0]), atol=1e-8)


def test_projector_my1960_has_rank_one():
    P = estimate_projector(builtin("my1960"))
    assert round(np.trace(P)) == 1
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    # stable direction at t = 0 is the e^{-t} column of the closed form, (0, 1)
    np.testing.assert_allclose(P, np.diag([0.0, 1.0]), atol=1e-6)


def test_projector_uniformly_stable_is_identity():
    P = estimate_projector(constant_system(np.diag([-1.0, -2.0])))
    np.testing.assert_allclose(P, np.eye(2), atol=1e-10)


def test_certificate_diagonal_identity_projector():
    cert = fit_certificate(constant_system(np.diag([-1.0, -2.0])), np.eye(2))
    assert cert.verdict == CERTIFIED
    assert 0.9 - 1e-9 <= cert.alpha <= 1.0
    assert 1.0 <= cert.K <= 1.1


def test_certificate_my1960_identity_projector_refuted():
    assert fit_certificate(builtin("my1960"), np.eye(2)).verdict == REFUTED


def test_certificate_scalar_decay():
    cert = fit_certificate(builtin("scalar_decay"), np.eye(1))
    assert cert.certified
    assert 0.9 - 1e-9 <= cert.alpha <= 1.0
    assert cert.K == pytest.approx(1.0, abs=0.05)


def test_zero_rate_is_not_certified():
    verdict, _ = has_dichotomy(shift(builtin("scalar_decay"), -1.0))
    assert verdict != CERTIFIED


def test_shifted_my1960_rank_examples():
    m = builtin("my1960")
    v, cert = has_dichotomy(shift(m, 2.0))
    assert v == CERTIFIED and cert.rank == 2
    np.testing.assert_allclose(cert.projector, np.eye(2), atol=1e-12)
    v, cert = has_dichotomy(shift(m, -2.0))
    assert v == CERTIFIED and cert.rank == 0
    np.testing.assert_allclose(cert.projector, np.zeros((2, 2)), atol=1e-12)


@pytest.mark.parametrize("K, alpha, coppel, wiggins", [(1, 1, 0.25, 0.5), (2, 1, 0.0625, 0.25), (1, 0.5, 0.125, 0.25)])
def test_roughness_bounds(K, alpha, coppel, wiggins):
    rb = roughness_bounds(K=K, alpha=alpha)
    assert rb.coppel == pytest.approx(coppel)
    assert rb.wiggins == pytest.approx(wiggins)


def test_roughness_requires_certified():
    cert = fit_certificate(builtin("my1960"), np.eye(2))
    with pytest.raises(ValueError):
        roughness_bounds(cert)


def test_autonomous_rank_and_rate():
    rng = np.random.default_rng(8)
    for _ in range(6):
        n = int(rng.integers(1, 4))
        re = rng.choice([-2.0, -1.2, -0.5, 0.5, 1.3], size=n, replace=False)
        Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
        A = Q @ np.diag(re) @ Q.T
        v, cert = has_dichotomy(constant_system(A), config=DichotomyConfig(horizon=40.0))
        delta = np.min(np.abs(re))
        assert v == CERTIFIED
        assert cert.rank == int(np.sum(re < 0))
        assert cert.alpha >= 0.8 * delta


def test_certificate_to_dict_is_json_ready():
    import json

    cert = fit_certificate(builtin("scalar_decay"), np.eye(1))
    json.dumps(cert.to_dict(), allow_nan=False)
