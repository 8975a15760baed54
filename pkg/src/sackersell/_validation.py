"""Input coercion shared by the estimator classes."""
from __future__ import annotations

import numbers

import numpy as np

from .systems import LinearSystem, NonlinearSystem, SampledMatrix, as_nonlinear, constant_system


def check_linear_system(X) -> LinearSystem:
    """Accept a :class:`LinearSystem`, a constant ``(n, n)`` array or ``(times, matrices)``."""
    if isinstance(X, LinearSystem):
        return X
    if isinstance(X, tuple) and len(X) == 2:
        times, mats = X
        return LinearSystem(SampledMatrix(times, mats), "sampled")
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return constant_system(arr, "constant")


def check_system(X) -> LinearSystem | NonlinearSystem:
    """Like :func:`check_linear_system` but also passes nonlinear systems through."""
    if isinstance(X, NonlinearSystem):
        return X
    return check_linear_system(X)


def check_nonlinear_system(X) -> NonlinearSystem:
    s = check_system(X)
    return s if isinstance(s, NonlinearSystem) else as_nonlinear(s)


def check_positive(name: str, value, *, allow_none: bool = False) -> None:
    if value is None and allow_none:
        return
    if not isinstance(value, numbers.Real) or isinstance(value, bool) or not value > 0:
        raise ValueError(f"{name} must be a positive number, got {value!r}")


def check_projector(P, n: int) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape != (n, n):
        raise ValueError(f"projector must be {n}x{n}, got {P.shape}")
    if np.max(np.abs(P @ P - P)) > 1e-8 * max(1.0, float(np.max(np.abs(P)))):
        raise ValueError("P is not a projection (P^2 != P)")
    return P
