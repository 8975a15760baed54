"""Norm helpers shared by every module.

All matrix norms are spectral (largest singular value).
"""
from __future__ import annotations

import numpy as np


def spectral_norm(m: np.ndarray) -> np.ndarray:
    """Spectral norm of a matrix or of a stack of matrices ``(..., p, q)``."""
    m = np.asarray(m, dtype=float)
    if m.shape[-1] == 0 or m.shape[-2] == 0:
        return np.zeros(m.shape[:-2])
    if m.shape[-1] == 1 or m.shape[-2] == 1:
        return np.sqrt(np.sum(m * m, axis=(-2, -1)))
    if not np.all(np.isfinite(m)):
        out = np.full(m.shape[:-2], np.inf)
        ok = np.all(np.isfinite(m), axis=(-2, -1))
        if np.any(ok):
            out[ok] = np.linalg.norm(m[ok], ord=2, axis=(-2, -1))
        return out
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


def vector_norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
