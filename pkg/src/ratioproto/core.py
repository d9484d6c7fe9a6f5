"""Distances, centering and aggregates shared by the rest of the package.

Everything here works in float64. ``euclidean_distance`` adds a tiny
stabilizer under the square root so that the distance (and its gradient) is
defined when two points coincide.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

#: Added to the squared Euclidean distance before the square root.
DIST_EPS = 1e-10

_UNIT_TOL = 1e-6


def as_vector(u, name: str = "u") -> np.ndarray:
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_matrix(X, name: str = "X") -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def euclidean_distance(u, v) -> float:
    """Stabilized Euclidean distance ``sqrt(sum((u - v)**2) + 1e-10)``."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    diff = u - v
    return math.sqrt(float(diff @ diff) + DIST_EPS)


def pairwise_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Stabilized distances between every row of ``A`` and every row of ``B``.

    Computed from explicit differences rather than the ``|a|^2 + |b|^2 - 2ab``
    expansion, which loses precision for nearby points.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[-1] != B.shape[-1]:
        raise ValueError(f"dimension mismatch: {A.shape[-1]} vs {B.shape[-1]}")
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff) + DIST_EPS)


def _check_unit(u: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(u, axis=-1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise ValueError(f"{name} must be unit-norm (within {_UNIT_TOL})")


def angular_distance(u, v) -> float:
    """Angle in radians between two unit vectors."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    _check_unit(u, "u")
    _check_unit(v, "v")
    return math.acos(min(1.0, max(-1.0, float(u @ v))))


def angular_distances(points: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Angles between every row of ``points`` and every row of ``refs``."""
    points = np.asarray(points, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.float64)
    _check_unit(points, "points")
    _check_unit(refs, "refs")
    return np.arccos(np.clip(points @ refs.T, -1.0, 1.0))


def mean_center(X) -> np.ndarray:
    """Subtract the column means so the average row sits at the origin."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("mean_center needs a non-empty two-dimensional matrix")
    return X - X.mean(axis=0, keepdims=True)


def geometric_mean(xs: Sequence[float]) -> float:
    arr = np.asarray(xs, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("geometric_mean of an empty sequence")
    if np.any(~(arr > 0)):
        raise ValueError("geometric_mean requires strictly positive entries")
    if np.all(arr == arr[0]):
        return float(arr[0])
    return float(np.exp(np.mean(np.log(arr))))
