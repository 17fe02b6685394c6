"""Input validation helpers, in the spirit of sklearn.utils.validation.

All helpers return validated (and possibly copied) numpy arrays so callers
can rely on dtype, shape and finiteness afterwards.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

ROTATION_ATOL = 1e-9


def check_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite values")
    return a


def check_vector3(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValidationError(f"{name} must have shape (3,), got {v.shape}")
    return check_finite(v, name)


def check_points(points, name: str = "points", allow_empty: bool = True) -> np.ndarray:
    """Coerce to an (N, 3) float64 array of finite coordinates."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValidationError(f"{name} must have shape (N, 3), got {pts.shape}")
    if not allow_empty and pts.shape[0] == 0:
        raise ValidationError(f"{name} must not be empty")
    return check_finite(pts, name)


def rotation_defect(r: np.ndarray) -> float:
    """Max-norm deviation of R^T R from the identity."""
    return float(np.abs(r.T @ r - np.eye(3)).max())


def check_rotation(r, name: str = "rotation", atol: float = ROTATION_ATOL) -> np.ndarray:
    """Validate a proper rotation matrix (orthonormal, det +1) within atol."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValidationError(f"{name} must have shape (3, 3), got {r.shape}")
    check_finite(r, name)
    defect = rotation_defect(r)
    if defect > atol:
        raise ValidationError(
            f"{name} is not orthonormal: max |R^T R - I| = {defect:.3e} > {atol:.1e}"
        )
    if np.linalg.det(r) < 0.0:
        raise ValidationError(f"{name} has negative determinant (improper rotation)")
    return r


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a near-rotation 3x3 matrix onto SO(3) via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def check_raster(a, name: str = "raster") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def check_mask_bits(bits, name: str = "mask") -> np.ndarray:
    """Coerce to a 2-D boolean raster; reject anything not strictly 0/1."""
    bits = check_raster(bits, name)
    if bits.dtype != np.bool_:
        unique = np.unique(bits)
        if not np.isin(unique, (0, 1)).all():
            raise ValidationError(f"{name} holds values other than 0/1: {unique[:8]}")
        bits = bits.astype(bool)
    return bits


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "rasters") -> None:
    if a.shape != b.shape:
        from .errors import ConsistencyError

        raise ConsistencyError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def readonly(a: np.ndarray) -> np.ndarray:
    """Return a C-contiguous copy flagged read-only (for immutable value types)."""
    out = np.ascontiguousarray(a).copy()
    out.setflags(write=False)
    return out
