"""Rotation-group kinematics shared by the rod and beam solvers.

Skew matrices are identified with vectors through hat(w) x = w x x.  All
routines accept stacked inputs (leading batch axes) and are written against
float64 throughout.
"""

from __future__ import annotations

import numpy as np

# Below this angle the trigonometric coefficients switch to series form.
_SMALL_ANGLE = 1e-4
# Adjacent-node rotation increments at or beyond this angle are rejected.
MAX_LOG_ANGLE = np.pi - 1e-7


class RotationResolutionError(RuntimeError):
    """Relative rotation too large for the matrix logarithm to be trusted."""


def hat(w: np.ndarray) -> np.ndarray:
    """Map vectors (..., 3) to skew matrices (..., 3, 3), hat(w) x = w x x."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee(A: np.ndarray) -> np.ndarray:
    """Inverse of hat on skew matrices; antisymmetrizes first."""
    A = np.asarray(A, dtype=float)
    return 0.5 * np.stack(
        [
            A[..., 2, 1] - A[..., 1, 2],
            A[..., 0, 2] - A[..., 2, 0],
            A[..., 1, 0] - A[..., 0, 1],
        ],
        axis=-1,
    )


def _sinc(theta: np.ndarray) -> np.ndarray:
    # sin(t)/t with series fallback
    small = np.abs(theta) < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    return np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / t)


def _cosc(theta: np.ndarray) -> np.ndarray:
    # (1 - cos t)/t^2 with series fallback
    small = np.abs(theta) < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    return np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(t)) / (t * t))


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of vectors (..., 3) into SO(3)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    W = hat(w)
    W2 = W @ W
    a = _sinc(theta)[..., None, None]
    b = _cosc(theta)[..., None, None]
    return np.eye(3) + a * W + b * W2


def log_so3(R: np.ndarray) -> np.ndarray:
    """Principal logarithm of rotations (..., 3, 3) as vectors (..., 3).

    Raises RotationResolutionError once the rotation angle reaches pi; the
    callers always work with adjacent-node increments where that signals an
    under-resolved grid rather than a legitimate state.
    """
    R = np.asarray(R, dtype=float)
    tr = np.trace(R, axis1=-2, axis2=-1)
    c = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    if np.any(theta >= MAX_LOG_ANGLE):
        raise RotationResolutionError(
            f"relative rotation angle {float(np.max(theta)):.6f} rad reaches pi; "
            "refine the grid"
        )
    axis2 = vee(R)  # = sin(theta) * unit axis
    # theta / sin(theta), series near zero
    small = theta < _SMALL_ANGLE
    s = np.where(small, 1.0, np.sin(np.where(small, 1.0, theta)))
    t2 = theta * theta
    factor = np.where(small, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0, theta / s)
    return factor[..., None] * axis2


def right_jacobian(w: np.ndarray) -> np.ndarray:
    """J_r with exp(hat(w + d)) = exp(hat(w)) exp(hat(J_r(w) d)) + O(|d|^2)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    W = hat(w)
    W2 = W @ W
    small = theta < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    c1 = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(t)) / (t * t))
    c2 = np.where(small, 1.0 / 6.0 - t2 / 120.0, (t - np.sin(t)) / (t * t * t))
    return np.eye(3) - c1[..., None, None] * W + c2[..., None, None] * W2


def right_jacobian_inv(w: np.ndarray) -> np.ndarray:
    """Inverse of right_jacobian, in closed form."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    W = hat(w)
    W2 = W @ W
    small = theta < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    # 1/t^2 - (1 + cos t) / (2 t sin t), series 1/12 + t^2/720 + ...
    c = np.where(
        small,
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
        1.0 / (t * t) - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t)),
    )
    return np.eye(3) + 0.5 * W + c[..., None, None] * W2


def polar_rotation(F: np.ndarray) -> np.ndarray:
    """Nearest rotation(s) to matrices (..., 3, 3) in the Frobenius metric.

    Requires det F > 0 so the projection lands in SO(3) and is unique.
    """
    F = np.asarray(F, dtype=float)
    det = np.linalg.det(F)
    if np.any(det <= 0.0):
        raise ValueError(
            f"polar projection needs det F > 0, got min det {float(np.min(det)):.3e}"
        )
    U, _, Vt = np.linalg.svd(F)
    R = U @ Vt
    # SVD of a positive-determinant matrix can still return det(U Vt) = -1
    # when numerical ties reorder singular vectors; fix the sign explicitly.
    bad = np.linalg.det(R) < 0.0
    if np.any(bad):
        U = U.copy()
        U[bad, ..., :, 2] *= -1.0
        R = U @ Vt
    return R


def project_rotation(R: np.ndarray) -> np.ndarray:
    """Re-orthonormalize near-rotations; used to kill accumulation drift."""
    return polar_rotation(R)


def orthogonality_defect(R: np.ndarray) -> float:
    """max |R^T R - Id| over the stack, an invariant-check helper."""
    R = np.asarray(R, dtype=float)
    G = np.swapaxes(R, -1, -2) @ R - np.eye(3)
    return float(np.max(np.abs(G)))


def geodesic_interpolate(Ra: np.ndarray, Rb: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Point(s) at parameter s in [0, 1] on the geodesic from Ra to Rb."""
    w = log_so3(np.swapaxes(Ra, -1, -2) @ Rb)
    s = np.asarray(s, dtype=float)[..., None]
    return Ra @ exp_so3(s * w)


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """n Haar-ish rotations from Gaussian QR, adequate for invariance tests."""
    A = rng.standard_normal((n, 3, 3))
    Q, R = np.linalg.qr(A)
    # make the factorization unique (positive diagonal), then fix orientation
    sign = np.sign(np.einsum("nii->ni", R))
    sign[sign == 0.0] = 1.0
    Q = Q * sign[:, None, :]
    neg = np.linalg.det(Q) < 0.0
    Q[neg, :, 2] *= -1.0
    return Q
