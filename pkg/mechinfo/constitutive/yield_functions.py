"""
Vectorized equivalent-stress kernels on (N, 3) arrays of (s11, s22, t12).

Both criteria are written as sigma_bar(s), degree-1 homogeneous in s, so the
yield function is f = sigma_bar(s) - sigma_Y(ebar_p). Gradients are taken with
respect to (s11, s22, t12); the t12 entry is the engineering-shear flow component.
"""
from __future__ import annotations

from typing import Callable, Sequence, Tuple

import numpy as np

from ..constants import FD_GRAD_STEP, FD_HESS_STEP

_EYE3 = np.eye(3)


# --- Hill48 ---
def hill48_matrix(F: float, G: float, N: float) -> np.ndarray:
    H = 1.0 - G
    return np.array([[G + H, -H, 0.0], [-H, F + H, 0.0], [0.0, 0.0, 2.0 * N]])


def hill48_equivalent(P: np.ndarray, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    q = np.einsum("...i,ij,...j->...", s, P, s)
    return np.sqrt(np.maximum(q, 0.0))


def hill48_gradient(P: np.ndarray, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    ps = s @ P
    phi = hill48_equivalent(P, s)
    return ps / np.where(phi > 0.0, phi, 1.0)[..., None]


def hill48_hessian(P: np.ndarray, s: np.ndarray) -> np.ndarray:
    phi = hill48_equivalent(P, s)
    nrm = hill48_gradient(P, s)
    safe = np.where(phi > 0.0, phi, 1.0)
    return (P - nrm[..., :, None] * nrm[..., None, :]) / safe[..., None, None]


# --- YLD2000-2d ---
def yld2000_transforms(alpha: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """L' and L'' acting on (s11, s22, t12), standard plane-stress coefficients."""
    a1, a2, a3, a4, a5, a6, a7, a8 = (float(v) for v in alpha)
    lp = np.array(
        [
            [2.0 * a1 / 3.0, -a1 / 3.0, 0.0],
            [-a2 / 3.0, 2.0 * a2 / 3.0, 0.0],
            [0.0, 0.0, a7],
        ]
    )
    lpp = np.array(
        [
            [(-2.0 * a3 + 2.0 * a4 + 8.0 * a5 - 2.0 * a6) / 9.0, (a3 - 4.0 * a4 - 4.0 * a5 + 4.0 * a6) / 9.0, 0.0],
            [(4.0 * a3 - 4.0 * a4 - 4.0 * a5 + a6) / 9.0, (-2.0 * a3 + 8.0 * a4 + 2.0 * a5 - 2.0 * a6) / 9.0, 0.0],
            [0.0, 0.0, a8],
        ]
    )
    return lp, lpp


def yld2000_normalization(alpha: Sequence[float], a: int) -> float:
    """Uniaxial-RD sum; equals 2 exactly when the RD yield stress is sigma0."""
    a1, a2, a3, a4, a5, a6 = (float(v) for v in alpha[:6])
    return (
        abs((2.0 * a1 + a2) / 3.0) ** a
        + abs(2.0 * (a3 - a4) / 3.0) ** a
        + abs((4.0 * a5 - a6) / 3.0) ** a
    )


def _principal_pair(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    centre = 0.5 * (x[..., 0] + x[..., 1])
    radius = np.hypot(0.5 * (x[..., 0] - x[..., 1]), x[..., 2])
    return centre + radius, centre - radius


def yld2000_equivalent(lp: np.ndarray, lpp: np.ndarray, a: int, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    # homogeneity: evaluate on s / |s|_max to keep |X|^a well inside float range
    scale = np.max(np.abs(s), axis=-1)
    safe = np.where(scale > 0.0, scale, 1.0)
    u = s / safe[..., None]
    x1p, x2p = _principal_pair(u @ lp.T)
    x1pp, x2pp = _principal_pair(u @ lpp.T)
    phi = np.abs(x1p - x2p) ** a + np.abs(2.0 * x2pp + x1pp) ** a + np.abs(2.0 * x1pp + x2pp) ** a
    return np.where(scale > 0.0, safe * (0.5 * phi) ** (1.0 / a), 0.0)


# --- Finite differences ---
def fd_gradient(func: Callable[[np.ndarray], np.ndarray], s: np.ndarray, sigma_ref: float, rel_step: float = FD_GRAD_STEP) -> np.ndarray:
    """Central differences of a scalar stress function, step rel_step * sigma_ref."""
    s = np.asarray(s, dtype=float)
    h = rel_step * sigma_ref
    shifted = s[..., None, :] + h * _EYE3  # (..., 3, 3)
    back = s[..., None, :] - h * _EYE3
    return (func(shifted) - func(back)) / (2.0 * h)


def fd_hessian(func: Callable[[np.ndarray], np.ndarray], s: np.ndarray, sigma_ref: float, rel_step: float = FD_HESS_STEP) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    h = rel_step * sigma_ref
    fwd = fd_gradient(func, s[..., None, :] + h * _EYE3, sigma_ref)
    bwd = fd_gradient(func, s[..., None, :] - h * _EYE3, sigma_ref)
    hess = (fwd - bwd) / (2.0 * h)
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))
