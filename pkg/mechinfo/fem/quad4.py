"""Bilinear 4-node plane-stress quadrilateral with 2x2 Gauss integration."""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

_G = 1.0 / math.sqrt(3.0)
GAUSS_POINTS = np.array([(-_G, -_G), (_G, -_G), (_G, _G), (-_G, _G)])
GAUSS_WEIGHTS = np.ones(4)
N_GAUSS = 4

_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


def shape_functions(xi: float, eta: float) -> np.ndarray:
    return 0.25 * (1.0 + _XI * xi) * (1.0 + _ETA * eta)


def shape_derivatives(xi: float, eta: float) -> np.ndarray:
    """(2, 4): d N / d(xi, eta)."""
    return 0.25 * np.array([_XI * (1.0 + _ETA * eta), _ETA * (1.0 + _XI * xi)])


_DN = np.stack([shape_derivatives(xi, eta) for xi, eta in GAUSS_POINTS])  # (4 gp, 2, 4 nodes)
_N = np.stack([shape_functions(xi, eta) for xi, eta in GAUSS_POINTS])  # (4 gp, 4 nodes)


def jacobians(coords: np.ndarray) -> np.ndarray:
    """(ne, 4 gp, 2, 2) for element node coordinates (ne, 4, 2)."""
    return np.einsum("gan,enb->egab", _DN, coords)


def b_matrices(coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Strain-displacement matrices (ne, 4, 3, 8) mapping element dofs
    (u1x, u1y, ..., u4x, u4y) to engineering strain, and det J (ne, 4).
    """
    J = jacobians(coords)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    safe = np.where(det != 0.0, det, 1.0)
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / safe
    inv[..., 1, 1] = J[..., 0, 0] / safe
    inv[..., 0, 1] = -J[..., 0, 1] / safe
    inv[..., 1, 0] = -J[..., 1, 0] / safe
    dndx = np.einsum("egab,gbn->egan", inv, _DN)  # (ne, 4, 2, 4)
    ne = coords.shape[0]
    B = np.zeros((ne, N_GAUSS, 3, 8))
    B[:, :, 0, 0::2] = dndx[:, :, 0]
    B[:, :, 1, 1::2] = dndx[:, :, 1]
    B[:, :, 2, 0::2] = dndx[:, :, 1]
    B[:, :, 2, 1::2] = dndx[:, :, 0]
    return B, det


def gauss_coordinates(coords: np.ndarray) -> np.ndarray:
    return np.einsum("gn,enb->egb", _N, coords)


def element_dofs(elements: np.ndarray) -> np.ndarray:
    """(ne, 8) global dof indices, x before y per node."""
    return np.stack([2 * elements, 2 * elements + 1], axis=-1).reshape(len(elements), 8)


def element_areas(coords: np.ndarray) -> np.ndarray:
    _, det = b_matrices(coords)
    return det @ GAUSS_WEIGHTS
