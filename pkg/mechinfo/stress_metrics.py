"""
Invariants and stress-state descriptors for plane-stress tensors.

Every function accepts a single tensor (PlaneStress or a length-3 sequence
(s11, s22, t12)) or an (N, 3) array, and returns scalars or arrays to match.
Out-of-plane components are zero by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Tuple, Union

import numpy as np

from .constants import DEGENERATE_REL
from .errors import DegenerateStressError

__all__ = [
    "PlaneStress",
    "PlaneStrain",
    "StressDescriptor",
    "principal",
    "von_mises",
    "triaxiality",
    "lode_angle_parameter",
    "normalized_third_invariant",
    "describe",
    "degenerate_mask",
    "rotate",
]


@dataclass(frozen=True)
class PlaneStress:
    s11: float
    s22: float
    t12: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.s11, self.s22, self.t12)):
            raise ValueError(f"non-finite stress component in {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s11, self.s22, self.t12], dtype=float)


@dataclass(frozen=True)
class PlaneStrain:
    """Tensorial in-plane strain (e12 is half the engineering shear)."""

    e11: float
    e22: float
    e12: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e11, self.e22, self.e12], dtype=float)


@dataclass(frozen=True)
class StressDescriptor:
    s1: np.ndarray
    s2: np.ndarray
    angle: np.ndarray
    sigma_eq: np.ndarray
    eta: np.ndarray
    theta_bar: np.ndarray
    classifiable: np.ndarray

    def __len__(self) -> int:
        return int(np.size(self.s1))


TensorLike = Union[PlaneStress, PlaneStrain, np.ndarray, Any]


def as_components(s: TensorLike) -> np.ndarray:
    if isinstance(s, (PlaneStress, PlaneStrain)):
        return s.as_array()
    return np.asarray(s, dtype=float)


def _unwrap(value: np.ndarray) -> Any:
    return float(value) if np.ndim(value) == 0 else value


# --- Invariants ---
def principal(s: TensorLike) -> Tuple[Any, Any, Any]:
    """(s1, s2, angle) with s1 >= s2 and angle of the s1 axis from RD in (-pi/2, pi/2]."""
    a = as_components(s)
    s11, s22, t12 = a[..., 0], a[..., 1], a[..., 2]
    centre = 0.5 * (s11 + s22)
    radius = np.hypot(0.5 * (s11 - s22), t12)
    angle = 0.5 * np.arctan2(2.0 * t12, s11 - s22)
    angle = np.where(angle <= -0.5 * np.pi, angle + np.pi, angle)
    return _unwrap(centre + radius), _unwrap(centre - radius), _unwrap(angle)


def von_mises(s: TensorLike) -> Any:
    a = as_components(s)
    s11, s22, t12 = a[..., 0], a[..., 1], a[..., 2]
    return _unwrap(np.sqrt(np.maximum(s11 * s11 - s11 * s22 + s22 * s22 + 3.0 * t12 * t12, 0.0)))


def _require_nondegenerate(sigma_eq: np.ndarray) -> None:
    if np.any(np.asarray(sigma_eq) <= 0.0):
        raise DegenerateStressError("zero equivalent stress: eta and theta_bar are undefined")


def triaxiality(s: TensorLike) -> Any:
    a = as_components(s)
    seq = np.asarray(von_mises(a))
    _require_nondegenerate(seq)
    return _unwrap((a[..., 0] + a[..., 1]) / 3.0 / seq)


def normalized_third_invariant(s: TensorLike) -> Any:
    """xi = 27 J3 / (2 sigma_eq^3), clamped to [-1, 1]."""
    a = as_components(s)
    seq = np.asarray(von_mises(a))
    _require_nondegenerate(seq)
    s11, s22, t12 = a[..., 0], a[..., 1], a[..., 2]
    p = (s11 + s22) / 3.0
    d11, d22, d33 = s11 - p, s22 - p, -p
    j3 = d33 * (d11 * d22 - t12 * t12)
    return _unwrap(np.clip(13.5 * j3 / seq**3, -1.0, 1.0))


def _theta_bar_from_principal(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    # Lode parameter on the ordered principal triple (s1, s2, 0); equal to
    # 1 - (2/pi) arccos(xi) but exact at the uniaxial / equibiaxial corners.
    hi = np.maximum(s1, 0.0)
    lo = np.minimum(s2, 0.0)
    mid = np.where(s2 >= 0.0, s2, np.where(s1 <= 0.0, s1, 0.0))
    span = hi - lo
    safe = np.where(span > 0.0, span, 1.0)
    mu = np.where(span > 0.0, (2.0 * mid - hi - lo) / safe, 0.0)
    return -(6.0 / np.pi) * np.arctan(mu / math.sqrt(3.0))


def lode_angle_parameter(s: TensorLike) -> Any:
    a = as_components(s)
    _require_nondegenerate(np.asarray(von_mises(a)))
    s1, s2, _ = principal(a)
    return _unwrap(_theta_bar_from_principal(np.asarray(s1), np.asarray(s2)))


def degenerate_mask(sigma_eq: np.ndarray, rel: float = DEGENERATE_REL) -> np.ndarray:
    """True where a field point is too close to zero stress to classify."""
    seq = np.atleast_1d(np.asarray(sigma_eq, dtype=float))
    peak = float(seq.max()) if seq.size else 0.0
    if peak <= 0.0:
        return np.ones_like(seq, dtype=bool)
    return seq < rel * peak


def describe(stresses: TensorLike, rel: float = DEGENERATE_REL) -> StressDescriptor:
    """Vectorized descriptors over an (N, 3) field; unclassifiable rows carry NaN eta/theta_bar."""
    a = np.atleast_2d(as_components(stresses))
    s1, s2, angle = (np.asarray(v) for v in principal(a))
    seq = np.asarray(von_mises(a))
    ok = ~degenerate_mask(seq, rel)
    safe = np.where(ok, seq, 1.0)
    eta = np.where(ok, (a[:, 0] + a[:, 1]) / 3.0 / safe, np.nan)
    theta_bar = np.where(ok, _theta_bar_from_principal(s1, s2), np.nan)
    return StressDescriptor(s1, s2, angle, seq, eta, theta_bar, ok)


def rotate(s: TensorLike, phi: float) -> np.ndarray:
    """Components of the same tensor in axes rotated by phi (counter-clockwise)."""
    a = as_components(s)
    c, n = math.cos(phi), math.sin(phi)
    s11, s22, t12 = a[..., 0], a[..., 1], a[..., 2]
    r11 = c * c * s11 + n * n * s22 + 2.0 * c * n * t12
    r22 = n * n * s11 + c * c * s22 - 2.0 * c * n * t12
    r12 = c * n * (s22 - s11) + (c * c - n * n) * t12
    return np.stack([r11, r22, r12], axis=-1)
