from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from ..errors import LocusError
from .models import Hill48Swift, MaterialModel, is_inelastic
from .return_mapping import stress_rotation

PLANES = ("s11-s22", "s22-t12")


def uniaxial_direction(theta: Any) -> np.ndarray:
    """Global components of a unit uniaxial stress at angle theta from RD."""
    t = np.asarray(theta, dtype=float)
    c, s = np.cos(t), np.sin(t)
    return np.stack([c * c, s * s, s * c], axis=-1)


def _require_inelastic(m: MaterialModel) -> None:
    if not is_inelastic(m):
        raise TypeError(f"{m.KIND} has no yield surface")


def _hill48_closed_form(m: Hill48Swift, theta: np.ndarray) -> np.ndarray:
    s2 = np.sin(theta) ** 2
    c2 = np.cos(theta) ** 2
    H = m.H
    return ((m.F + H) * s2 * s2 + (m.G + H) * c2 * c2 + (2.0 * m.N - 2.0 * H) * s2 * c2) ** -0.5


def _numeric_ratio(m: MaterialModel, theta: float) -> float:
    d = uniaxial_direction(theta)
    sigma0 = m.sigma0  # type: ignore[union-attr]

    def f(scale: float) -> float:
        return float(m.equivalent_stress(scale * d) - sigma0)  # type: ignore[union-attr]

    hi = 2.0 * sigma0
    for _ in range(60):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise LocusError(f"no yield point along theta={theta:.6g} rad")
    return brentq(f, 0.0, hi, xtol=1e-14 * sigma0, rtol=1e-15, maxiter=200) / sigma0


def normalized_yield_stress(m: MaterialModel, theta: Union[float, Sequence[float], np.ndarray], method: str = "auto") -> Any:
    """
    Uniaxial yield stress at angle theta (rad) from RD, divided by sigma0.

    method: "auto" (closed form for Hill48, root finding otherwise),
            "closed_form" (Hill48 only) or "numeric".
    """
    _require_inelastic(m)
    t = np.asarray(theta, dtype=float)
    if method not in ("auto", "closed_form", "numeric"):
        raise ValueError(f"unknown method {method!r}")
    if method == "closed_form" and not isinstance(m, Hill48Swift):
        raise ValueError("closed form exists for Hill48 only")
    if isinstance(m, Hill48Swift) and method != "numeric":
        out = _hill48_closed_form(m, t)
    else:
        out = np.vectorize(lambda v: _numeric_ratio(m, float(v)), otypes=[float])(t)
    return float(out) if out.ndim == 0 else out


def yield_stress_table(m: MaterialModel, angles_deg: Sequence[float]) -> np.ndarray:
    """Un-normalized uniaxial yield stresses (MPa) at the given angles in degrees."""
    ratio = normalized_yield_stress(m, np.radians(np.asarray(angles_deg, dtype=float)))
    return np.asarray(ratio) * m.sigma0  # type: ignore[union-attr]


@dataclass(frozen=True)
class YieldLocus:
    plane: str
    ray_angles: np.ndarray
    radii: np.ndarray
    points: np.ndarray  # (n + 1, 2), closed

    def area(self) -> float:
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * abs(float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1])))


def ray_directions(plane: str, ray_angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(ray_angles), np.sin(ray_angles)
    zero = np.zeros_like(c)
    if plane == "s11-s22":
        return np.stack([c, s, zero], axis=-1)
    if plane == "s22-t12":
        return np.stack([zero, c, s], axis=-1)
    raise ValueError(f"unknown plane {plane!r}; expected one of {PLANES}")


def yield_locus(m: MaterialModel, plane: str, n_points: int, quadrant: bool = False) -> YieldLocus:
    """
    Initial yield surface (ebar_p = 0) sampled along n_points rays.

    The criterion is degree-1 homogeneous, so the root along ray d is
    sigma0 * d / sigma_bar(d).
    """
    _require_inelastic(m)
    if n_points < 16:
        raise ValueError("n_points must be at least 16")
    if quadrant:
        angles = np.linspace(0.0, 0.5 * math.pi, n_points)
    else:
        angles = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    d = ray_directions(plane, angles)
    seq = np.asarray(m.equivalent_stress(d))  # type: ignore[union-attr]
    if not np.all(np.isfinite(seq)) or np.any(seq <= 0.0):
        raise LocusError(f"{m.KIND}: non-positive equivalent stress on a ray; parameter set is not positive definite")
    radii = m.sigma0 / seq  # type: ignore[union-attr]
    coords = d * radii[:, None]
    pts = coords[:, :2] if plane == "s11-s22" else coords[:, 1:]
    if not quadrant:
        pts = np.vstack([pts, pts[:1]])
    return YieldLocus(plane, angles, radii, pts)


def lankford(m: MaterialModel, theta: float) -> float:
    """r-value: width over thickness plastic strain rate under uniaxial stress at theta."""
    _require_inelastic(m)
    d = uniaxial_direction(theta)[None]
    flow = m.stress_gradient(d)[0]  # type: ignore[union-attr]
    local = np.linalg.inv(stress_rotation(theta)).T @ flow  # engineering strain rates in the loading frame
    thickness = -(flow[0] + flow[1])
    return float(local[1] / thickness)
