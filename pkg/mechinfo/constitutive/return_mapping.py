"""
Material-point integration: elastic response, yield evaluation and the
backward-Euler return mapping in the 3-component plane-stress space.

Strains crossing this API are tensorial (e11, e22, e12). Internally the
stiffness acts on engineering strain (e11, e22, 2 e12), the flow vector is
d sigma_bar / d(s11, s22, t12) and the plastic multiplier equals the
equivalent plastic strain increment (sigma_bar is degree-1 homogeneous).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from ..constants import (
    BRACKET_GROWTH,
    BRACKET_MAX_EXPAND,
    DEBUG,
    RETURN_MAX_ITER,
    RETURN_TOL,
)
from ..errors import ReturnMappingError
from ..stress_metrics import as_components
from .models import Hill48Swift, MaterialModel, elastic_part, is_inelastic

LOG = logging.getLogger(__name__)

_EYE3 = np.eye(3)


def engineering(eps: Any) -> np.ndarray:
    e = np.array(as_components(eps), dtype=float, copy=True)
    e[..., 2] *= 2.0
    return e


def tensorial(gamma: Any) -> np.ndarray:
    e = np.array(gamma, dtype=float, copy=True)
    e[..., 2] *= 0.5
    return e


@dataclass(frozen=True)
class MaterialState:
    """Total strain, plastic strain (tensorial) and equivalent plastic strain per point."""

    eps: np.ndarray
    eps_p: np.ndarray
    ebar_p: np.ndarray

    @classmethod
    def zeros(cls, n: Optional[int] = None) -> "MaterialState":
        if n is None:
            return cls(np.zeros(3), np.zeros(3), np.zeros(()))
        return cls(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros(n))

    def __len__(self) -> int:
        return 1 if np.ndim(self.ebar_p) == 0 else int(np.shape(self.ebar_p)[0])


@dataclass(frozen=True)
class IntegrationResult:
    state: MaterialState
    stress: np.ndarray
    tangent: np.ndarray  # (..., 3, 3), engineering Voigt
    plastic: np.ndarray  # bool mask of points that returned to the surface


# ---- Elasticity & hardening ----
def elastic_stress(m: MaterialModel, eps: Any) -> np.ndarray:
    """sigma = C eps with the plane-stress stiffness of m (or of its elastic part)."""
    return engineering(eps) @ elastic_part(m).stiffness().T


def swift_flow_stress(m: MaterialModel, ebar_p: Any) -> Any:
    if not is_inelastic(m):
        raise TypeError(f"{m.KIND} has no hardening law")
    value = m.flow_stress(ebar_p)  # type: ignore[union-attr]
    return float(value) if np.ndim(value) == 0 else value


def yield_value(m: MaterialModel, s: Any, ebar_p: Any = 0.0) -> Any:
    if not is_inelastic(m):
        raise TypeError(f"{m.KIND} has no yield function")
    value = m.equivalent_stress(as_components(s)) - m.flow_stress(ebar_p)  # type: ignore[union-attr]
    return float(value) if np.ndim(value) == 0 else value


# ---- Return mapping ----
def _hill48_return(m: Hill48Swift, C: np.ndarray, trial: np.ndarray, ebar: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed-point projection for the quadratic criterion in scalar form.

    sigma(g) = (I + g C P)^-1 sigma_trial with g = dlam / sigma_bar; solve
    r(g) = sigma_bar(sigma(g)) - sigma_Y(ebar + g sigma_bar) = 0 by bracketed Newton.
    """
    P = m.hill_matrix
    CP = C @ P

    def evaluate(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        A = _EYE3 + g[:, None, None] * CP
        sig = np.linalg.solve(A, trial[..., None])[..., 0]
        ps = sig @ P
        phi = np.sqrt(np.maximum(np.einsum("ij,ij->i", sig, ps), 1e-300))
        dl = g * phi
        r = phi - m.flow_stress(ebar + dl)
        dsig = -np.linalg.solve(A, (sig @ CP.T)[..., None])[..., 0]
        dphi = np.einsum("ij,ij->i", ps, dsig) / phi
        dr = dphi - m.hardening_modulus(ebar + dl) * (phi + g * dphi)
        return sig, phi, r, dr

    phi_tr = m.equivalent_stress(trial)
    lo = np.zeros(len(trial))
    hi = (phi_tr - m.flow_stress(ebar)) / (phi_tr * np.linalg.norm(CP, 2))
    for _ in range(BRACKET_MAX_EXPAND):
        _, _, r_hi, _ = evaluate(hi)
        open_ = r_hi > 0.0
        if not open_.any():
            break
        lo = np.where(open_, hi, lo)
        hi = np.where(open_, hi * BRACKET_GROWTH, hi)

    g = lo.copy()
    sig, phi, r, dr = evaluate(g)
    for it in range(RETURN_MAX_ITER):
        active = np.abs(r) > tol
        if not active.any():
            break
        step = g - r / np.where(dr != 0.0, dr, -1.0)
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        step = np.where(bad, 0.5 * (lo + hi), step)
        g = np.where(active, step, g)
        sig, phi, r, dr = evaluate(g)
        lo = np.where(r > 0.0, g, lo)
        hi = np.where(r < 0.0, g, hi)
        if DEBUG.trace_return_mapping:
            LOG.debug("hill48 return it=%d active=%d max|r|=%.3e", it, int(active.sum()), float(np.abs(r).max()))

    failed = np.abs(r) > tol
    if failed.any():
        raise ReturnMappingError(f"Hill48 return mapping did not converge at {int(failed.sum())} points", int(failed.sum()))
    return sig, g * phi


def _solve_at_multiplier(m: MaterialModel, C: np.ndarray, trial: np.ndarray, dl: float, tol: float) -> np.ndarray:
    """Stress satisfying sigma + dl C n(sigma) = sigma_trial for a fixed multiplier."""
    sig = trial.copy()
    for _ in range(RETURN_MAX_ITER):
        n = m.stress_gradient(sig[None])[0]
        r = sig - trial + dl * (C @ n)
        norm_r = float(np.linalg.norm(r))
        if norm_r <= tol:
            return sig
        J = _EYE3 + dl * (C @ m.stress_hessian(sig[None])[0])
        delta = np.linalg.solve(J, -r)
        lam = 1.0
        for _ in range(12):
            cand = sig + lam * delta
            rc = cand - trial + dl * (C @ m.stress_gradient(cand[None])[0])
            if np.linalg.norm(rc) < norm_r:
                break
            lam *= 0.5
        sig = cand
    return sig


def _bisection_fallback(m: MaterialModel, C: np.ndarray, trial: np.ndarray, ebar: float, tol: float) -> Tuple[np.ndarray, float]:
    """Bracket the plastic multiplier and solve the consistency condition with brentq."""

    def consistency(dl: float) -> float:
        sig = _solve_at_multiplier(m, C, trial, dl, tol)
        return float(m.equivalent_stress(sig) - m.flow_stress(ebar + dl))

    f0 = consistency(0.0)
    hi = max(f0, tol) / float(np.max(np.abs(C)))
    for _ in range(BRACKET_MAX_EXPAND):
        if consistency(hi) < 0.0:
            break
        hi *= BRACKET_GROWTH
    else:
        raise ReturnMappingError("could not bracket the plastic multiplier", 1)
    dl = brentq(consistency, 0.0, hi, xtol=1e-14, maxiter=200)
    return _solve_at_multiplier(m, C, trial, dl, tol), dl


def _general_return(m: MaterialModel, C: np.ndarray, trial: np.ndarray, ebar: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Newton on (sigma, dlam) for any homogeneous criterion, bisection fallback per point."""
    npt = len(trial)
    sig = trial.copy()
    dl = np.zeros(npt)
    J = np.zeros((npt, 4, 4))
    conv = np.zeros(npt, dtype=bool)
    for it in range(RETURN_MAX_ITER + 1):
        n = m.stress_gradient(sig)
        cn = n @ C.T
        r1 = sig - trial + dl[:, None] * cn
        r2 = m.equivalent_stress(sig) - m.flow_stress(ebar + dl)
        conv = (np.linalg.norm(r1, axis=1) <= tol) & (np.abs(r2) <= tol)
        if conv.all() or it == RETURN_MAX_ITER:
            break
        M = m.stress_hessian(sig)
        J[:, :3, :3] = _EYE3 + dl[:, None, None] * np.einsum("ij,njk->nik", C, M)
        J[:, :3, 3] = cn
        J[:, 3, :3] = n
        J[:, 3, 3] = -m.hardening_modulus(ebar + dl)
        rhs = -np.concatenate([r1, r2[:, None]], axis=1)
        with np.errstate(all="ignore"):
            delta = np.linalg.solve(J, rhs[..., None])[..., 0]
        ok = np.all(np.isfinite(delta), axis=1) & ~conv
        sig = np.where(ok[:, None], sig + delta[:, :3], sig)
        dl = np.where(ok, np.maximum(dl + delta[:, 3], 0.0), dl)

    stuck = np.flatnonzero(~conv)
    if stuck.size:
        if DEBUG.trace_return_mapping:
            LOG.debug("return mapping fallback at %d points", stuck.size)
        for i in stuck:
            sig[i], dl[i] = _bisection_fallback(m, C, trial[i], float(ebar[i]), tol)
    return sig, dl


def _consistent_tangent(m: MaterialModel, C: np.ndarray, sig: np.ndarray, dl: np.ndarray, ebar_new: np.ndarray) -> np.ndarray:
    n = m.stress_gradient(sig)
    M = m.stress_hessian(sig)
    xi = np.linalg.inv(np.linalg.inv(C)[None] + dl[:, None, None] * M)
    xn = np.einsum("nij,nj->ni", xi, n)
    denom = np.einsum("ni,ni->n", n, xn) + m.hardening_modulus(ebar_new)
    return xi - xn[:, :, None] * xn[:, None, :] / denom[:, None, None]


def integrate(m: MaterialModel, state: MaterialState, eps_new: Any) -> IntegrationResult:
    """Stress, updated state and algorithmic tangent at total strain eps_new."""
    single = np.ndim(state.ebar_p) == 0
    eps_n = np.atleast_2d(np.asarray(eps_new, dtype=float))
    eps_p = np.atleast_2d(state.eps_p)
    ebar = np.atleast_1d(np.asarray(state.ebar_p, dtype=float))
    C = elastic_part(m).stiffness()
    trial = (engineering(eps_n) - engineering(eps_p)) @ C.T
    npt = len(trial)
    tangent = np.broadcast_to(C, (npt, 3, 3)).copy()
    plastic = np.zeros(npt, dtype=bool)
    stress = trial
    eps_p_new, ebar_new = eps_p, ebar

    if is_inelastic(m):
        tol = RETURN_TOL * m.sigma0  # type: ignore[union-attr]
        f_trial = m.equivalent_stress(trial) - m.flow_stress(ebar)  # type: ignore[union-attr]
        plastic = f_trial > tol
        if plastic.any():
            idx = np.flatnonzero(plastic)
            if isinstance(m, Hill48Swift):
                sig_p, dl_p = _hill48_return(m, C, trial[idx], ebar[idx], tol)
            else:
                sig_p, dl_p = _general_return(m, C, trial[idx], ebar[idx], tol)
            flow = m.stress_gradient(sig_p)  # type: ignore[union-attr]
            stress = trial.copy()
            stress[idx] = sig_p
            eps_p_new = eps_p.copy()
            eps_p_new[idx] = eps_p[idx] + tensorial(dl_p[:, None] * flow)
            ebar_new = ebar.copy()
            ebar_new[idx] = ebar[idx] + dl_p
            tangent[idx] = _consistent_tangent(m, C, sig_p, dl_p, ebar_new[idx])

    new_state = MaterialState(eps_n.copy(), eps_p_new, ebar_new)
    if single:
        new_state = MaterialState(new_state.eps[0], new_state.eps_p[0], new_state.ebar_p[0])
        return IntegrationResult(new_state, stress[0], tangent[0], plastic[0])
    return IntegrationResult(new_state, stress, tangent, plastic)


def integrate_step(m: MaterialModel, state: MaterialState, deps: Any) -> Tuple[MaterialState, np.ndarray]:
    """Backward-Euler update for a strain increment; returns (state', stress)."""
    d = as_components(deps)
    if not np.all(np.isfinite(d)):
        raise ValueError("strain increment must be finite")
    res = integrate(m, state, np.asarray(state.eps) + d)
    return res.state, res.stress


# ---- Material-point driver ----
def stress_rotation(angle: float) -> np.ndarray:
    """T with sigma_local = T sigma for axes rotated by angle from RD."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array(
        [
            [c * c, s * s, 2.0 * c * s],
            [s * s, c * c, -2.0 * c * s],
            [-c * s, c * s, c * c - s * s],
        ]
    )


@dataclass(frozen=True)
class UniaxialPath:
    axial_strain: np.ndarray
    axial_stress: np.ndarray
    ebar_p: np.ndarray
    lateral_strain: np.ndarray  # engineering width strain in the loading frame
    stress: np.ndarray  # global components per step


def drive_uniaxial(m: MaterialModel, angle: float, strain: float, n_steps: int, lateral_tol: float = 1e-9) -> UniaxialPath:
    """
    Strain-driven uniaxial stress path along `angle` from RD.

    Axial strain is prescribed; the width and shear strains of the loading
    frame are iterated until the lateral stresses vanish.
    """
    T = stress_rotation(angle)
    scale = m.sigma0 if is_inelastic(m) else 1.0  # type: ignore[union-attr]
    state = MaterialState.zeros()
    local = np.zeros(3)  # engineering strain in the loading frame
    rows = []
    for k in range(1, n_steps + 1):
        local[0] = strain * k / n_steps
        for _ in range(RETURN_MAX_ITER):
            res = integrate(m, state, tensorial(T.T @ local))
            sig_local = T @ res.stress
            lateral = sig_local[1:]
            if np.max(np.abs(lateral)) <= lateral_tol * scale:
                break
            J = (T @ res.tangent @ T.T)[1:, 1:]
            local[1:] += np.linalg.solve(J, -lateral)
        else:
            raise ReturnMappingError(f"lateral stress did not vanish at step {k}")
        state = res.state
        rows.append((local[0], sig_local[0], float(state.ebar_p), local[1], res.stress.copy()))
    ax, sx, eb, lat, st = zip(*rows)
    return UniaxialPath(np.array(ax), np.array(sx), np.array(eb), np.array(lat), np.array(st))
