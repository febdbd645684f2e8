"""
Implicit quasi-static plane-stress solver.

Each load increment is a backward-Euler step: prescribed dofs move to their
new values, nodal loads grow with t, a predictor with the last converged tangent
relaxes the free dofs and Newton iterations with the consistent tangent
restore equilibrium. Failed increments are halved up to MAX_HALVINGS times.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from ..constants import (
    DEBUG,
    DEFAULT_DISPLACEMENT,
    DEFAULT_ELEMENT_SIZE,
    DEFAULT_N_STEPS,
    MAX_HALVINGS,
    NEWTON_ATOL,
    NEWTON_MAX_ITER,
    NEWTON_RTOL,
)
from ..constitutive import MaterialModel, MaterialState, integrate, tensorial
from ..errors import ConfigError, ReturnMappingError, SolverDivergenceError
from ..events import EventBus, IncrementCut, StepConverged, publish
from ..io import write_csv
from .mesh import Mesh
from .quad4 import N_GAUSS, b_matrices, element_dofs

LOG = logging.getLogger(__name__)

DOFS = {"x": 0, "y": 1}


# ---- Loading protocol ----
@dataclass(frozen=True)
class Constraint:
    """Prescribed value t * (factor * displacement + gx * x + gy * y) on one dof of a node set."""

    set: str
    dof: str
    factor: float = 0.0
    gradient: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.dof not in DOFS:
            raise ConfigError(f"constraint dof must be 'x' or 'y', got {self.dof!r}")

    @property
    def loaded(self) -> bool:
        return self.factor != 0.0 or any(g != 0.0 for g in self.gradient)


@dataclass(frozen=True)
class Load:
    """Total force t * force on one dof of a node set, shared out by tributary edge length."""

    set: str
    dof: str
    force: float

    def __post_init__(self) -> None:
        if self.dof not in DOFS:
            raise ConfigError(f"load dof must be 'x' or 'y', got {self.dof!r}")


def tributary_weights(xy: np.ndarray) -> np.ndarray:
    """Share of a uniform edge traction carried by each node of a straight node set; sums to 1."""
    n = len(xy)
    if n == 1:
        return np.ones(1)
    axis = int(np.ptp(xy[:, 1]) > np.ptp(xy[:, 0]))
    order = np.argsort(xy[:, axis], kind="stable")
    seg = np.diff(xy[order, axis])
    w = np.zeros(n)
    w[:-1] += 0.5 * seg
    w[1:] += 0.5 * seg
    if w.sum() <= 0.0:
        return np.full(n, 1.0 / n)
    out = np.empty(n)
    out[order] = w / w.sum()
    return out


@dataclass(frozen=True)
class Protocol:
    """
    Monotonic proportional loading in n_steps equal increments of t.

    constraints prescribe displacements; loads prescribe nodal forces on
    sets that are otherwise free (force control, elastic use).
    """

    displacement: float = DEFAULT_DISPLACEMENT
    n_steps: int = DEFAULT_N_STEPS
    element_size: float = DEFAULT_ELEMENT_SIZE
    constraints: Tuple[Constraint, ...] = ()
    loads: Tuple[Load, ...] = ()

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ConfigError("n_steps must be at least 1")
        if not self.constraints:
            raise ConfigError("protocol needs at least one constraint")

    # --- Canned protocols ---
    @classmethod
    def uniaxial(cls, displacement: float = DEFAULT_DISPLACEMENT, n_steps: int = DEFAULT_N_STEPS, element_size: float = DEFAULT_ELEMENT_SIZE) -> "Protocol":
        """Roller on the left edge, origin pinned in y, right edge pulled in x."""
        return cls(
            displacement,
            n_steps,
            element_size,
            (Constraint("left", "x"), Constraint("origin", "y"), Constraint("right", "x", 1.0)),
        )

    @classmethod
    def quarter_biaxial(cls, displacement: float = DEFAULT_DISPLACEMENT, n_steps: int = DEFAULT_N_STEPS, element_size: float = DEFAULT_ELEMENT_SIZE) -> "Protocol":
        """Symmetry planes x=0 and y=0; both arm ends move by half the total stretch."""
        return cls(
            displacement,
            n_steps,
            element_size,
            (
                Constraint("left", "x"),
                Constraint("bottom", "y"),
                Constraint("right", "x", 0.5),
                Constraint("top", "y", 0.5),
            ),
        )

    @classmethod
    def quarter_uniaxial(cls, displacement: float = DEFAULT_DISPLACEMENT, n_steps: int = DEFAULT_N_STEPS, element_size: float = DEFAULT_ELEMENT_SIZE) -> "Protocol":
        return cls(
            displacement,
            n_steps,
            element_size,
            (Constraint("left", "x"), Constraint("bottom", "y"), Constraint("right", "x", 0.5)),
        )

    @classmethod
    def shear(cls, displacement: float = DEFAULT_DISPLACEMENT, n_steps: int = DEFAULT_N_STEPS, element_size: float = DEFAULT_ELEMENT_SIZE) -> "Protocol":
        """Left grip clamped, right grip pulled in x and held in y."""
        return cls(
            displacement,
            n_steps,
            element_size,
            (
                Constraint("left", "x"),
                Constraint("left", "y"),
                Constraint("right", "x", 1.0),
                Constraint("right", "y"),
            ),
        )

    @classmethod
    def linear_field(cls, grad: Sequence[Sequence[float]], n_steps: int = 1, element_size: float = DEFAULT_ELEMENT_SIZE) -> "Protocol":
        """u = grad @ (x, y) on every outline node; the patch-test loading."""
        (a, b), (c, d) = grad
        return cls(
            0.0,
            n_steps,
            element_size,
            (Constraint("outer", "x", 0.0, (a, b)), Constraint("outer", "y", 0.0, (c, d))),
        )

    @classmethod
    def uniaxial_force(cls, force: float, n_steps: int = 1, element_size: float = DEFAULT_ELEMENT_SIZE) -> "Protocol":
        """Roller on the left edge, origin pinned in y, total force pulling the right edge in x."""
        return cls(0.0, n_steps, element_size, (Constraint("left", "x"), Constraint("origin", "y")), (Load("right", "x", force),))

    def loaded_sets(self) -> List[str]:
        sets = [c.set for c in self.constraints if c.loaded] + [ld.set for ld in self.loads if ld.force != 0.0]
        return list(dict.fromkeys(sets))

    def tracked_sets(self) -> List[str]:
        return list(dict.fromkeys([c.set for c in self.constraints] + [ld.set for ld in self.loads]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "displacement": self.displacement,
            "n_steps": self.n_steps,
            "element_size": self.element_size,
            "constraints": [
                {"set": c.set, "dof": c.dof, "factor": c.factor, "gradient": list(c.gradient)} for c in self.constraints
            ],
            "loads": [{"set": ld.set, "dof": ld.dof, "force": ld.force} for ld in self.loads],
        }


def protocol_from_dict(doc: Mapping[str, Any]) -> Protocol:
    return Protocol(
        displacement=float(doc.get("displacement", DEFAULT_DISPLACEMENT)),
        n_steps=int(doc.get("n_steps", DEFAULT_N_STEPS)),
        element_size=float(doc.get("element_size", DEFAULT_ELEMENT_SIZE)),
        constraints=tuple(
            Constraint(
                str(c["set"]),
                str(c["dof"]),
                float(c.get("factor", 0.0)),
                tuple(float(v) for v in c.get("gradient", (0.0, 0.0))),  # type: ignore[arg-type]
            )
            for c in doc.get("constraints", ())
        ),
        loads=tuple(Load(str(ld["set"]), str(ld["dof"]), float(ld["force"])) for ld in doc.get("loads", ())),
    )


# ---- Results ----
@dataclass(frozen=True)
class FieldHistory:
    """
    ROI snapshots after each of the n_s load steps.

    strain is tensorial (e11, e22, e12); reactions map a constrained node set
    to (n_s, 2) summed nodal forces (Fx, Fy) in N.
    """

    load_fraction: np.ndarray  # (n_s,)
    displacement: np.ndarray  # (n_s,) t * protocol displacement
    elem_ids: np.ndarray  # (n_p,)
    coords: np.ndarray  # (n_p, 2) ROI element centroids
    strain: np.ndarray  # (n_s, n_p, 3)
    stress: np.ndarray  # (n_s, n_p, 3)
    ebar_p: np.ndarray  # (n_s, n_p)
    reactions: Dict[str, np.ndarray] = field(default_factory=dict)
    set_displacement: Dict[str, np.ndarray] = field(default_factory=dict)  # (n_s, 2) mean prescribed motion

    @property
    def n_steps(self) -> int:
        return len(self.load_fraction)

    @property
    def n_points(self) -> int:
        return len(self.elem_ids)

    def snapshot(self, step: int = -1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.strain[step], self.stress[step], self.ebar_p[step]

    def with_strain(self, strain: np.ndarray) -> "FieldHistory":
        return replace(self, strain=np.asarray(strain, dtype=float))


@dataclass(frozen=True)
class ReactionCurve:
    boundary: str
    dof: str
    displacement: np.ndarray
    force: np.ndarray


def reaction_curve(h: FieldHistory, boundary: str, dof: Optional[str] = None) -> ReactionCurve:
    """(displacement, force) per step; force is the summed nodal reaction in the loaded direction."""
    if boundary not in h.reactions:
        raise KeyError(f"no reactions recorded for boundary {boundary!r}; have {sorted(h.reactions)}")
    motion = h.set_displacement[boundary]
    if dof is None:
        # direction with the larger prescribed travel, x on ties
        dof = "y" if np.max(np.abs(motion[:, 1])) > np.max(np.abs(motion[:, 0])) else "x"
    k = DOFS[dof]
    return ReactionCurve(boundary, dof, motion[:, k].copy(), h.reactions[boundary][:, k].copy())


# ---- Solver ----
@dataclass
class _Increment:
    u: np.ndarray
    state: MaterialState
    fint: np.ndarray
    K: Any
    iterations: int
    residual: float
    stress: np.ndarray


class _NotConverged(Exception):
    def __init__(self, reason: str, residual: float) -> None:
        super().__init__(reason)
        self.residual = residual


class Solver:
    """
    One solve of a mesh under a protocol.

    - vectorized Gauss-point integration through `constitutive.integrate`
    - sparse assembly (coo -> csc) and direct solves
    - StepConverged / IncrementCut published on the optional bus
    """

    def __init__(self, mesh: Mesh, model: MaterialModel, protocol: Protocol, bus: Optional[EventBus] = None) -> None:
        self.mesh = mesh
        self.model = model
        self.protocol = protocol
        self.bus = bus
        self._B, self._detJ = b_matrices(mesh.element_coords())
        self._w = self._detJ * mesh.thickness  # unit Gauss weights
        self._edofs = element_dofs(mesh.elements)
        self._rows = np.repeat(self._edofs, 8, axis=1).ravel()
        self._cols = np.tile(self._edofs, (1, 8)).ravel()
        self._fixed, self._fixed_rate = self._prescribed()
        free = np.ones(mesh.n_dofs, dtype=bool)
        free[self._fixed] = False
        self._free = np.flatnonzero(free)
        self._fext_rate = self._applied(free)

    # --- Boundary conditions ---
    def _prescribed(self) -> Tuple[np.ndarray, np.ndarray]:
        values: Dict[int, float] = {}
        for c in self.protocol.constraints:
            nodes = self.mesh.boundary_set(c.set)
            xy = self.mesh.nodes[nodes]
            rate = c.factor * self.protocol.displacement + c.gradient[0] * xy[:, 0] + c.gradient[1] * xy[:, 1]
            for n, v in zip(nodes, np.broadcast_to(rate, len(nodes))):
                values[2 * int(n) + DOFS[c.dof]] = float(v)
        dofs = np.array(sorted(values), dtype=int)
        rates = np.array([values[d] for d in dofs])
        return dofs, rates

    def _applied(self, free: np.ndarray) -> np.ndarray:
        fext = np.zeros(self.mesh.n_dofs)
        for ld in self.protocol.loads:
            nodes = self.mesh.boundary_set(ld.set)
            dofs = 2 * nodes + DOFS[ld.dof]
            if not np.all(free[dofs]):
                raise ConfigError(f"load on {ld.set}.{ld.dof} acts on prescribed dofs")
            fext[dofs] += ld.force * tributary_weights(self.mesh.nodes[nodes])
        return fext

    def prescribed_values(self, t: float) -> np.ndarray:
        return t * self._fixed_rate

    def external_forces(self, t: float) -> np.ndarray:
        return t * self._fext_rate

    # --- Assembly ---
    def _assemble(self, u: np.ndarray, state: MaterialState) -> Tuple[np.ndarray, Any, MaterialState, np.ndarray]:
        ne = self.mesh.n_elements
        eps_eng = np.einsum("egij,ej->egi", self._B, u[self._edofs])
        res = integrate(self.model, state, tensorial(eps_eng.reshape(-1, 3)))
        sig = res.stress.reshape(ne, N_GAUSS, 3)
        D = res.tangent.reshape(ne, N_GAUSS, 3, 3)
        fe = np.einsum("egij,egi,eg->ej", self._B, sig, self._w)
        ke = np.einsum("egki,egkl,eglj,eg->eij", self._B, D, self._B, self._w)
        fint = np.zeros(self.mesh.n_dofs)
        np.add.at(fint, self._edofs, fe)
        K = coo_matrix((ke.ravel(), (self._rows, self._cols)), shape=(self.mesh.n_dofs,) * 2).tocsc()
        return fint, K, res.state, res.stress

    def _increment(self, u: np.ndarray, state: MaterialState, K_prev: Any, t_old: float, t_new: float) -> _Increment:
        fixed, free = self._fixed, self._free
        u_new = u.copy()
        du_p = self.prescribed_values(t_new) - u[fixed]
        u_new[fixed] += du_p
        fext = self.external_forces(t_new)
        load_scale = float(np.linalg.norm(fext))
        if len(free):
            rhs = (t_new - t_old) * self._fext_rate[free] - K_prev[free][:, fixed] @ du_p
            pred = spsolve(K_prev[free][:, free], rhs)
            u_new[free] += np.atleast_1d(pred)
        residual = np.inf
        for it in range(NEWTON_MAX_ITER + 1):
            fint, K, trial_state, stress = self._assemble(u_new, state)
            r = fint[free] - fext[free]
            residual = float(np.linalg.norm(r))
            scale = max(float(np.linalg.norm(fint[fixed])), load_scale)
            tol = max(NEWTON_RTOL * scale, NEWTON_ATOL)
            if not np.isfinite(residual):
                raise _NotConverged("non-finite residual", residual)
            if DEBUG.trace_newton:
                LOG.debug("t=%.6g it=%d |r|=%.3e tol=%.3e", t_new, it, residual, tol)
            if residual <= tol:
                return _Increment(u_new, trial_state, fint, K, it, residual, stress)
            if it == NEWTON_MAX_ITER:
                break
            du = spsolve(K[free][:, free], -r)
            if not np.all(np.isfinite(du)):
                raise _NotConverged("singular tangent", residual)
            u_new[free] += du
        raise _NotConverged(f"no convergence in {NEWTON_MAX_ITER} iterations", residual)

    # --- Sampling ---
    def _gauss_average(self, values: np.ndarray) -> np.ndarray:
        w = self._detJ / self._detJ.sum(axis=1, keepdims=True)
        ne = self.mesh.n_elements
        v = values.reshape((ne, N_GAUSS) + values.shape[1:])
        return np.einsum("eg,eg...->e...", w, v)

    def _reactions(self, fint: np.ndarray) -> Dict[str, np.ndarray]:
        out = {}
        for name in self.protocol.tracked_sets():
            nodes = self.mesh.boundary_set(name)
            out[name] = np.array([fint[2 * nodes].sum(), fint[2 * nodes + 1].sum()])
        return out

    def _set_motion(self, u: np.ndarray) -> Dict[str, np.ndarray]:
        out = {}
        for name in self.protocol.tracked_sets():
            nodes = self.mesh.boundary_set(name)
            out[name] = np.array([u[2 * nodes].mean(), u[2 * nodes + 1].mean()])
        return out

    def run(self) -> FieldHistory:
        n_s = self.protocol.n_steps
        n_gp = self.mesh.n_elements * N_GAUSS
        u = np.zeros(self.mesh.n_dofs)
        state = MaterialState.zeros(n_gp)
        K = self._assemble(u, state)[1]
        roi = self.mesh.roi_elements()
        snaps: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        reactions: Dict[str, List[np.ndarray]] = {}
        motions: Dict[str, List[np.ndarray]] = {}
        stress = np.zeros((n_gp, 3))
        fint = np.zeros(self.mesh.n_dofs)
        t = 0.0
        for k in range(1, n_s + 1):
            target = k / n_s
            level = 0
            while t < target - 1e-14:
                t_new = min(t + 1.0 / (n_s * 2**level), target)
                try:
                    inc = self._increment(u, state, K, t, t_new)
                except (_NotConverged, ReturnMappingError) as exc:
                    level += 1
                    last = getattr(exc, "residual", float("nan"))
                    if level > MAX_HALVINGS:
                        raise SolverDivergenceError(
                            "global Newton diverged",
                            {"step": k, "load_fraction": t_new, "residual": last, "halvings": MAX_HALVINGS, "reason": str(exc)},
                        ) from exc
                    LOG.info("step %d: cutting increment (level %d): %s", k, level, exc)
                    publish(self.bus, IncrementCut(k, level, str(exc)))
                    continue
                u, state, K, fint, stress, t = inc.u, inc.state, inc.K, inc.fint, inc.stress, t_new
                level = 0
                publish(self.bus, StepConverged(k, t, inc.iterations, inc.residual))
            snaps.append(
                (
                    self._gauss_average(state.eps)[roi],
                    self._gauss_average(stress)[roi],
                    self._gauss_average(state.ebar_p)[roi],
                )
            )
            for name, force in self._reactions(fint).items():
                reactions.setdefault(name, []).append(force)
            for name, motion in self._set_motion(u).items():
                motions.setdefault(name, []).append(motion)
            LOG.debug("step %d/%d converged at t=%.4g", k, n_s, t)
        fractions = np.arange(1, n_s + 1) / n_s
        return FieldHistory(
            load_fraction=fractions,
            displacement=fractions * self.protocol.displacement,
            elem_ids=roi,
            coords=self.mesh.centroids()[roi],
            strain=np.stack([s[0] for s in snaps]),
            stress=np.stack([s[1] for s in snaps]),
            ebar_p=np.stack([s[2] for s in snaps]),
            reactions={k: np.array(v) for k, v in reactions.items()},
            set_displacement={k: np.array(v) for k, v in motions.items()},
        )


def solve(mesh: Mesh, model: MaterialModel, protocol: Protocol, bus: Optional[EventBus] = None) -> FieldHistory:
    return Solver(mesh, model, protocol, bus).run()


# ---- Export ----
FIELD_COLUMNS = ("step", "elem_id", "x", "y", "e11", "e22", "e12", "s11", "s22", "t12", "ebar_p")


def field_rows(h: FieldHistory) -> List[List[Any]]:
    rows = []
    for k in range(h.n_steps):
        for j in range(h.n_points):
            rows.append(
                [k + 1, int(h.elem_ids[j]), *h.coords[j], *h.strain[k, j], *h.stress[k, j], h.ebar_p[k, j]]
            )
    return rows


def write_fields_csv(path: Path, h: FieldHistory) -> Path:
    return write_csv(path, FIELD_COLUMNS, field_rows(h))


def write_reactions_csv(path: Path, h: FieldHistory) -> Path:
    rows = []
    for name in h.reactions:
        curve = reaction_curve(h, name)
        for k in range(h.n_steps):
            rows.append([k + 1, name, curve.displacement[k], curve.force[k]])
    return write_csv(path, ("step", "boundary", "u", "F"), rows)
