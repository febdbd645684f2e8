"""
Parameter identification from full-field strains.

The loss compares candidate strain histories against the (synthetic)
measurement; a bound-constrained downhill simplex minimizes it in a
normalized unit box so parameters of very different scale move alike.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .constants import (
    LOSS_SENTINEL,
    NM_CONTRACT,
    NM_EXPAND,
    NM_INITIAL_STEP,
    NM_MAX_ITER,
    NM_REFLECT,
    NM_SHRINK,
    NM_TOL,
    NORMALIZATION_WEIGHT,
)
from .constitutive import MaterialModel, Yld2000Swift
from .errors import ConfigError, MechInfoError
from .events import EventBus, IterationCompleted, publish
from .fem import FieldHistory, Mesh, Protocol, reaction_curve, solve
from .io import write_csv

LOG = logging.getLogger(__name__)

ALPHAS = tuple(f"alpha{i}" for i in range(1, 9))


# ---- Loss ----
def strain_loss(reference: np.ndarray, candidate: np.ndarray, valid: Optional[np.ndarray] = None) -> float:
    """(1/n_p) sum over steps and valid points of |e_ref - e|^2 on (e11, e22, e12)."""
    ref = np.asarray(reference, dtype=float)
    cand = np.asarray(candidate, dtype=float)
    if ref.ndim == 2:
        ref, cand = ref[None], cand[None]
    if valid is None:
        valid = np.ones(ref.shape[1], dtype=bool)
    n_p = int(np.count_nonzero(valid))
    if n_p == 0:
        raise ValueError("no valid points to compare")
    diff = ref[:, valid] - cand[:, valid]
    return float(np.sum(diff * diff) / n_p)


@dataclass(frozen=True)
class IdentificationProblem:
    """A model template with free parameters, the specimen to re-solve and the measured strains."""

    template: MaterialModel
    free: Tuple[str, ...]
    bounds: Mapping[str, Tuple[float, float]]
    mesh: Mesh
    protocol: Protocol
    reference: FieldHistory
    valid: Optional[np.ndarray] = None
    normalization_weight: float = NORMALIZATION_WEIGHT

    def __post_init__(self) -> None:
        unknown = set(self.free) - set(self.template.PARAMS)
        if unknown:
            raise ConfigError(f"free parameters {sorted(unknown)} are not parameters of {self.template.KIND}")
        for name in self.free:
            if name not in self.bounds:
                raise ConfigError(f"no bounds for free parameter {name!r}")
            lo, hi = self.bounds[name]
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"bounds for {name} must be finite with lower < upper")

    @classmethod
    def create(
        cls,
        template: MaterialModel,
        mesh: Mesh,
        protocol: Protocol,
        reference: FieldHistory,
        free: Optional[Sequence[str]] = None,
        valid: Optional[np.ndarray] = None,
        **kwargs: Any,
    ) -> "IdentificationProblem":
        names = tuple(free) if free is not None else tuple(template.PARAMS)
        all_bounds = template.param_bounds()
        return cls(template, names, {n: all_bounds[n] for n in names if n in all_bounds}, mesh, protocol, reference, valid, **kwargs)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[n][0] for n in self.free])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[n][1] for n in self.free])

    @property
    def penalized(self) -> bool:
        return isinstance(self.template, Yld2000Swift) and set(ALPHAS) <= set(self.free)

    def vector(self, model: Optional[MaterialModel] = None) -> np.ndarray:
        params = (model or self.template).params
        return np.array([params[n] for n in self.free])

    def model_at(self, theta: Sequence[float]) -> MaterialModel:
        return self.template.with_params(**{n: float(v) for n, v in zip(self.free, theta)})

    def forward(self, theta: Sequence[float]) -> FieldHistory:
        return solve(self.mesh, self.model_at(theta), self.protocol)


def objective(p: IdentificationProblem, theta: Sequence[float]) -> float:
    """Strain mismatch at theta; LOSS_SENTINEL when the parameters or the solve fail."""
    try:
        model = p.model_at(theta)
        h = solve(p.mesh, model, p.protocol)
    except MechInfoError as exc:
        LOG.debug("objective sentinel at %s: %s", np.asarray(theta), exc)
        return LOSS_SENTINEL
    loss = strain_loss(p.reference.strain, h.strain, p.valid)
    if p.penalized:
        loss += p.normalization_weight * (model.normalization - 2.0) ** 2  # type: ignore[union-attr]
    return loss


# ---- Downhill simplex ----
@dataclass
class SimplexResult:
    x: np.ndarray
    fx: float
    iterations: int
    evaluations: int
    converged: bool
    history: List[float] = field(default_factory=list)  # best value after each iteration

    @property
    def relative_history(self) -> np.ndarray:
        h = np.asarray(self.history, dtype=float)
        return h / h[0] if len(h) and h[0] != 0.0 else h


def _spread(sim_phys: np.ndarray, scale: np.ndarray) -> float:
    best = sim_phys[0]
    denom = np.maximum(np.abs(best), scale)
    return float(np.max(np.abs(sim_phys[1:] - best) / denom))


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    bounds: Tuple[Sequence[float], Sequence[float]],
    tol: float = NM_TOL,
    max_iter: int = NM_MAX_ITER,
    threads: int = 1,
    callback: Optional[Callable[[int, float], None]] = None,
) -> SimplexResult:
    """
    Minimize f inside a box.

    Works on u = (x - lo) / (hi - lo); trial vertices are clipped to the unit
    box. Stops when every vertex lies within tol (relative) of the best one in
    physical units, or after max_iter iterations. callback(k, best) runs once
    on the initial simplex (k = 0) and after every iteration.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    span = hi - lo
    if np.any(span <= 0.0) or not np.all(np.isfinite(span)):
        raise ValueError("bounds must be finite with lower < upper")
    x0 = np.asarray(x0, dtype=float).ravel()
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("initial point outside the bounds")
    N = len(x0)
    scale = 1e-12 * span
    n_eval = [0]

    def to_phys(u: np.ndarray) -> np.ndarray:
        return lo + np.clip(u, 0.0, 1.0) * span

    def value_at(u: np.ndarray) -> float:
        value = float(f(to_phys(u)))
        return value if math.isfinite(value) else math.inf

    def func(u: np.ndarray) -> float:
        n_eval[0] += 1
        return value_at(u)

    def evaluate(points: np.ndarray) -> np.ndarray:
        n_eval[0] += len(points)
        if threads > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return np.array(list(pool.map(value_at, points)))
        return np.array([value_at(u) for u in points])

    # initial simplex: unit offsets of NM_INITIAL_STEP, reversed at the upper face
    u0 = (x0 - lo) / span
    sim = np.tile(u0, (N + 1, 1))
    for k in range(N):
        step = NM_INITIAL_STEP if u0[k] + NM_INITIAL_STEP <= 1.0 else -NM_INITIAL_STEP
        sim[k + 1, k] += step
    fsim = evaluate(sim)
    order = np.argsort(fsim, kind="stable")
    sim, fsim = sim[order], fsim[order]
    history = [float(fsim[0])]
    if callback is not None:
        callback(0, float(fsim[0]))

    def clip(u: np.ndarray) -> np.ndarray:
        return np.clip(u, 0.0, 1.0)

    iterations = 0
    converged = False
    while iterations < max_iter:
        if _spread(to_phys(sim), scale) < tol:
            converged = True
            break
        xbar = sim[:-1].mean(axis=0)
        xr = clip((1 + NM_REFLECT) * xbar - NM_REFLECT * sim[-1])
        fxr = func(xr)
        shrink = False
        if fxr < fsim[0]:
            xe = clip((1 + NM_REFLECT * NM_EXPAND) * xbar - NM_REFLECT * NM_EXPAND * sim[-1])
            fxe = func(xe)
            sim[-1], fsim[-1] = (xe, fxe) if fxe < fxr else (xr, fxr)
        elif fxr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fxr
        elif fxr < fsim[-1]:
            xc = clip((1 + NM_CONTRACT * NM_REFLECT) * xbar - NM_CONTRACT * NM_REFLECT * sim[-1])
            fxc = func(xc)
            if fxc <= fxr:
                sim[-1], fsim[-1] = xc, fxc
            else:
                shrink = True
        else:
            xcc = (1 - NM_CONTRACT) * xbar + NM_CONTRACT * sim[-1]
            fxcc = func(xcc)
            if fxcc < fsim[-1]:
                sim[-1], fsim[-1] = xcc, fxcc
            else:
                shrink = True
        if shrink:
            sim[1:] = sim[0] + NM_SHRINK * (sim[1:] - sim[0])
            fsim[1:] = evaluate(sim[1:])
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        iterations += 1
        history.append(float(fsim[0]))
        if callback is not None:
            callback(iterations, float(fsim[0]))
    else:
        converged = _spread(to_phys(sim), scale) < tol
    if not converged:
        LOG.warning("simplex stopped at max_iter=%d without reaching tol=%g", max_iter, tol)
    return SimplexResult(to_phys(sim[0]), float(fsim[0]), iterations, n_eval[0], converged, history)


# ---- Identification ----
@dataclass
class IdentificationResult:
    names: Tuple[str, ...]
    theta_hat: np.ndarray
    theta0: np.ndarray
    loss: float
    loss_history: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    model: MaterialModel
    truth: Optional[np.ndarray] = None
    history: Optional[FieldHistory] = None

    @property
    def relative_loss(self) -> np.ndarray:
        h = self.loss_history
        return h / h[0] if len(h) and h[0] != 0.0 else h

    @property
    def errors_percent(self) -> Optional[np.ndarray]:
        if self.truth is None:
            return None
        return 100.0 * np.abs(self.theta_hat - self.truth) / np.abs(self.truth)

    def table_rows(self) -> List[List[Any]]:
        """parameter, truth, initial, identified, error %."""
        err = self.errors_percent
        rows = []
        for i, name in enumerate(self.names):
            truth = self.truth[i] if self.truth is not None else float("nan")
            rows.append([name, truth, self.theta0[i], self.theta_hat[i], err[i] if err is not None else float("nan")])
        return rows

    def as_dict(self) -> Dict[str, Any]:
        err = self.errors_percent
        return {
            "parameters": {n: float(v) for n, v in zip(self.names, self.theta_hat)},
            "initial": {n: float(v) for n, v in zip(self.names, self.theta0)},
            "truth": None if self.truth is None else {n: float(v) for n, v in zip(self.names, self.truth)},
            "error_percent": None if err is None else {n: float(v) for n, v in zip(self.names, err)},
            "loss": self.loss,
            "loss_history": self.loss_history,
            "relative_loss": self.relative_loss,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
        }


def identify(
    problem: IdentificationProblem,
    theta0: Sequence[float],
    tol: float = NM_TOL,
    max_iter: int = NM_MAX_ITER,
    threads: int = 1,
    truth: Optional[Sequence[float]] = None,
    bus: Optional[EventBus] = None,
) -> IdentificationResult:
    start = np.asarray(theta0, dtype=float)
    first: List[float] = []

    def progress(iteration: int, loss: float) -> None:
        if iteration == 0:
            first.append(loss if loss != 0.0 else 1.0)
            return
        publish(bus, IterationCompleted(iteration, loss, loss / first[0]))
        LOG.debug("iteration %d: loss %.6e", iteration, loss)

    res = nelder_mead(lambda th: objective(problem, th), start, (problem.lower, problem.upper), tol, max_iter, threads, progress)
    model = problem.model_at(res.x)
    LOG.info("identified %s after %d iterations (%d solves), loss %.3e", problem.template.KIND, res.iterations, res.evaluations, res.fx)
    try:
        final = solve(problem.mesh, model, problem.protocol)
    except MechInfoError:
        final = None
    return IdentificationResult(
        problem.free,
        res.x,
        start,
        res.fx,
        np.asarray(res.history),
        res.iterations,
        res.evaluations,
        res.converged,
        model,
        None if truth is None else np.asarray(truth, dtype=float),
        final,
    )


# ---- Comparisons ----
COMPARISON_COLUMNS = (
    "step", "elem_id", "x", "y",
    "e11_ref", "e22_ref", "e12_ref",
    "e11_id", "e22_id", "e12_id",
    "de11", "de22", "de12",
)


def strain_comparison_rows(reference: FieldHistory, identified: FieldHistory, step: int = -1) -> List[List[Any]]:
    k = step % reference.n_steps
    ref, ide = reference.strain[k], identified.strain[k]
    rows = []
    for j in range(reference.n_points):
        rows.append([k + 1, int(reference.elem_ids[j]), *reference.coords[j], *ref[j], *ide[j], *(ref[j] - ide[j])])
    return rows


def force_comparison_rows(reference: FieldHistory, identified: FieldHistory, boundaries: Sequence[str]) -> List[List[Any]]:
    rows = []
    for name in boundaries:
        ref = reaction_curve(reference, name)
        ide = reaction_curve(identified, name, ref.dof)
        for k in range(reference.n_steps):
            rows.append([k + 1, name, ref.displacement[k], ref.force[k], ide.force[k]])
    return rows


def write_identification(out: Path, result: IdentificationResult, reference: FieldHistory, boundaries: Sequence[str]) -> List[Path]:
    """table.csv, loss_history.csv and, when the final solve exists, field and force comparisons."""
    out = Path(out)
    paths = [
        write_csv(out / "table.csv", ("parameter", "truth", "initial", "identified", "error_percent"), result.table_rows()),
        write_csv(
            out / "loss_history.csv",
            ("iteration", "loss", "relative_loss"),
            [[i, l, r] for i, (l, r) in enumerate(zip(result.loss_history, result.relative_loss))],
        ),
    ]
    if result.history is not None:
        paths.append(write_csv(out / "comparison.csv", COMPARISON_COLUMNS, strain_comparison_rows(reference, result.history)))
        if reference.reactions:
            paths.append(
                write_csv(
                    out / "force_displacement.csv",
                    ("step", "boundary", "u", "F_ref", "F_identified"),
                    force_comparison_rows(reference, result.history, boundaries),
                )
            )
    return paths
