"""
Scripted studies built on the forward, entropy, inverse and UQ layers.

- sensitivity: entropy of one specimen under different initial models and boundary conditions
- noise: identification error vs. strain-noise level
- degraded: posterior band area for clean, partially missing and locally noisy data
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .constants import CREDIBLE_LEVEL, NM_MAX_ITER, NM_TOL
from .constitutive import MaterialModel
from .entropy import StressStateSpace, evaluate
from .events import EventBus
from .fem import Protocol, SpecimenGeometry, generate_mesh, solve
from .inverse import IdentificationProblem, identify
from .io import write_csv, write_json
from .synth import LocalizedNoise, NoiseSpec, synthesize
from .uq import UQProblem, band_area, credible_band, locus_quantity, run_chain

LOG = logging.getLogger(__name__)


@dataclass
class StudyResult:
    name: str
    header: List[str]
    rows: List[List[Any]]
    extra: Dict[str, Any] = field(default_factory=dict)

    def write(self, out: Path) -> List[Path]:
        out = Path(out)
        return [
            write_csv(out / f"{self.name}.csv", self.header, self.rows),
            write_json(out / f"{self.name}.json", {"study": self.name, "rows": [dict(zip(self.header, r)) for r in self.rows], **self.extra}),
        ]


# ---- Entropy sensitivity ----
def sensitivity_study(
    geometry: SpecimenGeometry,
    truth: MaterialModel,
    reference: MaterialModel,
    uniaxial: Protocol,
    biaxial: Optional[Protocol],
    space: StressStateSpace,
) -> StudyResult:
    """Entropy of one specimen for (model, protocol) pairs: truth and reference under uniaxial, reference under biaxial."""
    cases = [("truth", "uniaxial", truth, uniaxial), ("reference", "uniaxial", reference, uniaxial)]
    if biaxial is not None:
        cases.append(("reference", "biaxial", reference, biaxial))
    rows = []
    for label, loading, model, protocol in cases:
        mesh = generate_mesh(geometry, protocol.element_size)
        report = evaluate(solve(mesh, model, protocol), space)
        LOG.info("sensitivity %s/%s: H=%.4f", label, loading, report.H)
        rows.append([label, model.KIND, loading, report.H, report.criterion, *report.probabilities])
    header = ["model", "kind", "loading", "H", "criterion", *(f"p_{c}" for c in space.ids)]
    return StudyResult("sensitivity", header, rows, {"approximate_geometry": geometry.approximate})


# ---- Noise robustness ----
def noise_study(
    geometry: SpecimenGeometry,
    protocol: Protocol,
    truth: MaterialModel,
    start: MaterialModel,
    levels: Sequence[float],
    seed: int,
    free: Optional[Sequence[str]] = None,
    max_iter: int = NM_MAX_ITER,
    tol: float = NM_TOL,
    threads: int = 1,
    bus: Optional[EventBus] = None,
) -> StudyResult:
    """Round-trip identification from one start point at each noise level."""
    mesh = generate_mesh(geometry, protocol.element_size)
    clean = solve(mesh, truth, protocol)
    names: List[str] = []
    rows = []
    for level in levels:
        data = synthesize(clean, NoiseSpec(float(level), seed))
        problem = IdentificationProblem.create(start, mesh, protocol, data.history, free, data.valid)
        truth_vec = problem.vector(truth)
        result = identify(problem, problem.vector(start), tol, max_iter, threads, truth_vec, bus)
        names = list(problem.free)
        err = result.errors_percent
        LOG.info("noise %.1e: max error %.2f%% after %d iterations", level, float(np.max(err)), result.iterations)
        rows.append([level, *result.theta_hat, *err, result.loss, result.iterations, result.converged])
    header = ["sigma", *names, *(f"err_{n}" for n in names), "loss", "iterations", "converged"]
    return StudyResult("noise", header, rows)


# ---- Degraded data ----
def degraded_study(
    geometry: SpecimenGeometry,
    protocol: Protocol,
    truth: MaterialModel,
    start: MaterialModel,
    sigma: float,
    missing_fraction: float,
    localized: Optional[LocalizedNoise],
    n_samples: int,
    seed: int,
    free: Optional[Sequence[str]] = None,
    plane: str = "s11-s22",
    n_points: int = 72,
    level: float = CREDIBLE_LEVEL,
    bus: Optional[EventBus] = None,
) -> StudyResult:
    """Locus band area for baseline data, data with missing points and (optionally) a localized noise patch."""
    mesh = generate_mesh(geometry, protocol.element_size)
    clean = solve(mesh, truth, protocol)
    cases = [("baseline", NoiseSpec(sigma, seed)), ("missing", NoiseSpec(sigma, seed, missing_fraction))]
    if localized is not None:
        cases.append(("localized", NoiseSpec(sigma, seed, 0.0, localized)))
    rows = []
    for label, spec in cases:
        data = synthesize(clean, spec)
        names = tuple(free) if free is not None else tuple(start.PARAMS)
        bounds = start.param_bounds()
        problem = UQProblem(start, names, tuple(bounds[n] for n in names), mesh, protocol, data.strain, data.variance, data.valid)
        theta0 = np.array([start.params[n] for n in names])
        post = run_chain(problem.log_posterior, theta0, problem.default_scales(), n_samples, seed, names=names, bus=bus)
        band = credible_band(post, locus_quantity(start, names, plane, n_points), level)
        angles = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
        area = band_area(band.lo, band.hi, angles)
        LOG.info("degraded %s: %d valid points, band area %.4g", label, data.n_valid, area)
        rows.append([label, data.n_valid, post.acceptance_rate, area, problem.cache.cache_stats.hit_rate])
    return StudyResult("degraded", ["case", "n_valid", "acceptance_rate", "band_area", "cache_hit_rate"], rows, {"plane": plane, "level": level})
