"""
Command-line entry point.

    python -m mechinfo <command> --config RUN.json --out DIR [--seed N] [--threads N] [-v]

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import config as cfg
from .constants import DEBUG
from .constitutive import MaterialModel, is_inelastic, lankford, model_to_dict, normalized_yield_stress, yield_locus, yield_stress_table
from .design import EntropyEvaluator, ShearEvaluator, optimize_entropy, optimize_shear, write_design
from .entropy import critical_point, evaluate, gage_mask, loading_path, write_scatter_csv
from .errors import ConfigError, MechInfoError, NumericalError, SolverDivergenceError
from .events import ChainProgress, EventBus, IncrementCut, IterationCompleted, StepConverged, TrialCompleted
from .fem import generate_mesh, solve, write_fields_csv, write_reactions_csv
from .inverse import IdentificationProblem, identify, write_identification
from .io import write_csv, write_json
from .studies import StudyResult, degraded_study, noise_study, sensitivity_study
from .synth import LocalizedNoise, synthesize, write_synthetic_csv
from .uq import (
    Posterior,
    UQProblem,
    band_area,
    credible_band,
    locus_quantity,
    run_chain,
    write_band_csv,
    write_chain_csv,
    yield_stress_quantity,
)

LOG = logging.getLogger("mechinfo")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2

Command = Callable[..., List[Path]]


# ---- Progress logging ----
def attach_logging(bus: EventBus) -> None:
    """Log-emitting listeners for every progress event."""
    bus.subscribe(StepConverged, lambda e: LOG.debug("step %d (t=%.3f) converged in %d iterations, |r|=%.3e", e.step, e.load_fraction, e.iterations, e.residual))
    bus.subscribe(IncrementCut, lambda e: LOG.info("step %d cut to level %d: %s", e.step, e.level, e.reason))
    bus.subscribe(IterationCompleted, lambda e: LOG.info("iteration %d: loss %.6e (relative %.3e)", e.iteration, e.loss, e.relative_loss))
    bus.subscribe(TrialCompleted, lambda e: LOG.debug("trial %d %s: %.6g", e.number, e.status, e.objective))
    bus.subscribe(ChainProgress, lambda e: LOG.info("chain %d: acceptance %.3f, log posterior %.6g", e.iteration, e.acceptance_rate, e.log_post))


# ---- Commands ----
def cmd_forward(run: cfg.ForwardRun, out: Path, threads: int, bus: EventBus) -> List[Path]:
    model = cfg.build_model(run.material)
    geometry = cfg.build_geometry(run.geometry)
    protocol = cfg.build_protocol(run.protocol)
    mesh = generate_mesh(geometry, protocol.element_size)
    LOG.info("%s: %d nodes, %d elements, %d in ROI", geometry.kind, mesh.n_nodes, mesh.n_elements, len(mesh.roi_elements()))
    h = solve(mesh, model, protocol, bus)
    return [
        write_fields_csv(out / "fields.csv", h),
        write_reactions_csv(out / "reactions.csv", h),
        write_json(out / "run.json", {"material": model_to_dict(model), "geometry": geometry.to_dict(), "protocol": protocol.to_dict(),
                                      "n_nodes": mesh.n_nodes, "n_elements": mesh.n_elements}),
    ]


def cmd_entropy(run: cfg.EntropyRun, out: Path, threads: int, bus: EventBus) -> List[Path]:
    model = cfg.build_model(run.material)
    geometry = cfg.build_geometry(run.geometry)
    protocol = cfg.build_protocol(run.protocol)
    space = cfg.build_space(run.space)
    h = solve(generate_mesh(geometry, protocol.element_size), model, protocol, bus)
    report = evaluate(h, space, run.step, run.pooled)
    LOG.info("H = %.4f nats of %.4f (%s)", report.H, report.H_max, report.criterion)
    doc = report.as_dict()
    doc["approximate_geometry"] = geometry.approximate
    return [
        write_json(out / "entropy.json", doc),
        write_scatter_csv(out / "scatter.csv", h, space),
        write_reactions_csv(out / "reactions.csv", h),
    ]


def cmd_identify(run: cfg.IdentifyRun, out: Path, threads: int, bus: EventBus) -> List[Path]:
    truth = cfg.build_model(run.truth)
    start = cfg.build_model(run.start)
    geometry = cfg.build_geometry(run.geometry)
    protocol = cfg.build_protocol(run.protocol)
    mesh = generate_mesh(geometry, protocol.element_size)
    clean = solve(mesh, truth, protocol, bus)
    data = synthesize(clean, cfg.build_noise(run.noise, run.seed), run.noise.floor)
    problem = IdentificationProblem.create(start, mesh, protocol, data.history, run.free, data.valid, normalization_weight=run.normalization_weight)
    result = identify(problem, problem.vector(start), run.tol, run.max_iter, threads, problem.vector(truth), bus)
    for name, _, theta0, hat, err in result.table_rows():
        LOG.info("%-8s start %-12.6g identified %-12.6g error %.2f%%", name, theta0, hat, err)
    doc = result.as_dict()
    doc["model"] = model_to_dict(result.model)
    return [
        write_json(out / "result.json", doc),
        write_synthetic_csv(out / "synthetic.csv", data),
        *write_identification(out, result, clean, sorted(clean.reactions)),
    ]


def cmd_design(run: cfg.DesignRun, out: Path, threads: int, bus: EventBus) -> List[Path]:
    model = cfg.build_model(run.material)
    base = cfg.build_geometry(run.geometry)
    protocol = cfg.build_protocol(run.protocol)
    space = cfg.build_space(run.space)
    dspace = cfg.build_design_space(run.design_space, base, protocol.element_size)
    options = dict(gamma=run.gamma, n_candidates=run.n_candidates, n_startup=run.n_startup, batch=run.batch, threads=threads, bus=bus)
    if run.objective == "entropy":
        evaluator = EntropyEvaluator(model, protocol, space, dspace.element_size)
        result = optimize_entropy(dspace, evaluator, space.n, run.budget, run.seed, **options)
    else:
        evaluator = ShearEvaluator(model, protocol, dspace.gage, space, dspace.element_size)
        result = optimize_shear(dspace, evaluator, run.budget, run.seed, **options)
    paths = write_design(out, result)
    if result.best is None:
        raise NumericalError(f"no feasible design among {len(result.trials)} trials")
    if run.objective == "shear":
        g = result.best_geometry()
        h = solve(generate_mesh(g, dspace.element_size), model, protocol, bus)
        mask = gage_mask(h, dspace.gage)
        lp = loading_path(h, critical_point(h, mask))
        paths.append(write_csv(out / "loading_path.csv", ("step", "ebar_p", "eta", "theta_bar"), zip(lp.step, lp.ebar_p, lp.eta, lp.theta_bar)))
    return paths


def _uq_bands(
    run: cfg.UQRun,
    truth: MaterialModel,
    start: MaterialModel,
    names: Sequence[str],
    post: Posterior,
    out: Path,
    areas: Dict[str, float],
) -> List[Path]:
    """Locus and yield-stress credible bands; fills areas per plane."""
    paths = []
    for plane in run.planes:
        band = credible_band(post, locus_quantity(start, names, plane, run.n_points), run.level, run.thin)
        locus = yield_locus(truth, plane, run.n_points)
        areas[plane] = band_area(band.lo, band.hi, locus.ray_angles)
        paths.append(write_band_csv(out / f"band_{plane}.csv", "ray_angle", locus.ray_angles, band, locus.radii))
    angles = np.radians(run.angles_deg)
    band = credible_band(post, yield_stress_quantity(start, names, angles), run.level, run.thin)
    paths.append(write_band_csv(out / "band_yield_stress.csv", "angle_deg", np.asarray(run.angles_deg), band, np.atleast_1d(normalized_yield_stress(truth, angles))))
    return paths


def cmd_uq(run: cfg.UQRun, out: Path, threads: int, bus: EventBus) -> List[Path]:
    truth = cfg.build_model(run.truth)
    start = cfg.build_model(run.start)
    geometry = cfg.build_geometry(run.geometry)
    protocol = cfg.build_protocol(run.protocol)
    h_size = run.reduced_element_size or protocol.element_size
    reduced = h_size != protocol.element_size
    if reduced:
        LOG.warning("uq: sampling on a reduced mesh, h=%g instead of the protocol's h=%g", h_size, protocol.element_size)
    mesh = generate_mesh(geometry, h_size)
    data = synthesize(solve(mesh, truth, protocol, bus), cfg.build_noise(run.noise, run.seed), run.noise.floor)
    names = tuple(run.free) if run.free is not None else tuple(start.PARAMS)
    bounds = start.param_bounds()
    problem = UQProblem(start, names, tuple(bounds[n] for n in names), mesh, protocol, data.strain, data.variance, data.valid)
    theta0 = np.array([start.params[n] for n in names])
    post = run_chain(problem.log_posterior, theta0, problem.default_scales(run.proposal_fraction), run.n_samples, run.seed, run.burn_in_fraction, names, bus)
    paths = [write_chain_csv(out / "chain.csv", post)]
    areas: Dict[str, float] = {}
    if is_inelastic(start) and is_inelastic(truth):
        paths.extend(_uq_bands(run, truth, start, names, post, out, areas))
    else:
        LOG.info("uq: %s has no yield surface, writing the chain and summary only", start.KIND)
    stats = problem.cache.cache_stats
    paths.append(
        write_json(
            out / "posterior.json",
            {
                "summary": post.summary(),
                "acceptance_rate": post.acceptance_rate,
                "burn_in": post.burn_in,
                "n_samples": len(post.chain),
                "n_valid": data.n_valid,
                "band_area": areas,
                "level": run.level,
                "reduced_mesh": {"used": reduced, "element_size": h_size, "protocol_element_size": protocol.element_size},
                "cache": {
                    "hits": stats.hits,
                    "misses": stats.misses,
                    "evictions": stats.evictions,
                    "hit_rate": stats.hit_rate,
                    "entries": len(problem.cache),
                },
            },
        )
    )
    return paths


def cmd_report(run: cfg.ReportRun, out: Path, threads: int, bus: EventBus) -> List[Path]:
    model = cfg.build_model(run.material)
    stresses = yield_stress_table(model, run.angles_deg)
    rows = [[a, s, s / model.sigma0, lankford(model, math.radians(a))] for a, s in zip(run.angles_deg, stresses)]  # type: ignore[union-attr]
    for a, s, _, r in rows:
        LOG.info("theta=%5.1f deg: sigma=%.2f MPa, r=%.3f", a, s, r)
    paths = [write_csv(out / "yield_stress.csv", ("angle_deg", "sigma_y", "ratio", "r_value"), rows)]
    for plane in run.planes:
        locus = yield_locus(model, plane, run.n_points, run.quadrant)
        header = ("s11", "s22") if plane == "s11-s22" else ("s22", "t12")
        paths.append(write_csv(out / f"locus_{plane}.csv", header, locus.points))
    if run.loading_path is not None:
        lp_doc = run.loading_path
        protocol = cfg.build_protocol(lp_doc.protocol)
        h = solve(generate_mesh(cfg.build_geometry(lp_doc.geometry), protocol.element_size), model, protocol, bus)
        point = critical_point(h) if lp_doc.point is None else lp_doc.point
        lp = loading_path(h, point)
        paths.append(write_csv(out / "loading_path.csv", ("step", "ebar_p", "eta", "theta_bar"), zip(lp.step, lp.ebar_p, lp.eta, lp.theta_bar)))
    return paths


def cmd_study(run: cfg.StudyRun, out: Path, threads: int, bus: EventBus) -> List[Path]:
    geometry = cfg.build_geometry(run.geometry)
    protocol = cfg.build_protocol(run.protocol)
    truth = cfg.build_model(run.truth)
    result: StudyResult
    if run.study == "sensitivity":
        if run.reference is None:
            raise ConfigError("the sensitivity study needs a 'reference' material")
        biaxial = cfg.build_protocol(run.biaxial) if run.biaxial is not None else None
        result = sensitivity_study(geometry, truth, cfg.build_model(run.reference), protocol, biaxial, cfg.build_space(run.space))
    else:
        if run.start is None:
            raise ConfigError(f"the {run.study} study needs a 'start' material")
        start = cfg.build_model(run.start)
        if run.study == "noise":
            result = noise_study(geometry, protocol, truth, start, run.levels, run.seed, run.free, run.max_iter, threads=threads, bus=bus)
        else:
            localized = None
            if run.localized is not None:
                localized = LocalizedNoise(tuple(tuple(p) for p in run.localized.polygon), run.localized.sigma)  # type: ignore[arg-type]
            result = degraded_study(geometry, protocol, truth, start, run.sigma, run.missing_fraction, localized, run.n_samples, run.seed,
                                    run.free, n_points=run.n_points, bus=bus)
    return result.write(out)


COMMANDS: Dict[str, Command] = {
    "forward": cmd_forward,
    "entropy": cmd_entropy,
    "identify": cmd_identify,
    "design": cmd_design,
    "uq": cmd_uq,
    "report": cmd_report,
    "study": cmd_study,
}


# ---- Entry ----
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mechinfo", description="Stress-state entropy, specimen design and material identification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON run document")
        p.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the document's seed")
        p.add_argument("--threads", type=int, default=1, help="workers for independent evaluations")
        p.add_argument("-v", "--verbose", action="store_true", help="DEBUG logging and solver traces")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
    )
    if args.verbose:
        DEBUG.trace_newton = True
        DEBUG.trace_return_mapping = True
        DEBUG.chain_report_every = 100

    bus = EventBus()
    attach_logging(bus)
    try:
        run = cfg.load_run(args.command, args.config)
        if args.seed is not None:
            run = run.model_copy(update={"seed": args.seed})
        out: Path = args.out
        out.mkdir(parents=True, exist_ok=True)
        paths = COMMANDS[args.command](run, out, max(args.threads, 1), bus)
    except ConfigError as exc:
        LOG.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SolverDivergenceError as exc:
        LOG.error("solver diverged: %s", exc)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        LOG.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except MechInfoError as exc:
        LOG.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    for p in paths:
        LOG.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
