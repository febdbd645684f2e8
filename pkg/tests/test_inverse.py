from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from mechinfo import config as cfg
from mechinfo.constants import HILL48_THETA1, HILL48_THETA2, LOSS_SENTINEL, ORTHO_TRUTH, YLD2000_ALPHA_TRUTH
from mechinfo.constitutive import Hill48Swift, IsoElastic, OrthoElastic, Yld2000Swift
from mechinfo.errors import ConfigError
from mechinfo.events import EventBus, IterationCompleted
from mechinfo.fem import Protocol, generate_mesh, solve
from mechinfo.inverse import (
    ALPHAS,
    IdentificationProblem,
    identify,
    nelder_mead,
    objective,
    strain_loss,
    write_identification,
)
from mechinfo.synth import synthesize

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

UNIAXIAL = Protocol.uniaxial(0.004, 2, 0.5)


def _bowl(x):
    return float((x[0] - 0.3) ** 2 + 4.0 * (x[1] + 0.2) ** 2)


def _rosenbrock(x):
    return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


def _run_problem(name, element_size=1.0, start=None, **overrides):
    """An identification problem built from a shipped run document on a coarser mesh."""
    path = CONFIGS / "runs" / name
    doc = {**cfg.read_json(path), **overrides}
    run = cfg.validate_run(cfg.IdentifyRun, cfg.resolve_references(doc, path.parent))
    protocol = replace(cfg.build_protocol(run.protocol), element_size=element_size)
    mesh = generate_mesh(cfg.build_geometry(run.geometry), element_size)
    truth = cfg.build_model(run.truth)
    data = synthesize(solve(mesh, truth, protocol), cfg.build_noise(run.noise, run.seed), run.noise.floor)
    template = start if start is not None else cfg.build_model(run.start)
    problem = IdentificationProblem.create(template, mesh, protocol, data.history, run.free, data.valid)
    return problem, truth, run


class TestStrainLoss:
    def test_identical_fields(self):
        e = np.random.default_rng(1).normal(size=(3, 7, 3))
        assert strain_loss(e, e) == 0.0

    def test_known_value(self):
        ref = np.zeros((2, 4, 3))
        cand = np.full((2, 4, 3), 1e-3)
        # 2 steps x 4 points x 3 components of 1e-6, over 4 points
        assert strain_loss(ref, cand) == pytest.approx(6e-6)

    def test_invalid_points_are_ignored(self):
        ref = np.zeros((1, 3, 3))
        cand = ref.copy()
        cand[0, 2] = 1.0
        assert strain_loss(ref, cand, np.array([True, True, False])) == 0.0

    def test_no_valid_points(self):
        with pytest.raises(ValueError):
            strain_loss(np.zeros((1, 2, 3)), np.zeros((1, 2, 3)), np.zeros(2, dtype=bool))


class TestNelderMead:
    def test_finds_interior_minimum(self):
        res = nelder_mead(_bowl, [0.8, 0.5], ([-1.0, -1.0], [1.0, 1.0]), tol=1e-10)
        assert res.converged
        assert res.x == pytest.approx([0.3, -0.2], abs=1e-4)

    def test_best_value_never_increases(self):
        res = nelder_mead(_bowl, [0.8, 0.5], ([-1.0, -1.0], [1.0, 1.0]))
        assert np.all(np.diff(res.history) <= 0.0)
        assert res.relative_history[0] == 1.0

    def test_stays_in_the_box(self):
        res = nelder_mead(lambda x: float((x[0] - 2.0) ** 2), [0.5], ([0.0], [1.0]), tol=1e-10)
        assert 0.0 <= res.x[0] <= 1.0
        assert res.x[0] == pytest.approx(1.0, abs=1e-6)

    def test_iteration_cap(self):
        res = nelder_mead(_bowl, [0.8, 0.5], ([-1.0, -1.0], [1.0, 1.0]), tol=1e-14, max_iter=5)
        assert res.iterations == 5
        assert not res.converged

    def test_threads_do_not_change_the_path(self):
        a = nelder_mead(_bowl, [0.8, 0.5], ([-1.0, -1.0], [1.0, 1.0]))
        b = nelder_mead(_bowl, [0.8, 0.5], ([-1.0, -1.0], [1.0, 1.0]), threads=4)
        assert np.array_equal(a.x, b.x)
        assert a.history == b.history

    def test_start_outside_bounds(self):
        with pytest.raises(ValueError):
            nelder_mead(_bowl, [2.0, 0.0], ([-1.0, -1.0], [1.0, 1.0]))

    def test_rosenbrock(self):
        res = nelder_mead(_rosenbrock, [-1.2, 1.0], ([-2.0, -2.0], [2.0, 2.0]), tol=1e-10, max_iter=2000)
        assert res.converged
        assert res.x == pytest.approx([1.0, 1.0], abs=1e-4)

    def test_flat_function_stops_on_parameter_spread(self):
        """Equal values everywhere: only shrinking the simplex in x can end the search."""
        res = nelder_mead(lambda x: 1.0, [0.5], ([0.0], [1.0]), tol=1e-6)
        assert res.converged
        assert 0 < res.iterations < 100
        assert res.fx == 1.0

    def test_callback_sees_the_initial_simplex(self):
        seen = []
        res = nelder_mead(_bowl, [0.8, 0.5], ([-1.0, -1.0], [1.0, 1.0]), callback=lambda k, f: seen.append((k, f)))
        assert [k for k, _ in seen] == list(range(res.iterations + 1))
        assert [f for _, f in seen] == res.history


class TestProblem:
    def test_unknown_free_parameter(self, small_mesh, elastic_history, iso_elastic):
        with pytest.raises(ConfigError):
            IdentificationProblem.create(iso_elastic, small_mesh, UNIAXIAL, elastic_history, free=("E", "G12"))

    def test_yld2000_alphas_are_penalized(self, small_mesh, elastic_history):
        yld = Yld2000Swift(471.92, 123.4, 0.29, YLD2000_ALPHA_TRUTH)
        assert IdentificationProblem.create(yld, small_mesh, UNIAXIAL, elastic_history).penalized
        assert not IdentificationProblem.create(yld, small_mesh, UNIAXIAL, elastic_history, free=ALPHAS[:4]).penalized

    def test_objective_is_zero_at_the_truth(self, small_mesh, elastic_history, iso_elastic):
        problem = IdentificationProblem.create(iso_elastic, small_mesh, UNIAXIAL, elastic_history, free=("nu",))
        assert objective(problem, [iso_elastic.nu]) == pytest.approx(0.0, abs=1e-20)

    def test_traction_fixes_the_stiffness_scale(self, small_mesh, ortho_truth):
        """Scaling E1, E2 and G12 together leaves displacement-driven strains unchanged, not force-driven ones."""
        for protocol, separated in ((UNIAXIAL, False), (Protocol.uniaxial_force(0.42, 1, 0.5), True)):
            reference = solve(small_mesh, ortho_truth, protocol)
            problem = IdentificationProblem.create(ortho_truth, small_mesh, protocol, reference)
            theta = problem.vector()
            scaled = np.array([v if n == "nu12" else 1.5 * v for n, v in zip(problem.free, theta)])
            assert objective(problem, theta) == pytest.approx(0.0, abs=1e-20)
            if separated:
                assert objective(problem, scaled) > 1e-8
            else:
                assert objective(problem, scaled) < 1e-20

    def test_invalid_parameters_give_sentinel(self, small_mesh, elastic_history, hill48_truth):
        problem = IdentificationProblem.create(hill48_truth, small_mesh, UNIAXIAL, elastic_history, free=("n",))
        assert objective(problem, [1.5]) == LOSS_SENTINEL


class TestIdentify:
    def test_poisson_ratio_round_trip(self, small_mesh, elastic_history, iso_elastic, tmp_path):
        """Displacement-controlled strains fix nu but carry no information on E."""
        start = IsoElastic(60_000.0, 0.25)
        problem = IdentificationProblem.create(start, small_mesh, UNIAXIAL, elastic_history, free=("nu",))
        bus = EventBus()
        seen = []
        bus.subscribe(IterationCompleted, seen.append)
        result = identify(problem, problem.vector(), tol=1e-10, truth=[iso_elastic.nu], bus=bus)
        assert result.theta_hat[0] == pytest.approx(iso_elastic.nu, rel=1e-4)
        assert result.errors_percent[0] < 0.01
        assert [e.iteration for e in seen] == list(range(1, result.iterations + 1))
        for e in seen:
            assert e.relative_loss == pytest.approx(e.loss / result.loss_history[0])
        assert result.relative_loss[0] == 1.0
        assert result.history is not None
        written = write_identification(tmp_path, result, elastic_history, ["right"])
        assert all(p.exists() for p in written)
        assert result.table_rows()[0][0] == "nu"


@pytest.mark.slow
class TestRoundTrips:
    @pytest.mark.parametrize("start", [HILL48_THETA1, HILL48_THETA2], ids=["theta1", "theta2"])
    def test_hill48_on_the_holed_cruciform(self, start):
        problem, truth, run = _run_problem("identify_hill48.json", start=Hill48Swift(**start))
        result = identify(problem, problem.vector(), run.tol, run.max_iter, threads=4, truth=problem.vector(truth))
        assert result.iterations <= 300
        assert np.max(result.errors_percent) <= 5.0

    def test_uniaxial_tension_is_under_informative(self):
        """A uniform uniaxial field carries no shear and no transverse stress: F and N stay loose."""
        problem, truth, run = _run_problem(
            "identify_hill48.json", geometry="../specimens/ut.json", protocol="../protocols/uniaxial.json"
        )
        result = identify(problem, problem.vector(), run.tol, run.max_iter, threads=4, truth=problem.vector(truth))
        errors = dict(zip(problem.free, result.errors_percent))
        assert result.loss < 1e-2 * result.loss_history[0]
        assert max(errors["F"], errors["N"]) > 8.0

    def test_orthotropic_from_the_isotropic_start(self):
        problem, truth, run = _run_problem("identify_ortho.json")
        result = identify(problem, problem.vector(), run.tol, run.max_iter, threads=4, truth=problem.vector(truth))
        assert result.theta_hat == pytest.approx([ORTHO_TRUTH[n] for n in problem.free], rel=0.03)
        assert isinstance(result.model, OrthoElastic)

    def test_yld2000(self):
        problem, truth, run = _run_problem("identify_yld2000.json")
        result = identify(problem, problem.vector(), run.tol, run.max_iter, threads=4, truth=problem.vector(truth))
        errors = dict(zip(problem.free, result.errors_percent))
        assert max(errors[a] for a in ALPHAS) <= 4.0
        assert max(errors[p] for p in ("A", "sigma0", "n")) <= 6.0
