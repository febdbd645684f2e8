from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import kstest

from mechinfo import config as cfg
from mechinfo.constants import DESIGN_SEEDS
from mechinfo.entropy import SATISFIED, StressStateSpace, critical_point, gage_mask, gage_statistics, loading_path
from mechinfo.errors import SolverDivergenceError
from mechinfo.events import EventBus, TrialCompleted
from mechinfo.fem import FieldHistory, Protocol, SpecimenGeometry, generate_mesh, solve
from mechinfo.design import (
    INFEASIBLE,
    OK,
    SOLVER_FAILED,
    DesignSpace,
    EntropyEvaluator,
    ShearEvaluator,
    TrialRecord,
    _run_trial,
    optimize_entropy,
    optimize_shear,
    run_design,
    split_trials,
    tpe_propose,
    uniform_sample,
    write_design,
)

PEAK = 12.0
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def plate() -> SpecimenGeometry:
    return SpecimenGeometry("RectangleROI", {"width": 20.0, "height": 10.0})


@pytest.fixture
def one_hole(plate) -> DesignSpace:
    return DesignSpace(plate, "holes", (4.0, 16.0), (3.0, 7.0), (0.5, 1.0), max_features=1, min_features=1)


@pytest.fixture
def two_holes(plate) -> DesignSpace:
    return DesignSpace(plate, "holes", (4.0, 16.0), (3.0, 7.0), (0.5, 1.0), max_features=2)


def peaked(g: SpecimenGeometry):
    """Stub evaluator: H peaks where the first hole sits at x = PEAK."""
    x = g.holes[0][0] if g.holes else 0.0
    return {"H": 1.0 - (x - PEAK) ** 2 / 100.0}


def _trials(losses, failed=()):
    return [
        TrialRecord(i, {"x1": float(i)}, SOLVER_FAILED if i in failed else OK, math.inf if i in failed else loss)
        for i, loss in enumerate(losses)
    ]


class TestSplit:
    def test_good_set_size_uses_ceiling(self):
        good, bad = split_trials(_trials([5, 3, 8, 1, 9, 2, 7, 4]), 0.25)
        assert [t.number for t in good] == [3, 5]
        assert len(bad) == 6

    def test_failed_trials_are_always_bad(self):
        good, bad = split_trials(_trials([0.0, 1.0, 2.0, 3.0], failed={0}), 0.5)
        assert 0 not in {t.number for t in good}
        assert 0 in {t.number for t in bad}


class TestSampler:
    def test_uniform_fallback_covers_the_range(self, one_hole):
        rng = np.random.default_rng(0)
        draws = [tpe_propose([], one_hole, rng=rng)["x1"] for _ in range(2000)]
        assert kstest(draws, "uniform", args=(4.0, 12.0)).pvalue > 0.01

    def test_proposals_stay_in_range(self, two_holes):
        rng = np.random.default_rng(1)
        history = [
            TrialRecord(i, uniform_sample(two_holes, rng), OK, float(rng.normal())) for i in range(20)
        ]
        for _ in range(50):
            assert two_holes.contains(tpe_propose(history, two_holes, rng=rng))

    def test_startup_trials_are_uniform(self, one_hole):
        history = _trials([1.0, 2.0])
        for t in history:
            t.params = uniform_sample(one_hole, np.random.default_rng(t.number))
        a = tpe_propose(history, one_hole, rng=np.random.default_rng(5), n_startup=10)
        b = uniform_sample(one_hole, np.random.default_rng(5))
        assert a == b


class TestTrials:
    def test_overlapping_holes_are_infeasible(self, two_holes):
        P = {"count": 2, "x1": 8.0, "y1": 5.0, "r1": 1.0, "x2": 8.5, "y2": 5.0, "r2": 1.0}
        t = _run_trial(0, P, two_holes, peaked, lambda v: -v["H"], 0)
        assert t.status == INFEASIBLE
        assert math.isinf(t.loss)
        assert "ligament" in t.message

    def test_solver_failure_is_recorded(self, one_hole):
        def diverge(g):
            raise SolverDivergenceError("stub", {"halvings": 4})

        trials = run_design(one_hole, diverge, lambda v: -v["H"], 3, seed=1, n_startup=0)
        assert [t.status for t in trials] == [SOLVER_FAILED] * 3

    def test_sequence_is_reproducible(self, two_holes):
        bus = EventBus()
        seen = []
        bus.subscribe(TrialCompleted, seen.append)
        a = run_design(two_holes, peaked, lambda v: -v["H"], 15, seed=3, n_startup=5, bus=bus)
        b = run_design(two_holes, peaked, lambda v: -v["H"], 15, seed=3, n_startup=5)
        assert [t.params for t in a] == [t.params for t in b]
        assert [e.number for e in seen] == list(range(15))

    def test_threads_do_not_change_the_sequence(self, two_holes):
        a = run_design(two_holes, peaked, lambda v: -v["H"], 12, seed=4, n_startup=4, batch=3)
        b = run_design(two_holes, peaked, lambda v: -v["H"], 12, seed=4, n_startup=4, batch=3, threads=3)
        assert [t.params for t in a] == [t.params for t in b]


class TestOptimizeEntropy:
    def test_finds_one_dimensional_peak(self, one_hole):
        """60 trials land within 5 % of the x range of the peak."""
        result = optimize_entropy(one_hole, peaked, budget=60, seed=7)
        assert result.best is not None
        assert abs(result.best.params["x1"] - PEAK) <= 0.05 * 12.0
        values = [t.values["H"] for t in result.trials if t.status == OK]
        assert values == sorted(values, reverse=True)

    def test_outputs(self, one_hole, tmp_path):
        result = optimize_entropy(one_hole, peaked, budget=5, seed=0)
        paths = write_design(tmp_path, result)
        assert {p.name for p in paths} == {"trials.jsonl", "posterior.csv", "summary.json", "best_geometry.json"}
        assert result.summary()["status_counts"] == {OK: 5}


class TestOptimizeShear:
    def test_zero_entropy_designs_rank_by_triaxiality(self, one_hole):
        def stub(g):
            x, y, _ = g.holes[0]
            return {"H_bar": 0.0 if x > 10.0 else 0.4, "eta_bar": (y - 5.0) / 10.0}

        result = optimize_shear(one_hole, stub, budget=30, seed=2)
        zero = [t for t in result.trials if t.values["H_bar"] == 0.0]
        assert zero and result.trials[: len(zero)] == zero
        etas = [abs(t.values["eta_bar"]) for t in zero]
        assert etas == sorted(etas)
        assert all(t.status == OK for t in result.trials)

    def test_ideal_shear_field_scores_zero(self):
        n = 6
        history = FieldHistory(
            load_fraction=np.array([0.5, 1.0]),
            displacement=np.array([0.25, 0.5]),
            elem_ids=np.arange(n),
            coords=np.column_stack([np.arange(n, dtype=float), np.zeros(n)]),
            strain=np.zeros((2, n, 3)),
            stress=np.tile([0.0, 0.0, 60.0], (2, n, 1)),
            ebar_p=np.full((2, n), 0.01),
        )
        H_bar, eta_bar = gage_statistics(history, gage_mask(history, None), StressStateSpace.default())
        assert H_bar == 0.0
        assert eta_bar == pytest.approx(0.0, abs=1e-12)


@pytest.mark.slow
def test_plain_cruciform_has_two_state_entropy(hill48_theta1):
    """Without holes only the two tension states appear: H close to ln 2."""
    base = SpecimenGeometry("Cruciform", {"arm_length": 30.0, "arm_half_width": 10.0, "fillet": 3.0}, roi=(0.0, 0.0, 30.0, 30.0))
    evaluator = EntropyEvaluator(hill48_theta1, Protocol.quarter_biaxial(1.0, 5, 1.0))
    assert evaluator(base)["H"] == pytest.approx(math.log(2.0), abs=0.05)


def _shipped_design(name):
    """A shipped design run on a 1 mm mesh with five load steps."""
    run = cfg.load_run("design", CONFIGS / "runs" / name)
    protocol = replace(cfg.build_protocol(run.protocol), n_steps=5, element_size=1.0)
    dspace = cfg.build_design_space(run.design_space, cfg.build_geometry(run.geometry), protocol.element_size)
    return run, cfg.build_model(run.material), protocol, cfg.build_space(run.space), dspace


@pytest.mark.slow
def test_entropy_design_on_the_documented_seeds():
    """H > ln 2 inside the optimal range for at least three of the five seeds."""
    run, model, protocol, space, dspace = _shipped_design("design_cruciform.json")
    evaluator = EntropyEvaluator(model, protocol, space, dspace.element_size)
    hits = 0
    for seed in DESIGN_SEEDS:
        result = optimize_entropy(dspace, evaluator, space.n, run.budget, seed, threads=4)
        assert len(result.trials) == run.budget
        if result.best is not None and result.best.values["H"] > math.log(2.0) and result.verdict == SATISFIED:
            hits += 1
    assert hits >= 3


@pytest.mark.slow
def test_shear_design_keeps_a_pure_shear_path():
    run, model, protocol, space, dspace = _shipped_design("design_shear.json")
    evaluator = ShearEvaluator(model, protocol, dspace.gage, space, dspace.element_size)
    result = optimize_shear(dspace, evaluator, run.budget, run.seed, threads=4)
    assert result.best is not None
    h = solve(generate_mesh(result.best_geometry(), dspace.element_size), model, protocol)
    path = loading_path(h, critical_point(h, gage_mask(h, dspace.gage)))
    assert len(path) > 0
    assert np.all(np.abs(path.eta) < 0.05)
    assert np.all(np.abs(path.theta_bar) < 0.1)
