"""
Bayesian specimen design with a Tree-structured Parzen Estimator.

A design is a set of circular features (holes in a cruciform, notch tips in a
shear plate). Each trial proposes a design, meshes and solves it with the
initial-guess material and scores the resulting stress field. Trials are
split at the gamma-quantile of their loss into a good and a bad set; a
per-dimension kernel mixture is fitted to each and the candidate maximizing
l(P) / g(P) becomes the next proposal.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import truncnorm

from .constants import (
    DEBUG,
    DEFAULT_ELEMENT_SIZE,
    DESIGN_BUDGET,
    MAX_FEATURES,
    TPE_GAMMA,
    TPE_N_CANDIDATES,
    TPE_N_STARTUP,
    TPE_PRIOR_WEIGHT,
    ZERO_ENTROPY_TOL,
)
from .constitutive import MaterialModel
from .entropy import StressStateSpace, evaluate, gage_mask, gage_statistics, optimal_range_check
from .errors import ConfigError, GeometryError, NumericalError
from .events import EventBus, TrialCompleted, publish
from .fem import Protocol, SpecimenGeometry, generate_mesh, solve, with_features
from .io import write_csv, write_json, write_jsonl

LOG = logging.getLogger(__name__)

OK = "ok"
INFEASIBLE = "infeasible"
SOLVER_FAILED = "solver-failed"

Range = Tuple[float, float]


# ---- Design space ----
@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float
    choices: Tuple[int, ...] = ()  # non-empty for the categorical feature count

    @property
    def categorical(self) -> bool:
        return bool(self.choices)


@dataclass(frozen=True)
class DesignSpace:
    """
    Circular features placed on a base specimen.

    feature is "holes" or "notches"; each slot i contributes x_i, y_i, r_i and
    the categorical "count" decides how many slots are used.
    """

    base: SpecimenGeometry
    feature: str = "holes"
    x_range: Range = (0.0, 1.0)
    y_range: Range = (0.0, 1.0)
    r_range: Range = (0.5, 1.0)
    max_features: int = MAX_FEATURES
    min_features: int = 0
    element_size: float = DEFAULT_ELEMENT_SIZE
    gage: Optional[Tuple[float, float, float, float]] = None

    def __post_init__(self) -> None:
        if self.feature not in ("holes", "notches"):
            raise ConfigError("feature must be 'holes' or 'notches'")
        if not 0 <= self.min_features <= self.max_features <= MAX_FEATURES:
            raise ConfigError(f"need 0 <= min_features <= max_features <= {MAX_FEATURES}")
        for name, (lo, hi) in (("x", self.x_range), ("y", self.y_range), ("r", self.r_range)):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"{name}_range must be finite with lower < upper")
        if self.r_range[0] <= 0.0:
            raise ConfigError("radii must be positive")

    def dimensions(self) -> List[Dimension]:
        dims = [Dimension("count", self.min_features, self.max_features, tuple(range(self.min_features, self.max_features + 1)))]
        for i in range(1, self.max_features + 1):
            dims += [
                Dimension(f"x{i}", *self.x_range),
                Dimension(f"y{i}", *self.y_range),
                Dimension(f"r{i}", *self.r_range),
            ]
        return dims

    def features(self, P: Mapping[str, float]) -> List[Tuple[float, float, float]]:
        count = int(P.get("count", self.max_features))
        return [(float(P[f"x{i}"]), float(P[f"y{i}"]), float(P[f"r{i}"])) for i in range(1, count + 1)]

    def geometry(self, P: Mapping[str, float]) -> SpecimenGeometry:
        feats = self.features(P)
        if self.feature == "holes":
            return with_features(self.base, holes=feats, notches=self.base.notches)
        return with_features(self.base, holes=self.base.holes, notches=feats)

    def contains(self, P: Mapping[str, float]) -> bool:
        for d in self.dimensions():
            v = P[d.name]
            if d.categorical and int(v) not in d.choices:
                return False
            if not d.categorical and not d.low <= v <= d.high:
                return False
        return True


# ---- Trials ----
@dataclass
class TrialRecord:
    number: int
    params: Dict[str, float]
    status: str
    loss: float = math.inf  # minimized by the sampler
    values: Dict[str, float] = field(default_factory=dict)
    seed: int = 0
    message: str = ""

    def as_dict(self) -> Dict[str, Any]:
        return {
            "number": self.number,
            "status": self.status,
            "params": self.params,
            "loss": self.loss,
            "values": self.values,
            "seed": self.seed,
            "message": self.message,
        }


def split_trials(history: Sequence[TrialRecord], gamma: float = TPE_GAMMA) -> Tuple[List[TrialRecord], List[TrialRecord]]:
    """Good set: the ceil(gamma * n) lowest-loss ok trials; everything else is bad."""
    n_good = int(math.ceil(gamma * len(history)))
    ok = sorted((t for t in history if t.status == OK and math.isfinite(t.loss)), key=lambda t: (t.loss, t.number))
    good = ok[:n_good]
    chosen = {t.number for t in good}
    bad = [t for t in history if t.number not in chosen]
    return good, bad


# ---- Parzen estimators ----
class _NumericParzen:
    """Truncated-Gaussian mixture on [low, high] with a wide prior component."""

    def __init__(self, obs: np.ndarray, low: float, high: float, prior_weight: float = TPE_PRIOR_WEIGHT) -> None:
        self.low, self.high = low, high
        span = high - low
        mus = np.append(np.asarray(obs, dtype=float), 0.5 * (low + high))
        order = np.argsort(mus, kind="stable")
        sorted_mus = mus[order]
        padded = np.concatenate([[low], sorted_mus, [high]])
        gaps = np.maximum(padded[1:-1] - padded[:-2], padded[2:] - padded[1:-1])
        sig_sorted = np.clip(gaps, span / min(100.0, 1.0 + len(mus)), span)
        sigmas = np.empty_like(mus)
        sigmas[order] = sig_sorted
        sigmas[-1] = span
        weights = np.append(np.ones(len(obs)), prior_weight)
        self.mus, self.sigmas = mus, sigmas
        self.weights = weights / weights.sum()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        comp = rng.choice(len(self.mus), size=size, p=self.weights)
        mu, sd = self.mus[comp], self.sigmas[comp]
        a, b = (self.low - mu) / sd, (self.high - mu) / sd
        return truncnorm.rvs(a, b, loc=mu, scale=sd, random_state=rng)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)[:, None]
        a = (self.low - self.mus) / self.sigmas
        b = (self.high - self.mus) / self.sigmas
        comp = truncnorm.logpdf(x, a, b, loc=self.mus, scale=self.sigmas)
        return logsumexp(comp + np.log(self.weights), axis=1)


class _CategoricalParzen:
    def __init__(self, obs: np.ndarray, choices: Sequence[int], prior_weight: float = TPE_PRIOR_WEIGHT) -> None:
        self.choices = np.asarray(choices, dtype=int)
        counts = np.array([np.count_nonzero(np.asarray(obs, dtype=int) == c) for c in self.choices], dtype=float)
        counts += prior_weight / len(self.choices)
        self.probs = counts / counts.sum()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.choices[rng.choice(len(self.choices), size=size, p=self.probs)].astype(float)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.choices, np.asarray(x, dtype=int))
        return np.log(self.probs[np.clip(idx, 0, len(self.choices) - 1)])


def _estimator(dim: Dimension, trials: Sequence[TrialRecord]) -> Any:
    obs = np.array([t.params[dim.name] for t in trials], dtype=float)
    if dim.categorical:
        return _CategoricalParzen(obs, dim.choices)
    return _NumericParzen(obs, dim.low, dim.high)


def uniform_sample(space: DesignSpace, rng: np.random.Generator) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for d in space.dimensions():
        out[d.name] = float(rng.choice(d.choices)) if d.categorical else float(rng.uniform(d.low, d.high))
    return out


def tpe_propose(
    history: Sequence[TrialRecord],
    space: DesignSpace,
    gamma: float = TPE_GAMMA,
    n_candidates: int = TPE_N_CANDIDATES,
    rng: Optional[np.random.Generator] = None,
    n_startup: int = 0,
) -> Dict[str, float]:
    """Next design; uniform while the history is shorter than n_startup or has no good trial."""
    rng = rng if rng is not None else np.random.default_rng()
    if len(history) < max(n_startup, 1):
        return uniform_sample(space, rng)
    good, bad = split_trials(history, gamma)
    if not good:
        return uniform_sample(space, rng)
    score = np.zeros(n_candidates)
    cand: Dict[str, np.ndarray] = {}
    for d in space.dimensions():
        l_est, g_est = _estimator(d, good), _estimator(d, bad)
        cand[d.name] = l_est.sample(rng, n_candidates)
        score += l_est.log_pdf(cand[d.name]) - g_est.log_pdf(cand[d.name])
    best = int(np.argmax(score))
    out = {}
    for d in space.dimensions():
        v = float(cand[d.name][best])
        out[d.name] = float(int(round(v))) if d.categorical else min(max(v, d.low), d.high)
    return out


# ---- Evaluators ----
Evaluator = Callable[[SpecimenGeometry], Dict[str, float]]


@dataclass
class EntropyEvaluator:
    """Mesh, solve with the design-time model and return the specimen entropy H."""

    model: MaterialModel
    protocol: Protocol
    space: StressStateSpace = field(default_factory=StressStateSpace.default)
    element_size: Optional[float] = None

    def __call__(self, g: SpecimenGeometry) -> Dict[str, float]:
        mesh = generate_mesh(g, self.element_size or self.protocol.element_size)
        report = evaluate(solve(mesh, self.model, self.protocol), self.space)
        return {"H": report.H}


@dataclass
class ShearEvaluator:
    """Gage-averaged entropy and triaxiality of a notched shear plate."""

    model: MaterialModel
    protocol: Protocol
    gage: Optional[Tuple[float, float, float, float]] = None
    space: StressStateSpace = field(default_factory=StressStateSpace.default)
    element_size: Optional[float] = None

    def __call__(self, g: SpecimenGeometry) -> Dict[str, float]:
        mesh = generate_mesh(g, self.element_size or self.protocol.element_size)
        h = solve(mesh, self.model, self.protocol)
        H_bar, eta_bar = gage_statistics(h, gage_mask(h, self.gage), self.space)
        return {"H_bar": H_bar, "eta_bar": eta_bar}


def _run_trial(number: int, P: Dict[str, float], space: DesignSpace, evaluator: Evaluator, loss_fn: Callable[[Dict[str, float]], float], seed: int) -> TrialRecord:
    try:
        g = space.geometry(P)
        g.validate(space.element_size)
    except GeometryError as exc:
        return TrialRecord(number, P, INFEASIBLE, math.inf, {}, seed, str(exc))
    try:
        values = evaluator(g)
    except GeometryError as exc:
        return TrialRecord(number, P, INFEASIBLE, math.inf, {}, seed, str(exc))
    except NumericalError as exc:
        return TrialRecord(number, P, SOLVER_FAILED, math.inf, {}, seed, str(exc))
    loss = float(loss_fn(values))
    # a non-finite loss only sends the trial to the bad set
    return TrialRecord(number, P, OK, loss if math.isfinite(loss) else math.inf, values, seed)


def run_design(
    space: DesignSpace,
    evaluator: Evaluator,
    loss_fn: Callable[[Dict[str, float]], float],
    budget: int,
    seed: int,
    gamma: float = TPE_GAMMA,
    n_candidates: int = TPE_N_CANDIDATES,
    n_startup: int = TPE_N_STARTUP,
    batch: int = 1,
    threads: int = 1,
    history: Optional[List[TrialRecord]] = None,
    bus: Optional[EventBus] = None,
) -> List[TrialRecord]:
    """
    Sequential model-based optimization loop.

    Every trial number k draws from its own stream SeedSequence([seed, k]), so
    the sequence is reproducible and independent of `threads`.
    """
    trials: List[TrialRecord] = list(history or [])
    start = len(trials)
    while len(trials) < start + budget:
        size = min(batch, start + budget - len(trials))
        numbers = list(range(len(trials), len(trials) + size))
        proposals = []
        for k in numbers:
            rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
            proposals.append(tpe_propose(trials, space, gamma, n_candidates, rng, n_startup))
        jobs = [(k, P, space, evaluator, loss_fn, seed) for k, P in zip(numbers, proposals)]
        if threads > 1 and size > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                done = list(pool.map(lambda job: _run_trial(*job), jobs))
        else:
            done = [_run_trial(*job) for job in jobs]
        for t in done:
            trials.append(t)
            publish(bus, TrialCompleted(t.number, t.status, t.loss))
            if DEBUG.trace_trials:
                LOG.info("trial %d: %s loss=%.6g %s", t.number, t.status, t.loss, t.message)
    return trials


# ---- Drivers ----
@dataclass
class DesignResult:
    trials: List[TrialRecord]  # best first
    objective: str
    verdict: Optional[str] = None
    space: Optional[DesignSpace] = None

    @property
    def best(self) -> Optional[TrialRecord]:
        return self.trials[0] if self.trials and self.trials[0].status == OK else None

    def best_geometry(self) -> Optional[SpecimenGeometry]:
        if self.best is None or self.space is None:
            return None
        return self.space.geometry(self.best.params)

    def summary(self) -> Dict[str, Any]:
        counts: Dict[str, int] = {}
        for t in self.trials:
            counts[t.status] = counts.get(t.status, 0) + 1
        return {
            "objective": self.objective,
            "n_trials": len(self.trials),
            "status_counts": counts,
            "best": None if self.best is None else self.best.as_dict(),
            "verdict": self.verdict,
        }


def optimize_entropy(
    space: DesignSpace,
    evaluator: Evaluator,
    n_classes: int = 3,
    budget: int = DESIGN_BUDGET,
    seed: int = 0,
    **kwargs: Any,
) -> DesignResult:
    """Maximize H; trials come back sorted by H, best first, failures last."""
    trials = run_design(space, evaluator, lambda v: -v["H"], budget, seed, **kwargs)
    ranked = sorted(trials, key=lambda t: (t.status != OK, t.loss, t.number))
    best = ranked[0] if ranked and ranked[0].status == OK else None
    verdict = optimal_range_check(best.values["H"], n_classes) if best is not None and n_classes >= 2 else None
    if best is not None:
        LOG.info("best design: trial %d, H=%.4f (%s)", best.number, best.values["H"], verdict)
    return DesignResult(ranked, "max H", verdict, space)


def _shear_rank(t: TrialRecord, tol: float) -> Tuple[Any, ...]:
    if t.status != OK:
        return (2, math.inf, t.number)
    if t.values["H_bar"] < tol:
        return (0, abs(t.values["eta_bar"]), t.number)
    return (1, t.values["H_bar"], t.number)


def optimize_shear(
    space: DesignSpace,
    evaluator: Evaluator,
    budget: int = DESIGN_BUDGET,
    seed: int = 0,
    zero_tol: float = ZERO_ENTROPY_TOL,
    **kwargs: Any,
) -> DesignResult:
    """
    Sequential two-objective search.

    Phase 1 (first half of the budget) minimizes the gage entropy H_bar.
    Phase 2 continues from that history minimizing |eta_bar| among designs
    with H_bar < zero_tol; other designs count as bad. Trials are ranked by
    |eta_bar| within the zero-entropy group, then by H_bar.
    """
    phase1 = budget // 2
    trials = run_design(space, evaluator, lambda v: v["H_bar"], phase1, seed, **kwargs)

    def phase2_loss(v: Dict[str, float]) -> float:
        return abs(v["eta_bar"]) if v["H_bar"] < zero_tol and math.isfinite(v["eta_bar"]) else math.inf

    for t in trials:
        if t.status == OK:
            t.loss = phase2_loss(t.values)
    trials = run_design(space, evaluator, phase2_loss, budget - phase1, seed, history=trials, **kwargs)
    ranked = sorted(trials, key=lambda t: _shear_rank(t, zero_tol))
    return DesignResult(ranked, "min H_bar then min |eta_bar|", None, space)


# ---- Export ----
def posterior_rows(result: DesignResult) -> Tuple[List[str], List[List[Any]]]:
    names = [d.name for d in result.space.dimensions()] if result.space else []
    header = ["number", "status", *names, "H", "H_bar", "eta_bar", "loss"]
    rows = []
    for t in sorted(result.trials, key=lambda t: t.number):
        v = t.values
        rows.append(
            [t.number, t.status, *(t.params.get(n, float("nan")) for n in names),
             v.get("H", float("nan")), v.get("H_bar", float("nan")), v.get("eta_bar", float("nan")), t.loss]
        )
    return header, rows


def write_design(out: Path, result: DesignResult) -> List[Path]:
    out = Path(out)
    header, rows = posterior_rows(result)
    paths = [
        write_jsonl(out / "trials.jsonl", (t.as_dict() for t in sorted(result.trials, key=lambda t: t.number))),
        write_csv(out / "posterior.csv", header, rows),
        write_json(out / "summary.json", result.summary()),
    ]
    g = result.best_geometry()
    if g is not None:
        paths.append(write_json(out / "best_geometry.json", g.to_dict()))
    return paths
