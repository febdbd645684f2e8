"""
Bayesian uncertainty quantification of material parameters.

Uniform priors, a Gaussian full-field strain likelihood with known diagonal
noise and a random-walk Metropolis-Hastings sampler. Posterior samples are
pushed through derived quantities (yield loci, yield stress vs. angle) to
give pointwise credible bands.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cache import SolveCache
from .constants import (
    BURN_IN_FRACTION,
    CACHE_MAX_ENTRIES,
    CACHE_QUANTUM,
    CREDIBLE_LEVEL,
    DEBUG,
    MIN_BAND_SAMPLES,
    PROPOSAL_FRACTION,
)
from .constitutive import MaterialModel, normalized_yield_stress, yield_locus
from .errors import MechInfoError
from .events import ChainProgress, EventBus, publish
from .fem import Mesh, Protocol, solve
from .io import write_csv

LOG = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


# ---- Densities ----
def log_prior(theta: Sequence[float], bounds: Sequence[Tuple[float, float]]) -> float:
    """Uniform box prior: -sum ln(b - a) inside, -inf outside."""
    th = np.asarray(theta, dtype=float)
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(th < b[:, 0]) or np.any(th > b[:, 1]):
        return -math.inf
    return float(-np.sum(np.log(b[:, 1] - b[:, 0])))


def gaussian_terms(residual: np.ndarray, variance: Any) -> Tuple[float, float]:
    """
    (normalizer, misfit) of a diagonal Gaussian log-likelihood.

    residual is (..., n_p, 3) or any array; variance broadcasts against it
    per point (shape (n_p,) is expanded over the 3 strain components).
    """
    r = np.asarray(residual, dtype=float)
    var = np.asarray(variance, dtype=float)
    if var.ndim == 1 and r.ndim >= 2 and var.shape[0] == r.shape[-2]:
        var = var[:, None]
    var = np.broadcast_to(var, r.shape)
    if np.any(var <= 0.0):
        raise ValueError("noise variance must be positive")
    normalizer = -0.5 * r.size * _LOG_2PI - 0.5 * float(np.sum(np.log(var)))
    misfit = -0.5 * float(np.sum(r * r / var))
    return normalizer, misfit


def gaussian_log_likelihood(residual: np.ndarray, variance: Any) -> float:
    normalizer, misfit = gaussian_terms(residual, variance)
    return normalizer + misfit


@dataclass
class UQProblem:
    """
    Parameters to infer and the observation they explain.

    observed is the corrupted strain history (n_s, n_p, 3); variance the
    per-point noise variance (n_p,); invalid points drop out of n. The
    cache holds one log-likelihood per quantized theta, -inf included.
    """

    template: MaterialModel
    free: Tuple[str, ...]
    bounds: Tuple[Tuple[float, float], ...]
    mesh: Mesh
    protocol: Protocol
    observed: np.ndarray
    variance: np.ndarray
    valid: Optional[np.ndarray] = None
    quantum: float = CACHE_QUANTUM
    cache_size: int = CACHE_MAX_ENTRIES
    cache: SolveCache[float] = field(init=False)

    def __post_init__(self) -> None:
        self.cache = SolveCache(self.bounds, self.quantum, self.cache_size)
        if self.valid is None:
            self.valid = np.ones(self.observed.shape[1], dtype=bool)

    def model_at(self, theta: Sequence[float]) -> MaterialModel:
        return self.template.with_params(**{n: float(v) for n, v in zip(self.free, theta)})

    def forward(self, theta: Sequence[float]) -> np.ndarray:
        return solve(self.mesh, self.model_at(theta), self.protocol).strain

    def _evaluate(self, theta: Sequence[float]) -> float:
        try:
            predicted = self.forward(theta)
        except MechInfoError as exc:
            LOG.debug("likelihood -inf at %s: %s", np.asarray(theta), exc)
            return -math.inf
        valid = self.valid
        return gaussian_log_likelihood(self.observed[:, valid] - predicted[:, valid], self.variance[valid])

    def log_likelihood(self, theta: Sequence[float]) -> float:
        return self.cache.get_or_compute(theta, lambda: self._evaluate(theta))

    def log_posterior(self, theta: Sequence[float]) -> float:
        lp = log_prior(theta, self.bounds)
        if not math.isfinite(lp):
            return -math.inf
        return lp + self.log_likelihood(theta)

    def default_scales(self, fraction: float = PROPOSAL_FRACTION) -> np.ndarray:
        b = np.asarray(self.bounds, dtype=float)
        return fraction * (b[:, 1] - b[:, 0])


# ---- Sampler ----
@dataclass(frozen=True)
class Posterior:
    chain: np.ndarray  # (n, d), chain[0] is the start
    log_post: np.ndarray  # (n,)
    accepted: np.ndarray  # (n,) bool, False at index 0
    burn_in: int
    names: Tuple[str, ...] = ()

    @property
    def acceptance_rate(self) -> float:
        n = len(self.chain) - 1
        return float(np.count_nonzero(self.accepted)) / n if n > 0 else 0.0

    @property
    def samples(self) -> np.ndarray:
        return self.chain[self.burn_in :]

    def summary(self) -> Dict[str, Dict[str, float]]:
        s = self.samples
        names = self.names or tuple(f"p{i}" for i in range(s.shape[1]))
        lo, hi = np.quantile(s, [0.05, 0.95], axis=0)
        return {
            n: {"mean": float(s[:, i].mean()), "std": float(s[:, i].std(ddof=1)) if len(s) > 1 else 0.0, "q05": float(lo[i]), "q95": float(hi[i])}
            for i, n in enumerate(names)
        }


def run_chain(
    log_post: Callable[[np.ndarray], float],
    theta0: Sequence[float],
    proposal_scales: Sequence[float],
    n_samples: int,
    seed: int,
    burn_in_fraction: float = BURN_IN_FRACTION,
    names: Sequence[str] = (),
    bus: Optional[EventBus] = None,
) -> Posterior:
    """
    Random-walk Metropolis-Hastings with symmetric Gaussian proposals.

    A proposal is accepted when log U < log_post(new) - log_post(current).
    """
    theta = np.asarray(theta0, dtype=float)
    scales = np.asarray(proposal_scales, dtype=float)
    if scales.shape != theta.shape:
        raise ValueError("proposal scales must match the parameter vector")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    current = float(log_post(theta))
    if not math.isfinite(current):
        raise ValueError("theta0 lies outside the posterior support")
    rng = np.random.default_rng(seed)
    chain = np.empty((n_samples, len(theta)))
    lp = np.empty(n_samples)
    accepted = np.zeros(n_samples, dtype=bool)
    chain[0], lp[0] = theta, current
    every = max(int(DEBUG.chain_report_every), 1)
    for i in range(1, n_samples):
        proposal = chain[i - 1] + rng.standard_normal(len(theta)) * scales
        log_u = math.log(rng.random() or 5e-324)
        new = float(log_post(proposal))
        if math.isfinite(new) and log_u < new - lp[i - 1]:
            chain[i], lp[i], accepted[i] = proposal, new, True
        else:
            chain[i], lp[i] = chain[i - 1], lp[i - 1]
        if i % every == 0:
            rate = float(np.count_nonzero(accepted[: i + 1])) / i
            publish(bus, ChainProgress(i, rate, float(lp[i])))
            LOG.debug("chain %d/%d: acceptance %.3f, log_post %.6g", i, n_samples, rate, lp[i])
    burn = int(burn_in_fraction * n_samples)
    post = Posterior(chain, lp, accepted, burn, tuple(names))
    LOG.info("chain of %d samples, acceptance %.3f, burn-in %d", n_samples, post.acceptance_rate, burn)
    return post


# ---- Bands ----
@dataclass(frozen=True)
class CredibleBand:
    lo: np.ndarray
    hi: np.ndarray
    level: float
    n_samples: int


def credible_band(
    post: Posterior,
    quantity: Callable[[np.ndarray], Any],
    level: float = CREDIBLE_LEVEL,
    thin: int = 1,
) -> CredibleBand:
    """Pointwise (1 - level)/2 and (1 + level)/2 quantiles of quantity over post-burn-in samples."""
    samples = post.samples[:: max(thin, 1)]
    if len(samples) < MIN_BAND_SAMPLES:
        raise ValueError(f"credible bands need at least {MIN_BAND_SAMPLES} thinned post-burn-in samples, have {len(samples)}")
    values = np.array([np.atleast_1d(np.asarray(quantity(s), dtype=float)) for s in samples])
    tail = 0.5 * (1.0 - level)
    lo, hi = np.nanquantile(values, [tail, 1.0 - tail], axis=0)
    return CredibleBand(lo, hi, level, len(values))


def band_area(lo: np.ndarray, hi: np.ndarray, ray_angles: np.ndarray) -> float:
    """Area between two star-shaped curves sampled on equally spaced rays: 0.5 sum (hi^2 - lo^2) dpsi."""
    angles = np.asarray(ray_angles, dtype=float)
    dpsi = angles[1] - angles[0] if len(angles) > 1 else 0.0
    return float(0.5 * np.sum(np.asarray(hi) ** 2 - np.asarray(lo) ** 2) * dpsi)


def locus_quantity(template: MaterialModel, free: Sequence[str], plane: str, n_points: int) -> Callable[[np.ndarray], np.ndarray]:
    """Yield-locus radii per ray for a parameter vector; NaN where the locus does not exist."""

    def radii(theta: np.ndarray) -> np.ndarray:
        try:
            m = template.with_params(**{n: float(v) for n, v in zip(free, theta)})
            return yield_locus(m, plane, n_points).radii
        except MechInfoError:
            return np.full(n_points, np.nan)

    return radii


def yield_stress_quantity(template: MaterialModel, free: Sequence[str], angles_rad: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def ratio(theta: np.ndarray) -> np.ndarray:
        try:
            m = template.with_params(**{n: float(v) for n, v in zip(free, theta)})
            return np.asarray(normalized_yield_stress(m, angles_rad))
        except MechInfoError:
            return np.full(len(angles_rad), np.nan)

    return ratio


def write_chain_csv(path: Path, post: Posterior) -> Path:
    names = post.names or tuple(f"p{i}" for i in range(post.chain.shape[1]))
    rows = [[i, *post.chain[i], post.log_post[i], post.accepted[i]] for i in range(len(post.chain))]
    return write_csv(path, ("iter", *names, "log_post", "accepted"), rows)


def write_band_csv(path: Path, label: str, abscissa: np.ndarray, band: CredibleBand, truth: Optional[np.ndarray] = None) -> Path:
    header: List[str] = [label, "lo", "hi"] + (["truth"] if truth is not None else [])
    rows = []
    for i, a in enumerate(abscissa):
        row = [a, band.lo[i], band.hi[i]]
        if truth is not None:
            row.append(truth[i])
        rows.append(row)
    return write_csv(path, header, rows)
