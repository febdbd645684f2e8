"""Synthetic DIC-like data from solver fields: resolution floor, Gaussian noise, dropout."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Tuple

import numpy as np

from .constants import RESOLUTION_FLOOR
from .errors import ConfigError
from .fem import FieldHistory
from .fem.geometry import points_in_polygon
from .fem.solver import FIELD_COLUMNS
from .io import write_csv

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalizedNoise:
    polygon: Tuple[Tuple[float, float], ...]
    sigma: float

    def __post_init__(self) -> None:
        if len(self.polygon) < 3:
            raise ConfigError("localized noise region needs at least 3 vertices")
        if not self.sigma >= 0.0:
            raise ConfigError("localized sigma must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0
    missing_fraction: float = 0.0
    localized: Optional[LocalizedNoise] = None

    def __post_init__(self) -> None:
        if not self.sigma >= 0.0:
            raise ConfigError("noise sigma must be >= 0")
        if not 0.0 <= self.missing_fraction <= 1.0:
            raise ConfigError("missing_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], seed: Optional[int] = None) -> "NoiseSpec":
        loc = doc.get("localized")
        localized = None
        if loc is not None:
            polygon = tuple(tuple(float(v) for v in p) for p in loc["polygon"])
            localized = LocalizedNoise(polygon, float(loc["sigma"]))  # type: ignore[arg-type]
        return cls(
            sigma=float(doc.get("sigma", 0.0)),
            seed=int(doc.get("seed", 0) if seed is None else seed),
            missing_fraction=float(doc.get("missing_fraction", 0.0)),
            localized=localized,
        )


@dataclass(frozen=True)
class SyntheticData:
    """
    Corrupted strain history ready for identification.

    - history: the clean history with its strain replaced by the observation
    - valid: (n_p,) points that survived dropout
    - variance: (n_p,) noise variance per point, used as the likelihood's diagonal
    - clean: the uncorrupted solver history
    """

    history: FieldHistory
    valid: np.ndarray
    variance: np.ndarray
    clean: FieldHistory

    @property
    def strain(self) -> np.ndarray:
        return self.history.strain

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))


def apply_resolution_floor(strain: np.ndarray, floor: float = RESOLUTION_FLOOR) -> np.ndarray:
    """Zero every strain component with |value| < floor."""
    e = np.array(strain, dtype=float, copy=True)
    e[np.abs(e) < floor] = 0.0
    return e


def point_sigma(spec: NoiseSpec, coords: np.ndarray) -> np.ndarray:
    sigma = np.full(len(coords), spec.sigma)
    if spec.localized is not None:
        inside = points_in_polygon(coords, np.array(spec.localized.polygon, dtype=float))
        sigma[inside] = spec.localized.sigma
        LOG.debug("localized noise sigma=%g on %d points", spec.localized.sigma, int(inside.sum()))
    return sigma


def corrupt(strain: np.ndarray, coords: np.ndarray, spec: NoiseSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Add i.i.d. Gaussian noise per strain component and draw a dropout mask.

    strain is (n_s, n_p, 3) or (n_p, 3). Noise and mask use independent
    streams spawned from spec.seed. Returns (strain, valid, variance).
    """
    e = np.asarray(strain, dtype=float)
    n_p = e.shape[-2]
    noise_seq, mask_seq = np.random.SeedSequence(spec.seed).spawn(2)
    sigma = point_sigma(spec, np.asarray(coords, dtype=float).reshape(n_p, 2))
    noisy = e + np.random.default_rng(noise_seq).standard_normal(e.shape) * sigma[:, None]
    if spec.missing_fraction > 0.0:
        valid = np.random.default_rng(mask_seq).random(n_p) >= spec.missing_fraction
    else:
        valid = np.ones(n_p, dtype=bool)
    return noisy, valid, sigma**2


def synthesize(history: FieldHistory, spec: NoiseSpec, floor: Optional[float] = RESOLUTION_FLOOR) -> SyntheticData:
    """Solver fields -> resolution floor -> noise -> dropout."""
    e = history.strain if floor is None else apply_resolution_floor(history.strain, floor)
    noisy, valid, variance = corrupt(e, history.coords, spec)
    LOG.info(
        "synthetic data: sigma=%g, %d/%d points valid, floor=%s",
        spec.sigma,
        int(valid.sum()),
        len(valid),
        "off" if floor is None else f"{floor:g}",
    )
    return SyntheticData(history.with_strain(noisy), valid, variance, history)


def write_synthetic_csv(path: Path, data: SyntheticData, columns: Sequence[str] = FIELD_COLUMNS) -> Path:
    h = data.history
    rows = []
    for k in range(h.n_steps):
        for j in range(h.n_points):
            rows.append(
                [k + 1, int(h.elem_ids[j]), *h.coords[j], *h.strain[k, j], *h.stress[k, j], h.ebar_p[k, j], data.valid[j]]
            )
    return write_csv(path, tuple(columns) + ("valid",), rows)
