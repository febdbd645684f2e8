"""
Run documents.

Every CLI command reads one JSON document validated by a pydantic model
below. Nested material / geometry / protocol / noise / space documents may
be inlined or given as a path relative to the run document.
"""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .constants import (
    ANCHOR_ANGLES,
    BURN_IN_FRACTION,
    CHAIN_LENGTH,
    CREDIBLE_LEVEL,
    DEFAULT_DISPLACEMENT,
    DEFAULT_ELEMENT_SIZE,
    DEFAULT_N_STEPS,
    DELTA_ANGLE,
    DELTA_ETA,
    DELTA_RATIO,
    DELTA_THETA,
    DESIGN_BUDGET,
    MAX_FEATURES,
    MIN_BAND_SAMPLES,
    NM_MAX_ITER,
    NM_TOL,
    NORMALIZATION_WEIGHT,
    PROPOSAL_FRACTION,
    RESOLUTION_FLOOR,
    TPE_GAMMA,
    TPE_N_CANDIDATES,
    TPE_N_STARTUP,
)
from .constitutive import MaterialModel, model_from_dict
from .design import DesignSpace
from .entropy import DEFAULT_CLASS_IDS, StressStateSpace, space_from_dict
from .errors import ConfigError, MechInfoError
from .fem import Protocol, SpecimenGeometry, geometry_from_dict, protocol_from_dict
from .synth import NoiseSpec

LOG = logging.getLogger(__name__)

R = TypeVar("R", bound=BaseModel)

Pair = Tuple[float, float]
Triple = Tuple[float, float, float]
Box = Tuple[float, float, float, float]


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---- Nested documents ----
class MaterialDoc(_Doc):
    kind: str
    params: Dict[str, float]
    bounds: Dict[str, Pair] = Field(default_factory=dict)
    elastic: Optional[Dict[str, float]] = None
    a: Optional[int] = None


class GeometryDoc(_Doc):
    kind: str
    dims: Dict[str, float] = Field(default_factory=dict)
    holes: List[Triple] = Field(default_factory=list)
    notches: List[Triple] = Field(default_factory=list)
    thickness: float = Field(1.0, gt=0.0)
    outline: List[Pair] = Field(default_factory=list)
    cutouts: List[List[Pair]] = Field(default_factory=list)
    roi: Optional[Box] = None
    approximate: bool = False
    label: str = ""


class ConstraintDoc(_Doc):
    set: str
    dof: Literal["x", "y"]
    factor: float = 0.0
    gradient: Pair = (0.0, 0.0)


class LoadDoc(_Doc):
    set: str
    dof: Literal["x", "y"]
    force: float


class ProtocolDoc(_Doc):
    displacement: float = DEFAULT_DISPLACEMENT
    n_steps: int = Field(DEFAULT_N_STEPS, ge=1)
    element_size: float = Field(DEFAULT_ELEMENT_SIZE, gt=0.0)
    constraints: List[ConstraintDoc] = Field(min_length=1)
    loads: List[LoadDoc] = Field(default_factory=list)


class LocalizedDoc(_Doc):
    polygon: List[Pair] = Field(min_length=3)
    sigma: float = Field(ge=0.0)


class NoiseDoc(_Doc):
    sigma: float = Field(0.0, ge=0.0)
    missing_fraction: float = Field(0.0, ge=0.0, le=1.0)
    localized: Optional[LocalizedDoc] = None
    floor: Optional[float] = RESOLUTION_FLOOR


class SpaceDoc(_Doc):
    classes: List[str] = Field(default_factory=lambda: list(DEFAULT_CLASS_IDS), min_length=1)
    mode: Literal["plastic", "elastic"] = "plastic"
    delta_eta: float = Field(DELTA_ETA, gt=0.0)
    delta_theta: float = Field(DELTA_THETA, gt=0.0)
    delta_angle_deg: float = Field(math.degrees(DELTA_ANGLE), gt=0.0)
    delta_ratio: float = Field(DELTA_RATIO, gt=0.0)


class DesignSpaceDoc(_Doc):
    feature: Literal["holes", "notches"] = "holes"
    x_range: Pair
    y_range: Pair
    r_range: Pair
    max_features: int = Field(MAX_FEATURES, ge=0, le=MAX_FEATURES)
    min_features: int = Field(0, ge=0, le=MAX_FEATURES)
    element_size: Optional[float] = Field(None, gt=0.0)
    gage: Optional[Box] = None


# ---- Run documents ----
def band_samples(n_samples: int, burn_in_fraction: float, thin: int) -> int:
    """Chain samples left for a credible band after burn-in and thinning."""
    kept = n_samples - int(burn_in_fraction * n_samples)
    return -(-kept // thin)


class _Run(_Doc):
    seed: int = 0


class ForwardRun(_Run):
    material: MaterialDoc
    geometry: GeometryDoc
    protocol: ProtocolDoc


class EntropyRun(ForwardRun):
    space: SpaceDoc = Field(default_factory=SpaceDoc)
    step: int = -1
    pooled: bool = False


class IdentifyRun(_Run):
    geometry: GeometryDoc
    protocol: ProtocolDoc
    truth: MaterialDoc
    start: MaterialDoc
    free: Optional[List[str]] = None
    noise: NoiseDoc = Field(default_factory=NoiseDoc)
    tol: float = Field(NM_TOL, gt=0.0)
    max_iter: int = Field(NM_MAX_ITER, ge=1)
    normalization_weight: float = Field(NORMALIZATION_WEIGHT, ge=0.0)


class DesignRun(_Run):
    objective: Literal["entropy", "shear"] = "entropy"
    material: MaterialDoc
    geometry: GeometryDoc
    protocol: ProtocolDoc
    design_space: DesignSpaceDoc
    space: SpaceDoc = Field(default_factory=SpaceDoc)
    budget: int = Field(DESIGN_BUDGET, ge=1)
    gamma: float = Field(TPE_GAMMA, gt=0.0, le=1.0)
    n_candidates: int = Field(TPE_N_CANDIDATES, ge=1)
    n_startup: int = Field(TPE_N_STARTUP, ge=0)
    batch: int = Field(1, ge=1)


class UQRun(_Run):
    geometry: GeometryDoc
    protocol: ProtocolDoc
    truth: MaterialDoc
    start: MaterialDoc
    free: Optional[List[str]] = None
    noise: NoiseDoc = Field(default_factory=lambda: NoiseDoc(sigma=1e-3))
    n_samples: int = Field(CHAIN_LENGTH, ge=2)
    proposal_fraction: float = Field(PROPOSAL_FRACTION, gt=0.0)
    burn_in_fraction: float = Field(BURN_IN_FRACTION, ge=0.0, lt=1.0)
    level: float = Field(CREDIBLE_LEVEL, gt=0.0, lt=1.0)
    planes: List[Literal["s11-s22", "s22-t12"]] = Field(default_factory=lambda: ["s11-s22", "s22-t12"])
    n_points: int = Field(72, ge=16)
    angles_deg: List[float] = Field(default_factory=lambda: [float(a) for a in range(0, 91, 15)])
    thin: int = Field(1, ge=1)
    reduced_element_size: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _band_is_computable(self) -> "UQRun":
        if self.noise.sigma <= 0.0:
            raise ValueError("uq needs noise.sigma > 0: the likelihood variance is sigma**2")
        kept = band_samples(self.n_samples, self.burn_in_fraction, self.thin)
        if kept < MIN_BAND_SAMPLES:
            raise ValueError(
                f"n_samples={self.n_samples} leaves {kept} samples after burn-in and thinning; credible bands need {MIN_BAND_SAMPLES}"
            )
        return self


class LoadingPathDoc(_Doc):
    geometry: GeometryDoc
    protocol: ProtocolDoc
    point: Optional[int] = None  # defaults to the most strained ROI point


class ReportRun(_Run):
    material: MaterialDoc
    angles_deg: List[float] = Field(default_factory=lambda: [0.0, *ANCHOR_ANGLES])
    planes: List[Literal["s11-s22", "s22-t12"]] = Field(default_factory=lambda: ["s11-s22", "s22-t12"])
    n_points: int = Field(72, ge=16)
    quadrant: bool = False
    loading_path: Optional[LoadingPathDoc] = None


class StudyRun(_Run):
    study: Literal["sensitivity", "noise", "degraded"]
    geometry: GeometryDoc
    protocol: ProtocolDoc
    truth: MaterialDoc
    start: Optional[MaterialDoc] = None
    reference: Optional[MaterialDoc] = None  # von Mises-like guess for the sensitivity study
    biaxial: Optional[ProtocolDoc] = None
    space: SpaceDoc = Field(default_factory=SpaceDoc)
    free: Optional[List[str]] = None
    levels: List[float] = Field(default_factory=lambda: [0.0, 1e-3, 5e-3])
    max_iter: int = Field(NM_MAX_ITER, ge=1)
    sigma: float = Field(1e-3, gt=0.0)
    missing_fraction: float = Field(1.0 / 3.0, ge=0.0, le=1.0)
    localized: Optional[LocalizedDoc] = None
    n_samples: int = Field(2000, ge=2)
    n_points: int = Field(72, ge=16)

    @model_validator(mode="after")
    def _band_is_computable(self) -> "StudyRun":
        if self.study == "degraded" and band_samples(self.n_samples, BURN_IN_FRACTION, 1) < MIN_BAND_SAMPLES:
            raise ValueError(f"degraded study: n_samples={self.n_samples} leaves fewer than {MIN_BAND_SAMPLES} samples after burn-in")
        return self


RUN_MODELS: Dict[str, Type[BaseModel]] = {
    "forward": ForwardRun,
    "entropy": EntropyRun,
    "identify": IdentifyRun,
    "design": DesignRun,
    "uq": UQRun,
    "report": ReportRun,
    "study": StudyRun,
}

# keys whose value may be a path to another JSON document
NESTED_KEYS = ("material", "geometry", "protocol", "truth", "start", "reference", "biaxial", "noise", "space", "design_space", "loading_path")


# ---- Loading ----
def read_json(path: Union[str, Path]) -> Any:
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: malformed JSON ({exc})") from exc


def resolve_references(doc: Any, base: Path) -> Any:
    """Replace string values under NESTED_KEYS by the JSON document they point to."""
    if not isinstance(doc, dict):
        return doc
    out = dict(doc)
    for key in NESTED_KEYS:
        value = out.get(key)
        if isinstance(value, str):
            target = (base / value).resolve()
            LOG.debug("loading %s from %s", key, target)
            out[key] = resolve_references(read_json(target), target.parent)
        elif isinstance(value, dict):
            out[key] = resolve_references(value, base)
    return out


def validate_run(model: Type[R], doc: Any) -> R:
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid {model.__name__} document:\n{exc}") from exc


def load_run(command: str, path: Union[str, Path]) -> BaseModel:
    if command not in RUN_MODELS:
        raise ConfigError(f"unknown command {command!r}")
    p = Path(path)
    return validate_run(RUN_MODELS[command], resolve_references(read_json(p), p.parent))


# ---- Builders ----
def build_model(doc: MaterialDoc) -> MaterialModel:
    payload = doc.model_dump(exclude_none=True)
    try:
        return model_from_dict(payload)
    except MechInfoError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"material {doc.kind}: {exc}") from exc


def build_geometry(doc: GeometryDoc) -> SpecimenGeometry:
    return geometry_from_dict(doc.model_dump())


def build_protocol(doc: ProtocolDoc) -> Protocol:
    return protocol_from_dict(doc.model_dump())


def build_noise(doc: NoiseDoc, seed: int) -> NoiseSpec:
    return NoiseSpec.from_dict(doc.model_dump(exclude_none=True), seed)


def build_space(doc: SpaceDoc) -> StressStateSpace:
    return space_from_dict(doc.model_dump())


def build_design_space(doc: DesignSpaceDoc, base: SpecimenGeometry, element_size: float) -> DesignSpace:
    return DesignSpace(
        base,
        doc.feature,
        tuple(doc.x_range),  # type: ignore[arg-type]
        tuple(doc.y_range),  # type: ignore[arg-type]
        tuple(doc.r_range),  # type: ignore[arg-type]
        doc.max_features,
        doc.min_features,
        doc.element_size or element_size,
        doc.gage,
    )
