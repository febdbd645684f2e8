"""
Stress-state entropy.

Points of a solved field are assigned to discrete stress-state classes
(uniaxial tension along RD or TD, shear, ...). Each classified point carries
unit mass split evenly over its classes; the class probabilities give the
Shannon entropy H = -sum p ln p of the specimen, in nats.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .constants import DELTA_ANGLE, DELTA_ETA, DELTA_RATIO, DELTA_THETA, PLASTIC_GATE
from .errors import ConfigError
from .fem import FieldHistory
from .io import write_csv
from .stress_metrics import StressDescriptor, describe

LOG = logging.getLogger(__name__)

MODES = ("plastic", "elastic")
AXES = ("rd", "td")

SATISFIED = "satisfied"
BELOW = "below-lower-bound"
ABOVE = "above-upper-bound"


# ---- Stress-state space ----
@dataclass(frozen=True)
class StateClass:
    """
    One discrete stress state.

    plastic mode targets (eta, theta_bar); elastic mode targets the ratio
    minor/major of the principal stresses ordered by magnitude and the sign of
    the major one. axis, when set, requires the major principal direction to
    lie within delta_angle of RD or TD.
    """

    id: str
    mode: str = "plastic"
    eta: float = float("nan")
    theta_bar: float = float("nan")
    ratio: float = float("nan")
    sign: int = 0  # 0 accepts either
    axis: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"class {self.id}: mode must be one of {MODES}")
        if self.axis is not None and self.axis not in AXES:
            raise ConfigError(f"class {self.id}: axis must be one of {AXES}")
        if self.mode == "plastic":
            if not (-2.0 / 3.0 <= self.eta <= 2.0 / 3.0 and -1.0 <= self.theta_bar <= 1.0):
                raise ConfigError(f"class {self.id}: (eta, theta_bar) target outside the plane-stress range")
        elif not -1.0 <= self.ratio <= 1.0:
            raise ConfigError(f"class {self.id}: principal ratio must lie in [-1, 1]")

    def target(self) -> Tuple[Any, ...]:
        if self.mode == "plastic":
            return (self.mode, round(self.eta, 12), round(self.theta_bar, 12), self.axis)
        return (self.mode, round(self.ratio, 12), self.sign, self.axis)


PLASTIC_CLASSES: Dict[str, StateClass] = {
    "UT-RD": StateClass("UT-RD", "plastic", eta=1.0 / 3.0, theta_bar=1.0, axis="rd"),
    "UT-TD": StateClass("UT-TD", "plastic", eta=1.0 / 3.0, theta_bar=1.0, axis="td"),
    "S": StateClass("S", "plastic", eta=0.0, theta_bar=0.0),
    "EB": StateClass("EB", "plastic", eta=2.0 / 3.0, theta_bar=-1.0),
    "UC": StateClass("UC", "plastic", eta=-1.0 / 3.0, theta_bar=-1.0),
    "PS": StateClass("PS", "plastic", eta=1.0 / math.sqrt(3.0), theta_bar=0.0),
}

ELASTIC_CLASSES: Dict[str, StateClass] = {
    "UT-RD": StateClass("UT-RD", "elastic", ratio=0.0, sign=1, axis="rd"),
    "UT-TD": StateClass("UT-TD", "elastic", ratio=0.0, sign=1, axis="td"),
    "S": StateClass("S", "elastic", ratio=-1.0),
    "EB": StateClass("EB", "elastic", ratio=1.0, sign=1),
    "UC": StateClass("UC", "elastic", ratio=0.0, sign=-1),
    "PS": StateClass("PS", "elastic", ratio=0.5, sign=1),
}

DEFAULT_CLASS_IDS = ("UT-RD", "UT-TD", "S")


@dataclass(frozen=True)
class StressStateSpace:
    classes: Tuple[StateClass, ...]
    delta_eta: float = DELTA_ETA
    delta_theta: float = DELTA_THETA
    delta_angle: float = DELTA_ANGLE
    delta_ratio: float = DELTA_RATIO

    def __post_init__(self) -> None:
        if not self.classes:
            raise ConfigError("stress-state space needs at least one class")
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate class ids in {ids}")
        targets = [c.target() for c in self.classes]
        if len(set(targets)) != len(targets):
            raise ConfigError("two classes share the same descriptor")
        if len({c.mode for c in self.classes}) != 1:
            raise ConfigError("classes of one space must share a mode")

    @classmethod
    def default(cls, ids: Sequence[str] = DEFAULT_CLASS_IDS, mode: str = "plastic", **tolerances: float) -> "StressStateSpace":
        catalog = PLASTIC_CLASSES if mode == "plastic" else ELASTIC_CLASSES
        try:
            return cls(tuple(catalog[i] for i in ids), **tolerances)
        except KeyError as exc:
            raise ConfigError(f"unknown class id {exc.args[0]!r}; known: {sorted(catalog)}") from exc

    @property
    def n(self) -> int:
        return len(self.classes)

    @property
    def ids(self) -> List[str]:
        return [c.id for c in self.classes]

    @property
    def mode(self) -> str:
        return self.classes[0].mode

    def index(self, class_id: str) -> int:
        return self.ids.index(class_id)


# ---- Classification ----
def _axis_ok(axis: Optional[str], angle: np.ndarray, delta: float) -> np.ndarray:
    if axis is None:
        return np.ones_like(angle, dtype=bool)
    if axis == "rd":
        return np.abs(angle) <= delta
    return np.abs(angle) >= 0.5 * math.pi - delta


def membership(d: StressDescriptor, ebar_p: Optional[np.ndarray], space: StressStateSpace, plastic_only: bool = True) -> np.ndarray:
    """(N, n) boolean class membership of every field point."""
    n_pts = len(d)
    out = np.zeros((n_pts, space.n), dtype=bool)
    eligible = np.asarray(d.classifiable, dtype=bool).copy()
    if plastic_only and ebar_p is not None:
        eligible &= np.asarray(ebar_p, dtype=float).reshape(n_pts) > PLASTIC_GATE
    if space.mode == "plastic":
        eta, tb = np.nan_to_num(d.eta), np.nan_to_num(d.theta_bar)
        for k, c in enumerate(space.classes):
            near = (np.abs(eta - c.eta) <= space.delta_eta) & (np.abs(tb - c.theta_bar) <= space.delta_theta)
            out[:, k] = near & _axis_ok(c.axis, d.angle, space.delta_angle)
        if "EB" not in space.ids:
            equibiaxial = (np.abs(eta - 2.0 / 3.0) <= space.delta_eta) & (np.abs(tb + 1.0) <= space.delta_theta)
            for k, c in enumerate(space.classes):
                if c.id in ("UT-RD", "UT-TD"):
                    out[:, k] |= equibiaxial
    else:
        swap = np.abs(d.s2) > np.abs(d.s1)
        major = np.where(swap, d.s2, d.s1)
        minor = np.where(swap, d.s1, d.s2)
        ratio = minor / np.where(major != 0.0, major, 1.0)
        angle = np.where(swap, np.where(d.angle > 0.0, d.angle - 0.5 * math.pi, d.angle + 0.5 * math.pi), d.angle)
        for k, c in enumerate(space.classes):
            match = np.abs(ratio - c.ratio) <= space.delta_ratio
            if c.sign:
                match &= np.sign(major) == c.sign
            out[:, k] = match & _axis_ok(c.axis, angle, space.delta_angle)
    out &= eligible[:, None]
    return out


def classify(d: StressDescriptor, ebar_p: float, space: StressStateSpace, plastic_only: bool = True) -> Set[str]:
    """Class ids matched by a single-point descriptor; may be empty."""
    row = membership(d, np.array([ebar_p]), space, plastic_only)[0]
    return {cid for cid, hit in zip(space.ids, row) if hit}


def class_mass(member: np.ndarray) -> np.ndarray:
    """Unit mass per classified point, split evenly over its matches."""
    counts = member.sum(axis=1)
    share = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    return (member * share[:, None]).sum(axis=0)


# ---- Entropy ----
def stress_state_entropy(p: Sequence[float]) -> float:
    """H = -sum p ln p in nats, with 0 ln 0 = 0."""
    q = np.asarray(p, dtype=float)
    q = q[q > 0.0]
    if q.size == 0:
        return 0.0
    return float(max(-np.sum(q * np.log(q)), 0.0))


def optimal_range_check(H: float, n: int) -> str:
    """ln(n - 1) < H <= ln(n)."""
    if n < 2:
        raise ValueError("the optimal-entropy range needs at least two classes")
    if H <= math.log(n - 1):
        return BELOW
    if H > math.log(n) + 1e-12:
        return ABOVE
    return SATISFIED


@dataclass(frozen=True)
class EntropyReport:
    class_ids: Tuple[str, ...]
    probabilities: np.ndarray
    H: float
    n_classified: float
    n_total: int
    criterion: Optional[str]
    step: Optional[int] = None
    pooled: bool = False

    @property
    def empty(self) -> bool:
        return self.n_classified == 0

    @property
    def H_max(self) -> float:
        return math.log(len(self.class_ids))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "classes": list(self.class_ids),
            "probabilities": {cid: float(p) for cid, p in zip(self.class_ids, self.probabilities)},
            "H": self.H,
            "H_max": self.H_max,
            "n_classified": self.n_classified,
            "n_total": self.n_total,
            "empty": self.empty,
            "criterion": self.criterion,
            "step": self.step,
            "pooled": self.pooled,
        }


def _report(mass: np.ndarray, n_classified: float, n_total: int, space: StressStateSpace, step: Optional[int], pooled: bool) -> EntropyReport:
    total = float(mass.sum())
    if total > 0.0:
        p = mass / total
    else:
        LOG.warning("no field point matched any stress-state class; entropy set to 0")
        p = np.zeros(space.n)
    H = stress_state_entropy(p)
    verdict = optimal_range_check(H, space.n) if space.n >= 2 else None
    return EntropyReport(tuple(space.ids), p, H, n_classified, n_total, verdict, step, pooled)


def state_probabilities(stress: np.ndarray, ebar_p: Optional[np.ndarray], space: StressStateSpace, plastic_only: bool = True) -> EntropyReport:
    """Class probabilities and entropy of one snapshot."""
    s = np.atleast_2d(np.asarray(stress, dtype=float))
    if len(s) == 0:
        raise ValueError("snapshot is empty")
    member = membership(describe(s), ebar_p, space, plastic_only)
    n_cls = int(np.count_nonzero(member.any(axis=1)))
    return _report(class_mass(member), n_cls, len(s), space, None, False)


def evaluate(history: FieldHistory, space: StressStateSpace, step: int = -1, pooled: bool = False, plastic_only: Optional[bool] = None) -> EntropyReport:
    """Entropy of the final (or a chosen) snapshot, or of the mass pooled over every step."""
    gate = space.mode == "plastic" if plastic_only is None else plastic_only
    steps = range(history.n_steps) if pooled else [step % history.n_steps]
    mass = np.zeros(space.n)
    n_cls, n_tot = 0, 0
    for k in steps:
        member = membership(describe(history.stress[k]), history.ebar_p[k], space, gate)
        mass += class_mass(member)
        n_cls += int(np.count_nonzero(member.any(axis=1)))
        n_tot += history.n_points
    return _report(mass, n_cls, n_tot, space, None if pooled else steps[0] + 1, pooled)


# ---- Diagnostics ----
@dataclass(frozen=True)
class LoadingPath:
    point: int
    step: np.ndarray
    ebar_p: np.ndarray
    eta: np.ndarray
    theta_bar: np.ndarray

    def __len__(self) -> int:
        return len(self.step)


def loading_path(history: FieldHistory, point: int) -> LoadingPath:
    """(ebar_p, eta, theta_bar) of one ROI point over the steps in which it has yielded."""
    if not 0 <= point < history.n_points:
        raise IndexError(f"point {point} outside 0..{history.n_points - 1}")
    eb = history.ebar_p[:, point]
    keep = np.flatnonzero(eb > 0.0)
    d = describe(history.stress[keep, point]) if len(keep) else None
    if d is None:
        empty = np.zeros(0)
        return LoadingPath(point, np.zeros(0, dtype=int), empty, empty, empty)
    return LoadingPath(point, keep + 1, eb[keep], d.eta, d.theta_bar)


def critical_point(history: FieldHistory, mask: Optional[np.ndarray] = None) -> int:
    """ROI point with the largest final equivalent plastic strain (within mask)."""
    eb = history.ebar_p[-1].copy()
    if mask is not None:
        eb = np.where(mask, eb, -np.inf)
    return int(np.argmax(eb))


def gage_mask(history: FieldHistory, box: Optional[Tuple[float, float, float, float]]) -> np.ndarray:
    if box is None:
        return np.ones(history.n_points, dtype=bool)
    x0, y0, x1, y1 = box
    x, y = history.coords[:, 0], history.coords[:, 1]
    return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


def gage_statistics(history: FieldHistory, mask: np.ndarray, space: StressStateSpace) -> Tuple[float, float]:
    """
    (H_bar, eta_bar) over the gage points.

    H_bar averages the per-step gage entropy over the steps that have any
    classified point; eta_bar averages the mean triaxiality of yielded gage
    points over the same steps. With nothing classified H_bar = ln n and
    eta_bar = NaN.
    """
    mask = np.asarray(mask, dtype=bool)
    Hs: List[float] = []
    etas: List[float] = []
    for k in range(history.n_steps):
        d = describe(history.stress[k, mask])
        eb = history.ebar_p[k, mask]
        member = membership(d, eb, space, plastic_only=True)
        if not member.any():
            continue
        mass = class_mass(member)
        Hs.append(stress_state_entropy(mass / mass.sum()))
        yielded = (eb > PLASTIC_GATE) & d.classifiable
        etas.append(float(np.mean(d.eta[yielded])))
    if not Hs:
        return math.log(space.n), float("nan")
    return float(np.mean(Hs)), float(np.mean(etas))


SCATTER_COLUMNS = ("step", "elem_id", "s11", "s22", "t12", "ebar_p", "eta", "theta_bar", "classes")


def scatter_rows(history: FieldHistory, space: StressStateSpace, steps: Optional[Sequence[int]] = None) -> List[List[Any]]:
    """eta-theta_bar and stress-space scatter of every point, with its matched classes."""
    rows: List[List[Any]] = []
    gate = space.mode == "plastic"
    for k in steps if steps is not None else range(history.n_steps):
        d = describe(history.stress[k])
        member = membership(d, history.ebar_p[k], space, gate)
        for j in range(history.n_points):
            tags = "|".join(cid for cid, hit in zip(space.ids, member[j]) if hit)
            rows.append(
                [k + 1, int(history.elem_ids[j]), *history.stress[k, j], history.ebar_p[k, j], d.eta[j], d.theta_bar[j], tags]
            )
    return rows


def write_scatter_csv(path: Path, history: FieldHistory, space: StressStateSpace, steps: Optional[Sequence[int]] = None) -> Path:
    return write_csv(path, SCATTER_COLUMNS, scatter_rows(history, space, steps))


def space_from_dict(doc: Mapping[str, Any]) -> StressStateSpace:
    ids = tuple(doc.get("classes", DEFAULT_CLASS_IDS))
    tolerances = {k: float(doc[k]) for k in ("delta_eta", "delta_theta", "delta_ratio") if k in doc}
    if "delta_angle_deg" in doc:
        tolerances["delta_angle"] = math.radians(float(doc["delta_angle_deg"]))
    return StressStateSpace.default(ids, str(doc.get("mode", "plastic")), **tolerances)


