from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from ..constants import (
    ALPHA_BOUNDS,
    DEFAULT_E,
    DEFAULT_NU,
    HILL48_BOUNDS,
    ORTHO_BOUNDS,
    SWIFT_BOUNDS,
    YLD2000_EXPONENT,
)
from ..errors import InvalidParameterError
from . import yield_functions as yf

Bounds = Dict[str, Tuple[float, float]]


def _check(cond: bool, kind: str, message: str) -> None:
    if not cond:
        raise InvalidParameterError(f"{kind}: {message}")


class _ParamsMixin:
    """Named-parameter access shared by every model (params, bounds, with_params)."""

    KIND: ClassVar[str] = ""
    PARAMS: ClassVar[Tuple[str, ...]] = ()
    DEFAULT_BOUNDS: ClassVar[Bounds] = {}

    @property
    def params(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in self.PARAMS}

    def param_bounds(self) -> Bounds:
        merged = dict(self.DEFAULT_BOUNDS)
        merged.update(getattr(self, "bounds", None) or {})
        return merged

    def with_params(self, **updates: float) -> Any:
        unknown = set(updates) - set(self.PARAMS)
        if unknown:
            raise InvalidParameterError(f"{self.KIND}: unknown parameters {sorted(unknown)}")
        return dataclasses.replace(self, **updates)  # type: ignore[arg-type]


# ---- Elasticity ----
@dataclass(frozen=True)
class IsoElastic(_ParamsMixin):
    E: float
    nu: float
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict, compare=False, repr=False)

    KIND: ClassVar[str] = "IsoElastic"
    PARAMS: ClassVar[Tuple[str, ...]] = ("E", "nu")
    DEFAULT_BOUNDS: ClassVar[Bounds] = {"E": (1e3, 4e5), "nu": (0.0, 0.49)}

    def __post_init__(self) -> None:
        _check(self.E > 0.0, self.KIND, "E must be positive")
        _check(0.0 <= self.nu < 0.5, self.KIND, "nu must lie in [0, 0.5)")

    def stiffness(self) -> np.ndarray:
        """Plane-stress C acting on engineering strains (e11, e22, gamma12)."""
        k = self.E / (1.0 - self.nu * self.nu)
        return k * np.array([[1.0, self.nu, 0.0], [self.nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - self.nu)]])


@dataclass(frozen=True)
class OrthoElastic(_ParamsMixin):
    E1: float
    E2: float
    nu12: float
    G12: float
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict, compare=False, repr=False)

    KIND: ClassVar[str] = "OrthoElastic"
    PARAMS: ClassVar[Tuple[str, ...]] = ("E1", "E2", "nu12", "G12")
    DEFAULT_BOUNDS: ClassVar[Bounds] = ORTHO_BOUNDS

    def __post_init__(self) -> None:
        _check(self.E1 > 0.0 and self.E2 > 0.0 and self.G12 > 0.0, self.KIND, "E1, E2, G12 must be positive")
        _check(1.0 - self.nu12 * self.nu21 > 0.0, self.KIND, "1 - nu12*nu21 must be positive")

    @property
    def nu21(self) -> float:
        return self.nu12 * self.E2 / self.E1

    def stiffness(self) -> np.ndarray:
        d = 1.0 - self.nu12 * self.nu21
        c12 = self.nu12 * self.E2 / d
        return np.array([[self.E1 / d, c12, 0.0], [c12, self.E2 / d, 0.0], [0.0, 0.0, self.G12]])


ElasticModel = Union[IsoElastic, OrthoElastic]
_DEFAULT_ELASTIC = IsoElastic(DEFAULT_E, DEFAULT_NU)


# ---- Hardening ----
class _SwiftMixin:
    """Swift power law sigma_Y = A (ebar_p + eps0)^n with eps0 = (sigma0 / A)^(1/n)."""

    A: float
    sigma0: float
    n: float

    @property
    def eps0(self) -> float:
        return (self.sigma0 / self.A) ** (1.0 / self.n)

    def flow_stress(self, ebar_p: Any) -> Any:
        return self.A * (np.asarray(ebar_p, dtype=float) + self.eps0) ** self.n

    def hardening_modulus(self, ebar_p: Any) -> Any:
        return self.n * self.A * (np.asarray(ebar_p, dtype=float) + self.eps0) ** (self.n - 1.0)

    def _check_swift(self, kind: str) -> None:
        _check(self.A > 0.0 and self.sigma0 > 0.0, kind, "A and sigma0 must be positive")
        _check(0.0 < self.n < 1.0, kind, "n must lie in (0, 1)")


# ---- Plasticity ----
@dataclass(frozen=True)
class Hill48Swift(_SwiftMixin, _ParamsMixin):
    """
    Hill48 yield with Swift hardening, associative flow.

    H = 1 - G is derived and never a free parameter, so RD uniaxial yield equals sigma0.
    """

    A: float
    sigma0: float
    n: float
    F: float
    G: float
    N: float
    elastic: ElasticModel = _DEFAULT_ELASTIC
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict, compare=False, repr=False)

    KIND: ClassVar[str] = "Hill48Swift"
    PARAMS: ClassVar[Tuple[str, ...]] = ("A", "sigma0", "n", "F", "G", "N")
    DEFAULT_BOUNDS: ClassVar[Bounds] = HILL48_BOUNDS

    def __post_init__(self) -> None:
        self._check_swift(self.KIND)
        _check(self.F > 0.0 and self.G > 0.0 and self.N > 0.0, self.KIND, "F, G, N must be positive")

    @property
    def H(self) -> float:
        return 1.0 - self.G

    @property
    def hill_matrix(self) -> np.ndarray:
        return yf.hill48_matrix(self.F, self.G, self.N)

    def equivalent_stress(self, s: np.ndarray) -> np.ndarray:
        return yf.hill48_equivalent(self.hill_matrix, s)

    def stress_gradient(self, s: np.ndarray) -> np.ndarray:
        return yf.hill48_gradient(self.hill_matrix, s)

    def stress_hessian(self, s: np.ndarray) -> np.ndarray:
        return yf.hill48_hessian(self.hill_matrix, s)


@dataclass(frozen=True)
class Yld2000Swift(_SwiftMixin, _ParamsMixin):
    """YLD2000-2d yield (two linear plane-stress transforms) with Swift hardening."""

    A: float
    sigma0: float
    n: float
    alpha: Tuple[float, ...] = (1.0,) * 8
    a: int = YLD2000_EXPONENT
    elastic: ElasticModel = _DEFAULT_ELASTIC
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict, compare=False, repr=False)

    KIND: ClassVar[str] = "Yld2000Swift"
    PARAMS: ClassVar[Tuple[str, ...]] = ("A", "sigma0", "n") + tuple(f"alpha{i}" for i in range(1, 9))
    DEFAULT_BOUNDS: ClassVar[Bounds] = {**SWIFT_BOUNDS, **{f"alpha{i}": ALPHA_BOUNDS for i in range(1, 9)}}

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        self._check_swift(self.KIND)
        _check(len(self.alpha) == 8, self.KIND, "exactly eight alpha coefficients")
        _check(all(v > 0.0 for v in self.alpha), self.KIND, "alpha coefficients must be positive")
        _check(self.a in (6, 8), self.KIND, "exponent a must be 6 or 8")

    def __getattr__(self, name: str) -> float:
        if name.startswith("alpha") and name[5:].isdigit():
            idx = int(name[5:])
            if 1 <= idx <= 8:
                return self.alpha[idx - 1]
        raise AttributeError(name)

    def with_params(self, **updates: float) -> "Yld2000Swift":
        unknown = set(updates) - set(self.PARAMS)
        if unknown:
            raise InvalidParameterError(f"{self.KIND}: unknown parameters {sorted(unknown)}")
        alpha = list(self.alpha)
        plain: Dict[str, float] = {}
        for key, value in updates.items():
            if key.startswith("alpha"):
                alpha[int(key[5:]) - 1] = float(value)
            else:
                plain[key] = value
        return dataclasses.replace(self, alpha=tuple(alpha), **plain)  # type: ignore[arg-type]

    @property
    def transforms(self) -> Tuple[np.ndarray, np.ndarray]:
        return yf.yld2000_transforms(self.alpha)

    @property
    def normalization(self) -> float:
        return yf.yld2000_normalization(self.alpha, self.a)

    def equivalent_stress(self, s: np.ndarray) -> np.ndarray:
        lp, lpp = self.transforms
        return yf.yld2000_equivalent(lp, lpp, self.a, s)

    def stress_gradient(self, s: np.ndarray) -> np.ndarray:
        return yf.fd_gradient(self.equivalent_stress, s, self.sigma0)

    def stress_hessian(self, s: np.ndarray) -> np.ndarray:
        return yf.fd_hessian(self.equivalent_stress, s, self.sigma0)


InelasticModel = Union[Hill48Swift, Yld2000Swift]
MaterialModel = Union[IsoElastic, OrthoElastic, Hill48Swift, Yld2000Swift]

MODEL_KINDS: Dict[str, type] = {
    cls.KIND: cls for cls in (IsoElastic, OrthoElastic, Hill48Swift, Yld2000Swift)
}


def is_inelastic(m: MaterialModel) -> bool:
    return isinstance(m, (Hill48Swift, Yld2000Swift))


def elastic_part(m: MaterialModel) -> ElasticModel:
    return m.elastic if is_inelastic(m) else m  # type: ignore[union-attr,return-value]


def reference_stress(m: MaterialModel) -> float:
    """Stress scale used for tolerances: sigma0, or the stiffness for elastic models."""
    if is_inelastic(m):
        return float(m.sigma0)  # type: ignore[union-attr]
    return float(np.max(np.abs(elastic_part(m).stiffness())))


# ---- Document round trip ----
def _elastic_from_dict(doc: Optional[Mapping[str, float]]) -> ElasticModel:
    if not doc:
        return _DEFAULT_ELASTIC
    if "E1" in doc:
        return OrthoElastic(**{k: float(doc[k]) for k in OrthoElastic.PARAMS})
    return IsoElastic(float(doc["E"]), float(doc.get("nu", DEFAULT_NU)))


def model_from_dict(doc: Mapping[str, Any]) -> MaterialModel:
    """Build a model from {"kind", "params", "bounds"?, "elastic"?, "a"?}."""
    kind = doc.get("kind")
    cls = MODEL_KINDS.get(str(kind))
    if cls is None:
        raise InvalidParameterError(f"unknown material kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    params = {k: float(v) for k, v in dict(doc.get("params", {})).items()}
    bounds = {k: (float(v[0]), float(v[1])) for k, v in dict(doc.get("bounds", {}) or {}).items()}
    missing = [p for p in cls.PARAMS if p not in params and not (cls is Yld2000Swift and p.startswith("alpha"))]
    if missing:
        raise InvalidParameterError(f"{kind}: missing parameters {missing}")
    unknown = set(params) - set(cls.PARAMS)
    if unknown:
        raise InvalidParameterError(f"{kind}: unknown parameters {sorted(unknown)}")
    for name, (lo, hi) in bounds.items():
        if name not in cls.PARAMS:
            raise InvalidParameterError(f"{kind}: bounds given for unknown parameter {name!r}")
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise InvalidParameterError(f"{kind}: bounds for {name} must be finite with lower < upper")
    if cls is IsoElastic:
        return IsoElastic(params["E"], params["nu"], bounds=bounds)
    if cls is OrthoElastic:
        return OrthoElastic(**params, bounds=bounds)
    elastic = _elastic_from_dict(doc.get("elastic"))
    if cls is Hill48Swift:
        return Hill48Swift(**params, elastic=elastic, bounds=bounds)
    alpha = tuple(params.pop(f"alpha{i}", 1.0) for i in range(1, 9))
    return Yld2000Swift(**params, alpha=alpha, a=int(doc.get("a", YLD2000_EXPONENT)), elastic=elastic, bounds=bounds)


def model_to_dict(m: MaterialModel) -> Dict[str, Any]:
    doc: Dict[str, Any] = {"kind": m.KIND, "params": m.params}
    if getattr(m, "bounds", None):
        doc["bounds"] = {k: list(v) for k, v in m.bounds.items()}
    if is_inelastic(m):
        doc["elastic"] = elastic_part(m).params
    if isinstance(m, Yld2000Swift):
        doc["a"] = m.a
    return doc
