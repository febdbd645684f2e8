"""
Parametric specimen outlines.

A SpecimenGeometry is turned into a Region: an outline polygon, polygonal
cutouts (notch slots, Σ-shape windows) and circular holes. Meshing keeps the
grid cells whose centroid lies inside the region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..constants import MAX_FEATURES, MIN_LIGAMENT_ELEMENTS
from ..errors import GeometryError, HoleOutsideDomainError, LigamentTooThinError

GEOMETRY_KINDS = ("RectangleROI", "Cruciform", "CruciformWithHoles", "ShearNotched", "PolygonWithCutouts")

Point = Tuple[float, float]
Circle = Tuple[float, float, float]
Box = Tuple[float, float, float, float]  # x0, y0, x1, y1

FILLET_SEGMENTS = 16


# --- Polygon helpers ---
def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over points."""
    pts = np.atleast_2d(points)
    x, y = pts[:, 0:1], pts[:, 1:2]
    x0, y0 = polygon[:, 0], polygon[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    straddle = (y0 > y) != (y1 > y)
    dy = np.where(y1 != y0, y1 - y0, 1.0)
    x_cross = x0 + (y - y0) * (x1 - x0) / dy
    return np.count_nonzero(straddle & (x < x_cross), axis=1) % 2 == 1


def distance_to_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Distance from each point to the closed polygon boundary."""
    pts = np.atleast_2d(points)[:, None, :]
    a = polygon[None, :, :]
    b = np.roll(polygon, -1, axis=0)[None, :, :]
    ab = b - a
    t = np.einsum("pki,pki->pk", pts - a, np.broadcast_to(ab, (pts.shape[0],) + ab.shape[1:]))
    t = np.clip(t / np.maximum(np.sum(ab * ab, axis=-1), 1e-300), 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.min(np.linalg.norm(pts - proj, axis=-1), axis=1)


def polygon_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


@dataclass(frozen=True)
class Region:
    outline: np.ndarray
    cutouts: Tuple[np.ndarray, ...] = ()
    circles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        inside = points_in_polygon(pts, self.outline)
        for cut in self.cutouts:
            inside &= ~points_in_polygon(pts, cut)
        for cx, cy, r in self.circles:
            inside &= np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) >= r
        return inside

    def bbox(self) -> Box:
        lo = self.outline.min(axis=0)
        hi = self.outline.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def area(self) -> float:
        """Outline minus cutouts and holes; assumes the features do not overlap."""
        a = polygon_area(self.outline) - sum(polygon_area(c) for c in self.cutouts)
        return a - float(np.sum(math.pi * self.circles[:, 2] ** 2)) if len(self.circles) else a


# --- Geometry document ---
@dataclass(frozen=True)
class SpecimenGeometry:
    """
    Specimen description in mm.

    dims by kind:
      - RectangleROI: width, height
      - Cruciform / CruciformWithHoles (quarter model, symmetry planes x=0 and y=0):
        arm_length, arm_half_width, fillet
      - ShearNotched: width, height; each notch (x, y, R) is a round tip joined
        to the nearest horizontal edge by a slot of width 2R
      - PolygonWithCutouts: outline and cutouts given explicitly
    """

    kind: str
    dims: Mapping[str, float] = field(default_factory=dict)
    holes: Tuple[Circle, ...] = ()
    notches: Tuple[Circle, ...] = ()
    thickness: float = 1.0
    outline: Tuple[Point, ...] = ()
    cutouts: Tuple[Tuple[Point, ...], ...] = ()
    roi: Optional[Box] = None
    approximate: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        if self.kind not in GEOMETRY_KINDS:
            raise GeometryError(f"unknown geometry kind {self.kind!r}; expected one of {GEOMETRY_KINDS}")
        if not self.thickness > 0.0:
            raise GeometryError("thickness must be positive")
        if len(self.holes) + len(self.notches) > MAX_FEATURES:
            raise GeometryError(f"at most {MAX_FEATURES} holes/notches, got {len(self.holes) + len(self.notches)}")
        for c in self.holes + self.notches:
            if len(c) != 3 or not c[2] > 0.0:
                raise GeometryError(f"feature {c} must be (x, y, r) with r > 0")

    def _dim(self, name: str) -> float:
        try:
            value = float(self.dims[name])
        except KeyError as exc:
            raise GeometryError(f"{self.kind} needs dimension {name!r}") from exc
        if not value > 0.0 and name != "fillet":
            raise GeometryError(f"dimension {name!r} must be positive")
        return value

    # ---- Outline construction ----
    def _cruciform_outline(self) -> np.ndarray:
        L, w = self._dim("arm_length"), self._dim("arm_half_width")
        rf = float(self.dims.get("fillet", 0.0))
        if w >= L or w + rf >= L:
            raise GeometryError("arm_half_width + fillet must be shorter than arm_length")
        pts: List[Point] = [(0.0, 0.0), (L, 0.0), (L, w)]
        if rf > 0.0:
            cx = cy = w + rf
            for phi in np.linspace(-0.5 * math.pi, -math.pi, FILLET_SEGMENTS + 1):
                pts.append((cx + rf * math.cos(phi), cy + rf * math.sin(phi)))
        else:
            pts.append((w, w))
        pts += [(w, L), (0.0, L)]
        return np.array(pts)

    def _notch_slots(self) -> Tuple[np.ndarray, ...]:
        height = self._dim("height")
        slots = []
        for x, y, r in self.notches:
            edge = 0.0 if y < 0.5 * height else height
            slots.append(np.array([(x - r, edge), (x + r, edge), (x + r, y), (x - r, y)]))
        return tuple(slots)

    def region(self) -> Region:
        holes = np.array(self.holes, dtype=float).reshape(-1, 3)
        if self.kind == "RectangleROI":
            W, H = self._dim("width"), self._dim("height")
            return Region(np.array([(0.0, 0.0), (W, 0.0), (W, H), (0.0, H)]), (), holes)
        if self.kind in ("Cruciform", "CruciformWithHoles"):
            if self.kind == "Cruciform" and len(holes):
                raise GeometryError("plain Cruciform takes no holes; use CruciformWithHoles")
            return Region(self._cruciform_outline(), (), holes)
        if self.kind == "ShearNotched":
            W, H = self._dim("width"), self._dim("height")
            tips = np.array(self.notches, dtype=float).reshape(-1, 3)
            return Region(np.array([(0.0, 0.0), (W, 0.0), (W, H), (0.0, H)]), self._notch_slots(), np.vstack([holes, tips]))
        if len(self.outline) < 3:
            raise GeometryError("PolygonWithCutouts needs an outline of at least 3 vertices")
        cutouts = tuple(np.array(c, dtype=float) for c in self.cutouts)
        return Region(np.array(self.outline, dtype=float), cutouts, holes)

    def roi_box(self) -> Optional[Box]:
        return None if self.roi is None else tuple(float(v) for v in self.roi)  # type: ignore[return-value]

    # ---- Feasibility ----
    def validate(self, h: float) -> Region:
        """Feature placement rules at element size h; returns the region on success."""
        region = self.region()
        ligament = MIN_LIGAMENT_ELEMENTS * h
        outline = region.outline
        holes = np.array(self.holes, dtype=float).reshape(-1, 3)
        for i, (x, y, r) in enumerate(holes):
            centre = np.array([[x, y]])
            if not points_in_polygon(centre, outline)[0] or any(points_in_polygon(centre, c)[0] for c in region.cutouts):
                raise HoleOutsideDomainError(f"hole {i} at ({x:g}, {y:g}) lies outside the specimen")
            clearance = float(distance_to_polygon(centre, outline)[0]) - r
            if clearance <= ligament:
                raise LigamentTooThinError(f"hole {i}: ligament to the outline {clearance:.4g} mm <= {ligament:.4g} mm")
        if self.kind == "ShearNotched":
            W, H = self._dim("width"), self._dim("height")
            for i, (x, y, r) in enumerate(self.notches):
                if not (r < x < W - r and 0.0 < y < H):
                    raise HoleOutsideDomainError(f"notch {i} at ({x:g}, {y:g}) lies outside the plate")
                reach = H - y - r if y < 0.5 * H else y - r
                if reach <= ligament:
                    raise LigamentTooThinError(f"notch {i}: remaining section {reach:.4g} mm <= {ligament:.4g} mm")
        _check_pairwise(np.array(self.holes + self.notches, dtype=float).reshape(-1, 3), ligament)
        return region

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"kind": self.kind, "dims": dict(self.dims), "thickness": self.thickness}
        if self.holes:
            doc["holes"] = [list(c) for c in self.holes]
        if self.notches:
            doc["notches"] = [list(c) for c in self.notches]
        if self.outline:
            doc["outline"] = [list(p) for p in self.outline]
        if self.cutouts:
            doc["cutouts"] = [[list(p) for p in c] for c in self.cutouts]
        if self.roi is not None:
            doc["roi"] = list(self.roi)
        if self.approximate:
            doc["approximate"] = True
        if self.label:
            doc["label"] = self.label
        return doc


def _check_pairwise(circles: np.ndarray, ligament: float) -> None:
    for i in range(len(circles)):
        for j in range(i + 1, len(circles)):
            gap = math.hypot(*(circles[i, :2] - circles[j, :2])) - circles[i, 2] - circles[j, 2]
            if gap <= ligament:
                raise LigamentTooThinError(f"features {i} and {j}: ligament {gap:.4g} mm <= {ligament:.4g} mm")


def geometry_from_dict(doc: Mapping[str, Any]) -> SpecimenGeometry:
    def circles(key: str) -> Tuple[Circle, ...]:
        return tuple(tuple(float(v) for v in c) for c in doc.get(key, ()))  # type: ignore[misc]

    roi = doc.get("roi")
    return SpecimenGeometry(
        kind=str(doc.get("kind", "")),
        dims={k: float(v) for k, v in dict(doc.get("dims", {})).items()},
        holes=circles("holes"),
        notches=circles("notches"),
        thickness=float(doc.get("thickness", 1.0)),
        outline=tuple(tuple(float(v) for v in p) for p in doc.get("outline", ())),  # type: ignore[misc]
        cutouts=tuple(tuple(tuple(float(v) for v in p) for p in c) for c in doc.get("cutouts", ())),  # type: ignore[misc]
        roi=None if roi is None else tuple(float(v) for v in roi),  # type: ignore[arg-type]
        approximate=bool(doc.get("approximate", False)),
        label=str(doc.get("label", "")),
    )


def with_features(base: SpecimenGeometry, holes: Sequence[Circle] = (), notches: Sequence[Circle] = ()) -> SpecimenGeometry:
    """Copy of base with its holes/notches replaced; promotes Cruciform to CruciformWithHoles."""
    kind = "CruciformWithHoles" if base.kind == "Cruciform" and holes else base.kind
    return SpecimenGeometry(
        kind=kind,
        dims=dict(base.dims),
        holes=tuple(tuple(c) for c in holes),  # type: ignore[misc]
        notches=tuple(tuple(c) for c in notches),  # type: ignore[misc]
        thickness=base.thickness,
        outline=base.outline,
        cutouts=base.cutouts,
        roi=base.roi,
        approximate=base.approximate,
        label=base.label,
    )
