from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..constants import SNAP_MIN_DETJ
from ..errors import GeometryError
from .geometry import Region, SpecimenGeometry
from .quad4 import b_matrices, element_areas, gauss_coordinates

LOG = logging.getLogger(__name__)

BOUNDARY_SETS = ("left", "right", "bottom", "top", "outer", "origin")


@dataclass
class Mesh:
    """
    Structured quadrilateral mesh cut out of a rectangular grid.

    - nodes: (nn, 2) coordinates in mm
    - elements: (ne, 4) counter-clockwise connectivity
    - roi_mask: elements sampled into field histories
    - sets: named node groups (left, right, bottom, top, outer, origin)
    """

    nodes: np.ndarray
    elements: np.ndarray
    roi_mask: np.ndarray
    sets: Dict[str, np.ndarray] = field(default_factory=dict)
    h: Tuple[float, float] = (1.0, 1.0)
    thickness: float = 1.0

    def __post_init__(self) -> None:
        if len(self.elements) == 0:
            raise GeometryError("mesh has no elements")
        if not np.any(self.roi_mask):
            raise GeometryError("region of interest contains no elements")
        _, det = b_matrices(self.element_coords())
        if np.any(det <= 0.0):
            raise GeometryError(f"{int(np.count_nonzero(np.any(det <= 0.0, axis=1)))} inverted elements")

    # --- Size ---
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.nodes)

    # --- Geometry queries ---
    def element_coords(self) -> np.ndarray:
        return self.nodes[self.elements]

    def centroids(self) -> np.ndarray:
        return self.element_coords().mean(axis=1)

    def gauss_points(self) -> np.ndarray:
        return gauss_coordinates(self.element_coords())

    def areas(self) -> np.ndarray:
        return element_areas(self.element_coords())

    def area(self) -> float:
        return float(self.areas().sum())

    def roi_elements(self) -> np.ndarray:
        return np.flatnonzero(self.roi_mask)

    def boundary_set(self, name: str) -> np.ndarray:
        try:
            return self.sets[name]
        except KeyError as exc:
            raise KeyError(f"unknown boundary set {name!r}; mesh has {sorted(self.sets)}") from exc

    def node_at(self, x: float, y: float) -> int:
        return int(np.argmin(np.hypot(self.nodes[:, 0] - x, self.nodes[:, 1] - y)))


# ---- Generation ----
def _grid(bbox: Tuple[float, float, float, float], target_h: float) -> Tuple[np.ndarray, int, int]:
    x0, y0, x1, y1 = bbox
    nx = max(1, int(math.ceil((x1 - x0) / target_h - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / target_h - 1e-9)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j holds y = ys[j]
    return np.column_stack([X.ravel(), Y.ravel()]), nx, ny


def _cells(nx: int, ny: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    return np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])


def _snap_to_circles(nodes: np.ndarray, elements: np.ndarray, circles: np.ndarray, cell_area: float) -> np.ndarray:
    """Move nodes lying inside a hole radially onto its rim, undoing moves that distort an element too far."""
    if len(circles) == 0:
        return nodes
    snapped = nodes.copy()
    moved = np.zeros(len(nodes), dtype=bool)
    for cx, cy, r in circles:
        d = np.hypot(nodes[:, 0] - cx, nodes[:, 1] - cy)
        inside = (d < r) & (d > 0.0)
        scale = r / np.where(inside, d, 1.0)
        snapped[inside, 0] = cx + (nodes[inside, 0] - cx) * scale[inside]
        snapped[inside, 1] = cy + (nodes[inside, 1] - cy) * scale[inside]
        moved |= inside
    for _ in range(len(elements)):
        _, det = b_matrices(snapped[elements])
        bad = np.min(det, axis=1) < SNAP_MIN_DETJ * cell_area / 4.0
        revert = np.unique(elements[bad]) if bad.any() else np.zeros(0, dtype=int)
        revert = revert[moved[revert]]
        if len(revert) == 0:
            break
        snapped[revert] = nodes[revert]
        moved[revert] = False
    return snapped


def _boundary_sets(nodes: np.ndarray, bbox: Tuple[float, float, float, float], tol: float) -> Dict[str, np.ndarray]:
    x0, y0, x1, y1 = bbox
    x, y = nodes[:, 0], nodes[:, 1]
    sets = {
        "left": np.flatnonzero(np.abs(x - x0) <= tol),
        "right": np.flatnonzero(np.abs(x - x1) <= tol),
        "bottom": np.flatnonzero(np.abs(y - y0) <= tol),
        "top": np.flatnonzero(np.abs(y - y1) <= tol),
    }
    sets["outer"] = np.unique(np.concatenate(list(sets.values())))
    sets["origin"] = np.array([int(np.argmin(np.hypot(x - x0, y - y0)))])
    return sets


def _roi_mask(centroids: np.ndarray, box: Optional[Tuple[float, float, float, float]]) -> np.ndarray:
    if box is None:
        return np.ones(len(centroids), dtype=bool)
    x0, y0, x1, y1 = box
    return (centroids[:, 0] >= x0) & (centroids[:, 0] <= x1) & (centroids[:, 1] >= y0) & (centroids[:, 1] <= y1)


def mesh_region(region: Region, target_h: float, roi: Optional[Tuple[float, float, float, float]] = None, thickness: float = 1.0) -> Mesh:
    if not target_h > 0.0:
        raise GeometryError("element size must be positive")
    bbox = region.bbox()
    grid_nodes, nx, ny = _grid(bbox, target_h)
    cells = _cells(nx, ny)
    hx = (bbox[2] - bbox[0]) / nx
    hy = (bbox[3] - bbox[1]) / ny
    keep = region.contains(grid_nodes[cells].mean(axis=1))
    if not keep.any():
        raise GeometryError("no grid cell lies inside the specimen outline")
    cells = cells[keep]
    used = np.unique(cells)
    renumber = np.full(len(grid_nodes), -1, dtype=int)
    renumber[used] = np.arange(len(used))
    nodes = grid_nodes[used]
    elements = renumber[cells]
    nodes = _snap_to_circles(nodes, elements, region.circles, hx * hy)
    centroids = nodes[elements].mean(axis=1)
    sets = _boundary_sets(nodes, bbox, 1e-9 * max(hx, hy))
    mesh = Mesh(nodes, elements, _roi_mask(centroids, roi), sets, (hx, hy), thickness)
    LOG.debug("meshed %d elements / %d nodes at h=(%.4g, %.4g)", mesh.n_elements, mesh.n_nodes, hx, hy)
    return mesh


def generate_mesh(g: SpecimenGeometry, target_h: float) -> Mesh:
    """Validate feature placement at target_h, then mesh the specimen."""
    region = g.validate(target_h)
    return mesh_region(region, target_h, g.roi_box(), g.thickness)
