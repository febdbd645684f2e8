from __future__ import annotations

import math

import numpy as np
import pytest

from mechinfo.constitutive import elastic_stress, swift_flow_stress
from mechinfo.errors import ConfigError, GeometryError, HoleOutsideDomainError, LigamentTooThinError, SolverDivergenceError
from mechinfo.events import EventBus, IncrementCut, StepConverged
from mechinfo.fem import (
    Constraint,
    Load,
    Protocol,
    SpecimenGeometry,
    generate_mesh,
    geometry_from_dict,
    protocol_from_dict,
    reaction_curve,
    solve,
    with_features,
    write_fields_csv,
    write_reactions_csv,
)
from mechinfo.fem import solver as solver_module
from mechinfo.fem.geometry import polygon_area
from mechinfo.fem.quad4 import GAUSS_POINTS, b_matrices, shape_functions
from mechinfo.fem.solver import tributary_weights
from mechinfo.stress_metrics import von_mises
from mechinfo.io import read_csv

CRUCIFORM_DIMS = {"arm_length": 30.0, "arm_half_width": 10.0, "fillet": 3.0}
PATCH_GRAD = ((1e-3, 2e-4), (0.0, -5e-4))


def _cruciform(holes=()):
    kind = "CruciformWithHoles" if holes else "Cruciform"
    return SpecimenGeometry(kind, CRUCIFORM_DIMS, holes=tuple(holes), roi=(0.0, 0.0, 12.0, 12.0))


class TestQuad4:
    def test_partition_of_unity(self):
        for xi, eta in GAUSS_POINTS:
            assert shape_functions(xi, eta).sum() == pytest.approx(1.0)

    def test_rigid_motion_is_strain_free(self):
        coords = np.array([[[0.0, 0.0], [2.0, 0.0], [2.1, 1.5], [0.1, 1.2]]])
        B, det = b_matrices(coords)
        assert np.all(det > 0.0)
        translation = np.tile([0.3, -0.2], 4)
        theta = 1e-3
        rotation = np.array([[-theta * y, theta * x] for x, y in coords[0]]).ravel()
        assert np.allclose(B @ translation, 0.0)
        assert np.allclose(B @ rotation, 0.0, atol=1e-15)


class TestGeometry:
    def test_hole_outside_raises(self):
        with pytest.raises(HoleOutsideDomainError):
            _cruciform([(25.0, 25.0, 1.0)]).validate(0.5)

    def test_thin_ligament_raises(self):
        with pytest.raises(LigamentTooThinError):
            _cruciform([(5.0, 1.2, 1.0)]).validate(0.5)
        with pytest.raises(LigamentTooThinError):
            _cruciform([(5.0, 5.0, 1.5), (7.6, 5.0, 1.0)]).validate(0.5)

    def test_feature_limit(self):
        holes = [(2.0 + 1.5 * i, 4.0, 0.3) for i in range(7)]
        with pytest.raises(GeometryError):
            _cruciform(holes)

    def test_unknown_kind(self):
        with pytest.raises(GeometryError):
            SpecimenGeometry("Dogbone")

    def test_with_features_promotes_cruciform(self):
        g = with_features(_cruciform(), holes=[(5.0, 5.0, 1.5)])
        assert g.kind == "CruciformWithHoles"
        assert g.holes == ((5.0, 5.0, 1.5),)

    def test_document_round_trip(self):
        g = _cruciform([(5.0, 5.0, 1.5), (8.0, 2.5, 1.0)])
        assert geometry_from_dict(g.to_dict()) == g

    def test_notch_off_the_plate(self):
        plate = SpecimenGeometry("ShearNotched", {"width": 30.0, "height": 20.0}, notches=((0.5, 5.0, 1.0),))
        with pytest.raises(HoleOutsideDomainError):
            plate.validate(0.5)


class TestMesh:
    def test_rectangle_counts_and_sets(self, small_mesh):
        assert small_mesh.n_elements == 32
        assert small_mesh.n_nodes == 45
        assert small_mesh.area() == pytest.approx(8.0)
        assert len(small_mesh.boundary_set("left")) == 5
        assert len(small_mesh.boundary_set("outer")) == 24
        assert small_mesh.nodes[small_mesh.boundary_set("origin")[0]] == pytest.approx([0.0, 0.0])

    def test_unknown_set(self, small_mesh):
        with pytest.raises(KeyError):
            small_mesh.boundary_set("grip")

    def test_holed_cruciform_area(self):
        """Snapped hole boundaries keep the meshed area close to the exact one."""
        g = _cruciform([(5.0, 5.0, 1.5)])
        mesh = generate_mesh(g, 0.5)
        exact = polygon_area(g.region().outline) - math.pi * 1.5**2
        assert abs(mesh.area() - exact) / exact < 0.03
        assert np.all(mesh.roi_mask[mesh.roi_elements()])
        assert len(mesh.roi_elements()) < mesh.n_elements

    def test_snapped_nodes_lie_on_the_circle(self):
        mesh = generate_mesh(_cruciform([(5.0, 5.0, 1.5)]), 0.5)
        r = np.hypot(mesh.nodes[:, 0] - 5.0, mesh.nodes[:, 1] - 5.0)
        assert np.count_nonzero(np.isclose(r, 1.5)) >= 8


class TestProtocol:
    def test_bad_dof(self):
        with pytest.raises(ConfigError):
            Constraint("left", "z")

    def test_needs_constraints(self):
        with pytest.raises(ConfigError):
            Protocol(1.0, 5, 0.5, ())

    def test_document_round_trip(self):
        p = Protocol.quarter_biaxial(2.0, 10, 0.5)
        assert protocol_from_dict(p.to_dict()) == p
        assert p.loaded_sets() == ["right", "top"]

    def test_bad_load_dof(self):
        with pytest.raises(ConfigError):
            Load("right", "z", 1.0)

    def test_loads_round_trip(self):
        p = Protocol.uniaxial_force(140.0, 2, 0.5)
        assert protocol_from_dict(p.to_dict()) == p
        assert p.loaded_sets() == ["right"]
        assert p.tracked_sets() == ["left", "origin", "right"]

    def test_tributary_weights(self):
        """Uniform traction on an evenly divided edge: half shares at the two ends."""
        xy = np.array([[4.0, 2.0], [4.0, 0.0], [4.0, 1.0], [4.0, 0.5], [4.0, 1.5]])
        assert tributary_weights(xy) == pytest.approx([0.125, 0.125, 0.25, 0.25, 0.25])


class TestSolver:
    def test_patch_test(self, small_mesh, iso_elastic):
        """A linear boundary displacement reproduces the uniform strain everywhere."""
        h = solve(small_mesh, iso_elastic, Protocol.linear_field(PATCH_GRAD))
        (a, b), (c, d) = PATCH_GRAD
        expected = np.array([a, d, 0.5 * (b + c)])
        assert np.max(np.abs(h.strain[-1] - expected)) < 1e-10
        sig = elastic_stress(iso_elastic, expected)
        assert np.allclose(h.stress[-1], sig, rtol=0.0, atol=1e-7 * np.max(np.abs(sig)))

    def test_elastic_bar_reaction(self, elastic_history, iso_elastic):
        """Uniaxial bar: F = E * u / L * H * t, lateral contraction nu."""
        curve = reaction_curve(elastic_history, "right")
        assert curve.dof == "x"
        assert curve.displacement == pytest.approx([0.002, 0.004])
        assert curve.force[-1] == pytest.approx(iso_elastic.E * 1e-3 * 2.0, rel=1e-8)
        assert np.allclose(elastic_history.strain[-1, :, 0], 1e-3)
        assert np.allclose(elastic_history.strain[-1, :, 1], -iso_elastic.nu * 1e-3)

    def test_reactions_balance(self, elastic_history):
        left = reaction_curve(elastic_history, "left", "x").force
        right = reaction_curve(elastic_history, "right", "x").force
        assert left + right == pytest.approx(np.zeros(2), abs=1e-8)

    def test_unknown_boundary(self, elastic_history):
        with pytest.raises(KeyError):
            reaction_curve(elastic_history, "top")

    def test_homogeneous_plastic_bar(self, small_mesh, hill48_truth):
        """Every point carries the Swift flow stress in uniaxial tension."""
        bus = EventBus()
        seen = []
        bus.subscribe(StepConverged, seen.append)
        h = solve(small_mesh, hill48_truth, Protocol.uniaxial(0.2, 5, 0.5), bus)
        assert len(seen) >= 5
        eb = h.ebar_p[-1]
        assert np.all(eb > 0.0)
        assert h.stress[-1, :, 0] == pytest.approx(swift_flow_stress(hill48_truth, eb), rel=1e-5)
        assert np.max(np.abs(h.stress[-1, :, 1:])) < 1e-5 * hill48_truth.sigma0
        force = reaction_curve(h, "right").force
        assert np.all(np.diff(force) > 0.0)
        assert np.all(np.diff(h.ebar_p, axis=0) >= 0.0)

    def test_divergence_carries_diagnostics(self, small_mesh, hill48_truth, monkeypatch):
        """With no Newton iterations allowed a plastic step fails after four halvings."""
        monkeypatch.setattr(solver_module, "NEWTON_MAX_ITER", 0)
        bus = EventBus()
        cuts = []
        bus.subscribe(IncrementCut, cuts.append)
        with pytest.raises(SolverDivergenceError) as info:
            solve(small_mesh, hill48_truth, Protocol.uniaxial(0.4, 1, 0.5), bus)
        diag = info.value.diagnostics
        assert diag["halvings"] == 4
        assert {"step", "load_fraction", "residual", "reason"} <= set(diag)
        assert [c.level for c in cuts] == [1, 2, 3, 4]

    def test_force_controlled_bar(self, small_mesh, iso_elastic):
        """Total force F on the right edge: s11 = F / (H t), e11 = s11 / E, both uniform."""
        h = solve(small_mesh, iso_elastic, Protocol.uniaxial_force(140.0, 2, 0.5))
        assert np.allclose(h.stress[-1, :, 0], 70.0, rtol=1e-8)
        assert np.max(np.abs(h.stress[-1, :, 1:])) < 1e-8 * 70.0
        assert np.allclose(h.strain[-1, :, 0], 1e-3, rtol=1e-8)
        assert np.allclose(h.strain[0, :, 0], 5e-4, rtol=1e-8)
        right = reaction_curve(h, "right", "x")
        assert right.displacement == pytest.approx([0.002, 0.004], rel=1e-8)
        assert right.force == pytest.approx([70.0, 140.0], rel=1e-8)
        assert reaction_curve(h, "left", "x").force[-1] == pytest.approx(-140.0, rel=1e-8)

    def test_force_controlled_plastic_bar(self, small_mesh, hill48_truth):
        """A load past yield lands on the Swift curve at the applied stress."""
        h = solve(small_mesh, hill48_truth, Protocol.uniaxial_force(2.0 * 130.0, 4, 0.5))
        assert np.all(h.ebar_p[-1] > 0.0)
        assert swift_flow_stress(hill48_truth, h.ebar_p[-1]) == pytest.approx(np.full(h.n_points, 130.0), rel=1e-5)

    def test_load_on_prescribed_dof(self, small_mesh, iso_elastic):
        p = Protocol(0.004, 1, 0.5, Protocol.uniaxial(0.004, 1, 0.5).constraints, (Load("right", "x", 10.0),))
        with pytest.raises(ConfigError):
            solve(small_mesh, iso_elastic, p)

    def test_halving_budget_is_per_substep(self, small_mesh, iso_elastic, monkeypatch):
        """After a converged substep the next one starts again from the full increment."""
        original = solver_module.Solver._increment
        script = iter([False, False, False, False, True, False])

        def scripted(self, u, state, K, t_old, t_new):
            if next(script, True):
                return original(self, u, state, K, t_old, t_new)
            raise solver_module._NotConverged("scripted failure", 1.0)

        monkeypatch.setattr(solver_module.Solver, "_increment", scripted)
        bus = EventBus()
        cuts, steps = [], []
        bus.subscribe(IncrementCut, cuts.append)
        bus.subscribe(StepConverged, steps.append)
        h = solve(small_mesh, iso_elastic, Protocol.uniaxial(0.004, 1, 0.5), bus)
        assert [c.level for c in cuts] == [1, 2, 3, 4, 1]
        assert [s.load_fraction for s in steps] == pytest.approx([1.0 / 16.0, 1.0 / 16.0 + 0.5, 1.0])
        assert np.allclose(h.strain[-1, :, 0], 1e-3)

    def test_deterministic(self, small_mesh, hill48_truth):
        p = Protocol.uniaxial(0.1, 3, 0.5)
        a = solve(small_mesh, hill48_truth, p)
        b = solve(small_mesh, hill48_truth, p)
        assert np.array_equal(a.strain, b.strain)


class TestCruciform:
    def test_diagonal_symmetry(self, iso_elastic):
        """Equal arm pulls on the plain quarter cruciform mirror the fields across y = x."""
        h = solve(generate_mesh(_cruciform(), 1.0), iso_elastic, Protocol.quarter_biaxial(0.02, 1, 1.0))
        coords = h.coords
        mirror = np.array([np.argmin(np.hypot(coords[:, 0] - y, coords[:, 1] - x)) for x, y in coords])
        assert np.allclose(coords[mirror], coords[:, ::-1], atol=1e-9)
        e = h.strain[-1]
        scale = np.max(np.abs(e))
        assert np.max(np.abs(e[:, 0] - e[mirror, 1])) < 1e-8 * scale
        assert np.max(np.abs(e[:, 2] - e[mirror, 2])) < 1e-8 * scale
        right = reaction_curve(h, "right", "x").force[-1]
        top = reaction_curve(h, "top", "y").force[-1]
        assert right == pytest.approx(top, rel=1e-8)

    @pytest.mark.slow
    def test_mesh_refinement(self, iso_elastic):
        """Halving h moves the ROI-averaged equivalent stress by under 2 %."""
        means = []
        for size in (1.0, 0.5):
            h = solve(generate_mesh(_cruciform(), size), iso_elastic, Protocol.quarter_biaxial(0.02, 1, size))
            means.append(float(np.mean(von_mises(h.stress[-1]))))
        coarse, fine = means
        assert abs(coarse - fine) / fine < 0.02


class TestExport:
    def test_fields_csv_round_trip(self, elastic_history, tmp_path):
        path = write_fields_csv(tmp_path / "fields.csv", elastic_history)
        rows = read_csv(path)
        assert len(rows) == elastic_history.n_steps * elastic_history.n_points
        last = rows[-1]
        assert float(last["e11"]) == elastic_history.strain[-1, -1, 0]
        assert float(last["s22"]) == elastic_history.stress[-1, -1, 1]

    def test_reactions_csv(self, elastic_history, tmp_path):
        rows = read_csv(write_reactions_csv(tmp_path / "reactions.csv", elastic_history))
        assert {r["boundary"] for r in rows} == set(elastic_history.reactions)
        assert set(rows[0]) == {"step", "boundary", "u", "F"}
