from __future__ import annotations

import math

import numpy as np
import pytest

from mechinfo.constants import ANCHOR_ANGLES, HILL48_TRUTH, YIELD_STRESS_ANCHORS, YLD2000_ALPHA_TRUTH
from mechinfo.constitutive import (
    Hill48Swift,
    IsoElastic,
    MaterialState,
    OrthoElastic,
    Yld2000Swift,
    drive_uniaxial,
    elastic_stress,
    engineering,
    integrate,
    lankford,
    model_from_dict,
    model_to_dict,
    normalized_yield_stress,
    swift_flow_stress,
    tensorial,
    yield_locus,
    yield_stress_table,
    yield_value,
    yld2000_normalization,
)
from mechinfo.constitutive.yield_functions import fd_gradient
from mechinfo.errors import InvalidParameterError, LocusError

PLASTIC_STRAIN = np.array([0.01, -0.003, 0.002])  # tensorial
SWIFT = {k: HILL48_TRUTH[k] for k in ("A", "sigma0", "n")}


def _yld2000_truth() -> Yld2000Swift:
    return Yld2000Swift(**SWIFT, alpha=YLD2000_ALPHA_TRUTH)


class TestModels:
    def test_invalid_parameters_raise(self):
        with pytest.raises(InvalidParameterError):
            Hill48Swift(**{**HILL48_TRUTH, "n": 1.5})
        with pytest.raises(InvalidParameterError):
            IsoElastic(70_000.0, 0.5)
        with pytest.raises(InvalidParameterError):
            OrthoElastic(100.0, 100.0, 1.2, 40.0)  # 1 - nu12 nu21 <= 0

    def test_swift_passes_through_sigma0(self, hill48_truth):
        assert swift_flow_stress(hill48_truth, 0.0) == pytest.approx(hill48_truth.sigma0)

    def test_document_round_trip(self, hill48_truth):
        """A model rebuilt from its own document is equal to it."""
        assert model_from_dict(model_to_dict(hill48_truth)) == hill48_truth
        yld = _yld2000_truth()
        assert model_from_dict(model_to_dict(yld)).alpha == yld.alpha

    def test_unknown_kind_and_parameter(self):
        with pytest.raises(InvalidParameterError):
            model_from_dict({"kind": "Tresca", "params": {}})
        with pytest.raises(InvalidParameterError):
            model_from_dict({"kind": "IsoElastic", "params": {"E": 1.0, "nu": 0.3, "K": 2.0}})

    def test_with_params_replaces_alpha_slot(self):
        yld = _yld2000_truth().with_params(alpha3=1.1)
        assert yld.alpha[2] == 1.1
        assert yld.params["alpha3"] == 1.1


class TestElasticity:
    def test_isotropic_uniaxial_strain(self, iso_elastic):
        s = elastic_stress(iso_elastic, [1e-3, 0.0, 0.0])
        factor = iso_elastic.E / (1.0 - iso_elastic.nu**2)
        assert s == pytest.approx([factor * 1e-3, factor * iso_elastic.nu * 1e-3, 0.0])

    def test_orthotropic_stiffness_is_symmetric(self, ortho_truth):
        C = ortho_truth.stiffness()
        assert np.allclose(C, C.T)
        assert C[2, 2] == pytest.approx(ortho_truth.G12)

    def test_engineering_tensorial_inverse(self):
        e = np.array([1e-3, -2e-3, 5e-4])
        assert engineering(e)[2] == pytest.approx(1e-3)
        assert tensorial(engineering(e)) == pytest.approx(e)


class TestYieldFunctions:
    def test_hill48_gradient_matches_differences(self, hill48_truth):
        rng = np.random.default_rng(3)
        s = rng.normal(0.0, 100.0, size=(20, 3))
        analytic = hill48_truth.stress_gradient(s)
        numeric = fd_gradient(hill48_truth.equivalent_stress, s, hill48_truth.sigma0)
        assert np.max(np.abs(analytic - numeric) / np.max(np.abs(analytic))) < 1e-5

    def test_yld2000_isotropic_normalization(self):
        assert yld2000_normalization((1.0,) * 8, 8) == 2.0
        iso = Yld2000Swift(**SWIFT)
        assert iso.equivalent_stress(np.array([100.0, 0.0, 0.0])) == pytest.approx(100.0)
        assert iso.equivalent_stress(np.array([0.0, 100.0, 0.0])) == pytest.approx(100.0)

    def test_degree_one_homogeneous(self, hill48_truth):
        s = np.array([80.0, -20.0, 35.0])
        yld = _yld2000_truth()
        for m in (hill48_truth, yld):
            assert m.equivalent_stress(2.5 * s) == pytest.approx(2.5 * m.equivalent_stress(s))


class TestReturnMapping:
    @pytest.mark.parametrize("model_name", ["hill48", "yld2000"])
    def test_consistency_at_step_end(self, hill48_truth, model_name):
        """Plastic points sit on the updated yield surface."""
        m = hill48_truth if model_name == "hill48" else _yld2000_truth()
        res = integrate(m, MaterialState.zeros(), PLASTIC_STRAIN)
        assert res.plastic
        assert float(res.state.ebar_p) > 0.0
        assert abs(yield_value(m, res.stress, res.state.ebar_p)) <= 1e-8 * m.sigma0

    def test_elastic_step_returns_stiffness(self, hill48_truth):
        res = integrate(hill48_truth, MaterialState.zeros(), [1e-5, 0.0, 0.0])
        assert not res.plastic
        assert np.allclose(res.tangent, hill48_truth.elastic.stiffness())

    def test_ebar_p_is_monotone(self, hill48_truth):
        state = MaterialState.zeros()
        path = [PLASTIC_STRAIN * t for t in np.linspace(0.1, 1.0, 10)] + [PLASTIC_STRAIN * 0.5]
        previous = 0.0
        for eps in path:
            res = integrate(hill48_truth, state, eps)
            state = res.state
            assert float(state.ebar_p) >= previous
            previous = float(state.ebar_p)

    def test_consistent_tangent_matches_differences(self, hill48_truth):
        base = integrate(hill48_truth, MaterialState.zeros(), PLASTIC_STRAIN)
        h = 1e-7
        numeric = np.empty((3, 3))
        for j in range(3):
            d = np.zeros(3)
            d[j] = h if j < 2 else 0.5 * h
            up = integrate(hill48_truth, MaterialState.zeros(), PLASTIC_STRAIN + d).stress
            dn = integrate(hill48_truth, MaterialState.zeros(), PLASTIC_STRAIN - d).stress
            numeric[:, j] = (up - dn) / (2.0 * h)
        assert np.max(np.abs(base.tangent - numeric)) / np.max(np.abs(numeric)) < 1e-4

    def test_vectorized_matches_single(self, hill48_truth):
        eps = np.array([PLASTIC_STRAIN, [1e-5, 0.0, 0.0], [0.004, 0.004, 0.0]])
        batch = integrate(hill48_truth, MaterialState.zeros(3), eps)
        for i in range(3):
            one = integrate(hill48_truth, MaterialState.zeros(), eps[i])
            assert batch.stress[i] == pytest.approx(one.stress)

    def test_uniaxial_driver_follows_swift(self, hill48_truth):
        path = drive_uniaxial(hill48_truth, 0.0, 0.05, 20)
        plastic = path.ebar_p > 0.0
        assert plastic.any()
        expected = swift_flow_stress(hill48_truth, path.ebar_p[plastic])
        assert path.axial_stress[plastic] == pytest.approx(expected, rel=1e-6)
        assert np.allclose(path.stress[:, 1:], 0.0, atol=1e-6 * hill48_truth.sigma0)


class TestYieldAnalysis:
    def test_reproduces_reference_yield_stress_table(self, hill48_truth):
        """Hill48 truth set: 15..90 degree yield stresses within 0.05 MPa."""
        got = yield_stress_table(hill48_truth, ANCHOR_ANGLES)
        assert np.max(np.abs(got - np.array(YIELD_STRESS_ANCHORS))) < 0.05

    def test_closed_form_agrees_with_root_finding(self, hill48_truth):
        theta = np.radians([0.0, 20.0, 45.0, 70.0, 90.0])
        closed = normalized_yield_stress(hill48_truth, theta, "closed_form")
        numeric = normalized_yield_stress(hill48_truth, theta, "numeric")
        assert closed == pytest.approx(numeric, rel=1e-10)

    def test_rd_yield_is_sigma0(self, hill48_truth):
        assert normalized_yield_stress(hill48_truth, 0.0) == pytest.approx(1.0)

    def test_lankford_hill48(self, hill48_truth):
        H = hill48_truth.H
        assert lankford(hill48_truth, 0.0) == pytest.approx(H / hill48_truth.G, rel=1e-8)
        assert lankford(hill48_truth, math.pi / 2) == pytest.approx(H / hill48_truth.F, rel=1e-8)

    def test_isotropic_lankford_is_one(self, hill48_theta1):
        """F = G = 0.5, N = 1.5 is von Mises."""
        for angle in (0.0, 0.4, math.pi / 4, 1.2):
            assert lankford(hill48_theta1, angle) == pytest.approx(1.0, rel=1e-8)

    @pytest.mark.parametrize("plane", ["s11-s22", "s22-t12"])
    def test_locus_lies_on_yield_surface(self, hill48_truth, plane):
        locus = yield_locus(hill48_truth, plane, 36)
        assert len(locus.points) == 37
        assert np.allclose(locus.points[0], locus.points[-1])
        full = np.zeros((36, 3))
        if plane == "s11-s22":
            full[:, :2] = locus.points[:-1]
        else:
            full[:, 1:] = locus.points[:-1]
        assert hill48_truth.equivalent_stress(full) == pytest.approx(hill48_truth.sigma0)

    def test_quadrant_locus_is_open(self, hill48_truth):
        locus = yield_locus(hill48_truth, "s11-s22", 20, quadrant=True)
        assert len(locus.points) == 20
        assert locus.ray_angles[-1] == pytest.approx(math.pi / 2)

    def test_non_positive_definite_set_has_no_locus(self):
        bad = Hill48Swift(**{**HILL48_TRUTH, "G": 3.0})  # H = 1 - G < 0
        with pytest.raises(LocusError):
            yield_locus(bad, "s11-s22", 36)
