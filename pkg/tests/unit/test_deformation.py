"""Unit tests for deformed CR structures, certificates and continuation."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from core.deformation import (
    CertificateProblem,
    Component,
    ContinuationProblem,
    DeformedStructure,
    ZeroField,
    certificate_PN,
    continuation_derivative,
    continuation_solve,
    deformation_path,
    example_family,
    example_levi,
    levi_deformed,
    nonconstant_direction,
)
from core.embedding import build_Fk, build_reference_embedding, solve_graph
from core.models import ModelPoint, cr_frame, make_weighted_sphere, sample_points
from core.spectral import enumerate_modes
from utils.errors import InvalidInputError, SolverError


@pytest.fixture(scope="module")
def example_samples(round_model):
    return tuple(sample_points(round_model, "hopf-grid", 30))


def _points():
    return [ModelPoint.from_hopf(theta, 0.3, -0.8) for theta in (0.0, 0.4, 0.9, 1.3, math.pi / 2)]


class TestLeviDeformed:
    """Tests for levi_deformed function."""

    @pytest.mark.parametrize("p,q", [(1.0, 1.0), (2.0, 3.0)])
    def test_zero_field_is_undeformed(self, p, q):
        """Should reduce to 1/(2 rho) when phi vanishes."""
        model = make_weighted_sphere(p, q, 8)
        structure = DeformedStructure(model=model, field=ZeroField())
        for point in _points():
            assert levi_deformed(structure, point) == pytest.approx(model.levi_density(point), rel=1e-13)

    @pytest.mark.parametrize("eps", [-0.5, 0.1, 2.0])
    def test_example_matches_closed_form(self, eps):
        """Should match the closed-form Levi value of the example deformation."""
        structure = example_family(eps).structure()
        for point in _points():
            assert abs(levi_deformed(structure, point) - example_levi(eps, point)) <= 1e-12

    def test_numeric_bracket_agrees(self):
        """Should agree with the difference-quotient commutator."""
        structure = example_family(0.7).structure()
        for point in _points():
            exact = levi_deformed(structure, point)
            numeric = levi_deformed(structure, point, bracket="numeric")
            assert abs(exact - numeric) <= 1e-8

    def test_round_graph_is_pseudoconvex(self, round_model, bump):
        """Should stay strictly pseudoconvex after the phi_k deformation."""
        spectrum = enumerate_modes(round_model, 32)
        samples = sample_points(round_model, "hopf-grid", 16)
        reference = build_reference_embedding(round_model, spectrum, samples=samples)
        family = build_Fk(round_model, bump, 32, reference, spectrum)
        solution = solve_graph(family, samples)
        structure = DeformedStructure(model=round_model, field=solution)
        for point in solution.points:
            assert levi_deformed(structure, point) > 0.4


class TestContactCorrection:
    """Tests for DeformedStructure.contact_correction."""

    def test_vanishes_on_reeb(self):
        """Should annihilate the Reeb field."""
        structure = example_family(0.3).structure()
        for point in _points():
            reeb = structure.model.reeb_vector(point)
            assert abs(structure.contact_correction(point, reeb)) <= 1e-14

    def test_frame_value(self):
        """Should give i Z(phi) on the (1,0) frame."""
        structure = example_family(0.3).structure()
        for point in _points():
            jet = structure.jet(point)
            value = structure.contact_correction(point, cr_frame(structure.model, point))
            assert value == pytest.approx(1j * jet.frame_derivative(), abs=1e-15)


class TestCertificate:
    """Tests for certificate_PN function."""

    @pytest.mark.parametrize("eps", [-0.9, 0.05, 0.5, 3.0])
    def test_example_passes(self, eps, example_samples):
        """Should certify the exact example on every sample."""
        family = example_family(eps)
        report = certificate_PN(CertificateProblem(family.components, family.field, example_samples))
        assert report.passed
        assert report.max_residual <= 1e-13
        assert report.to_dict()["samples"] == len(example_samples)

    def test_perturbed_field_fails(self, example_samples):
        """Should reject a shifted phi."""
        family = example_family(0.5)
        values = np.array([family.field.value_at(pt) for pt in example_samples]) + 1e-3
        report = certificate_PN(CertificateProblem(family.components, values, example_samples))
        assert not report.passed
        assert report.max_residual > 1e-3

    def test_misaligned_values(self, example_samples):
        """Should reject phi arrays that do not match the samples."""
        family = example_family(0.5)
        with pytest.raises(InvalidInputError):
            certificate_PN(CertificateProblem(family.components, np.zeros(3), example_samples))


class TestContinuationSolve:
    """Tests for continuation_solve function."""

    @settings(max_examples=25, deadline=None)
    @given(eps=st.floats(min_value=-0.9, max_value=5.0))
    def test_equal_weights_closed_form(self, eps):
        """Should recover -log sqrt(1 + eps |z|^2) for the example components."""
        family = example_family(eps)
        samples = tuple(sample_points(family.model, "hopf-grid", 12))
        problem = ContinuationProblem(family.components, samples)
        values = continuation_solve(problem, np.ones(2))
        expected = np.array([family.field.value_at(pt) for pt in samples])
        assert np.max(np.abs(values - expected)) <= 1e-13

    def test_unequal_weights_match_brentq(self, example_samples):
        """Should match a bracketed reference root."""
        components = (Component(1.0, 1, 0, 1.0), Component(1.0, 0, 1, 2.0))
        problem = ContinuationProblem(components, example_samples)
        r = np.array([1.3, 0.8])
        values = continuation_solve(problem, r)
        for point, value in zip(example_samples, values):
            masses = r ** 2 * np.array([abs(point.z) ** 2, abs(point.w) ** 2])

            def level(phi):
                return masses[0] * math.exp(2.0 * phi) + masses[1] * math.exp(4.0 * phi) - 1.0

            assert value == pytest.approx(brentq(level, -5.0, 5.0, xtol=1e-15), abs=1e-12)

    def test_bisect_matches_newton(self, example_samples):
        """Should agree across root finders."""
        components = (Component(1.0, 1, 0, 1.0), Component(0.5, 0, 1, 3.0))
        problem = ContinuationProblem(components, example_samples)
        r = np.array([1.0, 1.5])
        newton = continuation_solve(problem, r)
        bisected = continuation_solve(problem, r, method="bisect")
        assert np.max(np.abs(newton - bisected)) <= 1e-12

    def test_rejects_wrong_shape(self, example_samples):
        """Should require one r entry per component."""
        problem = ContinuationProblem(example_family(0.1).components, example_samples)
        with pytest.raises(InvalidInputError):
            continuation_solve(problem, np.ones(3))

    def test_vanishing_components(self):
        """Should fail where every component vanishes."""
        problem = ContinuationProblem((Component(1.0, 1, 0, 1.0),), (ModelPoint(0.0, 1.0),))
        with pytest.raises(SolverError):
            continuation_solve(problem, np.ones(1))


class TestContinuationDerivative:
    """Tests for continuation_derivative and the path helpers."""

    @pytest.fixture
    def base(self, example_samples):
        components = (Component(1.0, 1, 0, 1.0), Component(1.0, 0, 1, 2.0))
        problem = ContinuationProblem(components, example_samples)
        r0 = np.array([1.0, 1.0])
        return problem, r0, continuation_solve(problem, r0)

    def test_matches_difference_quotient(self, base):
        """Should match a central difference of the solved level set."""
        problem, r0, phi0 = base
        step = 1e-5
        for v in (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.6, -0.8])):
            exact = continuation_derivative(problem, r0, phi0, v)
            difference = (continuation_solve(problem, r0 + step * v)
                          - continuation_solve(problem, r0 - step * v)) / (2.0 * step)
            assert np.max(np.abs(exact - difference)) <= 5e-9

    def test_rejects_bad_base(self, base):
        """Should require G(r0, phi0) = 1."""
        problem, r0, phi0 = base
        with pytest.raises(InvalidInputError):
            continuation_derivative(problem, r0, phi0 + 0.1, np.ones(2))

    def test_nonconstant_direction(self, base):
        """Should find a direction with a non-constant response."""
        problem, r0, phi0 = base
        index, spread = nonconstant_direction(problem, r0, phi0)
        assert index in (0, 1)
        assert spread > 0.1
        records = deformation_path(problem, r0, phi0, index, [0.0, 0.1, 0.2])
        assert records[0]["spread"] == 0.0
        assert records[2]["spread"] > records[1]["spread"] > 0.0


class TestExampleFamily:
    """Tests for example_family function."""

    def test_rejects_eps_at_minus_one(self):
        """Should require eps > -1."""
        with pytest.raises(InvalidInputError):
            example_family(-1.0)

    @pytest.mark.parametrize("eps", [-0.5, 0.0, 4.0])
    def test_map_lands_on_sphere(self, eps, example_samples):
        """Should map every sample to the unit sphere of C^2."""
        family = example_family(eps)
        for point in example_samples:
            assert np.linalg.norm(family.map(point)) == pytest.approx(1.0, abs=1e-14)


class TestDeformedStructure:
    """Tests for the deformed contact form of the example."""

    def test_reeb_invariant_field(self):
        """Should have a Reeb-invariant phi and keep alpha(T) = 1."""
        structure = example_family(0.8).structure()
        for point in _points():
            reeb = structure.model.reeb_vector(point)
            assert abs(structure.reeb_derivative(point)) <= 1e-15
            assert structure.deformed_contact_form(point, reeb) == pytest.approx(1.0, abs=1e-14)
