"""Unit tests for diagonal functional-calculus sums."""
import numpy as np
import pytest

from core.calculus import (
    DiagonalSum,
    cutoff_symbol,
    diagonal_sum,
    shell_sum_oracle,
    taylor_family_sum,
    verify_leading_coefficient,
)
from core.models import ModelPoint, reeb_flow
from core.spectral import enumerate_modes
from utils.errors import InvalidInputError, TruncationError


@pytest.fixture(scope="module")
def round_spectrum(round_model):
    return enumerate_modes(round_model, 128)


def _indicator(limit):
    def symbol(eigenvalues):
        return (np.asarray(eigenvalues) <= limit).astype(float)
    return symbol


class TestDiagonalSum:
    """Tests for DiagonalSum and diagonal_sum."""

    def test_indicator_counts_shells(self, round_spectrum):
        """Should sum (m + 1) over shells m <= 3 at any point."""
        point = ModelPoint.from_hopf(0.3, 1.0, -2.0)
        assert diagonal_sum(round_spectrum, _indicator(3), point, support=(0, 3)) == pytest.approx(9.0, rel=1e-12)

    def test_truncation_is_reported(self, round_spectrum):
        """Should raise when the support exceeds the spectrum cap."""
        point = ModelPoint.from_hopf(0.3, 1.0, -2.0)
        with pytest.raises(TruncationError):
            diagonal_sum(round_spectrum, _indicator(200), point, support=(0, 200))

    def test_empty_contribution(self, round_spectrum, round_samples):
        """Should return zeros when the symbol vanishes on the spectrum."""
        values = DiagonalSum(round_spectrum, lambda lam: np.zeros_like(lam)).evaluate(round_samples)
        assert np.all(values == 0.0)

    def test_cutoff_symbol_support(self, bump):
        """Should report (delta1 k, delta2 k) as support."""
        _, support = cutoff_symbol(bump, 64)
        assert support == (16.0, 48.0)

    def test_weighted_sum_is_reeb_invariant(self, weighted_model, bump):
        """Should take the same value along a Reeb orbit on a weighted sphere."""
        spectrum = enumerate_modes(weighted_model, 32)
        symbol, support = cutoff_symbol(bump, 32)
        kernel = DiagonalSum(spectrum, symbol, support)
        point = ModelPoint.from_hopf(0.9, 0.5, 2.1)
        orbit = [point] + [reeb_flow(weighted_model, point, t) for t in (0.37, 1.3, 4.0)]
        values = kernel.evaluate(orbit)
        assert np.max(np.abs(values - values[0])) <= 1e-12 * abs(values[0])

    @pytest.mark.parametrize("k", [16, 32, 64, 128])
    def test_matches_shell_oracle(self, round_spectrum, round_samples, bump, k):
        """Should match the closed-form shell sum and be point independent."""
        symbol, support = cutoff_symbol(bump, k)
        values = DiagonalSum(round_spectrum, symbol, support).evaluate(round_samples)
        oracle = shell_sum_oracle(bump, k)
        assert np.max(np.abs(values - oracle)) <= 1e-10 * oracle
        assert (values.max() - values.min()) <= 1e-9 * oracle


class TestTaylorFamilySum:
    """Tests for taylor_family_sum function."""

    def test_order_zero_at_origin_matches_eta_sum(self, round_spectrum, bump):
        """Should reduce to the eta_k diagonal at s = 0, ell = 0."""
        point = ModelPoint.from_hopf(0.8, 0.1, 0.5)
        symbol, support = cutoff_symbol(bump, 32)
        expected = diagonal_sum(round_spectrum, symbol, point, support)
        assert taylor_family_sum(round_spectrum, bump, 0.0, 32, 0, point) == pytest.approx(expected, rel=1e-12)

    def test_s_derivative_weights(self, round_spectrum, bump):
        """Should weight by lambda^ell e^{2 lambda s}."""
        point = ModelPoint.from_hopf(0.8, 0.1, 0.5)
        s = 0.05
        symbol, support = cutoff_symbol(bump, 32)
        shifted = DiagonalSum(round_spectrum, lambda x: x * np.exp(2.0 * x * s) * symbol(x), support)
        expected = float(shifted.evaluate([point])[0])
        assert taylor_family_sum(round_spectrum, bump, s, 32, 1, point) == pytest.approx(expected, rel=1e-10)

    def test_first_moment_limit(self, round_spectrum, bump):
        """Should approach k^3 M_2 at s = 0 within ten percent at k = 64."""
        point = ModelPoint.from_hopf(0.8, 0.1, 0.5)
        value = taylor_family_sum(round_spectrum, bump, 0.0, 64, 1, point)
        assert value / 64 ** 3 == pytest.approx(bump.moments[2], rel=0.1)

    def test_rejects_large_s(self, round_spectrum, bump):
        """Should require |s| <= C/k."""
        point = ModelPoint.from_hopf(0.8, 0.1, 0.5)
        with pytest.raises(InvalidInputError):
            taylor_family_sum(round_spectrum, bump, 0.2, 32, 0, point)

    def test_rejects_truncated_spectrum(self, round_model, bump):
        """Should raise when delta2 k exceeds the cap."""
        small = enumerate_modes(round_model, 10)
        with pytest.raises(TruncationError):
            taylor_family_sum(small, bump, 0.0, 32, 0, ModelPoint(1.0, 0.0))


class TestVerifyLeadingCoefficient:
    """Tests for verify_leading_coefficient function."""

    def test_requires_four_increasing_ks(self, round_model, bump, round_samples):
        """Should reject short or unsorted k lists."""
        with pytest.raises(InvalidInputError):
            verify_leading_coefficient(round_model, bump, [16, 32, 64], round_samples)
        with pytest.raises(InvalidInputError):
            verify_leading_coefficient(round_model, bump, [16, 64, 32, 128], round_samples)

    def test_round_leading_term(self, round_model, round_spectrum, bump, round_samples):
        """Should approach a0 with an O(1/k) remainder."""
        ks = [16, 32, 64, 128]
        report = verify_leading_coefficient(round_model, bump, ks, round_samples, spectrum=round_spectrum)
        assert report.leading == bump.a0
        assert report.max_deviation[ks.index(64)] <= 0.1 * bump.a0
        assert -1.4 <= report.remainder_fit.slope <= -0.6
        assert max(report.spread) <= 1e-9 * bump.a0
        assert report.to_dict()["ks"] == ks
