"""Diagonal functional-calculus sums of the Reeb eigensystem."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from core.cutoff import in_support
from core.diagnostics import fit_rate
from core.spectral import enumerate_modes, mode_moduli
from utils.errors import InvalidInputError, TruncationError
from utils.config import logger

DEFAULT_S_BOUND = 4.0


def _pairwise_sum(terms):
    """Sum over the mode axis (axis 0) with numpy's pairwise reduction."""
    return np.sum(np.ascontiguousarray(np.asarray(terms).T), axis=-1)


@dataclass(frozen=True, eq=False)
class DiagonalSum:
    """R^tau(x) = sum_j tau(lambda_j) |f_j(x)|^2 over a truncated spectrum.

    symbol acts on arrays of eigenvalues. support, when known, is the
    interval outside of which the symbol vanishes.
    """
    spectrum: object
    symbol: Callable
    support: Optional[tuple] = None

    @property
    def cap(self):
        return self.spectrum.cap

    def check_truncation(self):
        if self.support is not None and self.support[1] > self.cap * (1 + 1e-12):
            raise TruncationError(
                "symbol support exceeds the spectrum cap",
                {"support": list(self.support), "cap": self.cap},
            )

    def contributing(self):
        values = np.asarray(self.symbol(self.spectrum.eigenvalues), dtype=float)
        mask = values != 0.0
        return self.spectrum.select(mask), values[mask]

    def evaluate(self, points):
        self.check_truncation()
        modes, values = self.contributing()
        if not modes:
            return np.zeros(len(points))
        return _pairwise_sum(values[:, None] * mode_moduli(modes, points))


def cutoff_symbol(spec, k):
    """DiagonalSum symbol eta(lambda/k) with its support."""
    def symbol(eigenvalues):
        return spec.eta(np.asarray(eigenvalues, dtype=float) / k)

    return symbol, (spec.delta1 * k, spec.delta2 * k)


def diagonal_sum(spectrum, tau, point, support=None):
    return float(DiagonalSum(spectrum, tau, support).evaluate([point])[0])


def shell_sum_oracle(spec, k):
    """Closed-form round-sphere value: sum over levels m of eta(m/k) (m + 1)."""
    m = np.arange(1, int(math.floor(spec.delta2 * k)) + 1)
    return float(np.sum(spec.eta(m / k) * (m + 1)))


def taylor_family_sum(spectrum, spec, s, k, ell, point, s_bound=DEFAULT_S_BOUND):
    """sum_j lambda_j^ell e^{2 lambda_j s} chi_k(lambda_j)^2 |f_j(x)|^2."""
    if abs(s) > s_bound / k:
        raise InvalidInputError("cylinder parameter outside |s| <= C/k", {"s": s, "k": k, "C": s_bound})
    if spec.delta2 * k > spectrum.cap * (1 + 1e-12):
        raise TruncationError("cutoff support exceeds the spectrum cap",
                              {"k": k, "cap": spectrum.cap})
    mask = in_support(spec, spectrum.eigenvalues, k)
    modes = spectrum.select(mask)
    if not modes:
        return 0.0
    lam = spectrum.eigenvalues[mask]
    coefficient = lam ** ell * np.exp(2.0 * lam * s + 2.0 * spec.log_chi(lam / k))
    return float(_pairwise_sum(coefficient[:, None] * mode_moduli(modes, [point]))[0])


@dataclass(frozen=True)
class LeadingCoefficientReport:
    ks: tuple
    scaled_values: tuple
    leading: float
    max_deviation: tuple
    spread: tuple
    remainder_fit: object

    def to_dict(self):
        return {
            "ks": list(self.ks),
            "leading": self.leading,
            "max_deviation": list(self.max_deviation),
            "spread": list(self.spread),
            "remainder_fit": self.remainder_fit.to_dict() if self.remainder_fit else None,
        }


def verify_leading_coefficient(model, spec, k_list, points, spectrum=None):
    """Compare k^{-(n+1)} R^{eta_k}(x) with a0 = M_n over a k grid."""
    k_list = list(k_list)
    if len(k_list) < 4 or any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise InvalidInputError("k list must be increasing with at least 4 values", {"k_list": k_list})
    if spectrum is None:
        spectrum = enumerate_modes(model, spec.delta2 * k_list[-1])
    scaled, deviations, spreads = [], [], []
    for k in k_list:
        symbol, support = cutoff_symbol(spec, k)
        values = DiagonalSum(spectrum, symbol, support).evaluate(points) * k ** -(model.n + 1)
        scaled.append(tuple(float(v) for v in values))
        deviations.append(float(np.max(np.abs(values - spec.a0))))
        spreads.append(float(np.max(values) - np.min(values)))
        logger.info(f"[Kernel] k={k:g} max|dev|={deviations[-1]:.3e} spread={spreads[-1]:.3e}")
    fit = None
    if all(d > 0 for d in deviations):
        fit = fit_rate(list(zip(k_list, deviations)))
    return LeadingCoefficientReport(
        ks=tuple(k_list),
        scaled_values=tuple(scaled),
        leading=spec.a0,
        max_deviation=tuple(deviations),
        spread=tuple(spreads),
        remainder_fit=fit,
    )
