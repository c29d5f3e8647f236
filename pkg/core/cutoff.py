"""Smooth compactly supported cutoffs and their moments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.models import _gauss_legendre_unit
from utils.config import DEFAULT_MOMENT_ORDER, logger
from utils.errors import InvalidInputError
from utils.validation import _validate_interval, _validate_shape

MOMENT_TOL = 1e-13
_ABS_FLOOR = 1e-300
_PANEL_ORDER = 16
_MAX_DEPTH = 40


def _log_bump(t, delta1, delta2):
    t = np.asarray(t, dtype=float)
    inside = (t > delta1) & (t < delta2)
    gap = np.where(inside, (t - delta1) * (delta2 - t), 1.0)
    return np.where(inside, -1.0 / gap, -np.inf)


def _gl_panel(func, lo, hi, order):
    u, wu = _gauss_legendre_unit(order)
    t = lo + (hi - lo) * u
    return (hi - lo) * float(np.sum(wu * func(t)))


def _adaptive_gauss_legendre(func, lo, hi, tol=MOMENT_TOL, order=_PANEL_ORDER, depth=0):
    """Bisecting Gauss-Legendre with a relative stopping rule per panel."""
    whole = _gl_panel(func, lo, hi, order)
    mid = 0.5 * (lo + hi)
    left = _gl_panel(func, lo, mid, order)
    right = _gl_panel(func, mid, hi, order)
    refined = left + right
    if abs(refined - whole) <= max(tol * abs(refined), _ABS_FLOOR) or depth >= _MAX_DEPTH:
        return refined
    return (_adaptive_gauss_legendre(func, lo, mid, tol, order, depth + 1)
            + _adaptive_gauss_legendre(func, mid, hi, tol, order, depth + 1))


@dataclass(frozen=True)
class CutoffSpec:
    """Bump chi on (delta1, delta2) with moments M_p of chi^2."""
    delta1: float
    delta2: float
    shape: str
    moments: tuple
    n: int = 1

    @property
    def a0(self):
        return self.moments[self.n]

    @property
    def c_chi(self):
        return self.a0 ** -0.5

    def b(self, ell):
        return self.moments[self.n + ell] / self.moments[self.n]

    def log_chi(self, t):
        return _log_bump(t, self.delta1, self.delta2)

    def chi(self, t):
        return np.exp(self.log_chi(t))

    def eta(self, t):
        return np.exp(2.0 * self.log_chi(t))


def cutoff_moment(delta1, delta2, power, tol=MOMENT_TOL, order=_PANEL_ORDER):
    """M_p = int chi(t)^2 t^p dt, split at the support midpoint."""
    def integrand(t):
        return np.exp(2.0 * _log_bump(t, delta1, delta2)) * t ** power

    mid = 0.5 * (delta1 + delta2)
    return (_adaptive_gauss_legendre(integrand, delta1, mid, tol, order)
            + _adaptive_gauss_legendre(integrand, mid, delta2, tol, order))


def make_bump(delta1, delta2, moment_order=DEFAULT_MOMENT_ORDER, n=1, shape="standard-bump"):
    error = _validate_interval(delta1, delta2) or _validate_shape(shape)
    if error:
        raise InvalidInputError(error, {"delta1": delta1, "delta2": delta2, "shape": shape})
    if not isinstance(moment_order, int) or moment_order < n + 4:
        raise InvalidInputError(f"moment order must be an integer of at least {n + 4}",
                                {"moment_order": moment_order})
    moments = tuple(cutoff_moment(delta1, delta2, p) for p in range(moment_order + 1))
    spec = CutoffSpec(delta1=float(delta1), delta2=float(delta2), shape=shape, moments=moments, n=n)
    logger.debug(f"[Cutoff] ({delta1:g},{delta2:g}) a0={spec.a0:.6e} b1={spec.b(1):.12g}")
    return spec


def eval_chi_k(spec, eigenvalue, k):
    return float(spec.chi(eigenvalue / k))


def log_chi_k(spec, eigenvalues, k):
    return spec.log_chi(np.asarray(eigenvalues, dtype=float) / k)


def in_support(spec, eigenvalues, k):
    t = np.asarray(eigenvalues, dtype=float) / k
    return (t > spec.delta1) & (t < spec.delta2)
