"""CR eigenmodes z^a w^b of the Reeb operator on weighted 3-spheres."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from core.models import points_to_arrays, radial_integrate
from utils.config import logger

# Extra Gauss-Legendre nodes on top of the polynomial degree for the 1/rho^2 density.
_NORM_ORDER_MARGIN = 24
ORACLE_TOL = 1e-9


@dataclass(frozen=True)
class EigenMode:
    a: int
    b: int
    eigenvalue: float
    norm_sq: float
    index: int

    @property
    def exponents(self):
        return self.a, self.b

    @property
    def scale(self):
        return 1.0 / math.sqrt(self.norm_sq)


@dataclass(frozen=True, eq=False)
class Spectrum:
    modes: tuple
    beta: object
    cap: float

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, idx):
        return self.modes[idx]

    @cached_property
    def eigenvalues(self):
        return np.array([m.eigenvalue for m in self.modes], dtype=float)

    @cached_property
    def exponent_a(self):
        return np.array([m.a for m in self.modes], dtype=int)

    @cached_property
    def exponent_b(self):
        return np.array([m.b for m in self.modes], dtype=int)

    @cached_property
    def scales(self):
        return np.array([m.scale for m in self.modes], dtype=float)

    def select(self, mask):
        return tuple(m for m, keep in zip(self.modes, mask) if keep)

    def count_below(self, k):
        return int(np.count_nonzero(self.eigenvalues <= k * (1 + 1e-12)))


def beta_norm_oracle(a, b):
    """Closed-form norm of z^a w^b on the round unit-mass sphere."""
    return math.exp(gammaln(a + 1) + gammaln(b + 1) - gammaln(a + b + 2))


def _mode_norms(model, a, b):
    """Radially reduced integrals of |z^a w^b|^2, grouped by total degree."""
    norms = np.empty(a.size, dtype=float)
    degrees = a + b
    for degree in np.unique(degrees):
        mask = degrees == degree
        am, bm = a[mask], b[mask]
        norms[mask] = radial_integrate(
            model,
            lambda u: np.exp(np.outer(am, np.log(u)) + np.outer(bm, np.log1p(-u))),
            order=int(degree) // 2 + _NORM_ORDER_MARGIN,
        )
    return norms


def enumerate_modes(model, cap):
    p, q = model.p, model.q
    limit = cap * (1.0 + 1e-12) + 1e-12
    entries = []
    if cap >= min(p, q):
        for a in range(int(math.floor(limit / p)) + 1):
            remaining = limit - p * a
            for b in range(int(math.floor(remaining / q)) + 1):
                if a == 0 and b == 0:
                    continue
                entries.append((p * a + q * b, a, b))
    entries.sort()
    if not entries:
        logger.info(f"[Spectrum] cap={cap:g} is below the smallest eigenvalue")
        return Spectrum(modes=(), beta=model.beta, cap=float(cap))

    a = np.array([e[1] for e in entries], dtype=int)
    b = np.array([e[2] for e in entries], dtype=int)
    norms = _mode_norms(model, a, b)
    if p == q == 1.0:
        oracle = np.array([beta_norm_oracle(x, y) for x, y in zip(a, b)])
        deviation = float(np.max(np.abs(norms - oracle) / oracle))
        if deviation > ORACLE_TOL:
            logger.warning(f"[Spectrum] norm oracle mismatch {deviation:.3e}")
    modes = tuple(
        EigenMode(a=int(x), b=int(y), eigenvalue=float(lam), norm_sq=float(ns), index=j + 1)
        for j, ((lam, x, y), ns) in enumerate(zip(entries, norms))
    )
    logger.info(f"[Spectrum] beta=({p:g},{q:g}) cap={cap:g} modes={len(modes)}")
    return Spectrum(modes=modes, beta=model.beta, cap=float(cap))


def _power_table(x, top):
    """Rows are x**0 .. x**top, built by repeated multiplication."""
    table = np.ones((top + 1, x.size), dtype=complex)
    if top:
        table[1:] = np.cumprod(np.broadcast_to(x, (top, x.size)), axis=0)
    return table


def mode_jet(modes, z, w, order=2):
    """Values and holomorphic derivatives of normalized modes at many points.

    Returns a dict of (modes x points) arrays: f, fz, fw and, for order 2,
    fzz, fzw, fww.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    a = np.array([m.a for m in modes], dtype=int)
    b = np.array([m.b for m in modes], dtype=int)
    scale = np.array([m.scale for m in modes], dtype=float)[:, None]
    if a.size == 0:
        empty = np.zeros((0, z.size), dtype=complex)
        return {key: empty for key in ("f", "fz", "fw", "fzz", "fzw", "fww")}
    zt = _power_table(z, int(a.max()))
    wt = _power_table(w, int(b.max()))

    def term(da, db):
        factor = np.ones(a.size)
        for step in range(da):
            factor = factor * (a - step)
        for step in range(db):
            factor = factor * (b - step)
        return (scale * factor[:, None]) * zt[np.maximum(a - da, 0)] * wt[np.maximum(b - db, 0)]

    jet = {"f": term(0, 0)}
    if order >= 1:
        jet["fz"] = term(1, 0)
        jet["fw"] = term(0, 1)
    if order >= 2:
        jet["fzz"] = term(2, 0)
        jet["fzw"] = term(1, 1)
        jet["fww"] = term(0, 2)
    return jet


def mode_values(modes, z, w):
    return mode_jet(modes, z, w, order=0)["f"]


def eval_mode(mode, point, s=0.0):
    value = mode.scale * point.z ** mode.a * point.w ** mode.b
    if s:
        value *= math.exp(mode.eigenvalue * s)
    return complex(value)


def eval_mode_gradient(mode, point):
    """Wirtinger gradient (d/dz, d/dw, d/dzbar, d/dwbar); antiholomorphic parts vanish."""
    jet = mode_jet([mode], [point.z], [point.w], order=1)
    return np.array([jet["fz"][0, 0], jet["fw"][0, 0], 0j, 0j], dtype=complex)


def gram_matrix(model, spectrum, count):
    rule = model.quadrature
    values = mode_values(spectrum.modes[:count], rule.z, rule.w)
    return (values * rule.weights) @ values.conj().T


def lattice_count(p, q, k):
    """Brute-force count of exponent pairs (a, b) != (0, 0) with pa + qb <= k."""
    limit = k * (1.0 + 1e-12) + 1e-12
    total = 0
    a = 0
    while p * a <= limit:
        total += int(math.floor((limit - p * a) / q)) + 1
        a += 1
    return total - 1


def shell_count(k):
    return sum(m + 1 for m in range(1, int(math.floor(k)) + 1))


def mode_moduli(spectrum_or_modes, points):
    """|f_j(x)|^2 as a (modes x points) array."""
    modes = getattr(spectrum_or_modes, "modes", spectrum_or_modes)
    z, w = points_to_arrays(points)
    return np.abs(mode_values(modes, z, w)) ** 2
