"""Weighted 3-sphere models: points, tangent vectors, contact data and quadrature."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.stats import qmc

from utils.config import DEFAULT_SEED, logger
from utils.errors import InvalidInputError
from utils.validation import _validate_count, _validate_resolution, _validate_scheme, _validate_weights

SPHERE_TOL = 1e-12
TANGENCY_TOL = 1e-10

# Generators of the 2D additive recurrence used for the Hopf angles of the grid.
_PLASTIC = 1.32471795724474602596
_GRID_STEPS = (1.0 / _PLASTIC, 1.0 / _PLASTIC ** 2)


@lru_cache(maxsize=None)
def _gauss_legendre_unit(order):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class WeightVector:
    entries: tuple

    def __post_init__(self):
        error = _validate_weights(list(self.entries), "weight vector")
        if error:
            raise InvalidInputError(error, {"entries": list(self.entries)})
        object.__setattr__(self, "entries", tuple(float(e) for e in self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, idx):
        return self.entries[idx]

    def as_array(self):
        return np.asarray(self.entries, dtype=float)

    @property
    def min(self):
        return min(self.entries)

    @property
    def max(self):
        return max(self.entries)


@dataclass(frozen=True)
class ModelPoint:
    """A point of the unit sphere in C^2; ambient coordinates are canonical."""
    z: complex
    w: complex

    def __post_init__(self):
        z = complex(self.z)
        w = complex(self.w)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        defect = abs(z) ** 2 + abs(w) ** 2 - 1.0
        if abs(defect) > SPHERE_TOL:
            raise InvalidInputError("point is not on the unit sphere", {"defect": defect})

    @classmethod
    def from_hopf(cls, theta, phi1, phi2):
        return cls(math.cos(theta) * complex(math.cos(phi1), math.sin(phi1)),
                   math.sin(theta) * complex(math.cos(phi2), math.sin(phi2)))

    @classmethod
    def from_vector(cls, vector, normalize=False):
        z, w = complex(vector[0]), complex(vector[1])
        if normalize:
            norm = math.hypot(abs(z), abs(w))
            z, w = z / norm, w / norm
        return cls(z, w)

    @cached_property
    def theta(self):
        return math.atan2(abs(self.w), abs(self.z))

    @cached_property
    def phase_z(self):
        return math.atan2(self.z.imag, self.z.real)

    @cached_property
    def phase_w(self):
        return math.atan2(self.w.imag, self.w.real)

    def hopf(self):
        return self.theta, self.phase_z, self.phase_w

    def as_array(self):
        return np.array([self.z, self.w], dtype=complex)

    def antipode(self):
        return ModelPoint(-self.z, -self.w)


@dataclass(frozen=True)
class TangentVector:
    """A complexified tangent vector in Wirtinger components.

    A real vector with holomorphic velocity (vz, vw) has dz=vz, dw=vw and
    dzbar=conj(vz), dwbar=conj(vw).
    """
    base: ModelPoint
    dz: complex
    dw: complex
    dzbar: complex = 0j
    dwbar: complex = 0j

    def __post_init__(self):
        for name in ("dz", "dw", "dzbar", "dwbar"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        scale = max(1.0, self.norm())
        defect = self.defining_derivative()
        if abs(defect) > TANGENCY_TOL * scale:
            raise InvalidInputError("vector is not tangent to the sphere", {"defect": abs(defect)})

    @classmethod
    def real(cls, base, vz, vw):
        vz, vw = complex(vz), complex(vw)
        return cls(base, vz, vw, vz.conjugate(), vw.conjugate())

    @classmethod
    def from_real_coefficients(cls, base, coefficients):
        """Build from coefficients along (d/dx1, d/dy1, d/dx2, d/dy2)."""
        x1, y1, x2, y2 = coefficients
        return cls.real(base, complex(x1, y1), complex(x2, y2))

    def components(self):
        return np.array([self.dz, self.dw, self.dzbar, self.dwbar], dtype=complex)

    def real_coefficients(self):
        """Coefficients along (d/dx1, d/dy1, d/dx2, d/dy2); complex for complex vectors."""
        return np.array([
            (self.dz + self.dzbar) / 2,
            (self.dz - self.dzbar) / 2j,
            (self.dw + self.dwbar) / 2,
            (self.dw - self.dwbar) / 2j,
        ], dtype=complex)

    def is_real(self, tol=1e-14):
        return (abs(self.dzbar - self.dz.conjugate()) <= tol
                and abs(self.dwbar - self.dw.conjugate()) <= tol)

    def conjugate(self):
        return TangentVector(self.base, self.dzbar.conjugate(), self.dwbar.conjugate(),
                             self.dz.conjugate(), self.dw.conjugate())

    def norm(self):
        return float(np.linalg.norm(self.components()))

    def defining_derivative(self):
        """Derivative of |z|^2 + |w|^2 - 1 along this vector."""
        z, w = self.base.z, self.base.w
        return (z.conjugate() * self.dz + z * self.dzbar
                + w.conjugate() * self.dw + w * self.dwbar)

    def apply(self, gradient):
        """Apply to a function with Wirtinger gradient (d/dz, d/dw, d/dzbar, d/dwbar)."""
        return complex(np.dot(self.components(), np.asarray(gradient, dtype=complex)))

    def __add__(self, other):
        return TangentVector(self.base, self.dz + other.dz, self.dw + other.dw,
                             self.dzbar + other.dzbar, self.dwbar + other.dwbar)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return TangentVector(self.base, scalar * self.dz, scalar * self.dw,
                             scalar * self.dzbar, scalar * self.dwbar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Product rule in Hopf coordinates.

    Gauss-Legendre in u = |z|^2 times uniform trapezoid in both phases. The
    radial arrays carry the torus-reduced rule with the density folded in.
    """
    scheme: str
    resolution: int
    z: np.ndarray
    w: np.ndarray
    weights: np.ndarray
    radial_nodes: np.ndarray
    radial_weights: np.ndarray

    @property
    def size(self):
        return int(self.weights.size)

    def nodes(self):
        return [(ModelPoint(z, w), float(wt)) for z, w, wt in zip(self.z, self.w, self.weights)]

    def total(self):
        return float(np.sum(self.weights))


@dataclass(frozen=True, eq=False)
class SasakianModel:
    beta: WeightVector
    resolution: int
    quadrature: QuadratureRule
    total_mass: float
    n: int = 1

    @property
    def p(self):
        return self.beta[0]

    @property
    def q(self):
        return self.beta[1]

    def rho(self, z, w):
        """Weighted denominator p|z|^2 + q|w|^2 (vectorized)."""
        return self.p * np.abs(z) ** 2 + self.q * np.abs(w) ** 2

    def reeb_vector(self, point):
        return TangentVector.real(point, 1j * self.p * point.z, 1j * self.q * point.w)

    def _sigma(self, vector):
        z, w = vector.base.z, vector.base.w
        return (z.conjugate() * vector.dz - z * vector.dzbar
                + w.conjugate() * vector.dw - w * vector.dwbar) / 2j

    def _rho_derivative(self, vector):
        z, w = vector.base.z, vector.base.w
        return (self.p * (z.conjugate() * vector.dz + z * vector.dzbar)
                + self.q * (w.conjugate() * vector.dw + w * vector.dwbar))

    def contact_form(self, point, vector):
        """Evaluate the weighted contact form on a (complexified) tangent vector."""
        return self._sigma(vector) / float(self.rho(point.z, point.w))

    def contact_differential(self, point, first, second):
        rho = float(self.rho(point.z, point.w))
        d_sigma = 1j * (first.dz * second.dzbar - second.dz * first.dzbar
                        + first.dw * second.dwbar - second.dw * first.dwbar)
        d_rho_first = self._rho_derivative(first)
        d_rho_second = self._rho_derivative(second)
        return (d_sigma / rho
                - (d_rho_first * self._sigma(second) - d_rho_second * self._sigma(first)) / rho ** 2)

    def levi_density(self, point):
        """Undeformed Levi value at the canonical frame."""
        return 0.5 / float(self.rho(point.z, point.w))


def _build_quadrature(p, q, resolution):
    u, wu = _gauss_legendre_unit(resolution)
    count = 2 * resolution
    angles = 2.0 * np.pi * np.arange(count) / count
    density = 1.0 / (p * u + q * (1.0 - u)) ** 2
    radial_weights = wu * density

    uu, a1, a2 = np.meshgrid(u, angles, angles, indexing="ij")
    weights = np.broadcast_to(radial_weights[:, None, None], uu.shape) / count ** 2
    z = np.sqrt(uu) * np.exp(1j * a1)
    w = np.sqrt(1.0 - uu) * np.exp(1j * a2)
    return QuadratureRule(
        scheme="hopf-product",
        resolution=resolution,
        z=z.ravel(),
        w=w.ravel(),
        weights=np.ascontiguousarray(weights).ravel(),
        radial_nodes=u,
        radial_weights=radial_weights,
    )


def make_weighted_sphere(p, q, resolution):
    beta = WeightVector((p, q))
    error = _validate_resolution(resolution)
    if error:
        raise InvalidInputError(error, {"resolution": resolution})
    rule = _build_quadrature(beta[0], beta[1], resolution)
    model = SasakianModel(beta=beta, resolution=resolution, quadrature=rule, total_mass=rule.total())
    logger.debug(f"[Model] beta=({beta[0]:g},{beta[1]:g}) resolution={resolution} "
                 f"nodes={rule.size} total_mass={model.total_mass:.15g}")
    return model


def reeb_flow(model, point, t):
    return ModelPoint(point.z * complex(math.cos(model.p * t), math.sin(model.p * t)),
                      point.w * complex(math.cos(model.q * t), math.sin(model.q * t)))


def _points_from_hopf_arrays(u, phi1, phi2):
    z = np.sqrt(u) * np.exp(1j * phi1)
    w = np.sqrt(1.0 - u) * np.exp(1j * phi2)
    return points_from_arrays(z, w)


def sample_points(model, scheme, count, seed=DEFAULT_SEED):
    error = _validate_scheme(scheme) or _validate_count(count)
    if error:
        raise InvalidInputError(error, {"scheme": scheme, "count": count})
    idx = np.arange(count)
    if scheme == "hopf-grid":
        u = (idx + 0.5) / count
        phi1 = 2.0 * np.pi * np.mod(0.5 + idx * _GRID_STEPS[0], 1.0)
        phi2 = 2.0 * np.pi * np.mod(0.5 + idx * _GRID_STEPS[1], 1.0)
    else:
        draws = qmc.Halton(d=3, scramble=True, seed=seed).random(count)
        u = draws[:, 0]
        phi1 = 2.0 * np.pi * draws[:, 1]
        phi2 = 2.0 * np.pi * draws[:, 2]
    return _points_from_hopf_arrays(u, phi1, phi2)


def points_to_arrays(points):
    if isinstance(points, ModelPoint):
        points = [points]
    z = np.array([pt.z for pt in points], dtype=complex)
    w = np.array([pt.w for pt in points], dtype=complex)
    return z, w


def points_from_arrays(z, w):
    # renormalize so roundoff never trips the sphere check
    norm = np.sqrt(np.abs(z) ** 2 + np.abs(w) ** 2)
    return [ModelPoint(a, b) for a, b in zip(z / norm, w / norm)]


def geodesic_distance(first, second):
    inner = (first.z * second.z.conjugate() + first.w * second.w.conjugate()).real
    return math.acos(max(-1.0, min(1.0, inner)))


def cr_frame(model, point):
    """Canonical (1,0) frame Z = conj(w) d/dz - conj(z) d/dw."""
    return TangentVector(point, point.w.conjugate(), -point.z.conjugate())


def frame_bracket(model, point):
    """[Z, conj(Z)] from the exact Wirtinger Jacobians of the frame coefficients.

    Components are ordered (z, w, zbar, wbar).
    """
    frame = cr_frame(model, point)
    frame_bar = frame.conjugate()
    # d(coefficient_k)/d(x_m) for Z = (conj w, -conj z, 0, 0)
    jac_frame = np.zeros((4, 4), dtype=complex)
    jac_frame[0, 3] = 1.0
    jac_frame[1, 2] = -1.0
    # and for conj(Z) = (0, 0, w, -z)
    jac_frame_bar = np.zeros((4, 4), dtype=complex)
    jac_frame_bar[2, 1] = 1.0
    jac_frame_bar[3, 0] = -1.0
    components = jac_frame_bar @ frame.components() - jac_frame @ frame_bar.components()
    return TangentVector(point, *components)


def integrate(model, integrand):
    """Quadrature sum of a vectorized integrand f(z, w) over the model."""
    rule = model.quadrature
    values = np.asarray(integrand(rule.z, rule.w), dtype=complex)
    if values.ndim == 0:
        values = np.full(rule.size, values)
    return complex(np.sum(values * rule.weights))


def radial_integrate(model, profile, order=None):
    """Integrate a torus-invariant integrand given as a function of u = |z|^2.

    A profile returning shape (m, nodes) yields m integrals at once.
    """
    order = max(model.resolution, order or 0)
    u, wu = _gauss_legendre_unit(order)
    density = wu / (model.p * u + model.q * (1.0 - u)) ** 2
    values = np.asarray(profile(u), dtype=float)
    if values.ndim == 0:
        values = np.full(u.shape, float(values))
    values = values @ density
    return float(values) if np.ndim(values) == 0 else values
