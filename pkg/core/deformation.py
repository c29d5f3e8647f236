"""Deformed CR structures V(phi), their Levi forms, P_N certificates and continuation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from core.embedding import PhiJet
from core.models import TangentVector, cr_frame, frame_bracket, make_weighted_sphere, points_to_arrays
from core.roots import bisect, safe_newton
from utils.config import logger
from utils.errors import InvalidInputError, SolverError

CERTIFICATE_TOL = 1e-10
CONTINUATION_TOL = 1e-12
_FD_STEP = 1e-6


@dataclass(frozen=True)
class ZeroField:
    def value_at(self, point):
        return 0.0

    def jet(self, point):
        zero = np.zeros((2, 2), dtype=complex)
        return PhiJet(point=point, value=0.0, gradient=np.zeros(2, dtype=complex),
                      holomorphic_hessian=zero, mixed_hessian=zero.copy())


@dataclass(frozen=True)
class ExampleField:
    """phi = -log sqrt(1 + eps |z|^2), with its closed-form Wirtinger jet."""
    eps: float

    def values(self, z):
        return -0.5 * np.log1p(self.eps * np.abs(z) ** 2)

    def value_at(self, point):
        return float(self.values(point.z))

    def jet(self, point):
        eps, z = self.eps, point.z
        denom = 1.0 + eps * abs(z) ** 2
        hol = np.zeros((2, 2), dtype=complex)
        mixed = np.zeros((2, 2), dtype=complex)
        hol[0, 0] = 0.5 * eps ** 2 * z.conjugate() ** 2 / denom ** 2
        mixed[0, 0] = -0.5 * eps / denom ** 2
        gradient = np.array([-0.5 * eps * z.conjugate() / denom, 0j])
        return PhiJet(point=point, value=self.value_at(point), gradient=gradient,
                      holomorphic_hessian=hol, mixed_hessian=mixed)


@dataclass(frozen=True, eq=False)
class DeformedStructure:
    model: object
    field: object

    def jet(self, point):
        return self.field.jet(point)

    def reeb_derivative(self, point):
        return self.jet(point).derivative(self.model.reeb_vector(point))

    def contact_correction(self, point, vector, jet=None):
        """gamma^phi(V): zero on T, i dphi on Z and -i dphi on conj(Z)."""
        jet = jet or self.jet(point)
        z, w = point.z, point.w
        a = self.model.contact_form(point, vector)
        rest = vector - a * self.model.reeb_vector(point)
        b = w * rest.dz - z * rest.dw
        c = w.conjugate() * rest.dzbar - z.conjugate() * rest.dwbar
        z_phi = jet.frame_derivative()
        return 1j * b * z_phi - 1j * c * np.conj(z_phi)

    def deformed_contact_form(self, point, vector):
        return self.model.contact_form(point, vector) + self.contact_correction(point, vector)


def _numeric_frame_bracket(point, step=_FD_STEP):
    """[Z, conj(Z)] with coefficient derivatives taken by central differences."""
    def frame_coefficients(z, w):
        return np.array([np.conj(w), -np.conj(z), 0.0, 0.0], dtype=complex)

    def frame_bar_coefficients(z, w):
        return np.array([0.0, 0.0, w, -z], dtype=complex)

    def wirtinger(func):
        z, w = point.z, point.w
        dx_z = (func(z + step, w) - func(z - step, w)) / (2 * step)
        dy_z = (func(z + 1j * step, w) - func(z - 1j * step, w)) / (2 * step)
        dx_w = (func(z, w + step) - func(z, w - step)) / (2 * step)
        dy_w = (func(z, w + 1j * step) - func(z, w - 1j * step)) / (2 * step)
        # columns: d/dz, d/dw, d/dzbar, d/dwbar
        return np.column_stack([0.5 * (dx_z - 1j * dy_z), 0.5 * (dx_w - 1j * dy_w),
                                0.5 * (dx_z + 1j * dy_z), 0.5 * (dx_w + 1j * dy_w)])

    frame = frame_coefficients(point.z, point.w)
    frame_bar = frame_bar_coefficients(point.z, point.w)
    components = wirtinger(frame_bar_coefficients) @ frame - wirtinger(frame_coefficients) @ frame_bar
    return TangentVector(point, *components)


def levi_deformed(structure, point, bracket="exact"):
    """(1/2i) dalpha(Z, Zbar) - (1/2i) gamma([Z, Zbar]) - Re Z(Zbar phi)."""
    model = structure.model
    jet = structure.jet(point)
    if jet.mixed_hessian is None:
        raise InvalidInputError("Levi form needs second derivatives of phi")
    frame = cr_frame(model, point)
    undeformed = model.contact_differential(point, frame, frame.conjugate()) / 2j
    if bracket == "numeric":
        commutator = _numeric_frame_bracket(point)
    else:
        commutator = frame_bracket(model, point)
    correction = structure.contact_correction(point, commutator, jet=jet) / 2j
    return float((undeformed - correction - jet.frame_mixed().real).real)


@dataclass(frozen=True)
class Component:
    """A raw CR component coefficient * z^a w^b with Reeb weight."""
    coefficient: complex
    a: int
    b: int
    weight: float

    @classmethod
    def from_mode(cls, mode, coefficient=1.0, weight=None):
        return cls(coefficient=coefficient / math.sqrt(mode.norm_sq), a=mode.a, b=mode.b,
                   weight=mode.eigenvalue if weight is None else weight)

    def moduli(self, z, w):
        return abs(self.coefficient) ** 2 * np.abs(z) ** (2 * self.a) * np.abs(w) ** (2 * self.b)

    def values(self, z, w):
        return self.coefficient * z ** self.a * w ** self.b


def _field_values(phi, samples):
    if hasattr(phi, "value_at"):
        return np.array([phi.value_at(pt) for pt in samples], dtype=float)
    values = np.asarray(phi, dtype=float)
    if values.shape != (len(samples),):
        raise InvalidInputError("phi values must align with the samples",
                                {"values": list(values.shape), "samples": len(samples)})
    return values


def _moduli_matrix(components, samples):
    z, w = points_to_arrays(samples)
    return np.array([c.moduli(z, w) for c in components])


@dataclass(frozen=True, eq=False)
class CertificateProblem:
    components: tuple
    phi: object
    samples: tuple

    def residuals(self):
        moduli = _moduli_matrix(self.components, self.samples)
        weights = np.array([c.weight for c in self.components])[:, None]
        phi = _field_values(self.phi, self.samples)[None, :]
        return np.sum(moduli * np.exp(2.0 * weights * phi), axis=0) - 1.0


@dataclass(frozen=True)
class CertificateReport:
    max_residual: float
    mean_residual: float
    passed: bool
    residuals: tuple

    def to_dict(self):
        return {"max_residual": self.max_residual, "mean_residual": self.mean_residual,
                "passed": self.passed, "samples": len(self.residuals)}


def certificate_PN(problem, tol=CERTIFICATE_TOL):
    residuals = np.abs(problem.residuals())
    report = CertificateReport(
        max_residual=float(np.max(residuals)),
        mean_residual=float(np.mean(residuals)),
        passed=bool(np.max(residuals) <= tol),
        residuals=tuple(float(r) for r in residuals),
    )
    logger.debug(f"[Certificate] max={report.max_residual:.3e} passed={report.passed}")
    return report


@dataclass(frozen=True, eq=False)
class ContinuationProblem:
    components: tuple
    samples: tuple

    @property
    def weights(self):
        return np.array([c.weight for c in self.components], dtype=float)

    def moduli(self):
        return _moduli_matrix(self.components, self.samples)

    def level(self, r, phi):
        """G(r, phi) at every sample."""
        r = np.asarray(r, dtype=float)[:, None]
        phi = np.broadcast_to(np.asarray(phi, dtype=float), (len(self.samples),))[None, :]
        return np.sum(r ** 2 * self.moduli() * np.exp(2.0 * self.weights[:, None] * phi), axis=0)


def _solve_level(masses, weights, method="newton"):
    """Root of sum_j m_j e^{2 beta_j phi} = 1 for one sample."""
    keep = masses > 0.0
    masses, weights = masses[keep], weights[keep]
    total = float(np.sum(masses))
    if np.allclose(weights, weights[0], rtol=0.0, atol=0.0):
        return -math.log(total) / (2.0 * weights[0])

    def func(phi):
        return float(np.sum(masses * np.exp(2.0 * weights * phi))) - 1.0

    def dfunc(phi):
        return float(np.sum(2.0 * weights * masses * np.exp(2.0 * weights * phi)))

    # the sum lies between total * e^{2 beta_min phi} and total * e^{2 beta_max phi}
    ends = sorted((-math.log(total) / (2.0 * weights.min()), -math.log(total) / (2.0 * weights.max())))
    pad = 1e-12 * (1.0 + abs(ends[0]) + abs(ends[1]))
    lo, hi = ends[0] - pad, ends[1] + pad
    if method == "bisect":
        return bisect(func, lo, hi, tol=1e-15)
    root = safe_newton(func, dfunc, lo, hi)
    if abs(func(root)) > CONTINUATION_TOL:
        raise SolverError("continuation residual above tolerance", {"root": root, "residual": func(root)})
    return root


def continuation_solve(problem, r, method="newton"):
    r = np.asarray(r, dtype=float)
    if r.shape != (len(problem.components),):
        raise InvalidInputError("r must have one entry per component", {"r": r.tolist()})
    masses = r[:, None] ** 2 * problem.moduli()
    weights = problem.weights
    values = np.empty(len(problem.samples))
    for idx in range(len(problem.samples)):
        if not np.any(masses[:, idx] > 0.0):
            point = problem.samples[idx]
            raise SolverError("all components vanish at a sample",
                              {"sample_index": idx, "z": [point.z.real, point.z.imag],
                               "w": [point.w.real, point.w.imag]})
        values[idx] = _solve_level(masses[:, idx], weights, method)
    return values


def continuation_derivative(problem, r0, phi0, v, tol=CERTIFICATE_TOL):
    """A(v) = -(sum 2 beta_j r0_j^2 |f_j|^2 e^{2 beta_j phi0})^{-1} sum 2 r0_j v_j |f_j|^2 e^{2 beta_j phi0}."""
    r0 = np.asarray(r0, dtype=float)
    v = np.asarray(v, dtype=float)
    phi0 = np.broadcast_to(np.asarray(phi0, dtype=float), (len(problem.samples),))
    defect = np.max(np.abs(problem.level(r0, phi0) - 1.0))
    if defect > tol:
        raise InvalidInputError("base point does not solve G(r0, phi0) = 1", {"defect": float(defect)})
    growth = problem.moduli() * np.exp(2.0 * problem.weights[:, None] * phi0[None, :])
    denominator = np.sum(2.0 * problem.weights[:, None] * r0[:, None] ** 2 * growth, axis=0)
    if np.any(denominator <= 0.0):
        raise SolverError("zero denominator in continuation derivative",
                          {"sample_index": int(np.argmin(denominator))})
    return -np.sum(2.0 * r0[:, None] * v[:, None] * growth, axis=0) / denominator


def nonconstant_direction(problem, r0, phi0):
    """Index j whose unit direction gives the least constant A(e_j), with its spread."""
    spreads = []
    for j in range(len(problem.components)):
        direction = np.zeros(len(problem.components))
        direction[j] = 1.0
        field = continuation_derivative(problem, r0, phi0, direction)
        spreads.append(float(np.max(field) - np.min(field)))
    best = int(np.argmax(spreads))
    return best, spreads[best]


def deformation_path(problem, r0, phi0, index, t_values):
    """Spread (max - min) of g(r0 + t e_index) - phi0 along t; zero means constant."""
    r0 = np.asarray(r0, dtype=float)
    records = []
    for t in t_values:
        r = r0.copy()
        r[index] += t
        delta = continuation_solve(problem, r) - phi0
        records.append({"t": float(t), "spread": float(np.max(delta) - np.min(delta))})
    return records


@dataclass(frozen=True, eq=False)
class ExampleFamily:
    eps: float
    field: ExampleField
    components: tuple
    model: object

    def map(self, point):
        scale = math.exp(self.field.value_at(point))
        return np.array([c.values(point.z, point.w) * scale for c in self.components])

    def structure(self):
        return DeformedStructure(model=self.model, field=self.field)


def example_family(eps, resolution=8):
    if not eps > -1.0:
        raise InvalidInputError("eps must be greater than -1", {"eps": eps})
    components = (Component(math.sqrt(1.0 + eps), 1, 0, 1.0), Component(1.0, 0, 1, 1.0))
    return ExampleFamily(eps=float(eps), field=ExampleField(float(eps)), components=components,
                         model=make_weighted_sphere(1.0, 1.0, resolution))


def example_levi(eps, point):
    """Closed-form Levi value of the example deformation at the canonical frame."""
    u = abs(point.z) ** 2
    denom = 1.0 + eps * u
    return 0.5 + 0.5 * eps * abs(point.w) ** 2 / denom ** 2 - 0.5 * eps * u / denom
