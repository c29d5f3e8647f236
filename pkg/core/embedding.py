"""Embedding families F_k = (e^{-k} G, H_k) and the graph functions phi_k.

Every component is a normalized eigenmode f_j extended to the cylinder by
f_j(x) e^{lambda_j s}, so |F_k(x, s)|^2 = sum_j c_j |f_j(x)|^2 e^{2 lambda_j s}
with c_j the squared amplitude of the component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from core.cutoff import in_support
from core.diagnostics import default_pair_samples, geodesic, map_diagnostics, tangent_frame
from core.models import TangentVector, WeightVector, cr_frame, points_to_arrays, reeb_flow, sample_points
from core.roots import bisect, expand_bracket, safe_newton
from core.spectral import mode_jet, mode_values
from utils.config import BRACKET_CONSTANT, DEFAULT_SEED, UNDERFLOW_FLOOR, logger
from utils.errors import (
    BracketError,
    DerivativeError,
    DiagnosticsError,
    InvalidInputError,
    SolverError,
    TruncationError,
)

IMMERSION_TOL = 1e-3
SEPARATION_TOL = 1e-3
MAX_WINDOW = 12
SOLVE_TOL = 1e-12
COLLAR_STEPS = 20
_JET_CHUNK = 64


def _pairwise_sum(terms):
    return np.sum(np.ascontiguousarray(np.asarray(terms).T), axis=-1)


@dataclass(frozen=True)
class ReferenceEmbedding:
    modes: tuple
    m0: int
    collar_width: float
    diagnostics: object = field(repr=False)

    @property
    def max_eigenvalue(self):
        return max(m.eigenvalue for m in self.modes)

    def to_dict(self):
        return {
            "m0": self.m0,
            "window": [[m.a, m.b] for m in self.modes],
            "eigenvalues": [m.eigenvalue for m in self.modes],
            "collar_width": self.collar_width,
            "diagnostics": self.diagnostics.to_dict(),
        }


def _window_map(modes):
    def mapping(point):
        return mode_values(modes, [point.z], [point.w])[:, 0]
    return mapping


def _window_gradient(modes, s=0.0, with_s=False):
    """Real differential of x -> (e^{lambda s} f_j(x)) along tangent_frame, optionally with d/ds."""
    lam = np.array([m.eigenvalue for m in modes])
    growth = np.exp(lam * s)

    def gradient(point):
        jet = mode_jet(modes, [point.z], [point.w], order=1)
        columns = []
        for velocity in tangent_frame(point):
            column = growth * (jet["fz"][:, 0] * velocity[0] + jet["fw"][:, 0] * velocity[1])
            columns.append(column)
        if with_s:
            columns.append(lam * growth * jet["f"][:, 0])
        stacked = np.column_stack(columns)
        return np.vstack([stacked.real, stacked.imag])

    return gradient


def _min_singular(gradient, samples):
    return min(float(np.linalg.svd(gradient(pt), compute_uv=False)[-1]) for pt in samples)


def _collar_width(modes, samples):
    """Largest c = 2^-i with min singular value on |s| <= c at least half its s=0 value."""
    base = _min_singular(_window_gradient(modes, 0.0, with_s=True), samples)
    width = 1.0
    for _ in range(COLLAR_STEPS):
        ok = True
        for s in (-width, -0.5 * width, 0.5 * width, width):
            if _min_singular(_window_gradient(modes, s, with_s=True), samples) < 0.5 * base:
                ok = False
                break
        if ok:
            return width
        width *= 0.5
    raise DiagnosticsError("no collar width found", {"window": [[m.a, m.b] for m in modes]})


def build_reference_embedding(model, spectrum, m0=1, samples=None, seed=DEFAULT_SEED):
    """Smallest window of consecutive modes from index m0 that embeds the sphere on samples."""
    if m0 < 1 or m0 > len(spectrum):
        raise InvalidInputError("m0 must index into the enumerated spectrum",
                                {"m0": m0, "modes": len(spectrum)})
    if samples is None:
        samples = sample_points(model, "hopf-grid", 200)
    pairs = default_pair_samples(samples, flow=lambda pt: reeb_flow(model, pt, math.pi), seed=seed)
    best = None
    for size in range(1, MAX_WINDOW + 1):
        stop = m0 - 1 + size
        if stop > len(spectrum):
            break
        modes = spectrum.modes[m0 - 1:stop]
        diagnostics = map_diagnostics(_window_map(modes), samples, pairs,
                                      gradient=_window_gradient(modes), seed=seed)
        if best is None or diagnostics.min_separation_ratio > best[1].min_separation_ratio:
            best = (modes, diagnostics)
        if diagnostics.passes(IMMERSION_TOL, SEPARATION_TOL):
            width = _collar_width(modes, samples)
            logger.info(f"[Embed] reference window m0={m0} size={size} collar={width:g}")
            return ReferenceEmbedding(modes=modes, m0=m0, collar_width=width, diagnostics=diagnostics)
    details = {"m0": m0}
    if best is not None:
        details["best_window"] = [[m.a, m.b] for m in best[0]]
        details["best_diagnostics"] = best[1].to_dict()
    raise DiagnosticsError("no mode window passed the embedding diagnostics", details)


@dataclass(frozen=True)
class FamilyComponent:
    mode: object
    log_amplitude: float
    block: str
    dropped: bool = False

    @property
    def eigenvalue(self):
        return self.mode.eigenvalue


@dataclass(frozen=True, eq=False)
class EmbeddingFamily:
    k: float
    components: tuple
    collar_width: float
    m0: int
    g_block_dropped: bool = False
    n: int = 1

    @property
    def g_block(self):
        return tuple(c for c in self.components if c.block == "G")

    @property
    def h_block(self):
        return tuple(c for c in self.components if c.block == "H")

    @cached_property
    def modes(self):
        return tuple(c.mode for c in self.components)

    @cached_property
    def eigenvalues(self):
        return np.array([c.eigenvalue for c in self.components], dtype=float)

    @cached_property
    def log_weights(self):
        """log c_j; dropped components carry -inf."""
        return np.array([-math.inf if c.dropped else 2.0 * c.log_amplitude for c in self.components])

    @cached_property
    def log_amplitudes(self):
        return 0.5 * self.log_weights

    @property
    def beta(self):
        return WeightVector(tuple(self.eigenvalues))

    def moduli(self, points):
        z, w = points_to_arrays(points)
        return np.abs(mode_values(self.modes, z, w)) ** 2

    def norm_profile(self, moduli, s, ell=0):
        """d^ell/ds^ell |F_k|^2 for columns of moduli at per-column s."""
        s = np.broadcast_to(np.asarray(s, dtype=float), (moduli.shape[1],))
        lam = self.eigenvalues[:, None]
        terms = np.exp(self.log_weights[:, None] + 2.0 * lam * s[None, :]) * moduli
        if ell:
            terms = terms * (2.0 * lam) ** ell
        return _pairwise_sum(terms)

    def h_profile(self, moduli, s=0.0):
        mask = np.array([c.block == "H" for c in self.components])
        s = np.broadcast_to(np.asarray(s, dtype=float), (moduli.shape[1],))
        lam = self.eigenvalues[mask][:, None]
        terms = np.exp(self.log_weights[mask][:, None] + 2.0 * lam * s[None, :]) * moduli[mask]
        return _pairwise_sum(terms)

    def to_dict(self):
        return {
            "k": self.k,
            "components": len(self.components),
            "g_block": len(self.g_block),
            "h_block": len(self.h_block),
            "collar_width": self.collar_width,
            "m0": self.m0,
            "g_block_dropped": self.g_block_dropped,
        }


def build_Fk(model, spec, k, reference, spectrum, check_separation=True):
    if check_separation and k < reference.max_eigenvalue / spec.delta1:
        raise InvalidInputError(
            "k must be at least the largest reference eigenvalue divided by delta1",
            {"k": k, "minimum": reference.max_eigenvalue / spec.delta1},
        )
    if spectrum.cap < spec.delta2 * k * (1 - 1e-12):
        raise TruncationError("spectrum cap is below delta2 * k", {"k": k, "cap": spectrum.cap})
    log_floor = math.log(UNDERFLOW_FLOOR)
    components = []
    dropped_any = False
    for mode in reference.modes:
        # largest possible |f|^2 is bounded by 1/normSq
        log_peak = -2.0 * k + 2.0 * mode.eigenvalue * reference.collar_width - math.log(mode.norm_sq)
        dropped = log_peak < log_floor
        dropped_any = dropped_any or dropped
        components.append(FamilyComponent(mode=mode, log_amplitude=-float(k), block="G", dropped=dropped))
    mask = in_support(spec, spectrum.eigenvalues, k)
    h_modes = spectrum.select(mask)
    if h_modes:
        lam = spectrum.eigenvalues[mask]
        log_scale = math.log(spec.c_chi) - 0.5 * (model.n + 1) * math.log(k)
        log_chi = spec.log_chi(lam / k)
        for mode, lc in zip(h_modes, log_chi):
            components.append(FamilyComponent(mode=mode, log_amplitude=log_scale + float(lc), block="H"))
    if dropped_any:
        logger.debug(f"[Embed] k={k:g} G block below {UNDERFLOW_FLOOR:g}, dropped")
    family = EmbeddingFamily(
        k=float(k),
        components=tuple(components),
        collar_width=reference.collar_width,
        m0=reference.m0,
        g_block_dropped=dropped_any,
        n=model.n,
    )
    logger.info(f"[Embed] k={k:g} components={len(components)} H={len(h_modes)}")
    return family


def norm_sq(family, point, s, ell=0):
    return float(family.norm_profile(family.moduli([point]), s, ell)[0])


def _scalar_functions(family, column):
    weights = np.exp(family.log_weights) * column
    keep = weights > 0.0
    weights, lam = weights[keep], family.eigenvalues[keep]

    def func(s):
        return float(np.sum(weights * np.exp(2.0 * lam * s))) - 1.0

    def dfunc(s):
        return float(np.sum(2.0 * lam * weights * np.exp(2.0 * lam * s)))

    return func, dfunc


def _solve_column(family, column, half_width=None, tol=SOLVE_TOL, method="newton"):
    func, dfunc = _scalar_functions(family, column)
    if half_width is None:
        half_width = BRACKET_CONSTANT / family.k
    half_width = min(half_width, family.collar_width)
    lo, hi, _, _ = expand_bracket(func, -half_width, half_width, family.collar_width)
    if method == "bisect":
        root = bisect(func, lo, hi, tol=1e-14)
    else:
        root = safe_newton(func, dfunc, lo, hi)
    residual = abs(func(root))
    if method != "bisect" and residual > tol:
        raise SolverError("sphere condition residual above tolerance",
                          {"k": family.k, "root": root, "residual": residual})
    return root, residual


def solve_phi(family, point, half_width=None, method="newton"):
    column = family.moduli([point])[:, 0]
    return _solve_column(family, column, half_width, method=method)[0]


@dataclass(frozen=True)
class PhiJet:
    """Ambient Wirtinger jet of the implicit extension psi with N(x, psi(x)) = 1.

    gradient is (psi_z, psi_w); holomorphic_hessian[i, j] = psi_{ij};
    mixed_hessian[i, j] = psi_{i jbar}.
    """
    point: object
    value: float
    gradient: np.ndarray
    holomorphic_hessian: Optional[np.ndarray] = None
    mixed_hessian: Optional[np.ndarray] = None

    def wirtinger_gradient(self):
        gz, gw = self.gradient
        return np.array([gz, gw, np.conj(gz), np.conj(gw)], dtype=complex)

    def hessian(self):
        if self.holomorphic_hessian is None:
            raise InvalidInputError("second derivatives were not computed")
        hol, mixed = self.holomorphic_hessian, self.mixed_hessian
        return np.block([[hol, mixed], [mixed.T, np.conj(hol)]])

    def derivative(self, vector):
        return vector.apply(self.wirtinger_gradient())

    def second_derivative(self, first, second):
        """Ambient second derivative applied to two tangent vectors."""
        return complex(first.components() @ self.hessian() @ second.components())

    def geodesic_second_derivative(self, velocity):
        """d^2/dt^2 of psi along the great circle with unit velocity (holomorphic form)."""
        point = self.point
        vector = TangentVector.real(point, velocity[0], velocity[1])
        acceleration = -np.array([point.z, point.w, point.z.conjugate(), point.w.conjugate()])
        return (self.second_derivative(vector, vector)
                + np.dot(acceleration, self.wirtinger_gradient())).real

    def frame_derivative(self):
        return self.derivative(cr_frame(None, self.point))

    def frame_mixed(self):
        """Z(conj(Z) psi) with the exact frame coefficient derivatives."""
        if self.mixed_hessian is None:
            raise InvalidInputError("second derivatives were not computed")
        z, w = self.point.z, self.point.w
        gz, gw = self.gradient
        m = self.mixed_hessian
        return (abs(w) ** 2 * m[0, 0] - z.conjugate() * w * m[1, 0] - z * w.conjugate() * m[0, 1]
                + abs(z) ** 2 * m[1, 1] - z.conjugate() * np.conj(gz) - w.conjugate() * np.conj(gw))


def _jets(family, points, values, order=2):
    """PhiJets at many points, chunked over points."""
    lam = family.eigenvalues[:, None]
    log_w = family.log_weights[:, None]
    jets = []
    for start in range(0, len(points), _JET_CHUNK):
        chunk = points[start:start + _JET_CHUNK]
        phi = np.asarray(values[start:start + _JET_CHUNK], dtype=float)
        z, w = points_to_arrays(chunk)
        jet = mode_jet(family.modes, z, w, order=order)
        c = np.exp(log_w + 2.0 * lam * phi[None, :])
        f_bar = np.conj(jet["f"])
        mod = np.abs(jet["f"]) ** 2
        n_s = _pairwise_sum(2.0 * lam * c * mod)
        n_ss = _pairwise_sum(4.0 * lam ** 2 * c * mod)
        n_i = [_pairwise_sum(c * jet[key] * f_bar) for key in ("fz", "fw")]
        n_is = [_pairwise_sum(2.0 * lam * c * jet[key] * f_bar) for key in ("fz", "fw")]
        if np.any(~(n_s > 0.0)):
            bad = int(np.argmin(n_s))
            raise DerivativeError("degenerate s-derivative at the root",
                                  {"k": family.k, "point_index": start + bad, "n_s": float(n_s[bad])})
        psi = [-n / n_s for n in n_i]
        hol = mixed = None
        if order >= 2:
            n_ij = {(0, 0): _pairwise_sum(c * jet["fzz"] * f_bar),
                    (0, 1): _pairwise_sum(c * jet["fzw"] * f_bar),
                    (1, 1): _pairwise_sum(c * jet["fww"] * f_bar)}
            n_ij[(1, 0)] = n_ij[(0, 1)]
            grads = (jet["fz"], jet["fw"])
            n_ijbar = {(i, j): _pairwise_sum(c * grads[i] * np.conj(grads[j]))
                       for i in range(2) for j in range(2)}
            hol = np.empty((len(chunk), 2, 2), dtype=complex)
            mixed = np.empty((len(chunk), 2, 2), dtype=complex)
            for i in range(2):
                for j in range(2):
                    hol[:, i, j] = -(n_ij[(i, j)] + n_is[i] * psi[j] + n_is[j] * psi[i]
                                     + n_ss * psi[i] * psi[j]) / n_s
                    mixed[:, i, j] = -(n_ijbar[(i, j)] + n_is[i] * np.conj(psi[j])
                                       + np.conj(n_is[j]) * psi[i]
                                       + n_ss * psi[i] * np.conj(psi[j])) / n_s
        for idx, point in enumerate(chunk):
            jets.append(PhiJet(
                point=point,
                value=float(phi[idx]),
                gradient=np.array([psi[0][idx], psi[1][idx]]),
                holomorphic_hessian=None if hol is None else hol[idx],
                mixed_hessian=None if mixed is None else mixed[idx],
            ))
    return jets


def implicit_derivatives(family, point, order=2, value=None):
    if order not in (1, 2):
        raise InvalidInputError("derivative order must be 1 or 2", {"order": order})
    if value is None:
        value = solve_phi(family, point)
    return _jets(family, [point], [value], order=order)[0]


@dataclass(frozen=True, eq=False)
class GraphSolution:
    family: EmbeddingFamily
    points: tuple
    values: np.ndarray
    residuals: np.ndarray
    jets: Optional[tuple] = None

    @property
    def k(self):
        return self.family.k

    @property
    def beta(self):
        return self.family.beta

    def sup_abs(self):
        return float(np.max(np.abs(self.values)))

    def max_residual(self):
        return float(np.max(self.residuals))

    def evaluate(self, point):
        return solve_phi(self.family, point)

    def jet(self, point):
        for idx, sample in enumerate(self.points):
            if sample is point and self.jets is not None:
                return self.jets[idx]
        return implicit_derivatives(self.family, point)

    def value_at(self, point):
        for idx, sample in enumerate(self.points):
            if sample is point:
                return float(self.values[idx])
        return self.evaluate(point)


def solve_graph(family, points, derivatives=2, half_width=None):
    """Solve phi_k at every sample; derivatives in {0, 1, 2}."""
    points = tuple(points)
    moduli = family.moduli(points)
    values = np.empty(len(points))
    residuals = np.empty(len(points))
    for idx in range(len(points)):
        try:
            values[idx], residuals[idx] = _solve_column(family, moduli[:, idx], half_width)
        except BracketError as exc:
            exc.details.update({"k": family.k, "point_index": idx})
            raise
    jets = None
    if derivatives:
        jets = tuple(_jets(family, list(points), values, order=derivatives))
    logger.debug(f"[Solve] k={family.k:g} points={len(points)} sup|phi|={np.max(np.abs(values)):.3e} "
                 f"max residual={np.max(residuals):.3e}")
    return GraphSolution(family=family, points=points, values=values, residuals=residuals, jets=jets)


def sphere_map(family, solution, point):
    """Return (G_hat_k(x), beta(k)) with G_hat_k(x) = F_k(x, phi_k(x))."""
    phi = solution.value_at(point)
    values = mode_values(family.modes, [point.z], [point.w])[:, 0]
    amplitudes = np.exp(family.log_amplitudes + family.eigenvalues * phi)
    return amplitudes * values, family.beta


def cr_defect(family, solution, point, step=1e-5):
    """max_j |(conj(Z) + i conj(Z)(phi) T) G_hat_j| by central differences along the frame."""
    horizontal = tangent_frame(point)[0]

    def mapped(pt):
        return sphere_map(family, solution, pt)[0]

    derivatives = []
    for velocity in (horizontal, 1j * horizontal):
        forward = mapped(geodesic(point, velocity, step))
        backward = mapped(geodesic(point, velocity, -step))
        derivatives.append((forward - backward) / (2.0 * step))
    zbar_g = 0.5 * (derivatives[0] + 1j * derivatives[1])
    jet = solution.jet(point)
    zbar_phi = np.conj(jet.frame_derivative())
    g_hat = mapped(point)
    reeb_g = 1j * family.eigenvalues * g_hat
    return float(np.max(np.abs(zbar_g + 1j * zbar_phi * reeb_g)))
