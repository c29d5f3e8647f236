"""Rate fitting and finite-sample embedding diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from core.models import ModelPoint, geodesic_distance
from utils.config import DEFAULT_SEED, logger
from utils.errors import InvalidInputError

FD_STEP = 1e-6


@dataclass(frozen=True)
class RateFit:
    ks: tuple
    values: tuple
    slope: float
    intercept: float
    r_squared: float

    def constant(self):
        """Smallest C with value <= C * k^slope on every fitted pair."""
        return max(v / k ** self.slope for k, v in zip(self.ks, self.values))

    def to_dict(self):
        return {
            "ks": list(self.ks),
            "values": list(self.values),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
        }


def fit_rate(pairs):
    """Least-squares line through (ln k, ln value)."""
    pairs = [(float(k), float(v)) for k, v in pairs]
    if len(pairs) < 3:
        raise InvalidInputError("rate fit needs at least 3 pairs", {"count": len(pairs)})
    if any(k <= 0 or v <= 0 or not math.isfinite(v) for k, v in pairs):
        raise InvalidInputError("rate fit needs positive finite pairs", {"pairs": pairs})
    x = np.log([k for k, _ in pairs])
    y = np.log([v for _, v in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual ** 2)) / total if total > 0 else 1.0
    return RateFit(
        ks=tuple(k for k, _ in pairs),
        values=tuple(v for _, v in pairs),
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
    )


@dataclass(frozen=True)
class MapDiagnostics:
    min_singular_value: float
    min_singular_point: ModelPoint
    min_separation_ratio: float
    separation_pair: tuple
    sample_count: int
    pair_count: int
    seed: int
    singular_values: tuple = field(default=(), repr=False)

    def passes(self, immersion_tol, separation_tol):
        return self.min_singular_value >= immersion_tol and self.min_separation_ratio >= separation_tol

    def to_dict(self):
        a, b = self.separation_pair
        return {
            "min_singular_value": self.min_singular_value,
            "min_singular_point": _point_record(self.min_singular_point),
            "min_separation_ratio": self.min_separation_ratio,
            "separation_pair": [_point_record(a), _point_record(b)],
            "sample_count": self.sample_count,
            "pair_count": self.pair_count,
            "seed": self.seed,
        }


def _point_record(point):
    if point is None:
        return None
    return {"z": [point.z.real, point.z.imag], "w": [point.w.real, point.w.imag]}


def tangent_frame(point):
    """Orthonormal real frame of the sphere as holomorphic velocities."""
    z, w = point.z, point.w
    horizontal = np.array([w.conjugate(), -z.conjugate()])
    return [horizontal, 1j * horizontal, np.array([1j * z, 1j * w])]


def geodesic(point, velocity, t):
    """Great circle through point with unit initial velocity."""
    base = point.as_array()
    return ModelPoint.from_vector(math.cos(t) * base + math.sin(t) * velocity, normalize=True)


def _real_view(vector):
    vector = np.asarray(vector, dtype=complex)
    return np.concatenate([vector.real, vector.imag])


def finite_difference_differential(mapping, point, step=FD_STEP):
    """Real differential of mapping at point along the orthonormal tangent frame."""
    columns = []
    for velocity in tangent_frame(point):
        forward = np.asarray(mapping(geodesic(point, velocity, step)))
        backward = np.asarray(mapping(geodesic(point, velocity, -step)))
        columns.append(_real_view((forward - backward) / (2.0 * step)))
    return np.column_stack(columns)


def default_pair_samples(samples, flow=None, seed=DEFAULT_SEED, random_pairs=None):
    """Antipodal pairs, optional flow-shifted pairs, plus seeded random pairs."""
    pairs = [(pt, pt.antipode()) for pt in samples]
    if flow is not None:
        pairs.extend((pt, flow(pt)) for pt in samples)
    rng = np.random.default_rng(seed)
    count = len(samples) if random_pairs is None else random_pairs
    if len(samples) > 1:
        for _ in range(count):
            i, j = rng.choice(len(samples), size=2, replace=False)
            pairs.append((samples[i], samples[j]))
    return pairs


def map_diagnostics(mapping, samples, pair_samples=None, gradient=None, step=FD_STEP, seed=DEFAULT_SEED):
    """Immersion and injectivity proxies for a map from the sphere into C^N.

    gradient, when given, maps a point to the real differential (2N x 3)
    along tangent_frame(point).
    """
    if pair_samples is None:
        pair_samples = default_pair_samples(samples, seed=seed)
    min_sv, min_point, all_sv = math.inf, None, []
    for point in samples:
        if gradient is not None:
            jac = np.asarray(gradient(point), dtype=float)
        else:
            jac = finite_difference_differential(mapping, point, step)
        values = np.linalg.svd(jac, compute_uv=False)
        # fewer singular values than tangent directions means rank deficiency
        smallest = float(values[-1]) if values.size >= jac.shape[1] else 0.0
        all_sv.append(smallest)
        if smallest < min_sv:
            min_sv, min_point = smallest, point

    min_ratio, min_pair = math.inf, (None, None)
    for first, second in pair_samples:
        distance = geodesic_distance(first, second)
        if distance <= 1e-12:
            continue
        image = np.linalg.norm(np.asarray(mapping(first)) - np.asarray(mapping(second)))
        ratio = float(image / distance)
        if ratio < min_ratio:
            min_ratio, min_pair = ratio, (first, second)
    logger.debug(f"[Diagnostics] min_sv={min_sv:.3e} min_ratio={min_ratio:.3e} "
                 f"samples={len(samples)} pairs={len(pair_samples)}")
    return MapDiagnostics(
        min_singular_value=min_sv,
        min_singular_point=min_point,
        min_separation_ratio=min_ratio,
        separation_pair=min_pair,
        sample_count=len(samples),
        pair_count=len(pair_samples),
        seed=seed,
        singular_values=tuple(all_sv),
    )
