"""Input validation helpers.

Each helper returns an error message, or None when the value is acceptable.
"""
import math

from utils.config import BUMP_SHAPES, SAMPLE_SCHEMES


def _is_real(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _validate_positive(value, label):
    if not _is_real(value):
        return f"{label} must be a finite number"
    if value <= 0:
        return f"{label} must be positive"
    return None


def _validate_weights(entries, label="weights"):
    if not isinstance(entries, (list, tuple)) or not entries:
        return f"{label} must be a non-empty list"
    for idx, value in enumerate(entries):
        error = _validate_positive(value, f"{label}[{idx}]")
        if error:
            return error
    return None


def _validate_resolution(value, minimum=4):
    if not isinstance(value, int) or isinstance(value, bool):
        return "resolution must be an integer"
    if value < minimum:
        return f"resolution must be at least {minimum}"
    return None


def _validate_interval(delta1, delta2):
    if not _is_real(delta1) or not _is_real(delta2):
        return "cutoff interval bounds must be finite numbers"
    if not 0 < delta1 < delta2 < 1:
        return "cutoff interval must satisfy 0 < delta1 < delta2 < 1"
    return None


def _validate_shape(value):
    if value not in BUMP_SHAPES:
        return f"unknown cutoff shape: {value}"
    return None


def _validate_k_grid(values, min_length=1):
    if not isinstance(values, (list, tuple)) or len(values) < min_length:
        return f"k_grid must be a list with at least {min_length} entries"
    for idx, value in enumerate(values):
        error = _validate_positive(value, f"k_grid[{idx}]")
        if error:
            return error
    if any(b <= a for a, b in zip(values, values[1:])):
        return "k_grid must be strictly increasing"
    return None


def _validate_scheme(value):
    if value not in SAMPLE_SCHEMES:
        return f"unknown sample scheme: {value}"
    return None


def _validate_count(value, label="count", minimum=1):
    if not isinstance(value, int) or isinstance(value, bool):
        return f"{label} must be an integer"
    if value < minimum:
        return f"{label} must be at least {minimum}"
    return None


def _validate_seed(value):
    if not isinstance(value, int) or isinstance(value, bool):
        return "seed must be an integer"
    if value < 0 or value >= 2 ** 64:
        return "seed must fit in an unsigned 64-bit integer"
    return None


def _validate_tolerances(values):
    if not isinstance(values, dict):
        return "tolerances must be an object"
    for key, value in values.items():
        error = _validate_positive(value, f"tolerances.{key}")
        if error:
            return error
    return None


def _validate_exponents(pairs, label="exponents"):
    if not isinstance(pairs, (list, tuple)) or not pairs:
        return f"{label} must be a non-empty list"
    for idx, pair in enumerate(pairs):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            return f"{label}[{idx}] must be a pair of integers"
        if any(not isinstance(e, int) or isinstance(e, bool) or e < 0 for e in pair):
            return f"{label}[{idx}] must hold nonnegative integers"
        if tuple(pair) == (0, 0):
            return f"{label}[{idx}] must not be the constant monomial"
    return None


def _validate_basis(basis, label="basis"):
    if not isinstance(basis, dict):
        return f"{label} must be an object"
    exponents = basis.get("exponents")
    error = _validate_exponents(exponents, f"{label}.exponents")
    if error:
        return error
    weights = basis.get("weights")
    error = _validate_weights(weights, f"{label}.weights")
    if error:
        return error
    if len(weights) != len(exponents):
        return f"{label}.weights must match {label}.exponents in length"
    radii = basis.get("r")
    if radii is not None:
        error = _validate_weights(radii, f"{label}.r")
        if error:
            return error
        if len(radii) != len(exponents):
            return f"{label}.r must match {label}.exponents in length"
    return None
