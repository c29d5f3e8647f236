"""Run configuration, subcommand pipelines and result persistence."""
import csv
import json
import math
import pathlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from core.calculus import DiagonalSum, cutoff_symbol, shell_sum_oracle, verify_leading_coefficient
from core.cutoff import make_bump
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
from core.diagnostics import fit_rate, map_diagnostics, tangent_frame
from core.embedding import (
    build_Fk,
    build_reference_embedding,
    cr_defect,
    solve_graph,
    solve_phi,
)
from core.models import TangentVector, make_weighted_sphere, points_to_arrays, reeb_flow, sample_points
from core.spectral import enumerate_modes, gram_matrix, lattice_count, mode_values, shell_count
from utils.config import (
    BRACKET_CONSTANT,
    SUPPORTED_SUBCOMMANDS,
    _default_run_config,
    _get_environment_info,
    _read_json_file,
    logger,
)
from utils.errors import (
    BracketError,
    ConfigError,
    DerivativeError,
    InvalidInputError,
    SolverError,
)
from utils.validation import (
    _is_real,
    _validate_basis,
    _validate_count,
    _validate_interval,
    _validate_k_grid,
    _validate_positive,
    _validate_resolution,
    _validate_scheme,
    _validate_seed,
    _validate_tolerances,
)

EQUIVARIANCE_T = 0.37
S_GRID_POINTS = 9
AGREEMENT_PAIRS = 100
DERIVATIVE_FLOOR = 1e-10
CR_DEFECT_POINTS = 8
DIAGNOSTIC_POINTS = 32
KERNEL_CHECK_K = 64
EXAMPLE_TOL = 1e-13
EXAMPLE_SOLVE_TOL = 1e-12
ZERO_FIELD_TOL = 1e-10
PATH_STEPS = (0.1, 0.2, 0.4)
PERTURBATION = 1e-3

DECAY_WINDOW = (-2.3, -1.7)
DERIVATIVE_DECAY_WINDOW = (-2.5, -1.5)
REMAINDER_WINDOW = (-1.4, -0.6)
COUNTING_WINDOW = (1.9, 2.1)

CRITERION_IDS = {
    "kernel_leading_term": 1,
    "graph_decay": 2,
    "sphere_condition": 3,
    "equivariance": 4,
    "monotonicity": 5,
    "moment_limits": 6,
    "levi_positivity": 7,
    "exact_example": 8,
    "continuation_derivative": 9,
    "counting": 10,
    "solver_agreement": 11,
}

_CONFIG_SECTIONS = ("model", "cutoff", "samples", "tolerances", "continuation")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(defaults, value):
    merged = dict(defaults)
    for key, item in value.items():
        if isinstance(merged.get(key), dict) and isinstance(item, dict):
            merged[key] = _merge(merged[key], item)
        else:
            merged[key] = item
    return merged


def _continuation_errors(section):
    errors = []
    epsilons = section.get("epsilons")
    if not isinstance(epsilons, list) or not epsilons:
        errors.append("continuation.epsilons must be a non-empty list")
    else:
        for idx, eps in enumerate(epsilons):
            if not _is_real(eps) or eps <= -1:
                errors.append(f"continuation.epsilons[{idx}] must be a number greater than -1")
    errors.append(_validate_positive(section.get("fd_epsilon"), "continuation.fd_epsilon"))
    errors.append(_validate_count(section.get("directions"), "continuation.directions"))
    bases = section.get("bases")
    if not isinstance(bases, list):
        errors.append("continuation.bases must be a list")
    else:
        errors.extend(_validate_basis(b, f"continuation.bases[{i}]") for i, b in enumerate(bases))
    return errors


def _collect_config_errors(config):
    for name in _CONFIG_SECTIONS:
        if not isinstance(config.get(name), dict):
            return [f"{name} must be an object"]
    model, cutoff, samples = config["model"], config["cutoff"], config["samples"]
    errors = [
        _validate_positive(model.get("p"), "model.p"),
        _validate_positive(model.get("q"), "model.q"),
        _validate_resolution(model.get("resolution")),
        _validate_interval(cutoff.get("delta1"), cutoff.get("delta2")),
        _validate_count(cutoff.get("moment_order"), "cutoff.moment_order", minimum=5),
        _validate_k_grid(config.get("k_grid")),
        _validate_scheme(samples.get("scheme")),
        _validate_count(samples.get("count"), "samples.count"),
        _validate_count(samples.get("quasi_random_count"), "samples.quasi_random_count", minimum=0),
        _validate_seed(samples.get("seed")),
        _validate_tolerances(config["tolerances"]),
        _validate_count(config.get("jobs"), "jobs"),
    ]
    if not isinstance(config.get("output_dir"), str) or not config["output_dir"].strip():
        errors.append("output_dir must be a non-empty path")
    errors.extend(_continuation_errors(config["continuation"]))
    return [e for e in errors if e]


def _normalize_run_config(value):
    """Fill defaults into a raw config object and validate it; raises ConfigError."""
    if not isinstance(value, dict):
        raise ConfigError("run configuration must be a JSON object", {"type": type(value).__name__})
    defaults = _default_run_config()
    unknown = sorted(set(value) - set(defaults))
    if unknown:
        raise ConfigError("unknown configuration keys", {"keys": unknown})
    config = _merge(defaults, value)
    errors = _collect_config_errors(config)
    if errors:
        raise ConfigError(errors[0], {"errors": errors})
    return config


def _load_run_config(path=None, output_dir=None, seed=None, jobs=None):
    """Read a RunConfig file and apply command-line overrides before validation."""
    raw = {}
    if path is not None:
        raw, error = _read_json_file(path)
        if error:
            raise ConfigError(error, {"path": str(path)})
        if not isinstance(raw, dict):
            raise ConfigError("run configuration must be a JSON object", {"path": str(path)})
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)
    if seed is not None:
        samples = raw.get("samples") if isinstance(raw.get("samples"), dict) else {}
        raw["samples"] = {**samples, "seed": seed}
    if jobs is not None:
        raw["jobs"] = jobs
    return _normalize_run_config(raw)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path, header, rows):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _save_json(path, data):
    """Write JSON atomically through a temporary sibling file."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def _format_duration(seconds):
    seconds = max(0.0, seconds)
    mins, sec = divmod(seconds, 60)
    hrs, mins = divmod(int(mins), 60)
    parts = []
    if hrs:
        parts.append(f"{hrs}h")
    if mins:
        parts.append(f"{mins}m")
    parts.append(f"{sec:.1f}s")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# run context and section results
# ---------------------------------------------------------------------------

def _criterion(passed, value=None, threshold=None, **extra):
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    record = {"status": status, "value": value, "threshold": threshold}
    record.update(extra)
    return record


def _in_window(value, window):
    return window[0] <= value <= window[1]


def _try_fit(pairs):
    pairs = [(k, v) for k, v in pairs if v > 0 and math.isfinite(v)]
    if len(pairs) < 3:
        return None
    return fit_rate(pairs)


@dataclass
class SectionResult:
    summary: dict
    criteria: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, record in self.criteria.items():
            record.setdefault("criterion", CRITERION_IDS[name])


@dataclass(eq=False)
class RunContext:
    config: dict
    cache: dict = field(default_factory=dict)

    @property
    def k_grid(self):
        return list(self.config["k_grid"])

    @property
    def tolerances(self):
        return self.config["tolerances"]

    @property
    def seed(self):
        return self.config["samples"]["seed"]

    @property
    def jobs(self):
        return self.config["jobs"]

    @cached_property
    def model(self):
        model = self.config["model"]
        return make_weighted_sphere(model["p"], model["q"], model["resolution"])

    @cached_property
    def cutoff(self):
        cutoff = self.config["cutoff"]
        return make_bump(cutoff["delta1"], cutoff["delta2"], cutoff["moment_order"])

    @cached_property
    def spectrum(self):
        return enumerate_modes(self.model, max(self.k_grid))

    @cached_property
    def samples(self):
        section = self.config["samples"]
        points = sample_points(self.model, section["scheme"], section["count"], self.seed)
        if section["scheme"] == "hopf-grid" and section["quasi_random_count"]:
            points += sample_points(self.model, "quasi-random", section["quasi_random_count"], self.seed)
        return tuple(points)

    @cached_property
    def reference(self):
        return build_reference_embedding(self.model, self.spectrum, samples=self.samples, seed=self.seed)

    @property
    def is_round(self):
        return self.model.p == self.model.q == 1.0

    def point_set(self):
        section = self.config["samples"]
        return {
            "scheme": section["scheme"],
            "count": section["count"],
            "quasi_random_count": section["quasi_random_count"] if section["scheme"] == "hopf-grid" else 0,
            "seed": self.seed,
            "size": len(self.samples),
        }


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

def _run_spectrum(ctx):
    spectrum = ctx.spectrum
    model = ctx.model
    rows = [(m.index, m.a, m.b, m.eigenvalue, m.norm_sq) for m in spectrum]
    counts = []
    for k in ctx.k_grid:
        entry = {"k": k, "N_k": spectrum.count_below(k), "lattice": lattice_count(model.p, model.q, k)}
        if ctx.is_round:
            entry["shell"] = shell_count(k)
        counts.append(entry)
    lattice_ok = all(c["N_k"] == c["lattice"] for c in counts)
    shell_ok = all(c["N_k"] == c.get("shell", c["N_k"]) for c in counts)

    fit = _try_fit([(c["k"], c["N_k"]) for c in counts])
    fits = {"counting": fit.to_dict()} if fit else {}
    if ctx.is_round:
        slope_ok = None if fit is None else _in_window(fit.slope, COUNTING_WINDOW)
        passed = lattice_ok and shell_ok and slope_ok is not False
    else:
        passed = lattice_ok
    gram_size = min(20, len(spectrum))
    gram_defect = None
    if gram_size:
        gram = gram_matrix(model, spectrum, gram_size)
        gram_defect = float(np.max(np.abs(gram - np.eye(gram_size))))
    logger.info(f"[Spectrum] modes={len(spectrum)} lattice_ok={lattice_ok} shell_ok={shell_ok}")
    summary = {
        "cap": spectrum.cap,
        "modes": len(spectrum),
        "counts": counts,
        "total_mass": model.total_mass,
        "gram_defect": gram_defect,
    }
    criteria = {"counting": _criterion(
        passed,
        value=None if fit is None else fit.slope,
        threshold=list(COUNTING_WINDOW) if ctx.is_round else None,
        lattice_match=lattice_ok,
        shell_match=shell_ok if ctx.is_round else None,
    )}
    return SectionResult(
        summary=summary,
        criteria=criteria,
        tables={"spectrum.csv": (["j", "a", "b", "lambda", "norm_sq"], rows)},
        fits=fits,
    )


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def _scaled_diagonal(ctx, k):
    symbol, support = cutoff_symbol(ctx.cutoff, k)
    return DiagonalSum(ctx.spectrum, symbol, support).evaluate(ctx.samples) * k ** -(ctx.model.n + 1)


def _run_kernel(ctx):
    spec = ctx.cutoff
    ks = ctx.k_grid
    report = None
    if len(ks) >= 4:
        report = verify_leading_coefficient(ctx.model, spec, ks, ctx.samples, spectrum=ctx.spectrum)
        scaled = [np.asarray(v) for v in report.scaled_values]
    else:
        scaled = [_scaled_diagonal(ctx, k) for k in ks]
    rows = [(k, idx, float(value)) for k, values in zip(ks, scaled) for idx, value in enumerate(values)]

    deviations = [float(np.max(np.abs(v - spec.a0))) / spec.a0 for v in scaled]
    check_k = KERNEL_CHECK_K if KERNEL_CHECK_K in ks else ks[-1]
    # weighted models are judged on the remainder slope alone
    leading_ok = deviations[ks.index(check_k)] <= 0.1 if ctx.is_round else None
    remainder = report.remainder_fit if report else None
    slope_ok = None if remainder is None else _in_window(remainder.slope, REMAINDER_WINDOW)

    oracle_error = spread = None
    if ctx.is_round:
        oracle_error = max(
            float(np.max(np.abs(v - shell_sum_oracle(spec, k) / k ** 2))) / (shell_sum_oracle(spec, k) / k ** 2)
            for k, v in zip(ks, scaled)
        )
        spread = max(float(np.max(v) - np.min(v)) / spec.a0 for v in scaled)
    if ctx.is_round:
        round_ok = oracle_error <= 1e-10 and spread <= ctx.tolerances["invariants"]
        passed = leading_ok and round_ok and slope_ok is not False
    else:
        passed = slope_ok
    summary = {
        "a0": spec.a0,
        "ks": ks,
        "relative_deviation": deviations,
        "check_k": check_k,
        "oracle_relative_error": oracle_error,
        "relative_spread": spread,
        "point_set": ctx.point_set(),
        "report": report.to_dict() if report else None,
    }
    criteria = {"kernel_leading_term": _criterion(
        passed,
        value=deviations[ks.index(check_k)],
        threshold=0.1 if ctx.is_round else None,
        deviation_check="applied" if ctx.is_round else "skipped",
        remainder_slope=None if remainder is None else remainder.slope,
        remainder_window=list(REMAINDER_WINDOW),
        reason=None if ctx.is_round or remainder else "remainder slope needs at least four k values",
    )}
    fits = {"kernel_remainder": remainder.to_dict()} if remainder else {}
    return SectionResult(
        summary=summary,
        criteria=criteria,
        tables={"kernel.csv": (["k", "point_id", "scaled_value"], rows)},
        fits=fits,
    )


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------

@dataclass
class KJobResult:
    k: float
    record: dict
    family: Optional[object] = None
    solution: Optional[object] = None
    error: Optional[Exception] = None

    @property
    def ok(self):
        return self.error is None


def _sphere_images(family, points, phi):
    z, w = points_to_arrays(points)
    values = mode_values(family.modes, z, w)
    growth = np.exp(family.log_amplitudes[:, None] + family.eigenvalues[:, None] * np.asarray(phi)[None, :])
    return growth * values


def _tangential_sup(solution):
    sup = 0.0
    for jet in solution.jets:
        for velocity in tangent_frame(jet.point):
            vector = TangentVector.real(jet.point, velocity[0], velocity[1])
            sup = max(sup, abs(jet.derivative(vector).real))
    return sup


def _embed_record(ctx, reference, family, solution):
    k = family.k
    spec = ctx.cutoff
    points = solution.points
    phi = solution.values
    moduli = family.moduli(points)

    g_hat = _sphere_images(family, points, phi)
    sphere_residual = float(np.max(np.abs(np.sum(np.abs(g_hat) ** 2, axis=0) - 1.0)))

    flowed = [reeb_flow(ctx.model, pt, EQUIVARIANCE_T) for pt in points]
    flowed_phi = solve_graph(family, flowed, derivatives=0).values
    g_flow = _sphere_images(family, flowed, flowed_phi)
    phase = np.exp(1j * family.eigenvalues * EQUIVARIANCE_T)[:, None]
    equivariance = float(np.max(np.abs(g_flow - phase * g_hat)))

    kept = family.eigenvalues[np.isfinite(family.log_weights)]
    beta_min, beta_max = float(kept.min()), float(kept.max())
    c0 = min(m.eigenvalue for m in reference.modes)
    beta_ok = beta_min >= c0 * (1 - 1e-12) and beta_max <= k * (1 + 1e-12)

    s_values = np.linspace(-BRACKET_CONSTANT / k, BRACKET_CONSTANT / k, S_GRID_POINTS)
    slopes = [family.norm_profile(moduli, s, 1) for s in s_values]
    bound = 2.0 * spec.delta1 * k * math.exp(-2.0 * BRACKET_CONSTANT * spec.delta2) * family.h_profile(moduli)
    min_ds = float(min(np.min(v) for v in slopes))
    slope_bound_ratio = float(min(np.min(v / bound) for v in slopes))
    root_slope = float(np.min(family.norm_profile(moduli, phi, 1))) / k

    moment_limits = {}
    for ell in (0, 1, 2):
        target = 2.0 ** ell * spec.b(ell)
        at_zero = np.max(np.abs(family.norm_profile(moduli, 0.0, ell) / k ** ell - target))
        at_root = np.max(np.abs(family.norm_profile(moduli, phi, ell) / k ** ell - target))
        moment_limits[str(ell)] = float(max(at_zero, at_root))
    boundary = float(np.max(np.abs(family.norm_profile(moduli, 0.0) - 1.0)))

    reeb_sup = max(abs(jet.derivative(ctx.model.reeb_vector(jet.point))) for jet in solution.jets)
    record = {
        "k": k,
        "status": "ok",
        "N_k": ctx.spectrum.count_below(k),
        "components": len(family.components),
        "h_block": len(family.h_block),
        "g_block_dropped": family.g_block_dropped,
        "sup_phi": solution.sup_abs(),
        "sup_dphi": _tangential_sup(solution),
        "sup_reeb_dphi": float(reeb_sup),
        "max_sphere_residual": sphere_residual,
        "max_solver_residual": solution.max_residual(),
        "max_equivariance_error": equivariance,
        "beta_range": [beta_min, beta_max],
        "beta_within_bounds": bool(beta_ok),
        "min_ds": min_ds,
        "root_slope": root_slope,
        "slope_bound_ratio": slope_bound_ratio,
        "moment_limits": moment_limits,
        "boundary_defect": boundary,
        "point_set": ctx.point_set(),
    }
    logger.info(f"[Embed] k={k:g} sup|phi|={record['sup_phi']:.3e} residual={sphere_residual:.3e} "
                f"equivariance={equivariance:.3e}")
    return record


def _embed_job(ctx, reference, k):
    try:
        family = build_Fk(ctx.model, ctx.cutoff, k, reference, ctx.spectrum)
        solution = solve_graph(family, ctx.samples, derivatives=2)
    except (BracketError, SolverError, DerivativeError, InvalidInputError) as exc:
        logger.warning(f"[Embed] k={k:g} failed: {exc.message}")
        record = {"k": float(k), "status": "failed", "error": exc.to_record()}
        return KJobResult(k=float(k), record=record, error=exc)
    record = _embed_record(ctx, reference, family, solution)
    return KJobResult(k=family.k, record=record, family=family, solution=solution)


def _empirical_k0(results):
    """Smallest grid k from which every larger k solved."""
    k0 = None
    for result in reversed(results):
        if not result.ok:
            break
        k0 = result.k
    return k0


def _solver_agreement(ctx, results):
    rng = np.random.default_rng(ctx.seed)
    worst = 0.0
    pairs = []
    for _ in range(AGREEMENT_PAIRS):
        job = results[int(rng.integers(len(results)))]
        idx = int(rng.integers(len(job.solution.points)))
        root = solve_phi(job.family, job.solution.points[idx], method="bisect")
        worst = max(worst, abs(root - float(job.solution.values[idx])))
        pairs.append((job.k, idx))
    return worst, pairs


def _decay_criterion(pairs, floor=None):
    if floor is not None and all(v <= floor for _, v in pairs):
        return None, "values vanish to roundoff"
    fit = _try_fit(pairs)
    if fit is None:
        return None, "fewer than 3 usable k values"
    return fit, None


def _run_embed(ctx):
    # cached state is built here, before worker threads read it
    reference, _ = ctx.reference, ctx.cutoff
    ks = ctx.k_grid
    with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
        results = list(pool.map(lambda k: _embed_job(ctx, reference, k), ks))
    ok = [r for r in results if r.ok]
    if not ok:
        raise results[0].error
    k0 = _empirical_k0(results)
    above = [r for r in ok if k0 is not None and r.k >= k0]
    if not above:
        above = ok
        k0 = ok[0].k
    for result in results:
        if not result.ok and result.k < k0:
            logger.warning(f"[Embed] k={result.k:g} is below the empirical k0={k0:g}")
    ctx.cache["embed"] = above
    tol = ctx.tolerances
    records = [r.record for r in above]
    criteria, fits = {}, {}

    sphere = max(r["max_sphere_residual"] for r in records)
    criteria["sphere_condition"] = _criterion(sphere <= tol["solve"], sphere, tol["solve"], k0=k0)

    equivariance = max(r["max_equivariance_error"] for r in records)
    beta_ok = all(r["beta_within_bounds"] for r in records)
    criteria["equivariance"] = _criterion(
        equivariance <= tol["invariants"] and beta_ok, equivariance, tol["invariants"],
        beta_lower=min(m.eigenvalue for m in reference.modes), beta_within_bounds=beta_ok,
    )

    min_ds = min(r["min_ds"] for r in records)
    root_slope = min(r["root_slope"] for r in records)
    bound_ratio = min(r["slope_bound_ratio"] for r in records)
    criteria["monotonicity"] = _criterion(
        min_ds > 0 and root_slope > 0 and bound_ratio >= 1.0, min_ds, 0.0,
        slope_constant=root_slope, slope_bound_ratio=bound_ratio,
    )

    limit_fits, constants = {}, {}
    for ell in ("0", "1", "2"):
        fit = _try_fit([(r["k"], r["moment_limits"][ell]) for r in records])
        if fit is not None:
            limit_fits[ell] = fit
            constants[ell] = max(v * k for k, v in zip(fit.ks, fit.values))
            fits[f"moment_limit_{ell}"] = fit.to_dict()
    limit_ok = None
    if len(limit_fits) == 3:
        limit_ok = all(_in_window(f.slope, REMAINDER_WINDOW) for f in limit_fits.values())
    criteria["moment_limits"] = _criterion(
        limit_ok, {ell: f.slope for ell, f in limit_fits.items()}, list(REMAINDER_WINDOW),
        fitted_constants=constants,
    )

    phi_fit, phi_reason = _decay_criterion([(r["k"], r["sup_phi"]) for r in records])
    dphi_fit, dphi_reason = _decay_criterion(
        [(r["k"], r["sup_dphi"]) for r in records], floor=DERIVATIVE_FLOOR)
    if phi_fit is None:
        decay_ok = None
    else:
        decay_ok = _in_window(phi_fit.slope, DECAY_WINDOW) and (
            dphi_fit is None or _in_window(dphi_fit.slope, DERIVATIVE_DECAY_WINDOW))
        fits["phi_decay"] = phi_fit.to_dict()
    if dphi_fit is not None:
        fits["dphi_decay"] = dphi_fit.to_dict()
    criteria["graph_decay"] = _criterion(
        decay_ok,
        value=None if phi_fit is None else phi_fit.slope,
        threshold=list(DECAY_WINDOW),
        derivative_slope=None if dphi_fit is None else dphi_fit.slope,
        derivative_threshold=list(DERIVATIVE_DECAY_WINDOW),
        skipped=[reason for reason in (phi_reason, dphi_reason) if reason],
        C0=max(r["sup_phi"] * r["k"] ** 2 for r in records),
    )

    agreement, pairs = _solver_agreement(ctx, above)
    criteria["solver_agreement"] = _criterion(agreement <= tol["solve"], agreement, tol["solve"],
                                              pairs=len(pairs))

    rows = [(r["k"], r["sup_phi"], r["sup_dphi"]) for r in records]
    summary = {
        "k0": k0,
        "reference": reference.to_dict(),
        "records": [r.record for r in results],
        "note": "embedding and invariants are certified on the sampled points only",
    }
    return SectionResult(
        summary=summary,
        criteria=criteria,
        tables={"phi_k.csv": (["k", "sup_phi", "sup_dphi"], rows)},
        fits=fits,
    )


# ---------------------------------------------------------------------------
# deform
# ---------------------------------------------------------------------------

def _family_components(family):
    components = []
    for c in family.components:
        coefficient = 0.0 if c.dropped else math.exp(c.log_amplitude)
        components.append(Component.from_mode(c.mode, coefficient=coefficient))
    return tuple(components)


def _run_deform(ctx):
    if "embed" not in ctx.cache:
        _run_embed(ctx)
    jobs = ctx.cache["embed"]
    model = ctx.model
    per_k = []
    for job in jobs:
        structure = DeformedStructure(model, job.solution)
        levi = [levi_deformed(structure, pt) for pt in job.solution.points]
        per_k.append({"k": job.k, "min_levi": float(min(levi)), "max_levi": float(max(levi))})
        logger.info(f"[Deform] k={job.k:g} min Levi={per_k[-1]['min_levi']:.6e}")

    zero = DeformedStructure(model, ZeroField())
    zero_defect = max(abs(levi_deformed(zero, pt) - model.levi_density(pt)) for pt in ctx.samples)

    last = jobs[-1]
    structure = DeformedStructure(model, last.solution)
    checked = last.solution.points[:CR_DEFECT_POINTS]
    bracket_gap = max(abs(levi_deformed(structure, pt, "numeric") - levi_deformed(structure, pt))
                      for pt in checked)
    defect = max(cr_defect(last.family, last.solution, pt) for pt in checked)

    problem = CertificateProblem(_family_components(last.family), last.solution.values, last.solution.points)
    certificate = certificate_PN(problem, tol=ctx.tolerances["certificate"])
    rows = [(idx, r) for idx, r in enumerate(certificate.residuals)]

    min_levi = min(r["min_levi"] for r in per_k)
    summary = {
        "levi": per_k,
        "zero_field_defect": zero_defect,
        "numeric_bracket_gap": bracket_gap,
        "cr_defect": defect,
        "cr_defect_points": len(checked),
        "certificate_k": last.k,
        "certificate": certificate.to_dict(),
    }
    criteria = {"levi_positivity": _criterion(
        min_levi > 0 and zero_defect <= ZERO_FIELD_TOL, min_levi, 0.0,
        zero_field_defect=zero_defect, zero_field_threshold=ZERO_FIELD_TOL,
    )}
    return SectionResult(
        summary=summary,
        criteria=criteria,
        tables={"certificate.csv": (["sample_id", "residual"], rows)},
    )


# ---------------------------------------------------------------------------
# continue
# ---------------------------------------------------------------------------

def _degree_one_base(samples):
    return ContinuationProblem((Component(1.0, 1, 0, 1.0), Component(1.0, 0, 1, 1.0)), tuple(samples))


def _basis_record(basis, samples, tol):
    exponents = [tuple(e) for e in basis["exponents"]]
    weights = [float(w) for w in basis["weights"]]
    radii = [float(r) for r in basis.get("r") or [1.0] * len(exponents)]
    problem = ContinuationProblem(
        tuple(Component(1.0, a, b, wt) for (a, b), wt in zip(exponents, weights)), tuple(samples))
    newton = continuation_solve(problem, radii)
    bisection = continuation_solve(problem, radii, method="bisect")
    scaled = tuple(Component(r, a, b, wt) for r, (a, b), wt in zip(radii, exponents, weights))
    certificate = certificate_PN(CertificateProblem(scaled, newton, tuple(samples)), tol=tol)
    return {
        "exponents": [list(e) for e in exponents],
        "weights": weights,
        "r": radii,
        "sup_phi": float(np.max(np.abs(newton))),
        "solver_agreement": float(np.max(np.abs(newton - bisection))),
        "certificate": certificate.to_dict(),
    }


def _run_continue(ctx):
    section = ctx.config["continuation"]
    samples = ctx.samples
    problem = _degree_one_base(samples)
    r0 = np.ones(2)
    phi0 = np.zeros(len(samples))
    eps = section["fd_epsilon"]

    rng = np.random.default_rng(ctx.seed)
    directions = []
    worst = 0.0
    for _ in range(section["directions"]):
        v = rng.normal(size=2)
        v /= np.linalg.norm(v)
        predicted = continuation_derivative(problem, r0, phi0, v)
        measured = (continuation_solve(problem, r0 + eps * v) - phi0) / eps
        error = float(np.max(np.abs(measured - predicted)))
        worst = max(worst, error)
        directions.append({"v": v.tolist(), "max_error": error})

    first = continuation_derivative(problem, r0, phi0, np.array([1.0, 0.0]))
    spread = float(np.max(first) - np.min(first))
    index, best_spread = nonconstant_direction(problem, r0, phi0)
    path = deformation_path(problem, r0, phi0, index, PATH_STEPS)

    bases = [_basis_record(b, samples, ctx.tolerances["certificate"]) for b in section["bases"]]
    logger.info(f"[Continue] fd error={worst:.3e} spread={spread:.3e} bases={len(bases)}")
    summary = {
        "fd_epsilon": eps,
        "directions": directions,
        "spread_e1": spread,
        "nonconstant_direction": {"index": index, "spread": best_spread, "path": path},
        "bases": bases,
        "note": "non-constancy is checked pointwise; the quotient by constants is not modelled",
    }
    criteria = {"continuation_derivative": _criterion(
        worst <= 5.0 * eps and spread >= 0.1, worst, 5.0 * eps, spread=spread, spread_threshold=0.1,
    )}
    return SectionResult(summary=summary, criteria=criteria)


# ---------------------------------------------------------------------------
# example
# ---------------------------------------------------------------------------

def _example_record(eps, samples, seed):
    family = example_family(eps)
    images = np.array([family.map(pt) for pt in samples])
    sphere = float(np.max(np.abs(np.sum(np.abs(images) ** 2, axis=1) - 1.0)))

    certificate = certificate_PN(CertificateProblem(family.components, family.field, samples), tol=EXAMPLE_TOL)
    z, _ = points_to_arrays(samples)
    perturbed = family.field.values(z) + PERTURBATION * np.abs(z) ** 2
    off_family = certificate_PN(CertificateProblem(family.components, perturbed, samples), tol=EXAMPLE_TOL)

    base = _degree_one_base(samples)
    solved = continuation_solve(base, [math.sqrt(1.0 + eps), 1.0])
    solve_error = float(np.max(np.abs(solved - family.field.values(z))))

    structure = family.structure()
    levi = [levi_deformed(structure, pt) for pt in samples]
    levi_gap = max(abs(v - example_levi(eps, pt)) for v, pt in zip(levi, samples))
    checked = samples[:DIAGNOSTIC_POINTS]
    diagnostics = map_diagnostics(family.map, checked, seed=seed)

    passed = (sphere <= EXAMPLE_TOL and certificate.max_residual <= EXAMPLE_TOL
              and solve_error <= EXAMPLE_SOLVE_TOL and min(levi) > 0)
    logger.info(f"[Example] eps={eps:g} sphere={sphere:.3e} certificate={certificate.max_residual:.3e} "
                f"solve={solve_error:.3e}")
    return passed, {
        "eps": eps,
        "max_sphere_defect": sphere,
        "certificate": certificate.to_dict(),
        "perturbed_certificate": off_family.to_dict(),
        "continuation_error": solve_error,
        "min_levi": float(min(levi)),
        "levi_closed_form_gap": float(levi_gap),
        "map_diagnostics": diagnostics.to_dict(),
    }


def _run_example(ctx):
    samples = ctx.samples
    outcomes = [_example_record(float(eps), samples, ctx.seed) for eps in ctx.config["continuation"]["epsilons"]]
    records = [record for _, record in outcomes]
    worst = max(max(r["max_sphere_defect"], r["certificate"]["max_residual"]) for r in records)
    criteria = {"exact_example": _criterion(
        all(passed for passed, _ in outcomes), worst, EXAMPLE_TOL,
        continuation_error=max(r["continuation_error"] for r in records),
        continuation_threshold=EXAMPLE_SOLVE_TOL,
    )}
    return SectionResult(summary={"epsilons": records, "point_set": ctx.point_set()}, criteria=criteria)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

SECTION_RUNNERS = {
    "spectrum": _run_spectrum,
    "kernel": _run_kernel,
    "embed": _run_embed,
    "deform": _run_deform,
    "continue": _run_continue,
    "example": _run_example,
}

SECTION_PLAN = {
    "spectrum": ("spectrum",),
    "kernel": ("kernel",),
    "embed": ("embed",),
    "deform": ("embed", "deform"),
    "continue": ("continue",),
    "example": ("example",),
    "rates": ("spectrum", "kernel", "embed"),
    "all": ("spectrum", "kernel", "embed", "deform", "continue", "example"),
}


def _assemble_report(subcommand, config, sections, files, started):
    criteria, fits = {}, {}
    for result in sections.values():
        criteria.update(result.criteria)
        fits.update(result.fits)
    k0 = sections["embed"].summary["k0"] if "embed" in sections else None
    report = {
        "subcommand": subcommand,
        "config": config,
        "seed": config["samples"]["seed"],
        "environment": _get_environment_info(),
        "k0": k0,
        "criteria": criteria,
        "fits": fits,
        "files": files,
        "duration": _format_duration(time.time() - started),
    }
    if subcommand != "rates":
        report["sections"] = {name: result.summary for name, result in sections.items()}
    return report


def run(subcommand, config):
    """Run one subcommand on a normalized config, write its files and return the report."""
    if subcommand not in SUPPORTED_SUBCOMMANDS:
        raise InvalidInputError(f"unknown subcommand: {subcommand}", {"supported": SUPPORTED_SUBCOMMANDS})
    started = time.time()
    ctx = RunContext(config=config)
    sections = {}
    for name in SECTION_PLAN[subcommand]:
        logger.info(f"[Run] {subcommand}: {name}")
        sections[name] = SECTION_RUNNERS[name](ctx)

    out_dir = pathlib.Path(config["output_dir"])
    files = []
    if subcommand != "rates":
        for result in sections.values():
            for filename, (header, rows) in result.tables.items():
                _write_csv(out_dir / filename, header, rows)
                files.append(filename)
    files.append("report.json")
    report = _assemble_report(subcommand, config, sections, files, started)
    _save_json(out_dir / "report.json", report)
    (out_dir / "error.json").unlink(missing_ok=True)

    failed = sorted(cid for cid, c in report["criteria"].items() if c["status"] == "FAIL")
    if failed:
        logger.warning(f"[Run] {subcommand}: failing criteria {', '.join(failed)}")
    logger.info(f"[Run] {subcommand} finished in {report['duration']}")
    return report
