"""crlab command-line front end.

    crlab <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--jobs <n>]
"""
import argparse
import json
import pathlib
import sys
import traceback

from core.run_manager import _load_run_config, _save_json, run
from utils.config import DEFAULT_OUT_DIR, SUPPORTED_SUBCOMMANDS, logger
from utils.errors import (
    ERR_BRACKET_NOT_FOUND,
    ERR_CONFIG,
    ERR_DEGENERATE_DERIVATIVE,
    ERR_INVALID_INPUT,
    ERR_OPERATION_FAILED,
    ERR_SOLVER_FAILED,
    ERR_SPECTRUM_CAP,
    CrlabError,
)

# Exit statuses per error code; anything unlisted exits with EXIT_FAILURE.
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_STATUS = {
    ERR_CONFIG: 2,
    ERR_INVALID_INPUT: 2,
    ERR_SPECTRUM_CAP: 3,
    ERR_BRACKET_NOT_FOUND: 4,
    ERR_SOLVER_FAILED: 4,
    ERR_DEGENERATE_DERIVATIVE: 4,
}


def _error_record(message, code=None, details=None):
    """
    Standard machine-readable error record.

    Args:
        message: Human-readable error message
        code: Optional error code (e.g., "CONFIG_ERROR", "BRACKET_NOT_FOUND")
        details: Optional additional error details (dict)

    Returns:
        Dict with "error", "code" and "details" keys
    """
    return {"error": message, "code": code or ERR_OPERATION_FAILED, "details": details or {}}


def _exit_status(code):
    return EXIT_STATUS.get(code, EXIT_FAILURE)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="crlab",
        description="Numerical checks for CR embeddings of weighted Sasakian 3-spheres.",
    )
    parser.add_argument("subcommand", choices=SUPPORTED_SUBCOMMANDS, help="Pipeline to run.")
    parser.add_argument("--config", type=pathlib.Path, default=None, help="RunConfig JSON file.")
    parser.add_argument("--out", type=pathlib.Path, default=None,
                        help=f"Output directory (default from config, then {DEFAULT_OUT_DIR}).")
    parser.add_argument("--seed", type=int, default=None, help="Sampling seed (unsigned 64-bit).")
    parser.add_argument("--jobs", type=int, default=None, help="Concurrent k-jobs.")
    return parser


def _report_failure(record, out_dir):
    if out_dir is not None:
        try:
            _save_json(pathlib.Path(out_dir) / "error.json", record)
        except OSError as exc:
            logger.error(f"[CLI] could not write error.json: {exc}")
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")


def _summary_line(report):
    statuses = [c["status"] for c in report["criteria"].values()]
    counts = {s: statuses.count(s) for s in ("PASS", "FAIL", "SKIP")}
    return (f"{report['subcommand']}: {counts['PASS']} pass, {counts['FAIL']} fail, "
            f"{counts['SKIP']} skip ({report['duration']})")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    out_dir = args.out
    try:
        config = _load_run_config(args.config, output_dir=args.out, seed=args.seed, jobs=args.jobs)
        out_dir = config["output_dir"]
        logger.info(f"[CLI] {args.subcommand} config={args.config} out={out_dir}")
        report = run(args.subcommand, config)
    except CrlabError as exc:
        logger.error(f"[CLI] {args.subcommand} failed: {exc.code} {exc.message}")
        record = _error_record(exc.message, exc.code, exc.details)
        _report_failure(record, out_dir or DEFAULT_OUT_DIR)
        return _exit_status(exc.code)
    except Exception as exc:
        logger.error(f"[CLI] {args.subcommand} crashed: {exc}\n{traceback.format_exc()}")
        record = _error_record(str(exc), ERR_OPERATION_FAILED, {"type": type(exc).__name__})
        _report_failure(record, out_dir or DEFAULT_OUT_DIR)
        return EXIT_FAILURE
    print(_summary_line(report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
