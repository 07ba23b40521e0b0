"""Command-line entry point: ``maxent-align <subcommand> ...``.

Every output file starts with a provenance block (tool, version, format
version, subcommand, parameters, seed). Wall time is logged to stderr and
recorded in the ``reproduce`` manifest, never in data files, so identical
configurations give byte-identical outputs.

Exit codes: 0 ok, 2 invalid arguments or infeasible constraint, 3 numerical
failure, 4 infeasible system or no survivors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import alignment, seqspace
from .core import Support, entropy
from .exceptions import (
    ConstraintInfeasibleError,
    EmptyConditioningEventError,
    InfeasibleSystemError,
    NoSurvivorsError,
    NumericalFailureError,
    UnstableEstimateError,
)
from .maxent import solve_for_expectation

log = logging.getLogger("maxent_align")

OUTPUT_DIR_ENV = "MAXENT_ALIGN_OUTPUT_DIR"
FORMAT_VERSION = 1
SUBCOMMANDS = ("maxent", "condition", "evidence", "align", "appendix")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4

MAXENT_E5_REFERENCE = [0.02053, 0.03854, 0.07232, 0.13574, 0.25475, 0.47812]
APPENDIX_REFERENCE_CDF = {2.0: 0.4294, 3.0: 0.6636, 4.0: 0.7751, 5.0: 0.8931}


def _version():
    try:
        return version("maxent-align")
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunConfig:
    subcommand: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_format: str = "json"
    output_path: str | None = None
    # worker threads; results never depend on it, so it is not provenance
    jobs: int = 1

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        if self.output_format not in ("json", "csv"):
            raise ValueError(f"unknown format {self.output_format!r}")

    def provenance(self):
        return {
            "tool": "maxent-align",
            "version": _version(),
            "format_version": FORMAT_VERSION,
            "subcommand": self.subcommand,
            "parameters": dict(sorted(self.parameters.items())),
            "seed": self.seed,
        }


# --- rendering ---------------------------------------------------------------


def _csv_text(provenance, header, rows):
    buf = io.StringIO()
    for key, value in provenance.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _json_text(provenance, result):
    return json.dumps({"provenance": provenance, "result": result}, indent=2, sort_keys=True) + "\n"


def render(config, result, table):
    prov = config.provenance()
    if config.output_format == "json":
        return _json_text(prov, result)
    header, rows = table
    return _csv_text(prov, header, rows)


# --- experiments -------------------------------------------------------------


def _parse_support(text):
    return Support([float(x) for x in str(text).split(",")])


def do_maxent(p):
    s = _parse_support(p.get("support", "1,2,3,4,5,6"))
    sol = solve_for_expectation(p["epsilon"], s, p.get("tol", 1e-10))
    result = {
        "beta": sol.beta if np.isfinite(sol.beta) else str(sol.beta),
        "epsilon": sol.epsilon,
        "iterations": sol.iterations,
        "boundary": sol.boundary,
        "entropy": entropy(sol.distribution),
        **sol.distribution.to_dict(),
    }
    rows = [(float(v), float(q)) for v, q in zip(s.values, sol.distribution.probs)]
    return result, (["value", "prob"], rows)


def do_condition(p):
    n, mean = p["n"], p["target_mean"]
    window = p.get("window")
    method = p.get("method", "exact")
    extra = {}
    if method == "exact":
        if window is None:
            total = seqspace.nearest_attainable_sum(n, mean)
            dist = seqspace.conditional_face_distribution(n, total)
            extra["target_sum"] = total
        else:
            dist = seqspace.window_conditional(n, mean, window)
        stderr = None
    else:
        if window is None:
            raise ValueError("--window is required for sampling methods")
        if method == "rejection":
            est = seqspace.rejection_conditioner(
                n, mean, window, p.get("max_draws", 100_000), p["seed"],
                n_jobs=p.get("jobs"), full_output=True,
            )
        elif method == "tilted":
            est = seqspace.tilted_conditioner(
                n, mean, window, p.get("draws", 100_000), p["seed"],
                n_jobs=p.get("jobs"), full_output=True,
            )
        else:
            raise ValueError(f"unknown method {method!r}")
        dist = est.distribution
        stderr = est.stderr.tolist()
        extra.update(
            acceptance_rate=est.acceptance_rate,
            effective_sample_size=est.effective_sample_size,
            survivors=est.survivors,
            draws=est.draws,
            beta=est.beta,
        )
    result = {"method": method, **dist.to_dict(), "stderr": stderr, **extra}
    rows = [
        (float(v), float(q), float(stderr[i]) if stderr else "")
        for i, (v, q) in enumerate(zip(dist.support.values, dist.probs))
    ]
    return result, (["value", "prob", "stderr"], rows)


def do_evidence(p):
    if p["source"] == "sequences":
        sample = seqspace.evidence_histogram_sequences(
            p["n"], p["samples"], p["bin"], p["seed"], n_jobs=p.get("jobs")
        )
    elif p["source"] == "simplex":
        sample = seqspace.evidence_histogram_simplex(
            p["samples"], p["bin"], p["seed"], n_jobs=p.get("jobs")
        )
    else:
        raise ValueError(f"unknown source {p['source']!r}")
    result = {
        "source": sample.source,
        "n": sample.n,
        "mean": sample.mean,
        "std": sample.std,
        "histogram": sample.means.to_dict(),
    }
    return result, (["bin_left", "bin_right", "count", "frequency"], list(sample.means.rows()))


def _build_kernel(p):
    grid = alignment.default_grid(p.get("grid_points", 501), p.get("grid_min", 1.02), p.get("grid_max", 5.98))
    if p["kernel"] == "maxent":
        return alignment.maxent_kernel(grid)
    if p["kernel"] == "piecewise":
        return alignment.piecewise_linear_kernel(grid, p.get("center_exception", True))
    raise ValueError(f"unknown kernel {p['kernel']!r}")


def _forced_integrals(k):
    out = []
    for j in range(1, 6):
        lo, hi = alignment.bound_functional(k, alignment.integral_coefficients(k.grid, j, j + 1))
        out.append({"k": j, "lower": lo, "upper": hi, "expected": j / 6})
    return out


def _cdf_bounds(k):
    out = []
    for t in (2.0, 3.0, 4.0, 5.0):
        lo, hi = alignment.bound_functional(k, alignment.cdf_coefficients(k.grid, t))
        out.append({"threshold": t, "lower": lo, "upper": hi})
    return out


def do_align(p):
    k = _build_kernel(p)
    reports = p.get("report", ["concentration", "cdf-bounds"])
    res = alignment.solve_evidence_measure(k)
    result = {
        "kernel": p["kernel"],
        "grid_points": len(k.grid),
        "residual": res.residual,
        "iterations": res.iterations,
    }
    rows = [("residual", "", "", "", res.residual)]
    if "concentration" in reports:
        result["concentration"] = res.concentration
        result["mass_at_center"] = float(res.measure.weights[k.grid.index_of(k.grid.center)])
        rows.append(("concentration", "", "", "", res.concentration))
    if "cdf-bounds" in reports:
        result["cdf_bounds"] = _cdf_bounds(k)
        rows += [("cdf", b["threshold"], b["lower"], b["upper"], "") for b in result["cdf_bounds"]]
    if "forced-integrals" in reports:
        result["forced_integrals"] = _forced_integrals(k)
        rows += [("integral", f["k"], f["lower"], f["upper"], f["expected"]) for f in result["forced_integrals"]]
    return result, (["quantity", "key", "lower", "upper", "value"], rows)


def do_appendix(p):
    grid = alignment.default_grid(p.get("grid_points", 501), p.get("grid_min", 1.02), p.get("grid_max", 5.98))
    variants = {}
    rows = []
    for name, flag in (("rule-at-center", False), ("uniform-atom-at-center", True)):
        k = alignment.piecewise_linear_kernel(grid, center_exception=flag)
        res = alignment.solve_evidence_measure(k)
        cdf = []
        for b in _cdf_bounds(k):
            ref = APPENDIX_REFERENCE_CDF[b["threshold"]]
            b = {**b, "reference": ref, "reference_inside": b["lower"] <= ref <= b["upper"]}
            cdf.append(b)
            rows.append((name, "cdf", b["threshold"], b["lower"], b["upper"], ref, b["reference_inside"]))
        integrals = _forced_integrals(k)
        rows += [(name, "integral", f["k"], f["lower"], f["upper"], f["expected"], "") for f in integrals]
        variants[name] = {"residual": res.residual, "cdf_bounds": cdf, "forced_integrals": integrals}
    result = {"grid_points": len(grid), "grid_step": grid.step, "variants": variants}
    return result, (["variant", "quantity", "key", "lower", "upper", "reference", "inside"], rows)


_DISPATCH = {
    "maxent": do_maxent,
    "condition": do_condition,
    "evidence": do_evidence,
    "align": do_align,
    "appendix": do_appendix,
}


def _exit_code_for(exc):
    if isinstance(exc, (NoSurvivorsError, InfeasibleSystemError)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (NumericalFailureError, UnstableEstimateError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConstraintInfeasibleError, EmptyConditioningEventError, ValueError)):
        return EXIT_USAGE
    return None


def _default_path(config):
    out_dir = os.environ.get(OUTPUT_DIR_ENV)
    if config.output_path:
        return Path(config.output_path)
    if out_dir:
        return Path(out_dir) / f"{config.subcommand}.{config.output_format}"
    return None


def execute(config):
    """Run ``config`` and return the rendered text (raises on failure)."""
    params = {**config.parameters, "seed": config.seed, "jobs": config.jobs}
    result, table = _DISPATCH[config.subcommand](params)
    return render(config, result, table)


def run(config):
    start = time.perf_counter()
    try:
        text = execute(config)
    except Exception as exc:  # mapped to exit codes below
        code = _exit_code_for(exc)
        if code is None:
            raise
        print(f"maxent-align {config.subcommand}: {exc}", file=sys.stderr)
        return code
    path = _default_path(config)
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    log.info("%s finished in %.3fs", config.subcommand, time.perf_counter() - start)
    return EXIT_OK


# --- reproduce ---------------------------------------------------------------

FIGURE2_CENTERS = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0)
FIGURE2_NS = (10, 100, 1000)
FIGURE2_HALFWIDTH = 0.25


def _figure2_table(seed):
    config = RunConfig("condition", {"experiment": "mean-window-table"}, seed, "csv")
    rows = []
    for n in FIGURE2_NS:
        for c in FIGURE2_CENTERS:
            rows.append((n, c, FIGURE2_HALFWIDTH, seqspace.mean_window_probability(n, c, FIGURE2_HALFWIDTH)))
    config.parameters.update(ns=list(FIGURE2_NS), centers=list(FIGURE2_CENTERS), halfwidth=FIGURE2_HALFWIDTH)
    return _csv_text(config.provenance(), ["n", "center", "halfwidth", "probability"], rows)


def _figure3(seed):
    seq = seqspace.evidence_histogram_sequences(10_000, 100_000, 0.002, seed)
    simp = seqspace.evidence_histogram_simplex(1_000_000, 0.002, seed)
    config = RunConfig(
        "evidence",
        {"sequences": {"n": 10_000, "samples": 100_000}, "simplex": {"samples": 1_000_000}, "bin": 0.002},
        seed,
    )
    result = {
        s.source: {"n": s.n, "mean": s.mean, "std": s.std, "histogram": s.means.to_dict()}
        for s in (seq, simp)
    }
    return _json_text(config.provenance(), result)


def _single(subcommand, params, seed=0):
    return execute(RunConfig(subcommand, params, seed, "json"))


EXPERIMENTS = (
    (
        "maxent-e5",
        "maxent-e5.json",
        "maximum-entropy die distribution with expectation 5",
        lambda seed: _single("maxent", {"epsilon": 5.0, "support": "1,2,3,4,5,6"}),
    ),
    (
        "figure2-windows",
        "figure2-windows.csv",
        "exact probability of sequence-mean windows versus sequence length",
        _figure2_table,
    ),
    (
        "figure3-histograms",
        "figure3-histograms.json",
        "desk-scale histograms of evidence over sequences and over the simplex",
        _figure3,
    ),
    (
        "fs-concentration",
        "fs-concentration.json",
        "evidence measure aligning maximum entropy with conditioning collapses onto the prior mean",
        lambda seed: _single("align", {"kernel": "maxent", "grid_points": 501, "report": ["concentration", "cdf-bounds"]}),
    ),
    (
        "appendix-bounds",
        "appendix-bounds.json",
        "feasible CDF intervals and forced integrals for the piecewise-linear rule",
        lambda seed: _single("appendix", {"grid_points": 501}),
    ),
)


def reproduce_all(out_dir, seed=0):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    failed = False
    for name, filename, anchor, fn in EXPERIMENTS:
        start = time.perf_counter()
        entry = {"name": name, "file": filename, "anchor": anchor}
        try:
            text = fn(seed)
            with open(out / filename, "w", newline="\n") as fh:
                fh.write(text)
            entry["status"] = "ok"
        except Exception as exc:  # recorded in the manifest
            entry["status"] = "failed"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            failed = True
        entry["wall_time_s"] = round(time.perf_counter() - start, 3)
        if name == "maxent-e5":
            entry["reference_values"] = MAXENT_E5_REFERENCE
        entries.append(entry)
    manifest = {"tool": "maxent-align", "version": _version(), "seed": seed, "entries": entries}
    with open(out / "manifest.json", "w", newline="\n") as fh:
        fh.write(json.dumps(manifest, indent=2) + "\n")
    return EXIT_NUMERICAL if failed else EXIT_OK


# --- argument parsing --------------------------------------------------------


def _add_common(p, seeded=False):
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", help=f"output file (default: stdout, or ${OUTPUT_DIR_ENV}/<subcommand>.<format>)")
    if seeded:
        p.add_argument("--seed", type=int, default=0, help="root seed for the PCG64 streams")
        p.add_argument("--jobs", type=int, default=1, help="worker threads; results do not depend on it")


def _add_grid(p):
    p.add_argument("--grid-points", type=int, default=501, help="evidence grid size; 3.5 is always included")
    p.add_argument("--grid-min", type=float, default=1.02)
    p.add_argument("--grid-max", type=float, default=5.98)


def build_parser():
    parser = argparse.ArgumentParser(prog="maxent-align", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log timings to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("maxent", help="maximum-entropy distribution for a given expectation")
    p.add_argument("--epsilon", type=float, required=True, help="target expectation")
    p.add_argument("--support", default="1,2,3,4,5,6", help="comma-separated support values")
    p.add_argument("--tol", type=float, default=1e-10)
    _add_common(p)

    p = sub.add_parser("condition", help="condition uniform sequences on their mean")
    p.add_argument("--n", type=int, required=True, help="sequence length")
    p.add_argument("--target-mean", type=float, required=True)
    p.add_argument("--window", type=float, help="half-width of the mean window")
    p.add_argument("--exact", action="store_true", help="exact DP (the default method)")
    p.add_argument("--method", choices=("exact", "rejection", "tilted"))
    p.add_argument("--draws", type=int, default=100_000, help="proposal draws for the tilted sampler")
    p.add_argument("--max-draws", type=int, default=100_000, help="draw budget for the rejection sampler")
    _add_common(p, seeded=True)

    p = sub.add_parser("evidence", help="histogram of evidence values over an extended space")
    p.add_argument("--source", choices=("sequences", "simplex"), required=True)
    p.add_argument("--n", type=int, default=10_000, help="sequence length (sequences source only)")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--bin", type=float, default=0.002, help="histogram bin width")
    _add_common(p, seeded=True)

    p = sub.add_parser("align", help="solve the total-expectation system for a kernel")
    p.add_argument("--kernel", choices=("maxent", "piecewise"), required=True)
    _add_grid(p)
    p.add_argument("--report", default="concentration,cdf-bounds", help="comma list of concentration,cdf-bounds,forced-integrals")
    p.add_argument("--no-center-exception", action="store_true", help="piecewise kernel: apply the rule at the prior mean too")
    _add_common(p)

    p = sub.add_parser("appendix", help="feasible CDF intervals for the piecewise-linear rule")
    _add_grid(p)
    _add_common(p)

    p = sub.add_parser("reproduce", help="regenerate every experiment into a directory")
    p.add_argument("--out-dir", default=os.environ.get(OUTPUT_DIR_ENV, "reproduction"))
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args):
    cmd = args.subcommand
    params = {}
    if cmd == "maxent":
        params = {"epsilon": args.epsilon, "support": args.support, "tol": args.tol}
    elif cmd == "condition":
        method = args.method or "exact"
        if args.exact and args.method not in (None, "exact"):
            raise ValueError("--exact conflicts with --method")
        params = {"n": args.n, "target_mean": args.target_mean, "window": args.window, "method": method}
        if method == "tilted":
            params["draws"] = args.draws
        elif method == "rejection":
            params["max_draws"] = args.max_draws
    elif cmd == "evidence":
        params = {"source": args.source, "samples": args.samples, "bin": args.bin}
        if args.source == "sequences":
            params["n"] = args.n
    elif cmd in ("align", "appendix"):
        params = {"grid_points": args.grid_points, "grid_min": args.grid_min, "grid_max": args.grid_max}
        if cmd == "align":
            params.update(
                kernel=args.kernel,
                report=[r.strip() for r in args.report.split(",") if r.strip()],
                center_exception=not args.no_center_exception,
            )
    return RunConfig(
        cmd, params, getattr(args, "seed", 0), args.format, args.output, getattr(args, "jobs", 1)
    )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    if args.subcommand == "reproduce":
        return reproduce_all(args.out_dir, args.seed)
    try:
        config = config_from_args(args)
    except ValueError as exc:
        parser.error(str(exc))
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
