"""Command-line interface.

Three subcommands:

``randomkit sequence --proc PROC --n N``
    Generate one allocation sequence for a single procedure.  Prints two
    tables (assignments, then the conditional probability of each arm at
    every step); ``--out`` writes the combined table as CSV or JSON instead.

``randomkit run CONFIG.json``
    Simulate every procedure in a run configuration, estimate the requested
    metrics, and write one file per metric plus ``run_meta.json`` (and SVG
    charts with ``--plots``) into the output directory.

``randomkit validate --proc PROC --n N``
    Self-check: simulate the procedure, compute every metric the exact
    engine also produces, and compare the two.  Emits a JSON report; the
    exit status reflects the comparison.

Procedure specs use the compact form ``KIND`` or ``KIND:p1=v1,p2=v2``
(e.g. ``CRD``, ``PBD:b=2``, ``BCDWIT:p=2/3,b=3``); ``--w`` takes the
allocation ratio as comma-separated numbers, e.g. ``--w 4,3,2,1``.

Exit codes: 0 success, 1 operational or validation failure, 2 invalid
configuration or usage.

CSV files are UTF-8 with LF line endings, comma separated, dot decimal, one
header row; floats are written with 17 significant digits so values
round-trip bit-exactly.  Output bytes depend only on the configuration and
seed, not on the thread count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import (
    METRIC_IDS,
    RunConfig,
    load_run_config,
    parse_proc,
    parse_weights,
)
from .core import ConfigError, Kind, ProcedureConfig
from .engine import DEFAULT_SEED, SimulationResult, backend_name, simulate
from .metrics import (
    ArpResult,
    FinalImbalance,
    MetricSeries,
    calc_brt,
    calc_cummean_epcg,
    calc_cummean_loss,
    calc_cummean_pda,
    calc_expected_abs_imb,
    calc_expected_max_abs_imb,
    calc_fi,
    calc_final_imb,
    calc_variance_of_imb,
    eval_arp,
)
from .oracle import (
    MAX_PATHS,
    CompareReport,
    OracleLimitError,
    compare,
    exact_metrics,
    exact_metrics_by_paths,
)
from .plots import heatmap, line_chart, save_svg, violin

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

_FI_NOTE = (
    "fi uses the classical 0-1 scale (2/j) sum E|phi - 1/2| for two arms at "
    "1:1 and the raw Euclidean distance of phi from the target otherwise; "
    "the brt trade-off always uses the normalized (0-1) forcing index."
)

_SERIES_CALCS = {
    "expected_abs_imb": calc_expected_abs_imb,
    "variance_of_imb": calc_variance_of_imb,
    "expected_max_abs_imb": calc_expected_max_abs_imb,
    "cummean_loss": calc_cummean_loss,
    "cummean_epcg_c": lambda sr: calc_cummean_epcg(sr, "C"),
    "cummean_epcg_mp": lambda sr: calc_cummean_epcg(sr, "MP"),
    "cummean_pda": calc_cummean_pda,
    "fi": calc_fi,
}

_METRIC_TITLES = {
    "expected_abs_imb": "Expected absolute imbalance",
    "variance_of_imb": "Variance of imbalance",
    "expected_max_abs_imb": "Expected maximum imbalance",
    "cummean_loss": "Cumulative average loss",
    "cummean_epcg_c": "Expected proportion of correct guesses (convergence)",
    "cummean_epcg_mp": "Expected proportion of correct guesses (max probability)",
    "cummean_pda": "Proportion of deterministic assignments",
    "fi": "Forcing index",
    "brt": "Balance/randomness trade-off",
}


def _f(v: float) -> str:
    """Format a float with full round-trip precision."""
    return format(float(v), ".17g")


def _open_csv(path: str):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _write_series_csv(path: str, series: Sequence[MetricSeries]) -> None:
    fh, w = _open_csv(path)
    with fh:
        w.writerow(["procedure", "step", "estimate", "se"])
        for s in series:
            for i in range(len(s.step)):
                w.writerow([
                    s.label,
                    int(s.step[i]),
                    _f(s.estimate[i]),
                    _f(s.se[i]) if s.se is not None else "",
                ])


def _write_final_imb_csv(path: str, finals: Sequence[FinalImbalance]) -> None:
    fh, w = _open_csv(path)
    with fh:
        w.writerow(["procedure", "replicate", "value"])
        for fi in finals:
            for r, v in enumerate(fi.values, start=1):
                w.writerow([fi.label, r, _f(v)])


def _write_arp_csv(path: str, arps: Sequence[ArpResult]) -> None:
    fh, w = _open_csv(path)
    with fh:
        w.writerow(["procedure", "step", "arm", "pi", "se"])
        for a in arps:
            for i in range(len(a.step)):
                for k in range(len(a.rho)):
                    w.writerow([
                        a.label,
                        int(a.step[i]),
                        k + 1,
                        _f(a.pi[i, k]),
                        _f(a.se[i, k]),
                    ])


def _series_to_doc(s: MetricSeries) -> dict:
    return {
        "procedure": s.label,
        "step": [int(v) for v in s.step],
        "estimate": [float(v) for v in s.estimate],
        "se": None if s.se is None else [float(v) for v in s.se],
    }


def _parse_w_option(text: Optional[str]):
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",")]
    if any(not p for p in parts):
        raise ConfigError(f"--w: malformed ratio {text!r} (expected e.g. 4,3,2,1)")
    return parse_weights(parts, "--w")


def _ratio_text(cfg: ProcedureConfig) -> str:
    return ":".join(format(x, "g") for x in cfg.target.w)


def _text_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(header[i]), max((len(r[i]) for r in rows), default=0))
        for i in range(len(header))
    ]
    out = ["  ".join(h.rjust(widths[i]) for i, h in enumerate(header))]
    for r in rows:
        out.append("  ".join(r[i].rjust(widths[i]) for i in range(len(header))))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# subcommands

def _check_counts(args: argparse.Namespace) -> None:
    if args.n < 1:
        raise ConfigError(f"--n: must be >= 1, got {args.n}")
    if args.seed < 0:
        raise ConfigError(f"--seed: must be >= 0, got {args.seed}")
    if getattr(args, "nsim", 1) < 1:
        raise ConfigError(f"--nsim: must be >= 1, got {args.nsim}")


def _cmd_sequence(args: argparse.Namespace) -> int:
    _check_counts(args)
    cfg = parse_proc(args.proc, _parse_w_option(args.w), n=args.n, path="--proc")
    sr = simulate([cfg], n=args.n, nsim=1, seed=args.seed, threads=1)[0]
    path0 = sr.path(0)
    arms = path0.arm_numbers()
    header = ["step", "arm"] + [f"prob{k + 1}" for k in range(sr.k)]
    rows = [
        [i + 1, arms[i]] + [_f(p) for p in path0.probs[i]]
        for i in range(sr.n)
    ]
    if args.format == "json":
        doc = {
            "procedure": sr.label,
            "n": sr.n,
            "seed": sr.seed,
            "target": list(cfg.target.rho),
            "assignments": arms,
            "probs": [[float(p) for p in row] for row in path0.probs],
        }
        text = json.dumps(doc, indent=2) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    elif args.out:
        fh, writer = _open_csv(args.out)
        with fh:
            writer.writerow(header)
            writer.writerows(rows)
    else:
        print(f"{sr.label}  (target {_ratio_text(cfg)}, n={sr.n}, seed={sr.seed})")
        print()
        print("assignments")
        print(_text_table(
            ["step", "arm"],
            [[str(i + 1), str(arms[i])] for i in range(sr.n)],
        ))
        print()
        print("conditional probabilities")
        print(_text_table(
            ["step"] + [f"p{k + 1}" for k in range(sr.k)],
            [
                [str(i + 1)] + [format(p, ".6f") for p in path0.probs[i]]
                for i in range(sr.n)
            ],
        ))
    return EXIT_OK


def _run_outputs(
    rc: RunConfig, srs: list[SimulationResult], out_dir: str, fmt: str,
    want_plots: bool,
) -> list[str]:
    written: list[str] = []

    def target(name: str) -> str:
        written.append(name)
        return os.path.join(out_dir, name)

    series_by_metric: dict[str, list[MetricSeries]] = {}
    finals: list[FinalImbalance] = []
    arps: list[ArpResult] = []
    for metric in rc.metrics:
        if metric in _SERIES_CALCS:
            series_by_metric[metric] = [_SERIES_CALCS[metric](sr) for sr in srs]
        elif metric == "brt":
            series_by_metric["brt"] = calc_brt(srs, rc.brt_normalization)
        elif metric == "final_imb":
            finals = [calc_final_imb(sr) for sr in srs]
        elif metric == "arp":
            arps = [eval_arp(sr) for sr in srs]

    if fmt == "json":
        doc: dict = {"metrics": {}}
        for metric, series in series_by_metric.items():
            doc["metrics"][metric] = [_series_to_doc(s) for s in series]
        if finals:
            doc["metrics"]["final_imb"] = [
                {"procedure": f.label, "values": [float(v) for v in f.values]}
                for f in finals
            ]
        if arps:
            doc["metrics"]["arp"] = [
                {
                    "procedure": a.label,
                    "target": list(a.rho),
                    "step": [int(v) for v in a.step],
                    "pi": [[float(x) for x in row] for row in a.pi],
                    "se": [[float(x) for x in row] for row in a.se],
                    "flagged": [[bool(x) for x in row] for row in a.flagged],
                }
                for a in arps
            ]
        with open(target("metrics.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        for metric, series in series_by_metric.items():
            _write_series_csv(target(f"{metric}.csv"), series)
        if finals:
            _write_final_imb_csv(target("final_imb.csv"), finals)
        if arps:
            _write_arp_csv(target("arp.csv"), arps)

    if want_plots:
        for metric, series in series_by_metric.items():
            title = _METRIC_TITLES.get(metric, metric)
            save_svg(
                line_chart(series, title=title, ylabel=metric),
                target(f"{metric}.svg"),
            )
        if "brt" in series_by_metric:
            series = series_by_metric["brt"]
            matrix = np.vstack([s.estimate for s in series])
            save_svg(
                heatmap(
                    [s.label for s in series],
                    [int(v) for v in series[0].step],
                    matrix,
                    title=_METRIC_TITLES["brt"],
                ),
                target("brt_heatmap.svg"),
            )
        if finals:
            save_svg(
                violin(
                    [(f.label, f.values) for f in finals],
                    title="Final imbalance distribution",
                ),
                target("final_imb_violin.svg"),
            )
    return written


def _cmd_run(args: argparse.Namespace) -> int:
    rc = load_run_config(args.config)
    seed = args.seed if args.seed is not None else rc.seed
    if seed is None:
        seed = DEFAULT_SEED
    threads = args.threads if args.threads is not None else rc.threads
    out_dir = args.out or rc.output_dir or "randomkit_out"
    want_plots = args.plots or rc.emit_plots
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    srs = simulate(list(rc.procedures), n=rc.n, nsim=rc.nsim, seed=seed,
                   threads=threads)
    elapsed = time.perf_counter() - t0
    written = _run_outputs(rc, srs, out_dir, args.format, want_plots)
    meta = {
        "tool": {"name": "randomkit", "version": __version__},
        "backend": backend_name(),
        "config_file": os.path.basename(args.config),
        "n": rc.n,
        "nsim": rc.nsim,
        "seed": seed,
        "procedures": [sr.label for sr in srs],
        "targets": [list(sr.cfg.target.rho) for sr in srs],
        "metrics": list(rc.metrics),
        "brt_normalization": rc.brt_normalization,
        "format": args.format,
        "files": written,
        "simulation_seconds": round(elapsed, 3),
        "notes": {"fi": _FI_NOTE},
    }
    meta_path = os.path.join(out_dir, "run_meta.json")
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(written) + 1} files to {out_dir}")
    return EXIT_OK


def _validate_checks(
    cfg: ProcedureConfig, sr: SimulationResult, exact: dict[str, np.ndarray],
) -> list[CompareReport]:
    reports = []
    for metric, values in exact.items():
        if metric == "arp_pi":
            arp = eval_arp(sr)
            for k in range(sr.k):
                col = MetricSeries(
                    metric="arp",
                    label=f"{sr.label} arm {k + 1}",
                    step=arp.step,
                    estimate=arp.pi[:, k],
                    se=arp.se[:, k],
                )
                reports.append(compare(col, values[:, k]))
        elif metric == "brt":
            reports.append(compare(calc_brt([sr], "absolute")[0], values))
        elif metric in _SERIES_CALCS:
            reports.append(compare(_SERIES_CALCS[metric](sr), values))
    return reports


def _cmd_validate(args: argparse.Namespace) -> int:
    _check_counts(args)
    cfg = parse_proc(args.proc, _parse_w_option(args.w), n=args.n, path="--proc")
    k = cfg.target.k
    if cfg.kind is Kind.DLUD and float(k) ** args.n > MAX_PATHS:
        print(
            f"error: unsupported: {cfg.kind.value} needs full path enumeration "
            f"({k}^{args.n} paths exceeds the {MAX_PATHS} limit)",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    try:
        if cfg.kind is Kind.DLUD:
            route = "paths"
            exact = exact_metrics_by_paths(cfg, n=args.n)
        else:
            route = "dp"
            exact = exact_metrics(cfg, n=args.n)
    except OracleLimitError as exc:
        print(f"error: unsupported: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sr = simulate([cfg], n=args.n, nsim=args.nsim, seed=args.seed,
                  threads=args.threads)[0]
    reports = _validate_checks(cfg, sr, exact)
    passed = all(r.ok for r in reports)
    doc = {
        "procedure": sr.label,
        "target": list(cfg.target.rho),
        "n": args.n,
        "nsim": args.nsim,
        "seed": sr.seed,
        "backend": backend_name(),
        "exact_engine": route,
        "z_max": 4.0,
        "checks": [asdict(r) for r in reports],
        "passed": passed,
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randomkit",
        description=(
            "Randomization procedures for multi-arm trials: sequence "
            "generation and Monte Carlo comparison of operating "
            "characteristics."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_proc_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--proc", required=True, metavar="PROC",
                       help="procedure, e.g. CRD or PBD:b=2 or BCDWIT:p=2/3,b=3")
        p.add_argument("--w", metavar="RATIO",
                       help="allocation ratio, comma separated, e.g. "
                            "--w 4,3,2,1 (default 1,1)")
        p.add_argument("--n", type=int, required=True, help="number of subjects")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help=f"random seed (default {DEFAULT_SEED})")

    seq = sub.add_parser(
        "sequence",
        help="generate one allocation sequence for a procedure",
        description=(
            "Generate a single allocation sequence and print the assignment "
            "and per-step conditional probability tables.  With --out the "
            "combined table is written as CSV (or JSON with --format json)."
        ),
    )
    add_proc_options(seq)
    seq.add_argument("--format", choices=("csv", "json"), default="csv")
    seq.add_argument("--out", help="output file (default: print tables)")
    seq.set_defaults(func=_cmd_sequence)

    run = sub.add_parser(
        "run",
        help="simulate a run configuration and write metric reports",
        description="Simulate every procedure in CONFIG and write one file "
                    "per requested metric plus run_meta.json into --out.",
    )
    run.add_argument("config", metavar="CONFIG", help="JSON run configuration")
    run.add_argument("--seed", type=int, default=None,
                     help="override the configuration seed")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: config, then "
                          "RANDOMKIT_THREADS, then 1); results do not depend "
                          "on this")
    run.add_argument("--out", default=None,
                     help="output directory (default: the configuration's "
                          "output_dir, else randomkit_out)")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--plots", action="store_true", help="also write SVG charts")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser(
        "validate",
        help="check simulated metrics against exact values",
        description=(
            "Simulate one procedure, compute its metrics, and compare them "
            "with the exact-distribution engine.  Prints a JSON report; "
            "exits 0 when every check passes and 1 otherwise."
        ),
    )
    add_proc_options(val)
    val.add_argument("--nsim", type=int, default=10_000,
                     help="number of replicates (default %(default)s)")
    val.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: RANDOMKIT_THREADS, then 1)")
    val.add_argument("--out", help="also write the report to this file")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
