"""Command-line pipeline orchestration.

Subcommands: ``compute-metrics``, ``select``, ``tradeoff``, ``synth-experiment``.

Exit codes: 0 success; 2 input or usage error; 3 a property check failed
(curve shape); 1 internal error.  Outputs never embed timestamps, so a
subcommand run twice with identical inputs produces byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import DGSelectError, InputError
from . import ingest
from .metrics import DEFAULT_GAMMAS, KernelConfig
from .selection import SelectionConfig, group_runs, select_ours, select_traditional
from .synth import SyntheticConfig, TrainConfig, run_experiment
from .tradeoff import (
    check_theorem1,
    load_problem,
    tradeoff_bruteforce,
    tradeoff_solver,
    write_curve_csv,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_CHECK_FAILED = 3


def _parse_gammas(text: str) -> KernelConfig:
    try:
        gammas = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise InputError(f"--gammas must be a comma list of numbers, got {text!r}")
    return KernelConfig(gammas=gammas)


def _parse_deltas(text: str) -> list[float]:
    """Parse 'start:stop:step'; start included, values run while v < stop + step/2."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"--deltas must look like start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise InputError(f"--deltas components must be numbers, got {text!r}")
    if step <= 0 or stop < start:
        raise InputError(f"--deltas needs step > 0 and stop >= start, got {text!r}")
    values = []
    k = 0
    while True:
        v = start + k * step
        if v >= stop + step / 2:
            break
        values.append(v)
        k += 1
    if not values:
        raise InputError(f"--deltas {text!r} produces no values")
    return values


def _selection_config(args) -> SelectionConfig:
    return SelectionConfig(
        alpha=args.alpha, beta=args.beta, pct_low=args.pct_low, pct_high=args.pct_high
    )


def _add_selection_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--alpha", type=float, default=0.2,
                        help="weight of the discrepancy term (default 0.2)")
    parser.add_argument("--beta", type=float, default=1.0,
                        help="scale of the cross-entropy term (default 1.0)")
    parser.add_argument("--pct-low", type=float, default=0.05,
                        help="lower cross-entropy percentile kept per run (default 0.05)")
    parser.add_argument("--pct-high", type=float, default=0.50,
                        help="upper cross-entropy percentile kept per run (default 0.50)")


def cmd_compute_metrics(args) -> int:
    kernel_cfg = _parse_gammas(args.gammas) if args.gammas else KernelConfig()
    archive = ingest.read_checkpoint_jsonl(args.features)
    records = ingest.compute_checkpoint_metrics(archive, kernel_cfg)
    ingest.write_metrics_csv(records, args.out)
    print(f"wrote {len(records)} checkpoint records to {args.out}")
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = _selection_config(args)
    records = ingest.read_metrics_csv(args.metrics)
    if not records:
        raise InputError(f"no checkpoint records in {args.metrics}")
    runs = group_runs(records)
    if args.method == "ours":
        result = select_ours(runs, cfg)
    else:
        result = select_traditional(runs, cfg)

    audit_path = None
    if args.audit_out:
        with open(args.audit_out, "w", encoding="utf-8", newline="") as fh:
            fh.write("run_id,step,ce,mmd,loss,acc,test_acc\n")
            for row in result.audit:
                ta = "" if row.test_acc is None else f"{row.test_acc:.17g}"
                fh.write(
                    f"{row.run_id},{row.step},{row.ce:.17g},{row.mmd:.17g},"
                    f"{row.loss:.17g},{row.acc:.17g},{ta}\n"
                )
        audit_path = args.audit_out

    out = {
        "chosen": {"run_id": result.chosen[0], "step": result.chosen[1]},
        "criterion_value": result.criterion_value,
        "method": result.method,
        "candidate_count": result.candidate_count,
        "audit_path": audit_path,
    }
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    problem = load_problem(args.problem)
    deltas = _parse_deltas(args.deltas)
    if args.solver == "bruteforce":
        curve = tradeoff_bruteforce(problem, deltas, grid_step=args.grid_step)
        default_tol = 2.0 * args.grid_step
    else:
        curve = tradeoff_solver(problem, deltas)
        default_tol = 2e-3
    write_curve_csv(curve, args.out)

    tol_mono = args.tol_mono if args.tol_mono is not None else default_tol
    tol_convex = args.tol_convex if args.tol_convex is not None else default_tol
    report = check_theorem1(curve, tol_mono=tol_mono, tol_convex=tol_convex)
    mono = "PASS" if report.monotone_pass else "FAIL"
    convex = "PASS" if report.convex_pass else "FAIL"
    print(f"theorem1: monotone={mono} convex={convex}")
    if not report.all_pass:
        print(
            f"worst violations: monotone {report.worst_monotone_violation:.3e}, "
            f"convexity {report.worst_convexity_violation:.3e}",
            file=sys.stderr,
        )
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _render_experiment_svg(report: dict) -> str:
    """Static SVG: per-trial ce and mmd trajectories plus both chosen points."""
    width, height = 860.0, 520.0
    mleft, mright, mtop, mbottom = 60.0, 20.0, 40.0, 45.0

    steps = []
    values = []
    for trial in report["trials"]:
        for cp in trial["checkpoints"]:
            steps.append(cp["step"])
            values.extend([cp["ce"], cp["mmd"]])
    x_lo, x_hi = min(steps), max(steps)
    y_lo, y_hi = 0.0, max(values) * 1.05 + 1e-9
    if x_hi == x_lo:
        x_hi = x_lo + 1

    def sx(v):
        return mleft + (v - x_lo) / (x_hi - x_lo) * (width - mleft - mright)

    def sy(v):
        return height - mbottom - (v - y_lo) / (y_hi - y_lo) * (height - mtop - mbottom)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="15" '
        'font-family="sans-serif">validation cross-entropy and domain MMD per trial</text>',
        f'<line x1="{mleft:.1f}" y1="{height - mbottom:.1f}" x2="{width - mright:.1f}" '
        f'y2="{height - mbottom:.1f}" stroke="black"/>',
        f'<line x1="{mleft:.1f}" y1="{mtop:.1f}" x2="{mleft:.1f}" '
        f'y2="{height - mbottom:.1f}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12:.1f}" text-anchor="middle" '
        'font-size="12" font-family="sans-serif">training step</text>',
    ]
    for trial in report["trials"]:
        cps = trial["checkpoints"]
        ce_pts = " ".join(f"{sx(c['step']):.2f},{sy(c['ce']):.2f}" for c in cps)
        mmd_pts = " ".join(f"{sx(c['step']):.2f},{sy(c['mmd']):.2f}" for c in cps)
        parts.append(
            f'<polyline points="{ce_pts}" fill="none" stroke="#4878cf" '
            'stroke-width="1" opacity="0.55"/>'
        )
        parts.append(
            f'<polyline points="{mmd_pts}" fill="none" stroke="#ee854a" '
            'stroke-width="1" opacity="0.55"/>'
        )

    by_key = {
        (t["run_id"], c["step"]): c for t in report["trials"] for c in t["checkpoints"]
    }
    for method, color in (("ours", "#2e8b57"), ("traditional", "#c44e52")):
        pick = report["global"][method]
        cp = by_key[(pick["run_id"], pick["step"])]
        parts.append(
            f'<circle cx="{sx(cp["step"]):.2f}" cy="{sy(cp["ce"]):.2f}" r="6" '
            f'fill="none" stroke="{color}" stroke-width="2.5"/>'
        )
        parts.append(
            f'<circle cx="{sx(cp["step"]):.2f}" cy="{sy(cp["mmd"]):.2f}" r="6" '
            f'fill="none" stroke="{color}" stroke-width="2.5"/>'
        )

    legend = [
        ("#4878cf", "cross-entropy"),
        ("#ee854a", "MMD"),
        ("#2e8b57", "chosen (combined loss)"),
        ("#c44e52", "chosen (accuracy)"),
    ]
    for i, (color, label) in enumerate(legend):
        y = mtop + 14 + 18 * i
        parts.append(
            f'<line x1="{width - 230:.1f}" y1="{y:.1f}" x2="{width - 205:.1f}" '
            f'y2="{y:.1f}" stroke="{color}" stroke-width="3"/>'
        )
        parts.append(
            f'<text x="{width - 198:.1f}" y="{y + 4:.1f}" font-size="12" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_synth_experiment(args) -> int:
    scfg = SyntheticConfig(seed=args.seed, n_per_domain=args.n_per_domain)
    tcfg = TrainConfig(
        steps=args.steps,
        checkpoint_every=args.checkpoint_every,
        batch_size=args.batch_size,
        seed=args.train_seed,
    )
    selection_cfg = _selection_config(args)
    kernel_cfg = _parse_gammas(args.gammas) if args.gammas else KernelConfig()

    report, results = run_experiment(
        scfg, tcfg, args.trials, selection_cfg, kernel_cfg=kernel_cfg
    )

    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")

    if args.checkpoints_out:
        os.makedirs(args.checkpoints_out, exist_ok=True)
        for result in results:
            path = os.path.join(args.checkpoints_out, f"{result.run.run_id}.jsonl")
            ingest.write_checkpoint_jsonl(result.archive, path)
    if args.metrics_out:
        records = [c for r in results for c in r.run.checkpoints]
        ingest.write_metrics_csv(records, args.metrics_out)
    if args.plot:
        with open(args.plot, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_render_experiment_svg(report))

    summary = report["per_trial_summary"]
    mean_ours = summary["mean_test_acc_ours"]
    mean_trad = summary["mean_test_acc_traditional"]
    direction = "n/a"
    if mean_ours is not None and mean_trad is not None:
        direction = "ours>=traditional" if mean_ours >= mean_trad else "traditional>ours"
    print(
        f"trials={args.trials} mean_test_acc_ours={mean_ours} "
        f"mean_test_acc_traditional={mean_trad} direction={direction}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgselect",
        description="Model selection for domain generalization: "
        "combined risk/discrepancy scoring and trade-off curve checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-metrics", help="checkpoint JSONL -> metrics CSV")
    p.add_argument("--features", required=True, help="checkpoint JSONL path")
    p.add_argument("--out", required=True, help="metrics CSV output path")
    p.add_argument("--gammas", default=None,
                   help=f"comma list of kernel gammas (default {','.join(str(g) for g in DEFAULT_GAMMAS)})")
    p.set_defaults(func=cmd_compute_metrics)

    p = sub.add_parser("select", help="pick a checkpoint from a metrics CSV")
    p.add_argument("--metrics", required=True, help="metrics CSV path")
    p.add_argument("--method", choices=("ours", "traditional"), required=True)
    p.add_argument("--audit-out", default=None, help="optional audit-table CSV path")
    _add_selection_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("tradeoff", help="compute a risk/discrepancy trade-off curve")
    p.add_argument("--problem", required=True, help="problem definition JSON")
    p.add_argument("--deltas", required=True, help="risk grid as start:stop:step")
    p.add_argument("--solver", choices=("sweep", "bruteforce"), default="sweep")
    p.add_argument("--grid-step", type=float, default=1e-3,
                   help="simplex grid step for --solver bruteforce (default 1e-3)")
    p.add_argument("--tol-mono", type=float, default=None,
                   help="monotonicity tolerance (default 2*grid-step for bruteforce, 2e-3 for sweep)")
    p.add_argument("--tol-convex", type=float, default=None,
                   help="convexity tolerance (same defaults as --tol-mono)")
    p.add_argument("--out", required=True, help="curve CSV output path")
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("synth-experiment", help="synthetic multi-domain random-search run")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0, help="data seed")
    p.add_argument("--train-seed", type=int, default=0, help="base seed for trial training")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--checkpoint-every", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--n-per-domain", type=int, default=400)
    p.add_argument("--out", required=True, help="report JSON output path")
    p.add_argument("--checkpoints-out", default=None,
                   help="directory for per-trial checkpoint JSONL files")
    p.add_argument("--metrics-out", default=None, help="combined metrics CSV path")
    p.add_argument("--plot", default=None, help="write an SVG of the trajectories here")
    p.add_argument("--gammas", default=None, help="comma list of kernel gammas")
    _add_selection_flags(p)
    p.set_defaults(func=cmd_synth_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DGSelectError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
