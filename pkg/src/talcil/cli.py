"""Single entry point exposing the library over subcommands.

Exit codes (also summarized in --help):

    0  success
    1  unexpected internal error
    2  usage error (bad flags / unknown subcommand)
    3  malformed or invalid experiment spec
    4  argument outside an operation's mathematical domain
    5  solver or training failure

On any failure a one-line JSON error record goes to stderr.  All tabular
outputs are CSV written atomically; repeated runs with the same spec and
seeds are byte-identical (the loss micro-benchmark necessarily excepted:
it reports wall-clock times).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    DEFAULT_BATCH_SIZES,
    DEFAULT_CLASS_COUNTS,
    overhead_slopes,
    run_loss_benchmark,
)
from .calibration import solve_calibration
from .config import ExperimentSpec, load_spec
from .errors import DomainError, SolverError, SpecError, TalcilError, TrainingError
from .kernel import MemoryKernel, QState, update_tal
from .metrics import forgetting_curve
from .output import write_csv, write_jsonl, write_manifest
from .sim import ABLATION_LAMBDAS, ABLATION_RS, ablate, fresh_state, make_gaussian_tasks, train_incremental
from .streams import TaskSchedule, generate_stream, sample_dominance_pair, verify_theorem1

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_SPEC = 3
EXIT_DOMAIN = 4
EXIT_SOLVER = 5

ENV_OUTPUT_DIR = "TALCIL_OUTPUT_DIR"


def _resolve_output_dir(flag_value, spec_value=None) -> Path:
    for candidate in (flag_value, spec_value, os.environ.get(ENV_OUTPUT_DIR)):
        if candidate:
            return Path(candidate)
    return Path("runs")


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_calibrate(args) -> int:
    result = solve_calibration(args.classes, args.exponent)
    print(f"classes={result.class_count} exponent={result.r!r}")
    print(f"x_star={result.x_star!r}")
    print(f"alpha={result.alpha!r}")
    print(f"residual={result.residual!r}")
    return EXIT_OK


def _cmd_simulate_stream(args) -> int:
    schedule = TaskSchedule.uniform(
        class_count=args.classes,
        tasks=args.tasks,
        samples_per_class=args.per_class,
        replay_per_old_class=args.replay,
        shuffle_seed=args.seed,
    )
    trace = generate_stream(schedule)
    kernel = MemoryKernel(lam=args.lam)
    state = QState.zeros(trace.class_count)
    q_rows = []
    for n in range(len(trace)):
        polarity = np.where(np.arange(trace.class_count) == trace.labels[n], 1.0, -1.0)
        state = update_tal(state, kernel, args.exponent, polarity)
        q_rows.extend(
            (n, k, float(state.q[k])) for k in range(trace.class_count)
        )
    out_dir = _resolve_output_dir(args.output_dir)
    write_csv(
        out_dir / "trace.csv",
        ("step", "label"),
        ((n, int(trace.labels[n])) for n in range(len(trace))),
    )
    s_rows = []
    for k in range(trace.class_count):
        s_k = trace.cumulative_positives(k)
        s_rows.extend((n, k, int(s_k[n])) for n in range(len(trace)))
    write_csv(out_dir / "s_curves.csv", ("step", "class", "cumulative_positives"), s_rows)
    write_csv(out_dir / "q_trajectory.csv", ("step", "class_id", "q_value"), q_rows)
    spec_dict = {
        "command": "simulate-stream",
        "classes": args.classes,
        "tasks": args.tasks,
        "per_class": args.per_class,
        "replay": args.replay,
        "lambda": args.lam,
        "r": args.exponent,
    }
    write_manifest(out_dir, spec_dict, [args.seed], __version__)
    print(f"wrote trace ({len(trace)} steps), S curves and Q trajectory to {out_dir}")
    return EXIT_OK


def _cmd_verify_theorem1(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    held = strict_held = 0
    total = 0
    for lam in args.lambdas:
        kernel = MemoryKernel(lam=lam)
        for i in range(args.pairs):
            seq_a, seq_b = sample_dominance_pair(rng, args.length, args.positives)
            verdict = verify_theorem1(kernel, (seq_a, seq_b))
            total += 1
            held += verdict.conclusion_held
            strict_held += verdict.strict_dominance and verdict.gap_by_parts > 0.0
            rows.append(
                (
                    i,
                    lam,
                    args.length,
                    args.positives,
                    verdict.q_a,
                    verdict.q_b,
                    verdict.phi_a,
                    verdict.phi_b,
                    verdict.dominance_held,
                    verdict.strict_dominance,
                    verdict.conclusion_held,
                )
            )
    out_dir = _resolve_output_dir(args.output_dir)
    write_csv(
        out_dir / "theorem1_pairs.csv",
        (
            "pair_id",
            "lambda",
            "length",
            "positives",
            "q_a",
            "q_b",
            "phi_a",
            "phi_b",
            "dominance_held",
            "strict_dominance",
            "conclusion_held",
        ),
        rows,
    )
    write_manifest(
        out_dir,
        {
            "command": "verify-theorem1",
            "pairs": args.pairs,
            "length": args.length,
            "positives": args.positives,
            "lambdas": list(args.lambdas),
        },
        [args.seed],
        __version__,
    )
    print(f"conclusion held in {held}/{total} pairs (strict in {strict_held})")
    return EXIT_OK if held == total else EXIT_SOLVER


def _report_files(report, seed: int):
    acc_rows = []
    n_tasks = report.accuracy_matrix.shape[0]
    for t in range(n_tasks):
        for u in range(t + 1):
            acc_rows.append((t, u, report.accuracy_matrix[t, u]))
    per_class_rows = [
        (
            row.task_id,
            row.class_id,
            row.precision if row.precision_defined else None,
            row.recall,
            row.support,
            row.q_value,
            row.precision_defined,
        )
        for row in report.per_class
    ]
    q_rows = []
    for step, q in report.q_snapshots:
        q_rows.extend((step, k, float(q[k])) for k in range(q.shape[0]))
    return {
        f"accuracy_matrix_seed{seed}.csv": (
            ("after_task", "on_task", "accuracy"),
            acc_rows,
        ),
        f"per_class_seed{seed}.csv": (
            (
                "task_id",
                "class_id",
                "precision",
                "recall",
                "support",
                "q_value",
                "precision_defined",
            ),
            per_class_rows,
        ),
        f"q_snapshots_seed{seed}.csv": (("step", "class_id", "q_value"), q_rows),
    }


def _run_experiment(spec: ExperimentSpec, seed: int):
    dataset, schedule = make_gaussian_tasks(
        spec.dataset.classes,
        spec.dataset.dim,
        spec.dataset.tasks,
        spec.dataset.per_class,
        spec.dataset.sep,
        seed,
        test_per_class=spec.dataset.test_per_class,
        cov_scale=spec.dataset.cov_scale,
        replay_per_old_class=spec.schedule.replay_per_class,
    )
    events: list[dict] = []
    state = fresh_state(
        spec.loss.kind.lower(),
        spec.dataset.dim,
        lam=spec.loss.lam,
        r=spec.loss.r,
        epsilon=spec.loss.epsilon,
        lr=spec.schedule.lr,
        epochs_per_task=spec.schedule.epochs,
        batch_size=spec.schedule.batch_size,
        seed=seed,
        hidden=spec.schedule.hidden,
        exploratory=spec.loss.exploratory,
    )
    report = train_incremental(state, dataset, schedule, event_sink=events.append)
    return report, events


def _cmd_train(args) -> int:
    spec = load_spec(args.spec)
    out_dir = _resolve_output_dir(args.output_dir, spec.output_dir)
    csv_files: dict[str, tuple] = {}
    jsonl_files: dict[str, list] = {}
    summary_rows = []
    a_means, a_lasts = [], []
    for seed in spec.seeds:
        report, events = _run_experiment(spec, seed)
        csv_files.update(_report_files(report, seed))
        jsonl_files[f"events_seed{seed}.jsonl"] = events
        summary_rows.append((seed, report.a_mean, report.a_last))
        a_means.append(report.a_mean)
        a_lasts.append(report.a_last)
    summary_rows.append(("mean", float(np.mean(a_means)), float(np.mean(a_lasts))))
    summary_rows.append(("std", float(np.std(a_means)), float(np.std(a_lasts))))
    for name, (header, rows) in csv_files.items():
        write_csv(out_dir / name, header, rows)
    for name, events in jsonl_files.items():
        write_jsonl(out_dir / name, events)
    write_csv(out_dir / "summary.csv", ("seed", "a_mean", "a_last"), summary_rows)
    write_manifest(out_dir, spec.resolved_dict(), spec.seeds, __version__)
    print(
        f"{spec.loss.kind} over {len(spec.seeds)} seeds: "
        f"a_mean={np.mean(a_means):.4f}+-{np.std(a_means):.4f} "
        f"a_last={np.mean(a_lasts):.4f}+-{np.std(a_lasts):.4f} -> {out_dir}"
    )
    return EXIT_OK


def _cmd_ablate(args) -> int:
    spec = load_spec(args.spec)
    out_dir = _resolve_output_dir(args.output_dir, spec.output_dir)
    lambdas = tuple(args.lambdas) if args.lambdas else ABLATION_LAMBDAS
    rs = tuple(args.rs) if args.rs else ABLATION_RS
    dataset, schedule = make_gaussian_tasks(
        spec.dataset.classes,
        spec.dataset.dim,
        spec.dataset.tasks,
        spec.dataset.per_class,
        spec.dataset.sep,
        spec.seeds[0],
        test_per_class=spec.dataset.test_per_class,
        cov_scale=spec.dataset.cov_scale,
        replay_per_old_class=spec.schedule.replay_per_class,
    )
    rows = ablate(
        dataset,
        schedule,
        spec.seeds,
        lambdas=lambdas,
        rs=rs,
        lr=spec.schedule.lr,
        epochs_per_task=spec.schedule.epochs,
        batch_size=spec.schedule.batch_size,
        hidden=spec.schedule.hidden,
    )
    write_csv(
        out_dir / "ablation.csv",
        ("loss", "lambda", "r", "seed", "a_mean", "a_last"),
        [(r["loss"], r["lam"], r["r"], r["seed"], r["a_mean"], r["a_last"]) for r in rows],
    )
    summary = {}
    for row in rows:
        summary.setdefault((row["loss"], row["lam"], row["r"]), []).append(
            (row["a_mean"], row["a_last"])
        )
    summary_rows = []
    for (loss, lam, r), cells in sorted(
        summary.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0.0, kv[0][2] or 0.0)
    ):
        arr = np.array(cells)
        summary_rows.append(
            (
                loss,
                lam,
                r,
                float(arr[:, 0].mean()),
                float(arr[:, 0].std()),
                float(arr[:, 1].mean()),
                float(arr[:, 1].std()),
            )
        )
    write_csv(
        out_dir / "ablation_summary.csv",
        ("loss", "lambda", "r", "a_mean_mean", "a_mean_std", "a_last_mean", "a_last_std"),
        summary_rows,
    )
    write_manifest(out_dir, spec.resolved_dict(), spec.seeds, __version__)
    print(f"ablation grid {len(lambdas)}x{len(rs)} (+CE) over {len(spec.seeds)} seeds -> {out_dir}")
    return EXIT_OK


def _cmd_bench_loss(args) -> int:
    rows = run_loss_benchmark(
        batch_sizes=args.batch_sizes or DEFAULT_BATCH_SIZES,
        class_counts=args.class_counts or DEFAULT_CLASS_COUNTS,
        repeats=args.repeats,
    )
    out_dir = _resolve_output_dir(args.output_dir)
    write_csv(
        out_dir / "bench.csv",
        ("batch_size", "class_count", "ce_seconds", "tal_seconds", "overhead_seconds"),
        [
            (r.batch_size, r.class_count, r.ce_seconds, r.tal_seconds, r.overhead_seconds)
            for r in rows
        ],
    )
    write_manifest(
        out_dir,
        {
            "command": "bench-loss",
            "batch_sizes": list(args.batch_sizes or DEFAULT_BATCH_SIZES),
            "class_counts": list(args.class_counts or DEFAULT_CLASS_COUNTS),
            "repeats": args.repeats,
        },
        [0],
        __version__,
    )
    slopes = overhead_slopes(rows)
    print(
        "overhead slope {overhead_slope_per_element:.3e} s/elem vs baseline slope "
        "{ce_slope_per_element:.3e} s/elem; median overhead "
        "{median_overhead_seconds:.3e} s".format(**slopes)
    )
    print(f"wrote bench.csv -> {out_dir}")
    return EXIT_OK


def _read_csv(path: Path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def _seed_files(run_dir: Path, prefix: str):
    found = sorted(
        run_dir.glob(f"{prefix}_seed*.csv"),
        key=lambda p: int(p.stem.replace(f"{prefix}_seed", "")),
    )
    if not found:
        raise SpecError(f"no {prefix}_seed*.csv files under {run_dir}")
    return found


def _cmd_plotdata(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise SpecError(f"run directory not found: {run_dir}")
    out_rows: list[tuple] = []
    if args.what in ("accuracy", "forgetting"):
        for path in _seed_files(run_dir, "accuracy_matrix"):
            seed = int(path.stem.replace("accuracy_matrix_seed", ""))
            _, rows = _read_csv(path)
            n_tasks = max(int(r[0]) for r in rows) + 1
            matrix = np.full((n_tasks, n_tasks), np.nan)
            for after, on, acc in rows:
                matrix[int(after), int(on)] = float(acc)
            if args.what == "accuracy":
                out_rows.extend(
                    (seed, int(r[0]), int(r[1]), float(r[2])) for r in rows
                )
            else:
                for task, curve in enumerate(forgetting_curve(matrix)):
                    out_rows.extend(
                        (seed, task, task + i, float(v)) for i, v in enumerate(curve)
                    )
        header = (
            ("seed", "after_task", "on_task", "accuracy")
            if args.what == "accuracy"
            else ("seed", "task", "after_task", "accuracy")
        )
    elif args.what == "per-class":
        header = None
        for path in _seed_files(run_dir, "per_class"):
            seed = int(path.stem.replace("per_class_seed", ""))
            cols, rows = _read_csv(path)
            header = ("seed", *cols)
            out_rows.extend((seed, *r) for r in rows)
    elif args.what == "q":
        header = None
        for path in _seed_files(run_dir, "q_snapshots"):
            seed = int(path.stem.replace("q_snapshots_seed", ""))
            cols, rows = _read_csv(path)
            header = ("seed", *cols)
            out_rows.extend((seed, *r) for r in rows)
    else:  # unreachable: argparse constrains choices
        raise SpecError(f"unknown plotdata kind {args.what!r}")
    lines = [",".join(header)]
    lines.extend(",".join(str(c) for c in row) for row in out_rows)
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text)
        print(f"wrote {len(out_rows)} rows -> {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talcil",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"talcil {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="solve the steady-state calibration for (C, r)")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--exponent", type=float, required=True)
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("simulate-stream", help="generate a task stream, S curves and Q trajectory")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--tasks", type=int, default=2)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--replay", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lam", type=float, default=0.995, help="memory parameter")
    p.add_argument("--exponent", type=float, default=1.0, help="attenuation steepness r")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(handler=_cmd_simulate_stream)

    p = sub.add_parser("verify-theorem1", help="randomized monotonicity check on dominance pairs")
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--length", type=int, default=600)
    p.add_argument("--positives", type=int, default=120)
    p.add_argument("--lambdas", type=_float_list, default=[0.9, 0.99])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(handler=_cmd_verify_theorem1)

    p = sub.add_parser("train", help="run the incremental experiment a spec file describes")
    p.add_argument("--spec", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("ablate", help="grid over (lambda, r) plus a CE baseline row")
    p.add_argument("--spec", required=True)
    p.add_argument("--lambdas", type=_float_list, default=None)
    p.add_argument("--rs", type=_float_list, default=None)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("bench-loss", help="per-batch loss timing, CE vs adjusted")
    p.add_argument("--batch-sizes", type=_int_list, default=None)
    p.add_argument("--class-counts", type=_int_list, default=None)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(handler=_cmd_bench_loss)

    p = sub.add_parser("plotdata", help="reshape a run directory into long-format tables")
    p.add_argument("--run", required=True)
    p.add_argument("--what", choices=("accuracy", "forgetting", "per-class", "q"), required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(handler=_cmd_plotdata)

    return parser


def _error_record(exc: Exception, code: int) -> str:
    return json.dumps(
        {"error": type(exc).__name__, "message": str(exc), "exit_code": code},
        sort_keys=True,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except SpecError as exc:
        print(_error_record(exc, EXIT_SPEC), file=sys.stderr)
        return EXIT_SPEC
    except (DomainError, IndexError) as exc:
        print(_error_record(exc, EXIT_DOMAIN), file=sys.stderr)
        return EXIT_DOMAIN
    except (SolverError, TrainingError) as exc:
        print(_error_record(exc, EXIT_SOLVER), file=sys.stderr)
        return EXIT_SOLVER
    except TalcilError as exc:
        print(_error_record(exc, EXIT_INTERNAL), file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - last resort
        print(_error_record(exc, EXIT_INTERNAL), file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
