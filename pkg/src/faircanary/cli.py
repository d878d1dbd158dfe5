"""
Command line entry point.

Machine-readable output (NDJSON / CSV) goes to stdout or the named files;
human summaries go to stderr. Exit codes: 0 ok, 1 bias alert with
``--fail-on-alert``, 2 usage error, 3 data or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from .config import MonitorConfig, load_config, load_document
from .errors import FairCanaryError
from .events import PredictionEvent, read_events, write_events
from .explanations import qdda
from .metrics import qdd_per_bin
from .mitigation import apply_mitigation, mitigate_groups
from .pipeline import (
    alert_lines,
    events_by_window,
    group_sample,
    replay,
    split_groups,
    write_reports,
)
from .synthetic import ScenarioSpec, write_scenario
from .threshold import threshold_sweep

EXIT_OK, EXIT_ALERT, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


@contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        yield fh


def _window_groups(
    events: Sequence[PredictionEvent], config: MonitorConfig, window_id: int
) -> tuple[list[PredictionEvent], list[PredictionEvent], list[PredictionEvent]]:
    windows = events_by_window(events, config)
    if window_id not in windows:
        raise FairCanaryError(
            f"window {window_id} has no events (windows present: {sorted(windows)})"
        )
    members = windows[window_id]
    t_events, r_events = split_groups(members, config.target_group, config.reference_group)
    return members, t_events, r_events


def _samples(config: MonitorConfig, t_events, r_events):
    return (
        group_sample(t_events, config.target_group),
        group_sample(r_events, config.reference_group),
    )


def cmd_simulate(args: argparse.Namespace, config: MonitorConfig) -> int:
    section = dict(config.scenario)
    if args.scenario:
        section.update(load_document(args.scenario))
    if args.seed is not None:
        section["seed"] = args.seed
    if args.days is not None:
        section["days"] = args.days
    if args.per_day is not None:
        section["events_per_day"] = args.per_day
    if args.bug_days is not None:
        section["bug_days"] = [int(d) for d in args.bug_days.split(",") if d.strip()]
    spec = ScenarioSpec.from_dict(section)
    with _output(args.out) as fh:
        n = write_scenario(spec, fh)
    _err(
        f"wrote {n} events: {spec.days} day(s) x {spec.events_per_day}, seed {spec.seed}, "
        f"bug days {list(spec.bug_days)}"
    )
    return EXIT_OK


def cmd_monitor(args: argparse.Namespace, config: MonitorConfig) -> int:
    reports = replay(read_events(args.input), config, max_workers=args.workers)
    if args.report_dir:
        write_reports(reports, args.report_dir)
    lines = alert_lines(reports)
    for line in lines:
        print(line)
    if args.alerts_out:
        with _output(args.alerts_out) as fh:
            for line in lines:
                fh.write(line + "\n")
    fired = [a for r in reports for a in r.bias_alerts]
    for r in reports:
        qdd = "n/a" if r.qdd is None else ", ".join(f"{v:.2f}" for v in r.qdd.per_bin_qdd)
        rules = ",".join(a.rule for a in r.bias_alerts) or "-"
        _err(f"window {r.window_id}: n={r.n_events} qdd=[{qdd}] alerts={rules}")
    _err(f"{len(reports)} window(s), {len(fired)} bias alert(s)")
    return EXIT_ALERT if fired and args.fail_on_alert else EXIT_OK


def cmd_report(args: argparse.Namespace, config: MonitorConfig) -> int:
    events = read_events(args.input)
    t_events, r_events = split_groups(events, config.target_group, config.reference_group)
    if not t_events or not r_events:
        raise FairCanaryError("both groups need events to compute a base-rate report")
    report = qdd_per_bin(*_samples(config, t_events, r_events), config.bins)
    with _output(args.out) as fh:
        fh.write(json.dumps(report.to_dict(), separators=(",", ":")) + "\n")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace, config: MonitorConfig) -> int:
    _, t_events, r_events = _window_groups(read_events(args.input), config, args.window)
    report = qdda(
        t_events, r_events, config.bins, features=config.features,
        optional=config.optional_features,
        target_group=config.target_group, reference_group=config.reference_group,
        window_id=args.window,
    )
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(
        ["feature", "abs_mass", "share"] + [f"qdda_bin_{b}" for b in range(report.bin_count)]
    )
    for feature, mass in report.top_features(args.top_k):
        writer.writerow(
            [feature, repr(mass), repr(report.share(feature))]
            + [repr(v) for v in report.column(feature)]
        )
    worst = max(abs(r) for r in report.residual_per_bin) if report.bin_count else 0.0
    _err(f"window {args.window}: QDD {list(report.per_bin_qdd)}, max |residual| {worst:.3g}")
    return EXIT_OK


def cmd_mitigate(args: argparse.Namespace, config: MonitorConfig) -> int:
    events = read_events(args.input)
    _, t_events, r_events = _window_groups(events, config, args.window)
    override = {
        "target": config.target_group,
        "reference": config.reference_group,
    }.get(args.disadvantaged)
    mapping = mitigate_groups(
        t_events, r_events, config.target_group, config.reference_group, override
    )
    with _output(args.out) as fh:
        mapping.write_csv(fh)
    raised = sum(e.mitigated_score > e.original_score for e in mapping.entries)
    lowered = sum(e.mitigated_score < e.original_score for e in mapping.entries)
    _err(
        f"mitigating {mapping.disadvantaged} against {mapping.advantaged}: "
        f"{len(mapping)} scores, {raised} raised, {lowered} lowered"
    )
    if args.apply:
        mitigated = apply_mitigation(events, mapping)
        _, t_after, r_after = _window_groups(mitigated, config, args.window)
        bins = min(config.bins, len(t_after), len(r_after))
        post = qdd_per_bin(*_samples(config, t_after, r_after), bins)
        _err(f"post-mitigation QDD (B={bins}): {list(post.per_bin_qdd)}")
        with _output(args.mitigated_out) as fh:
            write_events(mitigated, fh)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, config: MonitorConfig) -> int:
    try:
        thresholds = [float(t) for t in args.thresholds.split(",") if t.strip()]
    except ValueError:
        thresholds = []
    if not thresholds:
        raise _UsageError("--thresholds needs at least one number")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["window_id", "threshold", "spd", "di", "spd_flag", "di_flag"])
    for window_id, members in events_by_window(read_events(args.input), config).items():
        t_events, r_events = split_groups(members, config.target_group, config.reference_group)
        if not t_events or not r_events:
            _err(f"window {window_id}: a group is empty, skipped")
            continue
        t_sample, r_sample = _samples(config, t_events, r_events)
        for row in threshold_sweep(r_sample, t_sample, thresholds):
            writer.writerow([
                window_id, f"{row.threshold:g}", repr(row.spd),
                "" if row.di is None else repr(row.di),
                int("spd" in row.flags), int("di" in row.flags),
            ])
    return EXIT_OK


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="YAML/JSON monitor config (default: $FAIRCANARY_CONFIG)"
    )
    parser = argparse.ArgumentParser(
        prog="faircanary", description="Continuous fairness monitoring with QDD."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate the salary case study")
    p.add_argument("--out", required=True, help="NDJSON output path, '-' for stdout")
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--per-day", type=int)
    p.add_argument("--bug-days", help="comma-separated 1-based days, '' for none")
    p.add_argument("--scenario", help="separate scenario document overriding config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("monitor", parents=[common], help="replay events, emit reports and alerts")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--report-dir")
    p.add_argument("--alerts-out")
    p.add_argument("--fail-on-alert", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("report", parents=[common], help="one QDD report over a whole file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("explain", parents=[common], help="per-feature QDDA for one window")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--top-k", type=int, default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("mitigate", parents=[common], help="quantile-norm one window")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--out", default="-", help="mitigation map CSV")
    p.add_argument("--apply", action="store_true")
    p.add_argument("--mitigated-out", help="mitigated NDJSON (with --apply)")
    p.add_argument("--disadvantaged", choices=("auto", "target", "reference"), default="auto")
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("compare-metrics", parents=[common], help="SPD / DI table per window")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--thresholds", required=True, help="comma-separated score thresholds")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "mitigate" and args.apply and not args.mitigated_out:
        parser.error("--apply requires --mitigated-out")
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        _err(f"faircanary: error: {exc}")
        return EXIT_USAGE
    except (FairCanaryError, OSError) as exc:
        _err(f"faircanary: {type(exc).__name__}: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
