"""Command-line front end: single runs, sweep comparisons, chart rendering.

    uavfl simulate --config run.cfg [--seed N] [--out DIR]
    uavfl compare --config run.cfg --sweep scheme=opt,discard,async \\
        --seeds 1,2,3 --out sweep_dir
    uavfl chart --in sweep_dir/sweep.csv --out chart.svg

Exit codes: 0 success, 1 config/usage validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import pathlib
import sys

import numpy as np

from .config import ConfigError, SimConfig, parse_config, serialize_config, validate
from .sim import METRICS_HEADER, RoundMetrics, average_comm_overhead, run_simulation
from .svgchart import emit_svg_chart

__all__ = ["main", "write_metrics_csv", "write_summary_json"]

SCHEMA_VERSION = 1
_SWEEP_AXES = ("scheme", "b", "tau_max")


def write_metrics_csv(path, metrics: list[RoundMetrics]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for m in metrics:
            fh.write(m.csv_row() + "\n")


def write_summary_json(path, config: SimConfig, metrics: list[RoundMetrics]) -> None:
    final = metrics[-1] if metrics else None
    payload = {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "rounds": len(metrics),
        "final_accuracy": final.test_accuracy if final else None,
        "final_loss": final.test_loss if final else None,
        "mean_overhead_mb": average_comm_overhead(metrics),
        "config": {
            f.name: (list(v) if isinstance(v := getattr(config, f.name), tuple) else v)
            for f in dataclasses.fields(SimConfig)
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path: str, seed: int | None) -> SimConfig:
    config = parse_config(path)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def cmd_simulate(args) -> int:
    config = _load_config(args.config, args.seed)
    out_dir = _ensure_dir(args.out)
    metrics, _ = run_simulation(config)
    write_metrics_csv(out_dir / "metrics.csv", metrics)
    write_summary_json(out_dir / "summary.json", config, metrics)
    print(f"wrote {out_dir / 'metrics.csv'} ({len(metrics)} rounds)")
    return 0


def _sweep_cell_config(base: SimConfig, axis: str, value) -> SimConfig:
    if axis == "scheme":
        # baselines have no intermediate transmissions: force b = 1 for them
        b = base.b if value == "opt" else 1
        return dataclasses.replace(base, scheme=value, b=b)
    if axis == "b":
        return dataclasses.replace(base, b=int(value))
    return dataclasses.replace(base, tau_max_s=float(value))


def _parse_sweep(text: str) -> tuple[str, list]:
    axis, _, raw = text.partition("=")
    axis = axis.strip()
    if axis not in _SWEEP_AXES:
        raise ConfigError([f"sweep axis must be one of {_SWEEP_AXES}, got {axis!r}"])
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise ConfigError(["sweep needs at least one value"])
    try:
        if axis == "b":
            return axis, [int(v) for v in values]
        if axis == "tau_max":
            return axis, [float(v) for v in values]
    except ValueError as exc:
        raise ConfigError([f"bad sweep value: {exc}"])
    bad = [v for v in values if v not in ("opt", "discard", "async")]
    if bad:
        raise ConfigError([f"unknown scheme values in sweep: {bad}"])
    return axis, values


def cmd_compare(args) -> int:
    base = _load_config(args.config, None)
    axis, values = _parse_sweep(args.sweep)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError([f"bad --seeds list {args.seeds!r}"])
    if not seeds:
        raise ConfigError(["need at least one seed"])
    out_dir = _ensure_dir(args.out)
    sweep_rows = []
    curves: dict[str, np.ndarray] = {}
    for value in values:
        cell_base = _sweep_cell_config(base, axis, value)
        problems = validate(cell_base)
        if problems:
            raise ConfigError([f"{axis}={value}: {p}" for p in problems])
        acc_curves = []
        for seed in seeds:
            config = dataclasses.replace(cell_base, seed=seed)
            cell_dir = _ensure_dir(out_dir / f"{axis}_{value}" / f"seed_{seed}")
            metrics, _ = run_simulation(config)
            write_metrics_csv(cell_dir / "metrics.csv", metrics)
            write_summary_json(cell_dir / "summary.json", config, metrics)
            final_acc = metrics[-1].test_accuracy if metrics else float("nan")
            sweep_rows.append((value, seed, final_acc, average_comm_overhead(metrics)))
            acc_curves.append([m.test_accuracy for m in metrics])
            print(f"{axis}={value} seed={seed}: final accuracy {final_acc:.4f}")
        curves[str(value)] = np.mean(np.array(acc_curves), axis=0)
    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("value,seed,final_accuracy,mean_overhead_mb\n")
        for value, seed, acc, mb in sweep_rows:
            fh.write(f"{value},{seed},{acc!r},{mb!r}\n")
    rounds = np.arange(1, base.rounds + 1, dtype=float)
    with open(out_dir / "curves.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("round," + ",".join(str(v) for v in values) + "\n")
        for i in range(base.rounds):
            row = [str(i + 1)] + [repr(float(curves[str(v)][i])) for v in values]
            fh.write(",".join(row) + "\n")
    if base.rounds > 0:
        emit_svg_chart(
            [(f"{axis}={v}", rounds.tolist(), curves[str(v)].tolist()) for v in values],
            "communication round",
            "test accuracy (seed mean)",
            out_dir / "curves.svg",
        )
    print(f"wrote {out_dir / 'sweep.csv'} ({len(sweep_rows)} cells)")
    return 0


def cmd_chart(args) -> int:
    rows = []
    with open(args.infile, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["value", "seed", "final_accuracy", "mean_overhead_mb"]
        if header != expected:
            raise ConfigError([f"{args.infile}: expected header {expected}, got {header}"])
        for line in fh:
            if line.strip():
                value, _seed, acc, mb = line.strip().split(",")
                rows.append((value, float(acc), float(mb)))
    if not rows:
        raise ConfigError([f"{args.infile}: no data rows"])
    order = list(dict.fromkeys(v for v, _, _ in rows))  # first-seen value order

    def seed_mean(extract) -> list[float]:
        return [
            float(np.mean([extract(r) for r in rows if r[0] == v])) for v in order
        ]

    xs = []
    for v in order:
        try:
            xs.append(float(v))
        except ValueError:
            xs.append(float(order.index(v)))
    acc_series = seed_mean(lambda r: r[1])
    mb_series = seed_mean(lambda r: r[2])
    mb_hi = max(mb_series) or 1.0
    emit_svg_chart(
        [
            ("final accuracy", xs, acc_series),
            (f"overhead / {mb_hi:.3g} MB", xs, [m / mb_hi for m in mb_series]),
        ],
        "sweep value" + ("" if all(_is_float(v) for v in order) else f" ({', '.join(order)})"),
        "seed-averaged value",
        args.out,
    )
    print(f"wrote {args.out}")
    return 0


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _ensure_dir(path) -> pathlib.Path:
    p = pathlib.Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavfl",
        description="Simulate federated learning over a UAV-to-base-station network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one experiment")
    p_sim.add_argument("--config", required=True, help="key=value config file")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="sweep one axis across seeds")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--sweep", required=True, help="axis=v1,v2,... (scheme|b|tau_max)")
    p_cmp.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.set_defaults(func=cmd_compare)

    p_chart = sub.add_parser("chart", help="render a sweep.csv to SVG")
    p_chart.add_argument("--in", dest="infile", required=True, help="sweep.csv path")
    p_chart.add_argument("--out", required=True, help="output .svg path")
    p_chart.set_defaults(func=cmd_chart)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
