"""
main.py - spatial-rc entry point.

Three commands, all driven by one YAML config:
  generate   write the configured input signal as CSV
  analyze    drive one reservoir, write NL / MC / stability maps + heatmaps
  benchmark  Mackey-Glass k-step prediction sweep over several reservoirs

Usage:
    ./venv/bin/python3 main.py analyze --config config.yaml
    ./venv/bin/python3 main.py analyze --seed 3 --out runs/seed3 --threads 0
    ./venv/bin/python3 main.py benchmark --set task.k_max=20
    ./venv/bin/python3 main.py generate --set signal.kind=mackey_glass

Exit codes: 0 ok, 1 I/O error, 2 invalid config or arguments, 3 unstable regime.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import yaml

from spatial_rc.config import ConfigError, RunConfig
from spatial_rc.core import FLOAT_FORMAT, TimeSeries, derive_seed, normalize_minmax, random_signal
from spatial_rc.metrics import MetricMap, analyze, axis_correlation, tradeoff
from spatial_rc.reservoirs import UnstableRegimeError, build_reservoir
from spatial_rc.tasks import BASELINE_NAME, mackey_glass, mixture_advantage, run_benchmark

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3

MAP_FILES = {"nonlinearity": "nl", "memory_capacity": "mc", "stability": "stability"}


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


# ─────────────────────────────────────────────────────────────────────────────
# Signal
# ─────────────────────────────────────────────────────────────────────────────

def build_signal(cfg: RunConfig) -> TimeSeries:
    sig = cfg.signal
    if sig.kind == "random":
        series = random_signal(sig.n, sig.low, sig.high, seed=derive_seed(cfg.seed, "signal"))
    elif sig.kind == "mackey_glass":
        series = mackey_glass(sig.mackey_glass)
    else:
        series = TimeSeries.from_csv(sig.path, column=sig.column)
    if sig.normalize:
        series = normalize_minmax(series, sig.low, sig.high)
    print(f"[SIGNAL] {sig.kind}: {len(series)} samples", flush=True)
    return series


# ─────────────────────────────────────────────────────────────────────────────
# Commands
# ─────────────────────────────────────────────────────────────────────────────

def cmd_generate(cfg: RunConfig, out_dir: Path) -> None:
    series = build_signal(cfg)
    series.to_csv(out_dir / "signal.csv", name=cfg.signal.kind)
    cfg.echo(out_dir)
    print(f"[RUN] wrote {out_dir / 'signal.csv'}", flush=True)


def _write_maps(maps: list[MetricMap], out_dir: Path) -> dict:
    ranges = {}
    for metric in maps:
        stem = MAP_FILES[metric.metric_name]
        metric.to_csv(out_dir / f"{stem}.csv")
        lo, hi = metric.to_pgm(out_dir / f"{stem}.pgm")
        ranges[stem] = {"min": lo, "max": hi}
    (out_dir / "heatmap_ranges.yaml").write_text(yaml.safe_dump(ranges, sort_keys=False))
    return ranges


def cmd_analyze(cfg: RunConfig, out_dir: Path, threads: int) -> None:
    u = build_signal(cfg)
    spec = cfg.reservoir_spec()
    reservoir = build_reservoir(spec)
    print(f"[RESERVOIR] {spec.model} {spec.rows}x{spec.cols} (cell {spec.cell})", flush=True)

    m = cfg.metrics
    nl, mc, stability = analyze(
        u, reservoir, k=m.k, threshold_distance=m.threshold_distance, washout=m.washout,
        train_fraction=m.train_fraction, ridge=m.ridge, threads=threads,
    )
    _write_maps([nl, mc, stability], out_dir)
    grains = getattr(reservoir, "grains", None)
    if grains is not None:
        grains.to_csv(out_dir / "grains.csv")

    lines = [f"experiment: {cfg.experiment}", f"model: {spec.model}", f"seed: {cfg.seed}",
             f"k: {m.k}", f"threshold_distance: {_fmt(mc.params['threshold_distance'])}", ""]
    for metric in (nl, mc, stability):
        stats = metric.summary()
        lines.append(
            f"{metric.metric_name}: mean={_fmt(stats['mean'])} min={_fmt(stats['min'])} max={_fmt(stats['max'])}"
        )
    lines.append("")
    if reservoir.layout.n_nodes >= 3:
        rho, p = tradeoff(nl, mc)
        lines.append(f"tradeoff (spearman NL vs MC): rho={_fmt(rho)} p={_fmt(p)}")
        rho, p = axis_correlation(nl, spec.drive.direction)
        lines.append(f"NL along drive axis (spearman): rho={_fmt(rho)} p={_fmt(p)}")
    for metric in (nl, mc, stability):
        for note in metric.diagnostics:
            lines.append(f"warning [{metric.metric_name}]: {note}")
    if reservoir.reflections:
        lines.append(f"boundary reflections: {reservoir.reflections}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    cfg.echo(out_dir)
    print(f"[RUN] wrote maps and summary to {out_dir}", flush=True)


def cmd_benchmark(cfg: RunConfig, out_dir: Path, threads: int) -> None:
    # The benchmark series always comes from signal.mackey_glass, whatever signal.kind says.
    t = cfg.task
    specs = cfg.benchmark_specs()
    table, series = run_benchmark(
        specs, cfg.signal.mackey_glass, k_max=t.k_max, k_min=t.k_min, washout=t.washout,
        train_fraction=t.train_fraction, ridge=t.ridge, threads=threads,
    )
    meta = {**{f"mg_{k}": v for k, v in cfg.signal.mackey_glass.to_dict().items()},
            "normalized": "[-1, 1]", "washout": t.washout, "train_fraction": t.train_fraction,
            "ridge": t.ridge, "samples": len(series)}
    table.to_csv(out_dir / "mse.csv", meta)

    lines = [f"experiment: {cfg.experiment}", f"seed: {cfg.seed}",
             f"horizons: {t.k_min}..{t.k_max}", f"samples: {len(series)}", ""]
    for name in [*specs, BASELINE_NAME]:
        curve = [table.mse(name, k) for k in table.horizons]
        lines.append(
            f"{name}: mse k={t.k_min} {_fmt(curve[0])}  k={t.k_max} {_fmt(curve[-1])}  "
            f"mean {_fmt(sum(curve) / len(curve))}"
        )
    mixtures = [name for name, spec in specs.items() if spec.gain_gradient is not None]
    uniform = [name for name in specs if name not in mixtures]
    if mixtures and uniform:
        lines.append("")
        for name in mixtures:
            lines.append(f"mixture advantage {name} vs {'/'.join(uniform)}: "
                         f"{_fmt(mixture_advantage(table, name, uniform))}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    cfg.echo(out_dir)
    print(f"[RUN] wrote mse table and summary to {out_dir}", flush=True)


# ─────────────────────────────────────────────────────────────────────────────
# Entry point
# ─────────────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="spatially resolved reservoir metrics")
    parser.add_argument("command", choices=("generate", "analyze", "benchmark"))
    parser.add_argument("--config", default="config.yaml", help="Config file path")
    parser.add_argument("--seed", type=int, default=None, help="Run seed override")
    parser.add_argument("--out", default=None, help="Output directory override")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (0 = one per CPU)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Override any config field (repeatable)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.out is not None:
            overrides.append(f"output_dir={args.out}")
        cfg = RunConfig.load(args.config, tuple(overrides))
        threads = cfg.effective_threads(args.threads)
        if threads < 0:
            raise ConfigError("threads", f"must be >= 0, got {threads}")

        out_dir = Path(cfg.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        print(f"[RUN] {args.command} '{cfg.experiment}' seed={cfg.seed} -> {out_dir}", flush=True)

        if args.command == "generate":
            cmd_generate(cfg, out_dir)
        elif args.command == "analyze":
            cmd_analyze(cfg, out_dir, threads)
        else:
            cmd_benchmark(cfg, out_dir, threads)

    except UnstableRegimeError as e:
        print(f"[ERROR] {e}", file=sys.stderr, flush=True)
        return EXIT_UNSTABLE
    except ValueError as e:
        print(f"[ERROR] {e}", file=sys.stderr, flush=True)
        return EXIT_CONFIG
    except OSError as e:
        print(f"[ERROR] {e}", file=sys.stderr, flush=True)
        return EXIT_IO

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
