"""Command-line entry point: ``mixedadc run|preset|power-report|plot``."""
from __future__ import annotations

import argparse
import dataclasses
import subprocess
import sys
from pathlib import Path

from .experiment import (
    PRESETS,
    ExperimentError,
    SpecError,
    all_finite,
    emit_plot_script,
    load_power_spec,
    load_preset,
    load_spec,
    parse_power_spec,
    power_report,
    power_rows_to_csv,
    preset_text,
    read_csv,
    run_experiment,
    write_results,
)


def _apply_overrides(spec, args):
    mc = spec.mc
    if getattr(args, "seed", None) is not None:
        mc = dataclasses.replace(mc, seed=args.seed)
    if getattr(args, "trials", None) is not None:
        mc = dataclasses.replace(mc, trials=args.trials)
    return dataclasses.replace(spec, mc=mc)


def _run(spec, args) -> int:
    rows = run_experiment(spec, workers=args.workers)
    csv_path = write_results(spec, rows, args.out)
    print(csv_path)
    if not all_finite(rows):
        bad = sorted({(r.case_id, r.method) for r in rows if r.se_bits != r.se_bits or abs(r.se_bits) == float("inf")})
        print(f"non-finite SE for {bad}", file=sys.stderr)
        return 1
    return 0


def _power(spec, args) -> int:
    text = power_rows_to_csv(power_report(spec.cases, spec.model))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{spec.name}_power.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    return _run(_apply_overrides(load_spec(args.spec), args), args)


def cmd_preset(args) -> int:
    if args.name == "power":
        return _power(parse_power_spec(preset_text("power"), "power.ini"), args)
    return _run(_apply_overrides(load_preset(args.name), args), args)


def cmd_power_report(args) -> int:
    return _power(load_power_spec(args.spec), args)


def cmd_plot(args) -> int:
    csv_path = Path(args.csv)
    rows = read_csv(csv_path)
    script = emit_plot_script(rows, csv_path)
    print(script)
    if args.render:
        return subprocess.call([sys.executable, str(script)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixedadc",
        description="Uplink SE of massive MIMO with mixed-resolution ADCs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_opts(p):
        p.add_argument("--out", help="output directory (default: the spec file's output key)")
        p.add_argument("--seed", type=lambda s: int(s, 0), help="Monte Carlo seed")
        p.add_argument("--trials", type=int, help="Monte Carlo channel trials")
        p.add_argument("--workers", type=int, help="worker processes (capped by MIXEDADC_WORKERS)")

    p = sub.add_parser("run", help="run an experiment spec file")
    p.add_argument("spec")
    add_run_opts(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="run a shipped preset")
    p.add_argument("name", choices=PRESETS)
    add_run_opts(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("power-report", help="ADC power of each case in a spec file")
    p.add_argument("spec")
    p.add_argument("--out", help="also write <name>_power.csv here")
    p.set_defaults(func=cmd_power_report)

    p = sub.add_parser("plot", help="write a plot script for a result CSV")
    p.add_argument("csv")
    p.add_argument("--render", action="store_true", help="run the script (needs matplotlib)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ExperimentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
