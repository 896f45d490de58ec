"""Command line entry point.

Each subcommand runs one named experiment, writes its report under the
output directory, prints one verdict line per check, and exits 0 only
when every verdict passed.
"""

import argparse
import sys
from pathlib import Path

from .harness import (
    ExperimentConfig,
    cell_consistency_report,
    check_lower_bound,
    default_config,
    emit_report,
    flat_part_experiment,
    hedlund_report,
    load_config,
    load_mapping,
    noncont_report,
    prop51_experiment,
    run_rate_experiment,
)

_RATE_DEFAULTS = {"rate": "rate1d", "lower-bound": "rate1d", "flat": "flat1d"}


def _experiment_config(args) -> ExperimentConfig:
    if args.config is not None:
        return load_config(args.config)
    return default_config(_RATE_DEFAULTS[args.command])


def _overrides(args) -> dict:
    return load_mapping(args.config) if args.config is not None else {}


def _print_verdicts(name, verdicts) -> bool:
    ok = True
    for key, value in verdicts.items():
        if key == "pass":
            continue
        print(f"{name}: {key} {'PASS' if value else 'FAIL'}")
        ok = ok and bool(value)
    return ok


def _cmd_rate(args):
    config = _experiment_config(args)
    report = run_rate_experiment(config, threads=args.threads)
    paths = emit_report(report, args.format, args.out)
    slope = "n/a" if report.slope is None else f"{report.slope:.3f}"
    r2 = "n/a" if report.r2 is None else f"{report.r2:.4f}"
    print(f"{config.name}: slope {slope} r2 {r2} "
          f"({report.n_qualified}/{len(report.eps)} eps qualified)")
    return _print_verdicts(config.name, report.verdicts), paths


def _cmd_lower_bound(args):
    config = _experiment_config(args)
    report = check_lower_bound(config, threads=args.threads)
    paths = emit_report(report, args.format, args.out)
    print(f"{report['name']}: C_fit {report['c_fit']:.4f}")
    return _print_verdicts(report["name"], report["verdicts"]), paths


def _cmd_flat(args):
    config = _experiment_config(args)
    report = flat_part_experiment(config, threads=args.threads)
    paths = emit_report(report, args.format, args.out)
    slope = "n/a" if report.slope is None else f"{report.slope:.3f}"
    print(f"{config.name}: slope {slope} "
          f"(flat part radius {report.meta['flat_part_radius']:.4f})")
    return _print_verdicts(config.name, report.verdicts), paths


def _cmd_prop51(args):
    report = prop51_experiment(**_overrides(args))
    paths = emit_report(report, args.format, args.out)
    for row in report["rows"]:
        print(f"prop51: eps {row['eps']:.4g} value {row['value']:.5f} "
              f"bound {row['bound']:.5f} tol {row['scheme_tol']:.2e}")
    return _print_verdicts("prop51", report["verdicts"]), paths


def _cmd_hedlund(args):
    report = hedlund_report(**_overrides(args))
    paths = emit_report(report, args.format, args.out)
    for row in report["rows"]:
        print(f"hedlund: tau {row['tau']:.2f} defects "
              + " ".join(f"{d:.4f}" for d in row["defects"]))
    if "stretch" in report:
        s = report["stretch"]
        print(f"hedlund: stretch hbar {s['hbar']:.3f} target {s['target']:.1f} "
              f"rel_err {s['rel_err']:.3f}")
    return _print_verdicts("hedlund", report["verdicts"]), paths


def _cmd_cell(args):
    over = _overrides(args)
    over.setdefault("workers", args.threads)
    report = cell_consistency_report(**over)
    paths = emit_report(report, args.format, args.out)
    n_ok = sum(r["ok"] for r in report["agreement"])
    print(f"cell: {n_ok}/{len(report['agreement'])} agreement cases within bounds")
    return _print_verdicts("cell", report["verdicts"]), paths


def _cmd_noncont(args):
    report = noncont_report(**_overrides(args))
    paths = emit_report(report, args.format, args.out)
    gap = report["gap_report"]
    print(f"noncont: gap {gap['gap']:.4f} deviations "
          + " ".join(f"{d:.4f}" for d in gap["deviation"]))
    return _print_verdicts("noncont", report["verdicts"]), paths


_COMMANDS = {
    "rate": (_cmd_rate, "eps sweep with a log-log rate fit"),
    "lower-bound": (_cmd_lower_bound, "one-sided margin check on the eps sweep"),
    "prop51": (_cmd_prop51, "origin lower bound under zero initial data"),
    "hedlund": (_cmd_hedlund, "three-line metric curve audits"),
    "cell": (_cmd_cell, "cell-problem route consistency checks"),
    "noncont": (_cmd_noncont, "corrector limit vs line distance"),
    "flat": (_cmd_flat, "rate run inside the flat part"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hjhomog",
        description="Homogenization experiments for convex Hamilton-Jacobi equations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", type=Path, default=None,
                       help="TOML or JSON config (built-in defaults otherwise)")
        s.add_argument("--out", type=Path, default=Path("reports"))
        s.add_argument("--format", choices=("csv", "json"), default="json")
        s.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    ok, paths = _COMMANDS[args.command][0](args)
    for p in paths:
        print(f"wrote {p}")
    print("OK" if ok else "FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
