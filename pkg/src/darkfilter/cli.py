"""Command-line entry point.

Usage: darkfilter <subcommand> --config <file> --out <dir>
                  [--seed <u64>] [--engine full|tower] [--quiet]

Exit status: 0 on success, 1 on validation failure (bad arguments,
malformed config, precondition violations), 2 on numerical-invariant
failure (residuals, count mismatches, convergence misses).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .config import parse_config, scan_options, sweep_options
from .errors import NumericsError, ValidationError
from .experiments import (ExperimentSpec, GoeBlock, Perturbations,
                          build_setup, document_of, goe_demo, group_label,
                          perturbation_study, run_tar1, run_tar2,
                          sweep_n_epsilon, table1_scan, zeta_vs_L_scan)
from .filtration import dark_subspace
from .output import SCHEMAS, emit_csv, ensure_dir, write_metadata
from .spectral import bright_secular_roots, charge_picture
from .spin_model import sga_residual

SUBCOMMANDS = (
    "tower-check", "filter-run", "dark-states", "bright-spectrum",
    "scaling-sweep", "table1", "perturb", "goe-demo", "zeta-scan",
)

SGA_TOL = 1e-10


@dataclass(frozen=True)
class CliConfig:
    """Parsed command line, ready for run_command."""

    subcommand: str
    config_path: str | None
    out_dir: str
    seed: int | None = None
    engine: str | None = None
    quiet: bool = False


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; that slot is reserved
    # for numerical failures, so route usage errors through validation
    def error(self, message):
        raise ValidationError(message)


def build_parser():
    parser = _Parser(prog="darkfilter",
                     description="measurement-induced state filtration")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON experiment document")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the recorded RNG seed")
    parser.add_argument("--engine", choices=("full", "tower"), default=None,
                        help="override the engine choice")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress the result summary")
    return parser


def _read_document(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from None


def _apply_overrides(spec: ExperimentSpec, cli: CliConfig) -> ExperimentSpec:
    if cli.seed is not None:
        pert = Perturbations(lam=spec.perturbations.lam, seed=cli.seed)
        goe = spec.goe
        if goe is not None:
            goe = GoeBlock(d_goe=goe.d_goe, seed=cli.seed)
        spec = replace(spec, perturbations=pert, goe=goe)
    if cli.engine is not None:
        spec = replace(spec, engine=cli.engine)
    return spec


def _say(cli, text):
    if not cli.quiet:
        print(text)


def _cmd_tower_check(cli, doc):
    spec = _apply_overrides(parse_config(doc, cli.subcommand), cli)
    report = sga_residual(spec.params)
    ensure_dir(cli.out_dir)
    write_metadata(os.path.join(cli.out_dir, "metadata.json"), {
        "experiment": "tower_check",
        "spec": document_of(spec),
        "eigen_residual": report.eigen_residual,
        "algebra_residual": report.algebra_residual,
    })
    _say(cli, f"max residual {report.max:.3e}")
    if report.max >= SGA_TOL:
        raise NumericsError(
            f"tower residual {report.max:.3e} exceeds {SGA_TOL:.0e}"
        )


def _cmd_filter_run(cli, doc):
    spec = _apply_overrides(parse_config(doc, cli.subcommand), cli)
    runner = run_tar1 if spec.target == "tar1" else run_tar2
    art = runner(spec, cli.out_dir)
    meta = art.metadata
    _say(cli, f"{spec.target}: n_eps={meta['n_eps']} "
              f"q_final={meta['q_final']:.6f}")
    return art


def _dark_rows_and_labels(dark):
    rows = []
    seen = {}
    labels = []
    for k in range(dark.count):
        members = dark.members[k]
        total = sum(1 for m in dark.members if m == members)
        labels.append(group_label(members, seen.get(members, 0), total))
        seen[members] = seen.get(members, 0) + 1
        z = complex(dark.phases[k])
        rows.append((z.real, z.imag, abs(z), "dark"))
    return rows, labels


def _cmd_dark_states(cli, doc):
    spec = _apply_overrides(parse_config(doc, cli.subcommand), cli)
    setup, initial = build_setup(spec)
    dark = dark_subspace(setup)
    rows, labels = _dark_rows_and_labels(dark)
    ensure_dir(cli.out_dir)
    path = emit_csv(os.path.join(cli.out_dir, "spectrum.csv"),
                    SCHEMAS["spectrum"], rows)
    ov = dark.overlaps(setup.to_eigen(initial))
    write_metadata(os.path.join(cli.out_dir, "metadata.json"), {
        "experiment": "dark_states",
        "spec": document_of(spec),
        "count": dark.count,
        "labels": labels if setup.engine == "tower" else None,
        "initial_overlaps": ov,
        "dark_weight": float(np.sum(np.abs(ov) ** 2)),
    })
    _say(cli, f"{dark.count} dark states")
    return path


def _cmd_bright_spectrum(cli, doc):
    spec = _apply_overrides(parse_config(doc, cli.subcommand), cli)
    if spec.engine != "tower":
        raise ValidationError(
            "bright-spectrum works on the tower engine; the full spectrum "
            "has thousands of charges and no stable secular polynomial"
        )
    setup, _ = build_setup(spec)
    cp = charge_picture(setup)
    bs = bright_secular_roots(cp)
    dark = dark_subspace(setup)
    rows, _ = _dark_rows_and_labels(dark)
    rows += [(float(z.real), float(z.imag), float(abs(z)), "bright")
             for z in bs.roots]
    ensure_dir(cli.out_dir)
    spath = emit_csv(os.path.join(cli.out_dir, "spectrum.csv"),
                     SCHEMAS["spectrum"], rows)
    cpath = emit_csv(os.path.join(cli.out_dir, "charges.csv"),
                     SCHEMAS["charges"], list(zip(cp.angles, cp.weights)))
    dom = max(np.abs(bs.roots)) if bs.roots.size else 0.0
    write_metadata(os.path.join(cli.out_dir, "metadata.json"), {
        "experiment": "bright_spectrum",
        "spec": document_of(spec),
        "w": cp.w,
        "n_dark": dark.count,
        "n_bright_roots": int(bs.roots.size),
        "dominant_modulus": float(dom),
    })
    _say(cli, f"w={cp.w} charges, {bs.roots.size} bright roots, "
              f"dominant modulus {dom:.6f}")
    return spath, cpath


def _cmd_scaling_sweep(cli, doc):
    L_values, rule, eps, variant = sweep_options(doc)
    art = sweep_n_epsilon(L_values, rule, eps, variant, cli.out_dir)
    _say(cli, f"{variant} ({rule}): slope {art.metadata['slope_log2']:.4f}")
    return art


def _cmd_table1(cli, doc):
    kwargs = {}
    if isinstance(doc, dict) and "theta0" in doc:
        kwargs["theta0"] = float(doc["theta0"])
    art = table1_scan(cli.out_dir, **kwargs)
    counts = {f"{c['p']}/{c['q']}": c["count"]
              for c in art.metadata["cases"]}
    _say(cli, f"dark counts {counts}")
    return art


def _cmd_perturb(cli, doc):
    if isinstance(doc, dict) and "n_steps" not in doc:
        doc = dict(doc, n_steps=20000)
    spec = _apply_overrides(parse_config(doc, cli.subcommand), cli)
    art = perturbation_study(spec, cli.out_dir)
    info1, info2 = art.metadata["tar1"], art.metadata["tar2"]
    plateau = info2.get("plateau")
    height = plateau["height"] if plateau else math.nan
    _say(cli, f"tar1 q_final={info1['q_final']:.4f} "
              f"dark_residual={info1['dark_residual']:.3e}; "
              f"tar2 plateau height={height:.4f}")
    return art


def _cmd_goe_demo(cli, doc):
    spec = _apply_overrides(parse_config(doc, cli.subcommand), cli)
    n_steps = spec.n_steps if isinstance(doc, dict) and "n_steps" in doc \
        else None
    art = goe_demo(cli.out_dir, d_goe=spec.goe.d_goe, seed=spec.goe.seed,
                   n_steps=n_steps)
    meta = art.metadata
    _say(cli, f"survival -> {meta['expected_survival']:.8f} "
              f"(worst tail error {meta['worst_tail_error']:.3e})")
    return art


def _cmd_zeta_scan(cli, doc):
    L_values = scan_options(doc)
    art = zeta_vs_L_scan(cli.out_dir, L_values=L_values)
    mods = art.metadata["moduli"]
    first, last = L_values[0], L_values[-1]
    _say(cli, f"|zeta_d|: L={first} -> {mods[str(first)]:.6f}, "
              f"L={last} -> {mods[str(last)]:.6f}")
    return art


DISPATCH = {
    "tower-check": _cmd_tower_check,
    "filter-run": _cmd_filter_run,
    "dark-states": _cmd_dark_states,
    "bright-spectrum": _cmd_bright_spectrum,
    "scaling-sweep": _cmd_scaling_sweep,
    "table1": _cmd_table1,
    "perturb": _cmd_perturb,
    "goe-demo": _cmd_goe_demo,
    "zeta-scan": _cmd_zeta_scan,
}


def run_command(cli: CliConfig) -> int:
    """Dispatch a parsed command line; returns the process exit status."""
    try:
        doc = _read_document(cli.config_path)
        DISPATCH[cli.subcommand](cli, doc)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerics: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cli = CliConfig(
        subcommand=args.subcommand,
        config_path=args.config,
        out_dir=args.out,
        seed=args.seed,
        engine=args.engine,
        quiet=args.quiet,
    )
    return run_command(cli)


if __name__ == "__main__":
    sys.exit(main())
