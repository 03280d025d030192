"""Command-line entry point for semica.

Subcommands: gen-model, simulate, recover, sweep, ablate-interventions,
ablate-latents. Configuration precedence is defaults < --config file <
dedicated flags < --set overrides.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from .artifacts import load_config_data, load_model, load_simulation, save_result, save_simulation
from .cli_display import display_result, display_summary, display_validation
from .config_overrides import apply_overrides_to_data
from .errors import ConfigError, SemIcaError
from .experiments import cmd_ablate_interventions, cmd_ablate_latents, cmd_gen_model, cmd_sweep, recovery_options
from .pipeline import evaluate, recover_exact, recover_pipeline
from .simulator import default_intervention_value, derive_seed, sample_interventional, sample_observational
from .types import ExperimentConfig, Intervention

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _configure_logging(debug: bool) -> None:
    handler = RichHandler(console=Console(stderr=True), show_path=debug, markup=False)
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.WARNING,
        format="%(message)s",
        handlers=[handler],
        force=True,
    )


def _common_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None, help="YAML or JSON experiment config")
    parent.add_argument("--seed", type=int, default=None, help="Base seed (sweeps: replaces the seed list)")
    parent.add_argument("--out", type=Path, default=None, help="Output path")
    parent.add_argument(
        "--exact-moments",
        action="store_true",
        default=None,
        help="Bypass estimation with population C and D_i",
    )
    parent.add_argument("--jobs", type=int, default=None, help="Worker threads for grid cells")
    parent.add_argument(
        "--set",
        action="append",
        dest="config_overrides",
        metavar="KEY=VALUE",
        default=None,
        help="Override a config field (dot notation, e.g. --set recovery.refine.max_cycles=50). "
        "Can be specified multiple times.",
    )
    parent.add_argument("--debug", action="store_true", default=False, help="Verbose logs and full tracebacks")
    parent.add_argument("--json", action="store_true", default=False, help="Print machine-readable JSON")
    return parent


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="semica", description="SEM-ICA causal discovery with latent confounders")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _common_parent()

    gen = sub.add_parser("gen-model", parents=[parent], help="Generate a random valid model")
    gen.add_argument("--n", type=int, default=None, help="Number of observables")
    gen.add_argument("--m", type=int, default=None, help="Number of latent confounders")

    sim = sub.add_parser("simulate", parents=[parent], help="Draw observational and interventional datasets")
    sim.add_argument("--model", type=Path, required=True, help="Model JSON")
    sim.add_argument("--N", type=int, default=None, help="Samples per dataset (defaults to the largest N_grid entry)")
    sim.add_argument("--targets", type=int, nargs="*", default=None, help="Intervened variables (0-based)")

    rec = sub.add_parser("recover", parents=[parent], help="Recover (A, B) from a simulation directory")
    rec.add_argument("--data", type=Path, default=None, help="Directory written by 'simulate'")
    rec.add_argument("--m", type=int, default=None, help="Assumed number of latents")
    rec.add_argument("--model", type=Path, default=None, help="Ground-truth model JSON (for metrics or --exact-moments)")

    for name, help_text in (
        ("sweep", "Sample-size sweep"),
        ("ablate-interventions", "Sweep over the number of intervened variables"),
        ("ablate-latents", "Sweep over the assumed number of latents"),
    ):
        sub.add_parser(name, parents=[parent], help=help_text)
    return parser.parse_args(argv)


def _build_config(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """defaults < --config < flags < --set."""
    data = load_config_data(args.config)
    for key, value in (extra or {}).items():
        if value is not None:
            data[key] = value
    if args.seed is not None:
        data["seeds"] = [args.seed]
    if args.jobs is not None:
        data["jobs"] = args.jobs
    if args.exact_moments:
        data["exact_moments"] = True
    if args.out is not None and args.command in ("sweep", "ablate-interventions", "ablate-latents"):
        data["output_path"] = str(args.out)
    if args.config_overrides:
        apply_overrides_to_data(data, args.config_overrides)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _run_gen_model(args: argparse.Namespace, console: Console) -> int:
    config = _build_config(args, {"n": args.n, "m": args.m})
    seed = config.seeds[0]
    out = args.out or Path(f"model_n{config.n}_m{config.m}_s{seed}.json")
    model, report = cmd_gen_model(
        config.n,
        config.m,
        seed,
        out,
        edge_prob=config.edge_prob,
        weight_lo=config.weight_lo,
        weight_hi=config.weight_hi,
        noise_std=config.noise_std,
    )
    if args.json:
        print(json.dumps({"path": str(out), "valid": report.valid, "violations": report.violations}))
    else:
        display_validation(console, report)
        console.print(f"Wrote {out}")
    return EXIT_OK


def _run_simulate(args: argparse.Namespace, console: Console) -> int:
    config = _build_config(args)
    model = load_model(args.model)
    N = args.N or config.N_grid[-1]
    seed = config.seeds[0]
    targets = list(range(model.n)) if args.targets is None else args.targets
    obs = sample_observational(model, N, derive_seed(seed, N, 1))
    intvs = [
        sample_interventional(
            model,
            Intervention(target=t, value=default_intervention_value(model, t, config.intervention_scale)),
            N,
            derive_seed(seed, N, 2, t),
        )
        for t in targets
    ]
    out = args.out or Path("simulation")
    paths = save_simulation(obs, intvs, out)
    if args.json:
        print(json.dumps({"directory": str(out), "files": [str(p) for p in paths]}))
    else:
        console.print(f"Wrote {len(paths)} datasets ({(len(targets) + 1) * N} samples) to {out}")
    return EXIT_OK


def _run_recover(args: argparse.Namespace, console: Console) -> int:
    config = _build_config(args)
    model = load_model(args.model) if args.model else None
    options = recovery_options(config, model)
    if config.exact_moments:
        if model is None:
            raise ConfigError("--exact-moments needs --model")
        result = recover_exact(model, config.targets, options, seed=config.seeds[0])
    else:
        if args.data is None:
            raise ConfigError("recover needs --data (or --exact-moments with --model)")
        obs, intvs = load_simulation(args.data)
        if options.targets is None and config.targets is not None:
            options = options.model_copy(update={"targets": config.targets})
        m = args.m or config.effective_m
        result = recover_pipeline(obs, intvs, m, options)
    if model is not None:
        result = result.with_metrics(evaluate(model, result))

    out = args.out or Path("recovery.json")
    save_result(result, out)
    if args.json:
        print(json.dumps(result.to_dict()))
    else:
        display_result(console, result)
        console.print(f"Wrote {out}")
    return EXIT_OK


_SWEEPS = {
    "sweep": cmd_sweep,
    "ablate-interventions": cmd_ablate_interventions,
    "ablate-latents": cmd_ablate_latents,
}


def _run_sweep(args: argparse.Namespace, console: Console) -> int:
    config = _build_config(args)
    rows = _SWEEPS[args.command](config)
    if args.json:
        print(json.dumps([row.model_dump() for row in rows]))
    else:
        display_summary(console, rows, title=args.command)
        console.print(f"Wrote {config.output_path}")
    return EXIT_OK


_COMMANDS = {
    "gen-model": _run_gen_model,
    "simulate": _run_simulate,
    "recover": _run_recover,
    **{name: _run_sweep for name in _SWEEPS},
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    _configure_logging(args.debug)
    console = Console()

    try:
        return _COMMANDS[args.command](args, console)

    except (ConfigError, ValidationError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        if args.debug:
            raise
        return EXIT_CONFIG

    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.debug:
            raise
        return EXIT_RUNTIME

    except (SemIcaError, OSError, ValueError, ArithmeticError) as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.debug:
            raise
        return EXIT_RUNTIME

    except KeyboardInterrupt:
        print("Aborted by user", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
