"""Simulation studies: sample-size sweeps and the intervention and latent-count ablations.

Every grid cell generates a model from its seed, draws one observational and
one interventional dataset per target (N samples each), recovers (A, B) and
scores it. Cells run on a bounded thread pool; rows come back in grid order.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .artifacts import save_model, write_text_atomic
from .errors import SemIcaError
from .model import SemIcaModel, validate_model
from .pipeline import RecoveryResult, evaluate, recover_exact, recover_pipeline
from .simulator import default_intervention_value, derive_seed, random_model, sample_interventional, sample_observational
from .types import SWEEP_COLUMNS, ExperimentConfig, Intervention, RecoveryOptions, SweepRow, ValidationReport

logger = logging.getLogger(__name__)

TARGET_STRATEGY = "prefix-in-causal-order"


@dataclass(frozen=True)
class Cell:
    N: int
    seed: int
    targets: Tuple[int, ...]
    m_assumed: int


def cell_model(config: ExperimentConfig, seed: int) -> SemIcaModel:
    """The model shared by every sample size for one seed."""
    return random_model(
        config.n,
        config.m,
        derive_seed(seed, 0),
        config.edge_prob,
        config.weight_lo,
        config.weight_hi,
        noise_std=config.noise_std,
        latent=config.latent,
    )


def recovery_options(config: ExperimentConfig, model: Optional[SemIcaModel] = None) -> RecoveryOptions:
    """``config.recovery`` with the latent kurtosis and noise variance filled in.

    They come from ``model`` when one is given, otherwise from the config's
    latent family and ``noise_std``. An explicit ``recovery.kappa`` always wins.
    """
    recovery = config.recovery
    latent, noise_std = (model.latent, model.noise_std) if model is not None else (config.latent, config.noise_std)
    return recovery.model_copy(
        update={
            "kappa": recovery.kappa if recovery.kappa is not None else latent.kappa,
            "decomposition": recovery.decomposition.model_copy(update={"noise_var": noise_std**2}),
        }
    )


def cell_options(config: ExperimentConfig, cell: Cell) -> RecoveryOptions:
    update = {
        "restarts": config.restarts,
        "targets": list(cell.targets),
        "seed": derive_seed(cell.seed, cell.N, 3),
    }
    return recovery_options(config).model_copy(update=update)


def recover_cell(config: ExperimentConfig, cell: Cell) -> Tuple[SemIcaModel, RecoveryResult]:
    """Draw the cell's data (or take population moments) and recover; returns the truth alongside."""
    model = cell_model(config, cell.seed)
    options = cell_options(config, cell)
    if config.exact_moments:
        return model, recover_exact(model, cell.targets, options, seed=cell.seed)
    obs = sample_observational(model, cell.N, derive_seed(cell.seed, cell.N, 1))
    intvs = [
        sample_interventional(
            model,
            Intervention(target=t, value=default_intervention_value(model, t, config.intervention_scale)),
            cell.N,
            derive_seed(cell.seed, cell.N, 2, t),
        )
        for t in cell.targets
    ]
    return model, recover_pipeline(obs, intvs, cell.m_assumed, options)


def run_cell(config: ExperimentConfig, cell: Cell) -> SweepRow:
    """Recover and score one grid cell; any failure becomes an error row."""
    row = SweepRow(
        n=config.n,
        m=config.m,
        N=cell.N,
        seed=cell.seed,
        targets=len(cell.targets),
        m_assumed=cell.m_assumed,
    )
    start = time.perf_counter()
    try:
        model, result = recover_cell(config, cell)
        metrics = evaluate(model, result)
        row = row.model_copy(
            update={
                "mse_B": metrics.mse_B,
                "mse_A": metrics.mse_A,
                "order_correct": metrics.order_correct,
                "objective_final": result.objective_final,
            }
        )
    except (SemIcaError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.warning(f"Cell N={cell.N} seed={cell.seed} failed: {exc}")
        row = row.model_copy(update={"error": f"{type(exc).__name__}: {exc}"})
    wall_ms = (time.perf_counter() - start) * 1000.0
    logger.debug(f"Cell N={cell.N} seed={cell.seed} targets={len(cell.targets)} done in {wall_ms:.0f} ms")
    return row.model_copy(update={"wall_ms": wall_ms})


def run_grid(config: ExperimentConfig, cells: Sequence[Cell], jobs: Optional[int] = None) -> List[SweepRow]:
    jobs = jobs or config.jobs
    if jobs <= 1:
        return [run_cell(config, cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda cell: run_cell(config, cell), cells))


def prefix_targets(size: int) -> Tuple[int, ...]:
    """First ``size`` variables in causal order (generated models are stored in causal order)."""
    return tuple(range(size))


def sweep_cells(config: ExperimentConfig) -> List[Cell]:
    targets = tuple(config.effective_targets)
    return [Cell(N, seed, targets, config.effective_m) for N in config.N_grid for seed in config.seeds]


def intervention_cells(config: ExperimentConfig) -> List[Cell]:
    sizes = config.sizes if config.sizes is not None else list(range(1, config.n + 1))
    return [
        Cell(N, seed, prefix_targets(size), config.effective_m)
        for size in sizes
        for N in config.N_grid
        for seed in config.seeds
    ]


def latent_grid(config: ExperimentConfig) -> List[int]:
    if config.m_assumed_grid is not None:
        return list(config.m_assumed_grid)
    return sorted({k for k in (config.m - 1, config.m, config.m + 1) if 1 <= k <= config.n})


def latent_cells(config: ExperimentConfig) -> List[Cell]:
    targets = tuple(config.effective_targets)
    return [
        Cell(N, seed, targets, m_assumed)
        for m_assumed in latent_grid(config)
        for N in config.N_grid
        for seed in config.seeds
    ]


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def rows_to_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows], columns=SWEEP_COLUMNS)


def write_rows(rows: Sequence[SweepRow], path: Path) -> Path:
    return write_text_atomic(path, rows_to_frame(rows).to_csv(index=False))


def meta_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.name + ".meta.json")


def write_meta(config: ExperimentConfig, command: str, csv_path: Path) -> Path:
    meta = {
        "command": command,
        "version": __version__,
        "target_subsets": TARGET_STRATEGY,
        "columns": SWEEP_COLUMNS,
        "config": config.model_dump(mode="json"),
    }
    return write_text_atomic(meta_path(csv_path), json.dumps(meta, indent=2) + "\n")


def _run_and_write(
    config: ExperimentConfig,
    command: str,
    cells_for: Callable[[ExperimentConfig], List[Cell]],
    out_path: Optional[Path],
) -> List[SweepRow]:
    cells = cells_for(config)
    logger.info(f"{command}: {len(cells)} cells on {config.jobs} worker(s)")
    rows = run_grid(config, cells)
    target = Path(out_path or config.output_path)
    write_rows(rows, target)
    write_meta(config, command, target)
    return rows


def cmd_sweep(config: ExperimentConfig, out_path: Optional[Path] = None) -> List[SweepRow]:
    """One row per (N, seed); (|targets| + 1) * N samples per cell."""
    return _run_and_write(config, "sweep", sweep_cells, out_path)


def cmd_ablate_interventions(config: ExperimentConfig, out_path: Optional[Path] = None) -> List[SweepRow]:
    """Sweep repeated for each target-subset size (prefix subsets in causal order)."""
    return _run_and_write(config, "ablate-interventions", intervention_cells, out_path)


def cmd_ablate_latents(config: ExperimentConfig, out_path: Optional[Path] = None) -> List[SweepRow]:
    """Sweep repeated for each assumed latent count; data always uses the true m."""
    return _run_and_write(config, "ablate-latents", latent_cells, out_path)


def cmd_gen_model(
    n: int,
    m: int,
    seed: int,
    out_path: Path,
    *,
    edge_prob: float = 0.5,
    weight_lo: float = 0.5,
    weight_hi: float = 1.0,
    noise_std: float = 0.0,
) -> Tuple[SemIcaModel, ValidationReport]:
    """Generate a random valid model and write it as JSON."""
    model = random_model(n, m, seed, edge_prob, weight_lo, weight_hi, noise_std=noise_std)
    save_model(model, out_path)
    return model, validate_model(model)


def summarize(rows: Sequence[SweepRow], key: str = "N") -> pd.DataFrame:
    """Median metrics per ``key`` (and per subset size / assumed m when they vary)."""
    frame = rows_to_frame(rows)
    ok = frame[frame["error"] == ""]
    keys = [k for k in ("targets", "m_assumed") if frame[k].nunique() > 1] + [key]
    if ok.empty:
        return pd.DataFrame(columns=[*keys, "mse_B", "mse_A", "cells"])
    grouped = ok.groupby(keys)
    summary = grouped[["mse_B", "mse_A"]].median()
    summary["cells"] = grouped.size()
    return summary.reset_index()
