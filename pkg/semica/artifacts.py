"""Reading and writing semica artifacts.

- Models as JSON documents (``ModelDocument``)
- Datasets as CSV with an ``x1..xn`` header plus a sidecar JSON
- Recovery results and cumulant dumps as JSON
- Experiment configs as YAML or JSON

A simulation directory holds ``observational.csv`` and one
``intervention_<i>.csv`` per target, each with its sidecar.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from .cumulants import CumulantTensor4
from .errors import ConfigError, DimensionMismatchError
from .model import SemIcaModel
from .simulator import Dataset
from .types import DatasetSidecar, ExperimentConfig, Intervention, ModelDocument

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

OBSERVATIONAL_STEM = "observational"
INTERVENTION_PREFIX = "intervention_"


def write_text_atomic(path: PathLike, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return target


def _read_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def model_to_document(model: SemIcaModel) -> ModelDocument:
    return ModelDocument(
        n=model.n,
        m=model.m,
        A=model.A.tolist(),
        B=model.B.tolist(),
        noise_std=model.noise_std,
        latent=model.latent,
        ordering=list(model.ordering) if model.ordering is not None else None,
    )


def save_model(model: SemIcaModel, path: PathLike) -> Path:
    document = model_to_document(model)
    text = json.dumps(document.model_dump(mode="json", exclude_none=True), indent=2) + "\n"
    return write_text_atomic(path, text)


def load_model(path: PathLike) -> SemIcaModel:
    """Load a model document; shape disagreements are reported as ValueError."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    try:
        document = ModelDocument.model_validate(_read_json(path))
    except ValidationError as exc:
        raise ValueError(f"Invalid model document at {path}: {exc}") from exc
    A = np.array(document.A, dtype=float).reshape(document.n, document.m)
    B = np.array(document.B, dtype=float)
    if B.shape != (document.n, document.n):
        raise DimensionMismatchError(f"B in {path}", (document.n, document.n), B.shape)
    return SemIcaModel(
        A=A,
        B=B,
        noise_std=document.noise_std,
        latent=document.latent,
        ordering=tuple(document.ordering) if document.ordering is not None else None,
    )


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def save_dataset(data: Dataset, path: PathLike) -> Path:
    """Write samples as CSV (header x1..xn) and the intervention tag as a sidecar."""
    path = Path(path)
    frame = pd.DataFrame(data.samples, columns=[f"x{j + 1}" for j in range(data.n)])
    write_text_atomic(path, frame.to_csv(index=False))
    sidecar = DatasetSidecar(
        intervention_target=data.intervention.target,
        value=data.intervention.value,
        seed=data.seed,
        N=data.N,
    )
    write_text_atomic(_sidecar_path(path), json.dumps(sidecar.model_dump(mode="json"), indent=2) + "\n")
    return path


def load_dataset(path: PathLike) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    sidecar_path = _sidecar_path(path)
    if sidecar_path.exists():
        try:
            sidecar = DatasetSidecar.model_validate(_read_json(sidecar_path))
        except ValidationError as exc:
            raise ValueError(f"Invalid dataset sidecar at {sidecar_path}: {exc}") from exc
    else:
        logger.warning(f"No sidecar for {path}; treating it as observational")
        sidecar = DatasetSidecar(seed=0, N=len(frame))
    if sidecar.N != len(frame):
        raise DimensionMismatchError(f"row count of {path}", sidecar.N, len(frame))
    intervention = Intervention(target=sidecar.intervention_target, value=sidecar.value)
    return Dataset(samples=frame.to_numpy(dtype=float), intervention=intervention, seed=sidecar.seed)


def save_simulation(observational: Dataset, interventional: List[Dataset], directory: PathLike) -> List[Path]:
    directory = Path(directory)
    paths = [save_dataset(observational, directory / f"{OBSERVATIONAL_STEM}.csv")]
    for data in interventional:
        paths.append(save_dataset(data, directory / f"{INTERVENTION_PREFIX}{data.target}.csv"))
    return paths


def load_simulation(directory: PathLike) -> tuple[Dataset, List[Dataset]]:
    """Load observational.csv and every intervention_<i>.csv, ordered by target."""
    directory = Path(directory)
    obs_path = directory / f"{OBSERVATIONAL_STEM}.csv"
    if not obs_path.exists():
        raise FileNotFoundError(f"No {obs_path.name} in {directory}")
    observational = load_dataset(obs_path)
    interventional = [load_dataset(p) for p in sorted(directory.glob(f"{INTERVENTION_PREFIX}*.csv"))]
    interventional.sort(key=lambda d: d.target if d.target is not None else -1)
    return observational, interventional


# ---------------------------------------------------------------------------
# Results, cumulants, configs
# ---------------------------------------------------------------------------


def save_result(result: Any, path: PathLike) -> Path:
    """Write anything exposing ``to_dict()`` (a RecoveryResult) as JSON."""
    return write_text_atomic(path, json.dumps(result.to_dict(), indent=2) + "\n")


def dump_cumulant(tensor: CumulantTensor4, path: PathLike) -> Path:
    return write_text_atomic(path, json.dumps(tensor.to_dict(), indent=2, sort_keys=True) + "\n")


def load_cumulant(path: PathLike) -> CumulantTensor4:
    return CumulantTensor4.from_dict(_read_json(path))


def load_config_data(path: Optional[PathLike]) -> Dict[str, Any]:
    """Raw mapping from a YAML/JSON config file ({} when no path is given)."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"Could not parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping, got {type(data).__name__}")
    return data


def load_config(path: Optional[PathLike]) -> ExperimentConfig:
    data = load_config_data(path)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid experiment config at {path}: {exc}") from exc
