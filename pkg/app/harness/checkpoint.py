"""
Checkpoints: one tensor container (parameters, optimizer accumulators,
baselines) plus a JSON document with RNG states and the training state.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from app.core.exceptions import CheckpointError, MissingCheckpointError
from app.numerics.serialization import read_tensors, write_tensors

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

Tensors = Dict[str, np.ndarray]


def checkpoint_paths(directory: Union[str, Path], tag: str) -> Tuple[Path, Path]:
    directory = Path(directory)
    return directory / f"{tag}.tensors", directory / f"{tag}.json"


def rng_state(rng: np.random.Generator) -> Dict[str, Any]:
    return rng.bit_generator.state


def restore_rng(state: Dict[str, Any]) -> np.random.Generator:
    rng = np.random.default_rng()
    try:
        rng.bit_generator.state = state
    except (TypeError, ValueError, KeyError) as e:
        raise CheckpointError(f"Invalid RNG state in checkpoint: {e}")
    return rng


def save_checkpoint(
    directory: Union[str, Path], tag: str, tensors: Tensors, state: Dict[str, Any], dtype: str = "f64"
) -> Path:
    """Write ``<tag>.tensors`` and ``<tag>.json``; each file is replaced atomically."""
    tensor_path, state_path = checkpoint_paths(directory, tag)
    tensor_path.parent.mkdir(parents=True, exist_ok=True)
    tmp_tensors = tensor_path.with_suffix(".tensors.tmp")
    write_tensors(tmp_tensors, tensors, dtype=dtype)
    os.replace(tmp_tensors, tensor_path)
    tmp_state = state_path.with_suffix(".json.tmp")
    tmp_state.write_text(json.dumps({"format_version": FORMAT_VERSION, "state": state}, indent=1), encoding="utf-8")
    os.replace(tmp_state, state_path)
    logger.info(f"Saved checkpoint {tensor_path} ({len(tensors)} tensors, {dtype})")
    return tensor_path


def load_checkpoint(directory: Union[str, Path], tag: str) -> Tuple[Tensors, Dict[str, Any]]:
    tensor_path, state_path = checkpoint_paths(directory, tag)
    if not tensor_path.exists() or not state_path.exists():
        raise MissingCheckpointError(f"No checkpoint '{tag}' under {directory}")
    tensors = read_tensors(tensor_path)
    try:
        document = json.loads(state_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Corrupt checkpoint state {state_path}: {e}")
    if not isinstance(document, dict) or document.get("format_version") != FORMAT_VERSION or "state" not in document:
        raise CheckpointError(f"Unsupported checkpoint state format in {state_path}")
    logger.info(f"Loaded checkpoint {tensor_path}")
    return tensors, document["state"]


def select(tensors: Tensors, prefix: str) -> Tensors:
    """Entries under ``<prefix>.``, with the prefix removed."""
    cut = len(prefix) + 1
    return {name[cut:]: value for name, value in tensors.items() if name.startswith(prefix + ".")}


def prefixed(tensors: Tensors, prefix: str) -> Tensors:
    return {f"{prefix}.{name}": value for name, value in tensors.items()}
