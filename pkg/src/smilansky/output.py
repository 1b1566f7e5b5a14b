"""Artifact Writers"""

import json
import logging
import os
import platform
from typing import Any, Dict, List, Optional, Sequence

import mpmath
import numpy
import scipy

import smilansky
from smilansky.config import RunConfig


def _plain(value: Any) -> Any:
    """Convert numpy values into JSON data."""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, numpy.ndarray):
        return _plain(value.tolist())
    if isinstance(value, numpy.bool_):
        return bool(value)
    if isinstance(value, numpy.integer):
        return int(value)
    if isinstance(value, (numpy.floating, float)):
        number = float(value)
        return number if numpy.isfinite(number) else repr(number)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def write_csv(
    path: str,
    columns: Sequence[str],
    rows: Any,
    config_hash: str,
) -> str:
    """Write rows under a two-line header: the config hash, then the columns."""
    data = numpy.atleast_2d(numpy.asarray(rows, dtype=float))
    if data.size and data.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} columns were named for {data.shape[1]}.")
    logging.info("Writing %d rows to %s...", len(data) if data.size else 0, path)
    numpy.savetxt(
        path,
        data.reshape(-1, len(columns)),
        delimiter=",",
        fmt="%.17g",
        header=f"config_hash={config_hash}\n" + ",".join(columns),
        comments="# ",
        newline="\n",
    )
    return os.path.basename(path)


def write_json(path: str, document: Dict[str, Any], config_hash: str) -> str:
    """Write a JSON document carrying the config hash."""
    logging.info("Writing %s...", path)
    payload = _plain({**document, "config_hash": config_hash})
    with open(path, "w", encoding="utf-8", newline="\n") as json_file:
        json_file.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return os.path.basename(path)


def versions() -> Dict[str, str]:
    """Get the versions of every package a result depends on."""
    return {
        "smilansky": smilansky.__version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
        "python": platform.python_version(),
    }


def write_manifest(
    config: RunConfig,
    artifacts: List[str],
    status: int,
    error: Optional[BaseException] = None,
    seeds: Sequence[int] = (),
) -> str:
    """
    Record the resolved config, versions and outcome of a run.

    seeds lists any random seeds the run drew from; deterministic runs
    record an empty list.
    """
    manifest: Dict[str, Any] = {
        "command": config.command,
        "config": config.canonical(),
        "config_hash": config.config_hash,
        "versions": versions(),
        "artifacts": artifacts,
        "status": status,
        "error": None,
        "seeds": [int(seed) for seed in seeds],
    }
    if error is not None:
        cause = error.__cause__ or error
        manifest["error"] = {"type": type(cause).__name__, "message": str(cause)}
    path = os.path.join(config.out, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as json_file:
        json_file.write(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n")
    return path
