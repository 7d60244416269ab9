"""Writing ensemble results to disk.

Three files are produced: ``curves.csv``, ``correlation.csv`` and
``summary.json``.  Floats are written with 17 significant digits and nothing
time dependent is recorded, so identical runs give identical bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__

CURVES_HEADER = ("pulse_area", "n_exc_mean", "n_exc_stderr", "variance_ratio_mean")
CORRELATION_HEADER = ("distance_um", "c_mean", "c_stderr", "n_pairs")


class OutputError(OSError):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def validate_result(result) -> None:
    areas = np.asarray(result.areas)
    if areas.size == 0:
        raise ValueError("empty scan grid: nothing to write")
    n = areas.size
    for name in ("n_exc_mean", "n_exc_stderr", "variance_ratio_mean"):
        if np.asarray(getattr(result, name)).shape != (n,):
            raise ValueError(f"{name} does not match the scan grid of {n} points")


def summary_dict(result) -> dict:
    cfg = result.config
    realizations = []
    for r in result.realizations or []:
        realizations.append({
            "index": r.index,
            "n_atoms": r.n_atoms,
            "n_superatoms": r.n_superatoms,
            "dim": r.dim,
            "max_norm_drift": r.max_norm_drift,
            "failed": r.failed,
            "error": r.error,
        })
    return _jsonable({
        "software": {"name": "superatom", "version": __version__},
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "c6_internal": result.c6_internal,
        "fit": result.fit.to_dict(),
        "n_succeeded": result.n_succeeded,
        "n_failed": result.n_failed,
        "stability": result.stability,
        "realizations": realizations,
    })


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_results(result, out_dir) -> dict[str, Path]:
    """Validate ``result`` and write the three output files into ``out_dir``."""
    validate_result(result)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc

    curves = _csv(CURVES_HEADER, zip(result.areas, result.n_exc_mean, result.n_exc_stderr, result.variance_ratio_mean))
    corr = _csv(CORRELATION_HEADER, result.correlation_bins)
    summary = json.dumps(summary_dict(result), indent=2, sort_keys=True, allow_nan=False) + "\n"

    paths = {
        "curves": out / "curves.csv",
        "correlation": out / "correlation.csv",
        "summary": out / "summary.json",
    }
    _write(paths["curves"], curves)
    _write(paths["correlation"], corr)
    _write(paths["summary"], summary)
    return paths
