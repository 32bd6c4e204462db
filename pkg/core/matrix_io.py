"""
matrix_io.py — Plain-text matrix files for Gramians, mode tables and grids.

Format (row-major, whitespace separated):

    # stochgram-matrix 1
    # shape: [3, 3]
    # epsilon: 0.01
    # spec_hash: "…"          (provenance keys, when given)
    # ...any other key: <JSON value>
    1.0e+00 0.0e+00 ...

Header lines are `# key: value` with JSON values, so readers recover types.
Arrays with more than two axes are flattened to (shape[0], rest) and the
original shape is restored from the `shape` key.
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from core.errors import ConfigurationError
from core.gramian import GramianSample

MAGIC = "stochgram-matrix 1"
FLOAT_FORMAT = "%.17g"


def write_matrix(path: Union[str, Path], matrix: np.ndarray, meta: Dict[str, Any] = None,
                 provenance: Optional[Dict[str, Any]] = None) -> Path:
    """`provenance` (spec_hash, seed, version) is merged into the header keys."""
    path = Path(path)
    arr = np.asarray(matrix, dtype=float)
    header = [MAGIC, f"shape: {json.dumps(list(arr.shape))}"]
    meta = {**(meta or {}), **(provenance or {})}
    for key in sorted(meta):
        if key == "shape":
            continue
        header.append(f"{key}: {json.dumps(meta[key], sort_keys=True)}")
    flat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr[None, :]
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, flat, fmt=FLOAT_FORMAT, header="\n".join(header), comments="# ")
    return path


def read_matrix(path: Union[str, Path]) -> Tuple[np.ndarray, Dict[str, Any]]:
    path = Path(path)
    meta: Dict[str, Any] = {}
    with path.open() as fh:
        first = fh.readline().lstrip("# ").strip()
        if first != MAGIC:
            raise ConfigurationError(f"{path} is not a matrix file (header '{first}')")
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line.lstrip("# ").partition(":")
            meta[key.strip()] = json.loads(value)
    shape = tuple(meta.pop("shape"))
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data.reshape(shape), meta


def write_gramian(path: Union[str, Path], sample: GramianSample,
                  provenance: Optional[Dict[str, Any]] = None) -> Path:
    meta = sample.to_dict()
    meta.pop("m")
    return write_matrix(path, sample.matrix, meta, provenance)


def read_gramian(path: Union[str, Path]) -> GramianSample:
    matrix, meta = read_matrix(path)
    return GramianSample(
        matrix,
        epsilon=meta["epsilon"],
        perturbed_indices=tuple(meta["perturbed_indices"]),
        run_index=meta.get("run_index", 0),
        master_seed=meta.get("master_seed"),
        stream_ids=tuple(tuple(s) for s in meta.get("stream_ids", [])),
        integrator=meta.get("integrator", "rk4"),
        t_perturb=meta.get("t_perturb", 0.0),
        t1=meta.get("t1", 0.0),
    )
