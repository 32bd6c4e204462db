"""
artifacts.py — CSV / JSON writers that stamp every file with its provenance.

CSV files start with one `# spec_hash=…; seed=…; version=…` line; JSON files
carry the same fields under `_meta`. Nothing time-dependent is written, so a
rerun with the same spec and seed reproduces every file byte for byte.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Sequence, Union

import numpy as np
import pandas as pd

from config.settings import settings

FLOAT_FORMAT = "%.12g"


@dataclass(frozen=True)
class Provenance:
    spec_hash: str
    seed: int
    version: str = settings.VERSION

    def header_line(self) -> str:
        return f"# spec_hash={self.spec_hash}; seed={self.seed}; version={self.version}"

    def to_dict(self) -> dict:
        return {"spec_hash": self.spec_hash, "seed": self.seed, "version": self.version}


def _json_default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_csv(path: Union[str, Path], frame: pd.DataFrame, provenance: Provenance,
              index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = frame.to_csv(index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    path.write_text(provenance.header_line() + "\n" + body, encoding="utf-8")
    return path


def write_grid_csv(path: Union[str, Path], grid: np.ndarray, row_coords: Sequence[float],
                   col_coords: Sequence[float], provenance: Provenance) -> Path:
    """Matrix over the wing grid: rows are chord positions y, columns span positions x (cm)."""
    frame = pd.DataFrame(np.asarray(grid), index=pd.Index([f"{y:.6g}" for y in row_coords], name="y_cm"),
                         columns=[f"{x:.6g}" for x in col_coords])
    return write_csv(path, frame, provenance, index=True)


def write_json(path: Union[str, Path], payload: Dict[str, Any], provenance: Provenance) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {**payload, "_meta": provenance.to_dict()}
    path.write_text(json.dumps(document, sort_keys=True, indent=2, default=_json_default) + "\n",
                    encoding="utf-8")
    return path


def read_csv(path: Union[str, Path], **kwargs) -> pd.DataFrame:
    """Read an artifact CSV, skipping the provenance line."""
    return pd.read_csv(path, comment="#", **kwargs)
