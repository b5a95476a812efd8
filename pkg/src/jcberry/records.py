"""
Simulated interference curves with provenance, and their on-disk formats.

CSV layout: first column is the independent variable with a unit-suffixed
header (``dphi_rad``, ``tau_s``, ...), followed by ``p_g``, ``p_e``, ``p_f``
and any extra curves. Numbers are written with ``repr`` so a round trip is
lossless and byte-identical for identical inputs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

SCHEMA_VERSION = 1
POPULATION_KEYS = ("p_g", "p_e", "p_f")


@dataclass(frozen=True)
class ExperimentRecord:
    """One simulated measurement trace.

    Parameters
    ----------
    name : str
        Experiment identifier, e.g. ``"echo_openloop"``.
    variable : str
        Unit-suffixed name of the independent variable.
    grid : array
        Strictly increasing values of the independent variable.
    curves : mapping
        Population curves keyed ``p_g``, ``p_e``, ``p_f`` (and optionally
        others), each the same length as ``grid`` and within [0, 1].
    digest : str
        sha256 of the generating schedule(s).
    device : dict
        Snapshot of the device parameters (SI units).
    """

    name: str
    variable: str
    grid: np.ndarray
    curves: Mapping[str, np.ndarray]
    digest: str = ""
    device: dict = field(default_factory=dict)
    seed: Optional[int] = None
    shots: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float).reshape(-1)
        if grid.size == 0:
            raise ValueError("record grid is empty")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("record grid must be strictly increasing")
        curves = {}
        for key, val in self.curves.items():
            arr = np.array(val, dtype=float).reshape(-1)
            if arr.size != grid.size:
                raise ValueError(f"curve {key!r} has {arr.size} points, grid has {grid.size}")
            if key.startswith("p_"):
                if np.any(arr < -1e-9) or np.any(arr > 1 + 1e-9):
                    raise ValueError(f"population curve {key!r} leaves [0, 1]")
                arr = np.clip(arr, 0.0, 1.0)
            arr.setflags(write=False)
            curves[key] = arr
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "curves", curves)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.curves[key]

    def sampled(self, shots: int, seed: int) -> "ExperimentRecord":
        """Binomial shot-noise version of the population curves."""
        if shots <= 0:
            return self
        rng = np.random.default_rng(seed)
        noisy = {}
        for key in sorted(self.curves):
            val = self.curves[key]
            noisy[key] = rng.binomial(shots, val) / shots if key.startswith("p_") else val
        return replace(self, curves=noisy, shots=shots, seed=seed)

    # -- serialization ------------------------------------------------------

    def columns(self) -> list[str]:
        pops = [k for k in POPULATION_KEYS if k in self.curves]
        extra = sorted(k for k in self.curves if k not in POPULATION_KEYS)
        return pops + extra

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        w.writerow([self.variable] + cols)
        for i, x in enumerate(self.grid):
            w.writerow([repr(float(x))] + [repr(float(self.curves[c][i])) for c in cols])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "variable": self.variable,
            "columns": self.columns(),
            "points": int(self.grid.size),
            "schedule_digest": self.digest,
            "device": self.device,
            "seed": self.seed,
            "shots": self.shots,
            "metadata": self.metadata,
        }

    def write(self, directory, stem: Optional[str] = None) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.name
        csv_path = directory / f"{stem}.csv"
        json_path = directory / f"{stem}.json"
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv_string())
        with open(json_path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        return csv_path, json_path

    @classmethod
    def read(cls, csv_path, json_path=None) -> "ExperimentRecord":
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        meta = json.loads(json_path.read_text()) if json_path.exists() else {}
        if meta and meta.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {meta.get('schema')!r}")
        return cls(
            name=meta.get("name", csv_path.stem),
            variable=header[0],
            grid=body[:, 0],
            curves={k: body[:, i + 1] for i, k in enumerate(header[1:])},
            digest=meta.get("schedule_digest", ""),
            device=meta.get("device", {}),
            seed=meta.get("seed"),
            shots=meta.get("shots", 0),
            metadata=meta.get("metadata", {}),
        )


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def combined_digest(digests) -> str:
    import hashlib

    h = hashlib.sha256()
    for d in digests:
        h.update(d.encode())
    return h.hexdigest()
