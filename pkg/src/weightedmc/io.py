"""Plain-text formats for matrices, weights and observation sets.

Matrix CSV
    One row per line, optional leading ``# rows=<r> cols=<c>`` comment.
Weights CSV
    Two lines: row weights, then column weights.
Observation set
    ``<name>.csv`` with header ``row,col,sign,y`` plus a JSON sidecar
    ``<name>.json`` holding ``dims``, ``nu``, ``seed``, ``noise`` and a
    ``weights`` reference (``"uniform"`` or a path relative to the sidecar).
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .measures import DimensionError, WeightPair, as_matrix
from .sampling import ObservationSet, SampleIndices

_HEADER = re.compile(r"#\s*rows\s*=\s*(\d+)\s+cols\s*=\s*(\d+)")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrix(path, m, header: bool = True) -> None:
    m = as_matrix(m)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# rows={m.shape[0]} cols={m.shape[1]}\n")
        for row in m:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_matrix(path) -> np.ndarray:
    rows = []
    declared = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                match = _HEADER.match(line)
                if match:
                    declared = (int(match.group(1)), int(match.group(2)))
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if not rows or len({len(r) for r in rows}) != 1:
        raise DimensionError(f"{path}: rows are empty or ragged")
    m = as_matrix(np.array(rows), str(path))
    if declared is not None and declared != m.shape:
        raise DimensionError(f"{path}: header says {declared}, data is {m.shape}")
    return m


def write_weights(path, w: WeightPair) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(_fmt(x) for x in w.row_weights) + "\n")
        fh.write(",".join(_fmt(x) for x in w.col_weights) + "\n")


def read_weights(path) -> WeightPair:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if len(lines) != 2:
        raise ValueError(f"{path}: expected two lines of weights, found {len(lines)}")
    row, col = ([float(t) for t in ln.split(",")] for ln in lines)
    return WeightPair(np.array(row), np.array(col))


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def dump_observations(obs: ObservationSet, csv_path) -> None:
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "sign", "y"])
        idx = obs.indices
        for a, b, s, y in zip(idx.rows.tolist(), idx.cols.tolist(), idx.signs.tolist(), obs.responses):
            writer.writerow([a, b, s, _fmt(y)])
    if obs.weights.is_uniform():
        weights_ref = "uniform"
    else:
        wpath = csv_path.with_name(csv_path.stem + ".weights.csv")
        write_weights(wpath, obs.weights)
        weights_ref = wpath.name
    meta = {
        "dims": list(obs.dims),
        "n": obs.n,
        "nu": obs.noise_level,
        "noise": obs.noise,
        "seed": obs.seed,
        "weights": weights_ref,
    }
    sidecar_path(csv_path).write_text(json.dumps(meta, indent=2) + "\n")


def load_observations(csv_path) -> ObservationSet:
    csv_path = Path(csv_path)
    meta = json.loads(sidecar_path(csv_path).read_text())
    d_r, d_c = (int(x) for x in meta["dims"])
    ref = meta.get("weights", "uniform")
    if ref == "uniform":
        w = WeightPair.uniform(d_r, d_c)
    else:
        w = read_weights(sidecar_path(csv_path).parent / ref)
    rows, cols, signs, ys = [], [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["row", "col", "sign", "y"]:
            raise ValueError(f"{csv_path}: header must be row,col,sign,y")
        for rec in reader:
            rows.append(int(rec["row"]))
            cols.append(int(rec["col"]))
            signs.append(int(rec["sign"]))
            ys.append(float(rec["y"]))
    idx = SampleIndices(np.array(rows), np.array(cols), np.array(signs), (d_r, d_c))
    return ObservationSet(
        idx, np.array(ys), float(meta["nu"]), w, meta.get("seed"), meta.get("noise", "gaussian")
    )


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
