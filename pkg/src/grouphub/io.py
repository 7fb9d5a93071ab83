"""File formats: grouped-data CSV, parameter/fit JSON, and result tables.

Probabilities are serialized with shortest-round-trip precision (up to 17
significant digits), so every write/read cycle is bit-exact.  Node ids are
1-based everywhere on disk.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InvalidParams
from .model import (
    GroupedData,
    HubModelParams,
    LabelAssignment,
    ModelVariant,
    PROB_SUM_RENORM_TOL,
    PROB_SUM_TOL,
)


def read_groups_csv(path) -> GroupedData:
    """Read a T x n 0/1 matrix; an optional `v1,...,vn` header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for idx, rec in enumerate(reader):
            if not rec:
                continue
            if idx == 0 and rec[0].strip().startswith("v"):
                continue
            rows.append([int(v) for v in rec])
    return GroupedData(np.array(rows, dtype=np.int8))


def write_groups_csv(path, data: GroupedData, header: bool = True):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"v{j}" for j in range(1, data.n + 1)])
        for row in np.asarray(data.G, dtype=np.int64):
            writer.writerow([int(v) for v in row])


def params_to_dict(params: HubModelParams) -> dict:
    return {
        "variant": params.variant.value,
        "n": params.n,
        "hub_set": list(params.hub_set),
        "rho": [float(v) for v in params.rho],
        "A": [[float(v) for v in row] for row in params.A],
    }


def params_from_dict(obj: dict) -> HubModelParams:
    variant = ModelVariant(obj["variant"])
    rho = np.asarray(obj["rho"], dtype=np.float64)
    total = float(rho.sum())
    if abs(total - 1.0) > PROB_SUM_RENORM_TOL:
        raise InvalidParams(f"rho sums to {total!r}, too far from 1 to renormalize")
    if abs(total - 1.0) > PROB_SUM_TOL:
        rho = rho / total
    return HubModelParams(
        variant=variant,
        n=int(obj["n"]),
        hub_set=tuple(int(v) for v in obj["hub_set"]),
        rho=rho,
        A=np.asarray(obj["A"], dtype=np.float64),
    )


def write_params_json(path, params: HubModelParams):
    Path(path).write_text(json.dumps(params_to_dict(params), indent=2) + "\n")


def read_params_json(path) -> HubModelParams:
    return params_from_dict(json.loads(Path(path).read_text()))


def fit_result_to_dict(result) -> dict:
    out = {
        "params": params_to_dict(result.params),
        "log_lik": float(result.log_lik),
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "restart_index": int(result.restart_index),
    }
    return out


def write_fit_json(path, result, extra: dict | None = None):
    obj = fit_result_to_dict(result)
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def write_matrix_csv(path, matrix, header: list[str] | None = None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in np.atleast_2d(np.asarray(matrix)):
            writer.writerow([repr(float(v)) for v in row])


def write_labels_csv(path, labels):
    z = labels.z if isinstance(labels, LabelAssignment) else np.asarray(labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "label"])
        for t, v in enumerate(z, start=1):
            writer.writerow([t, int(v)])


def read_labels_csv(path) -> LabelAssignment:
    z = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            if rec:
                z.append(int(rec[1]))
    return LabelAssignment(np.array(z, dtype=np.int64))


def write_table_csv(path, header: list[str], rows: list[list]):
    """Generic table writer; floats keep full round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )


def mirror_table_json(path, header: list[str], rows: list[list]):
    obj = [dict(zip(header, row)) for row in rows]
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_provenance(path, seed, extra: dict | None = None):
    obj = {"seed": seed}
    if extra:
        obj.update(extra)
    obj["config_hash"] = config_hash(obj)
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")
