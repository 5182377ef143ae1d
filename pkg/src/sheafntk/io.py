"""File formats: sheaf JSON, feature CSV, kernel matrices (csv/json/SNTK binary),
dataset manifests and ridge-model files. All writers are atomic."""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .errors import SheafNtkError
from .sheaf import CellularSheaf, Graph

PathLike = Union[str, os.PathLike]

SNTK_MAGIC = b"SNTK"
SNTK_VERSION = 1
_SNTK_HEADER = struct.Struct("<4sHII")


class InputError(SheafNtkError, ValueError):
    """An input file is missing or malformed."""


def _read_text(path: PathLike) -> str:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {p}")
    return p.read_text()


def _read_json(path: PathLike) -> Any:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


# -- atomic writes ---------------------------------------------------------

def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


# -- sheaves and features --------------------------------------------------

def sheaf_to_dict(sheaf: CellularSheaf) -> dict:
    return {
        "num_nodes": sheaf.graph.num_nodes,
        "stalk_dim": sheaf.stalk_dim,
        "edges": [
            {"u": u, "v": v, "map_u": fu.tolist(), "map_v": fv.tolist()}
            for (u, v), (fu, fv) in zip(sheaf.graph.edges, sheaf.maps)
        ],
    }


def sheaf_from_dict(data: dict, source: str = "<dict>") -> CellularSheaf:
    try:
        n = int(data["num_nodes"])
        k = int(data.get("stalk_dim", 1))
        raw = data.get("edges", [])
        eye = np.eye(k)
        pairs, maps = [], []
        for e in raw:
            u, v = int(e["u"]), int(e["v"])
            fu = np.asarray(e.get("map_u", eye), float).reshape(k, k) if "map_u" in e else eye
            fv = np.asarray(e.get("map_v", eye), float).reshape(k, k) if "map_v" in e else eye
            if u > v:
                u, v, fu, fv = v, u, fv, fu
            pairs.append((u, v))
            maps.append((fu, fv))
        return CellularSheaf(Graph(n, tuple(pairs)), k, tuple(maps))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{source}: malformed sheaf ({exc})") from exc


def load_sheaf(path: PathLike) -> CellularSheaf:
    return sheaf_from_dict(_read_json(path), str(path))


def save_sheaf(sheaf: CellularSheaf, path: PathLike) -> None:
    atomic_write_text(path, dumps_json(sheaf_to_dict(sheaf)))


def load_features(path: PathLike, header: bool = False, expected_rows: Optional[int] = None) -> np.ndarray:
    text = _read_text(path)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if header:
        lines = lines[1:]
    try:
        X = np.array([[float(x) for x in ln.split(",")] for ln in lines], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric feature entry ({exc})") from exc
    if X.ndim != 2 or X.size == 0:
        raise InputError(f"{path}: features must be a non-empty rectangular table")
    if expected_rows is not None and X.shape[0] != expected_rows:
        raise InputError(f"{path}: expected {expected_rows} rows (N_V * k), found {X.shape[0]}")
    return X


def save_features(X: np.ndarray, path: PathLike) -> None:
    atomic_write_text(path, matrix_to_csv(np.atleast_2d(X)))


# -- kernel matrices ---------------------------------------------------------

def matrix_to_csv(M: np.ndarray) -> str:
    return "".join(",".join(f"{x:.17e}" for x in row) + "\n" for row in np.atleast_2d(M))


def matrix_to_bin(M: np.ndarray) -> bytes:
    M = np.ascontiguousarray(np.atleast_2d(M), dtype="<f8")
    rows, cols = M.shape
    return _SNTK_HEADER.pack(SNTK_MAGIC, SNTK_VERSION, rows, cols) + M.tobytes()


def matrix_from_bin(data: bytes) -> np.ndarray:
    if len(data) < _SNTK_HEADER.size:
        raise InputError("truncated SNTK header")
    magic, version, rows, cols = _SNTK_HEADER.unpack_from(data)
    if magic != SNTK_MAGIC:
        raise InputError(f"bad magic {magic!r}")
    if version != SNTK_VERSION:
        raise InputError(f"unsupported SNTK version {version}")
    body = data[_SNTK_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise InputError(f"SNTK body has {len(body)} bytes, expected {8 * rows * cols}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)


def write_matrix(M: np.ndarray, path: PathLike, fmt: str = "csv") -> None:
    if fmt == "csv":
        atomic_write_text(path, matrix_to_csv(M))
    elif fmt == "json":
        M = np.atleast_2d(M)
        atomic_write_text(path, dumps_json({"rows": M.shape[0], "cols": M.shape[1], "data": M.tolist()}))
    elif fmt == "bin":
        atomic_write_bytes(path, matrix_to_bin(M))
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def read_matrix(path: PathLike, fmt: Optional[str] = None) -> np.ndarray:
    p = Path(path)
    fmt = fmt or {".bin": "bin", ".json": "json"}.get(p.suffix, "csv")
    if fmt == "bin":
        if not p.is_file():
            raise InputError(f"file not found: {p}")
        return matrix_from_bin(p.read_bytes())
    if fmt == "json":
        d = _read_json(p)
        return np.asarray(d["data"], float).reshape(d["rows"], d["cols"])
    return load_features(p)


# -- manifests ---------------------------------------------------------------

def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def load_labels(path: PathLike) -> np.ndarray:
    vals = [float(tok) for ln in _read_text(path).splitlines() for tok in ln.replace(",", " ").split()]
    return np.asarray(vals, float)


def load_manifest(path: PathLike) -> dict:
    """Parse a dataset manifest and load every file it references.

    Graph task: a JSON list of ``{sheaf_file, feature_file, label}`` (an
    optional ``id`` per item). Node task: a JSON object with ``sheaf_file``,
    ``feature_file``, ``labels_file``, ``train_nodes`` and ``test_nodes``.
    """
    path = Path(path)
    base = path.parent
    data = _read_json(path)
    header = False
    if isinstance(data, dict) and "items" in data:
        header = bool(data.get("feature_header", False))
        data = data["items"]
    if isinstance(data, list):
        items, labels, ids = [], [], []
        for i, entry in enumerate(data):
            try:
                sheaf = load_sheaf(_resolve(base, entry["sheaf_file"]))
                X = load_features(_resolve(base, entry["feature_file"]), header, sheaf.size)
            except KeyError as exc:
                raise InputError(f"{path}: item {i} lacks {exc}") from exc
            items.append((sheaf, X))
            labels.append(float(entry["label"]) if entry.get("label") is not None else np.nan)
            ids.append(str(entry.get("id", i)))
        return {"task": "graph", "items": items, "labels": np.asarray(labels), "ids": ids}
    if isinstance(data, dict):
        try:
            sheaf = load_sheaf(_resolve(base, data["sheaf_file"]))
            X = load_features(_resolve(base, data["feature_file"]), bool(data.get("feature_header", False)), sheaf.size)
            labels = load_labels(_resolve(base, data["labels_file"]))
            train = [int(v) for v in data["train_nodes"]]
            test = [int(v) for v in data.get("test_nodes", [])]
        except KeyError as exc:
            raise InputError(f"{path}: node manifest lacks {exc}") from exc
        n = sheaf.graph.num_nodes
        if len(labels) != n:
            raise InputError(f"{path}: {len(labels)} labels for {n} nodes")
        for v in train + test:
            if not 0 <= v < n:
                raise InputError(f"{path}: node index {v} out of range")
        return {"task": "node", "sheaf": sheaf, "features": X, "labels": labels, "train_nodes": train, "test_nodes": test}
    raise InputError(f"{path}: manifest must be a list or an object")
