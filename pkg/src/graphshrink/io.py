"""File formats: edge lists, headerless CSV arrays, draws CSV, JSON config and summaries.

Floats are written with ``repr``, the shortest string that parses back to
the same double, so every file round-trips exactly.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Any, Optional

import numpy as np

from .graph import Graph, load_graph
from .inference import ChainOutput

__all__ = [
    "InputFormatError",
    "DrawsFormatError",
    "ConfigError",
    "read_edge_list",
    "write_edge_list",
    "read_matrix",
    "read_vector",
    "write_matrix",
    "write_vector",
    "write_draws",
    "read_draws",
    "write_json",
    "read_json",
    "load_config",
    "CONFIG_KEYS",
]

CONFIG_KEYS = ("tau0", "c", "move_probs", "mh_step_tau", "iters", "burnin", "thin", "seed", "chains")


class InputFormatError(ValueError):
    pass


class DrawsFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def read_edge_list(path, index_base: int = 0, p: Optional[int] = None) -> Graph:
    """Whitespace-separated ``u v`` pairs, one per line; ``#`` starts a comment.

    Without `p` the vertex count is the largest index plus one.
    """
    if index_base not in (0, 1):
        raise ValueError("index_base must be 0 or 1")
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InputFormatError(f"{path}:{lineno}: expected two vertex indices, got {line!r}")
            try:
                u, v = int(parts[0]) - index_base, int(parts[1]) - index_base
            except ValueError:
                raise InputFormatError(f"{path}:{lineno}: non-integer vertex index in {line!r}") from None
            if u < 0 or v < 0:
                raise InputFormatError(f"{path}:{lineno}: index below base {index_base}")
            pairs.append((u, v))
    if p is None:
        if not pairs:
            raise InputFormatError(f"{path}: no edges and no vertex count given")
        p = max(max(e) for e in pairs) + 1
    try:
        return load_graph(pairs, p)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def write_edge_list(path, g: Graph, index_base: int = 0) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {g.p} vertices, {g.m} edges\n")
        for u, v in g.edges.tolist():
            fh.write(f"{u + index_base} {v + index_base}\n")


def read_matrix(path) -> np.ndarray:
    """Headerless comma-separated matrix, one row per line."""
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None
    if M.size == 0:
        raise InputFormatError(f"{path}: empty matrix")
    if not np.all(np.isfinite(M)):
        raise InputFormatError(f"{path}: non-finite entries")
    return M


def read_vector(path) -> np.ndarray:
    """A single row or a single column of numbers."""
    M = read_matrix(path)
    if min(M.shape) != 1:
        raise InputFormatError(f"{path}: expected a vector, got shape {M.shape}")
    return M.ravel()


def write_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w") as fh:
        for row in M.tolist():
            fh.write(",".join(map(repr, row)) + "\n")


def write_vector(path, v) -> None:
    """One value per line."""
    with open(path, "w") as fh:
        for x in np.asarray(v, dtype=float).ravel().tolist():
            fh.write(repr(x) + "\n")


def _draws_header(p: int) -> list[str]:
    return (["iter", "K", "sigma2", "tau"]
            + [f"label_{j}" for j in range(p)]
            + [f"beta_{j}" for j in range(p)])


def write_draws(path, out: ChainOutput) -> None:
    """One row per draw: ``iter, K, sigma2, tau, label_0.., beta_0..``."""
    p = out.p
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_draws_header(p)) + "\n")
        for t in range(len(out)):
            fields = [str(int(out.iteration[t])), str(int(out.K[t])),
                      _fmt(out.sigma2[t]), _fmt(out.tau[t])]
            fields += map(str, out.labels[t].tolist())
            fields += map(repr, out.beta[t].tolist())
            fh.write(",".join(fields) + "\n")


def read_draws(path) -> ChainOutput:
    """Parse a draws CSV written by `write_draws`.

    Raises
    ------
    DrawsFormatError
        On a bad header, ragged rows, unparsable numbers or inconsistent
        cluster counts.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DrawsFormatError(f"{path}: empty file") from None
        ncol = len(header)
        if ncol < 6 or (ncol - 4) % 2 or header[:4] != ["iter", "K", "sigma2", "tau"]:
            raise DrawsFormatError(f"{path}: unexpected header")
        p = (ncol - 4) // 2
        if header != _draws_header(p):
            raise DrawsFormatError(f"{path}: unexpected header")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != ncol:
                raise DrawsFormatError(f"{path}:{lineno}: expected {ncol} fields, got {len(row)}")
            rows.append(row)
    if not rows:
        raise DrawsFormatError(f"{path}: no draws")
    try:
        ints = np.array([[int(x) for x in r[:2]] + [int(x) for x in r[4:4 + p]] for r in rows], dtype=np.int64)
        floats = np.array([[float(x) for x in r[2:4]] + [float(x) for x in r[4 + p:]] for r in rows])
    except ValueError as exc:
        raise DrawsFormatError(f"{path}: {exc}") from None
    labels = ints[:, 2:]
    K = ints[:, 1]
    if np.any(labels < 0) or np.any(labels.max(axis=1) + 1 != K):
        raise DrawsFormatError(f"{path}: labels disagree with K")
    return ChainOutput(ints[:, 0], labels, floats[:, 2:], floats[:, 0], floats[:, 1], K)


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def load_config(path) -> dict:
    """Read a JSON object of sampler settings, rejecting unknown keys and bad types."""
    try:
        cfg = read_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    unknown = sorted(set(cfg) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    for key in ("iters", "burnin", "thin", "seed", "chains"):
        if key in cfg and (not isinstance(cfg[key], int) or isinstance(cfg[key], bool)):
            raise ConfigError(f"{path}: {key} must be an integer")
    for key in ("tau0", "c", "mh_step_tau"):
        if key in cfg and (not isinstance(cfg[key], (int, float)) or isinstance(cfg[key], bool)):
            raise ConfigError(f"{path}: {key} must be a number")
    if "move_probs" in cfg:
        mp = cfg["move_probs"]
        if not (isinstance(mp, list) and len(mp) == 4 and all(isinstance(x, (int, float)) for x in mp)):
            raise ConfigError(f"{path}: move_probs must be a list of four numbers")
        cfg["move_probs"] = tuple(float(x) for x in mp)
    return cfg
