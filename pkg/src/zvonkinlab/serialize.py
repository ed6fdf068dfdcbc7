"""Binary containers and CSV exports for fields, ensembles and chains.

Field container layout (all little-endian)::

    b"ZVFIELD1"
    int64   version, dim, rank code (0 scalar, 1 vector, 2 matrix), n_time, n_space
    float64 t_start, t_end, box_halfwidth, center[dim]
    float64 values, row-major, shape (n_time + 1,) + (n_space,) * dim + components

Ensemble container::

    b"ZVENSEM1"
    int64   version, m, n_saved, dim
    float64 times[n_saved], states[m, n_saved, dim]
    uint8   flags[m]  (bit 0 exited, bit 1 failed)
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .grid import RANKS, SpaceTimeField, UniformGrid
from .lab import to_jsonable
from .sde import PathEnsemble
from .zvonkin import ZvonkinChain

FIELD_MAGIC = b"ZVFIELD1"
ENSEMBLE_MAGIC = b"ZVENSEM1"
VERSION = 1
I64 = np.dtype("<i8")
F64 = np.dtype("<f8")


class ContainerError(ValueError):
    pass


def write_field(path, field: SpaceTimeField) -> None:
    g = field.grid
    header = np.array([VERSION, g.dim, RANKS.index(field.rank), g.n_time, g.n_space], dtype=I64)
    params = np.array([g.t_start, g.t_end, g.box_halfwidth, *g.center], dtype=F64)
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(header.tobytes())
        fh.write(params.tobytes())
        fh.write(np.ascontiguousarray(field.values, dtype=F64).tobytes())


def read_field(path, name: str = "") -> SpaceTimeField:
    data = Path(path).read_bytes()
    if data[:8] != FIELD_MAGIC:
        raise ContainerError(f"{path}: not a field container")
    header = np.frombuffer(data, I64, 5, 8)
    version, dim, rank_code, n_time, n_space = (int(v) for v in header)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    off = 8 + 5 * 8
    params = np.frombuffer(data, F64, 3 + dim, off)
    off += (3 + dim) * 8
    grid = UniformGrid(dim, float(params[0]), float(params[1]), n_time, float(params[2]), n_space,
                       tuple(float(c) for c in params[3:]))
    rank = RANKS[rank_code]
    comp = {"scalar": (), "vector": (dim,), "matrix": (dim, dim)}[rank]
    shape = (n_time + 1,) + (n_space,) * dim + comp
    count = int(np.prod(shape))
    if len(data) != off + 8 * count:
        raise ContainerError(f"{path}: payload size does not match the header")
    values = np.frombuffer(data, F64, count, off).reshape(shape)
    return SpaceTimeField(grid, values, rank, name)


def _component_labels(rank: str, dim: int) -> list[str]:
    if rank == "scalar":
        return ["value"]
    if rank == "vector":
        return [f"v{i + 1}" for i in range(dim)]
    return [f"m{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]


def field_to_csv(path, field: SpaceTimeField, time_stride: int = 1) -> None:
    """One row per (time level, node): ``t, x1[, x2], components...``."""
    g = field.grid
    pts = g.points.reshape(-1, g.dim)
    labels = _component_labels(field.rank, g.dim)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(g.dim)] + labels)
        for k in range(0, g.n_time + 1, time_stride):
            vals = field.values[k].reshape(len(pts), -1)
            for p, v in zip(pts, vals):
                w.writerow([repr(float(g.times[k]))] + [repr(float(c)) for c in p] + [repr(float(c)) for c in v])


def write_ensemble(path, ens: PathEnsemble) -> None:
    m, n, d = ens.states.shape
    flags = (ens.exited.astype(np.uint8) | (ens.failed.astype(np.uint8) << 1))
    with open(path, "wb") as fh:
        fh.write(ENSEMBLE_MAGIC)
        fh.write(np.array([VERSION, m, n, d], dtype=I64).tobytes())
        fh.write(np.asarray(ens.times, dtype=F64).tobytes())
        fh.write(np.ascontiguousarray(ens.states, dtype=F64).tobytes())
        fh.write(flags.tobytes())


def read_ensemble_arrays(path) -> dict:
    """Raw arrays of an ensemble container: ``times``, ``states``, ``exited``, ``failed``."""
    data = Path(path).read_bytes()
    if data[:8] != ENSEMBLE_MAGIC:
        raise ContainerError(f"{path}: not an ensemble container")
    version, m, n, d = (int(v) for v in np.frombuffer(data, I64, 4, 8))
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    off = 8 + 32
    times = np.frombuffer(data, F64, n, off)
    off += 8 * n
    states = np.frombuffer(data, F64, m * n * d, off).reshape(m, n, d)
    off += 8 * m * n * d
    flags = np.frombuffer(data, np.uint8, m, off)
    return {"times": times, "states": states, "exited": (flags & 1) > 0, "failed": (flags & 2) > 0}


def ensemble_to_csv(path, ens: PathEnsemble, max_paths: int | None = None) -> None:
    """Long format: ``path, t, x1[, x2]``."""
    m, n, d = ens.states.shape
    m = m if max_paths is None else min(m, max_paths)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "t"] + [f"x{i + 1}" for i in range(d)])
        for j in range(m):
            for k in range(n):
                w.writerow([j, repr(float(ens.times[k]))] + [repr(float(c)) for c in ens.states[j, k]])


def ensemble_summary(ens: PathEnsemble) -> dict:
    """Terminal moments over active paths plus flag counts and provenance."""
    xt = ens.terminal()
    return to_jsonable({
        "method": ens.method,
        "m_paths": ens.m_paths,
        "active_paths": int(ens.active.sum()),
        "exited_paths": int(ens.exited.sum()),
        "failed_paths": int(ens.failed.sum()),
        "horizon": float(ens.times[-1]),
        "terminal_mean": xt.mean(axis=0) if len(xt) else [],
        "terminal_variance": xt.var(axis=0, ddof=1) if len(xt) > 1 else [],
        "seed": ens.rng_seed,
        "scheme_tag": ens.scheme_tag,
        "brownian_moments": ens.increments.moments,
        "provenance": ens.provenance,
    })


def write_chain(directory, chain: ZvonkinChain) -> dict:
    """Segment containers plus ``chain.json``; returns the manifest written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = chain.manifest()
    for entry, seg in zip(manifest["segments"], chain.segments):
        i = entry["index"]
        write_field(directory / f"segment{i}_u.zvf", seg.u)
        entry["u_file"] = f"segment{i}_u.zvf"
        if seg.sigma_transformed is not None:
            write_field(directory / f"segment{i}_sigma.zvf", seg.sigma_transformed)
            entry["sigma_file"] = f"segment{i}_sigma.zvf"
    with open(directory / "chain.json", "w") as fh:
        json.dump(to_jsonable(manifest), fh, indent=2, sort_keys=True)
    return manifest


def write_json(path, data) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(to_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_scan_csv(path, columns: dict) -> None:
    """Columns of equal length as a CSV table."""
    names = list(columns)
    rows = zip(*[np.asarray(columns[k]).ravel() for k in names])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def write_gnuplot_stub(path, csv_name: str, x: str, ys: list[str], logscale: bool = False, title: str = "") -> None:
    """Minimal gnuplot script plotting columns of ``csv_name``; the CSV header names the columns."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{x}'",
    ]
    if logscale:
        lines.append("set logscale xy")
    plots = [f"'{csv_name}' using '{x}':'{y}' with linespoints" for y in ys]
    lines.append("plot " + ", \\\n     ".join(plots))
    Path(path).write_text("\n".join(lines) + "\n")
