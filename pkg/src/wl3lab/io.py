"""Result persistence: field snapshots, atomic text writes, CSV and JSON records."""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .grid import GridSpec, SpaceTimeField, TimeGrid, make_field

__all__ = [
    "atomic_write_text",
    "atomic_write_bytes",
    "write_json",
    "write_csv",
    "save_snapshot",
    "load_snapshot",
    "write_kernel_samples",
    "save_state",
    "output_root",
]

OUTPUT_ENV = "WL3_OUTPUT_ROOT"


def output_root(default="results") -> Path:
    return Path(os.environ.get(OUTPUT_ENV, default))


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, record, **kw) -> Path:
    kw.setdefault("indent", 2)
    return atomic_write_text(path, json.dumps(record, **kw) + "\n")


def write_csv(path, header, rows) -> Path:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# snapshots: <name>.json header + <name>.f64 little-endian row-major payload


def save_snapshot(field, directory, name: str) -> tuple[Path, Path]:
    directory = Path(directory)
    vals = np.ascontiguousarray(field.values, dtype="<f8")
    header = {
        "grid": field.grid.as_dict(),
        "shape": list(vals.shape),
        "dtype": "float64-le",
        "order": "C",
    }
    if isinstance(field, SpaceTimeField):
        header["kind"] = "spacetime"
        header["components"] = list(vals.shape[1:-3])
        header["time"] = field.time.as_dict()
    else:
        header["kind"] = "field"
        header["components"] = list(vals.shape[:-3])
    payload = atomic_write_bytes(directory / f"{name}.f64", vals.tobytes())
    head = write_json(directory / f"{name}.json", header)
    return head, payload


def load_snapshot(directory, name: str):
    directory = Path(directory)
    header = json.loads((directory / f"{name}.json").read_text())
    g = header["grid"]
    grid = GridSpec(g["L"], g["N"], tuple(g["offset"]))
    raw = np.fromfile(directory / f"{name}.f64", dtype="<f8")
    shape = tuple(header["shape"])
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"payload holds {raw.size} values, header expects shape {shape}")
    vals = raw.reshape(shape)
    if header["kind"] == "spacetime":
        t = header["time"]
        return SpaceTimeField(TimeGrid(t["t0"], t["t1"], t["steps"]), grid, vals)
    return make_field(grid, vals)


def write_kernel_samples(path, samples) -> Path:
    """CSV ``x1,x2,x3,t,i,j,value,method`` from :class:`~wl3lab.kernels.KernelSample` items."""
    rows = []
    for s in samples:
        vals = np.asarray(s.value)
        x = np.asarray(s.x, dtype=float)
        if vals.ndim == 0:
            rows.append([*map(repr, x), repr(s.t), "", "", repr(float(vals)), s.method])
            continue
        for (i, j), v in np.ndenumerate(vals.reshape(vals.shape[0], -1)):
            rows.append([*map(repr, x), repr(s.t), i, j, repr(float(v)), s.method])
    return write_csv(path, ["x1", "x2", "x3", "t", "i", "j", "value", "method"], rows)


def save_state(state, directory, name: str) -> Path:
    """Snapshot every component of a localized state plus a manifest ``<name>.manifest.json``."""
    directory = Path(directory)
    parts = {}
    for comp in ("u", "u_tilde", "eta", "p_tilde", "f0", "f1"):
        st = getattr(state, comp)
        if st is not None:
            save_snapshot(st, directory, f"{name}.{comp}")
            parts[comp] = f"{name}.{comp}"
    manifest = {"components": parts, "cutoffs": state.cutoffs.as_dict(), "source_relative_mean": state.source_mean}
    return write_json(directory / f"{name}.manifest.json", manifest)
