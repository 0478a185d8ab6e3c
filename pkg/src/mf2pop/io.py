"""CSV and JSON persistence. Floats are written with 17 significant digits, which round-trips doubles."""

import csv
import json
from pathlib import Path

import numpy as np

FMT = "%.17g"


def _fmt(v):
    return FMT % v


def write_table(path, header, rows):
    """Write a header row then numeric rows."""
    path = Path(path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float)) + 0.0  # no "-0" entries
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path):
    """Return ``(header, data)`` with ``data`` a 2-D float array."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r], dtype=float)
    return header, data.reshape(-1, len(header))


def write_field(path, grid, values):
    """Space-time field: one row per time node, first column t, one column per x node."""
    values = np.asarray(values, dtype=float)
    header = ["t"] + [_fmt(x) for x in grid.x]
    return write_table(path, header, np.column_stack([grid.t, values]))


def read_field(path):
    """Return ``(t, x, values)`` from a file written by :func:`write_field`."""
    header, data = read_table(path)
    x = np.array([float(h) for h in header[1:]])
    return data[:, 0], x, data[:, 1:]


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def lq_rows(state):
    """Columns t, P, nu, tau and mbar (vectorized per population) of a RiccatiState."""
    n = state.params.n
    header = ["t"]
    cols = [state.t]
    for i in range(2):
        for a in range(n):
            for b in range(n):
                header.append(f"P{i + 1}_{a}{b}")
                cols.append(state.P[:, i, a, b])
    for i in range(2):
        for a in range(n):
            header.append(f"nu{i + 1}_{a}")
            cols.append(state.nu[:, i, a])
    for i in range(2):
        header.append(f"tau{i + 1}")
        cols.append(state.tau[:, i])
    for i in range(2):
        for a in range(n):
            header.append(f"mbar{i + 1}_{a}")
            cols.append(state.mbar[:, i, a])
    return header, np.column_stack(cols)


def k_rows(state):
    N = state.K.shape[-1]
    header = ["t"] + [f"K_{a}{b}" for a in range(N) for b in range(N)]
    return header, np.column_stack([state.t, state.K.reshape(state.K.shape[0], -1)])
