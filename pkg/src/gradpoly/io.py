"""Atomic file output, CSV formats and run manifests."""
from __future__ import annotations

import json
import os
import platform
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FMT = "%.17g"


def atomic_write_text(path, text: str) -> None:
    """Write text to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "numerator") and hasattr(o, "denominator"):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def comment_lines(tolerances: dict | None = None, seed=None) -> list:
    lines = []
    if tolerances is not None:
        lines.append("# tolerances: " + json.dumps(tolerances, sort_keys=True))
    if seed is not None:
        lines.append(f"# seed: {seed}")
    return lines


def csv_text(header: Sequence[str], rows: Iterable[Sequence[float]], tolerances: dict | None = None,
             seed=None) -> str:
    """CSV with optional ``# tolerances:`` and ``# seed:`` comment lines first."""
    lines = comment_lines(tolerances, seed)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows, tolerances: dict | None = None, seed=None) -> None:
    atomic_write_text(path, csv_text(header, rows, tolerances, seed))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    header: list[str] = []
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not header:
                header = line.split(",")
                continue
            rows.append([float(t) for t in line.split(",")])
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def points_to_rows(points: np.ndarray) -> np.ndarray:
    """Complex point rows -> interleaved real/imag float rows."""
    P = np.asarray(points, dtype=complex)
    out = np.empty((P.shape[0], 2 * P.shape[1]))
    out[:, 0::2] = P.real
    out[:, 1::2] = P.imag
    return out


def rows_to_points(rows: np.ndarray) -> np.ndarray:
    R = np.asarray(rows, dtype=float)
    return R[:, 0::2] + 1j * R[:, 1::2]


def point_header(n: int) -> list[str]:
    return [f"{part}{i}" for i in range(n) for part in ("re", "im")]


def write_point_cloud(path, points, tolerances=None, seed=None) -> None:
    P = np.asarray(points)
    write_csv(path, point_header(P.shape[1]), points_to_rows(P), tolerances, seed)


def read_point_cloud(path) -> np.ndarray:
    _, rows = read_csv(path)
    return rows_to_points(rows)


def versions() -> dict:
    import scipy

    from . import __version__

    return {"gradpoly": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def manifest(command: str, inputs: dict, seed, tolerances: dict, outputs: Sequence[str]) -> dict:
    return {"command": command, "inputs": inputs, "seed": seed, "tolerances": tolerances,
            "versions": versions(), "outputs": sorted(outputs)}
