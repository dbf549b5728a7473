"""Plain-text, graymap and binary writers for traces, grids and register snapshots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .state import MOMENTUM, QuantumRegister, momentum_values


class OutputError(OSError):
    """An output file or directory could not be written."""


def fmt(x) -> str:
    """Shortest round-tripping text for ints and floats; ``inf``/``nan`` spelled out."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {path}: {exc}") from exc
    if not path.is_dir():
        raise OutputError(f"output path {path} is not a directory")
    return path


def _open(path, mode="w"):
    try:
        if "b" in mode:
            return open(path, mode)
        return open(path, mode, encoding="utf-8", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def write_trace_csv(path, trace) -> Path:
    return write_csv(path, ("t", "f"), zip(trace.t.tolist(), trace.f.tolist()))


def write_moments_csv(path, moments) -> Path:
    return write_csv(path, ("t", "m2"), zip(moments.t.tolist(), moments.m2.tolist()))


def write_matrix(path, values: np.ndarray) -> Path:
    """Whitespace-separated rows, ``%.17g`` so values read back bit-exactly."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("matrix output needs a 2-d array")
    with _open(path) as fh:
        for row in values:
            fh.write(" ".join("%.17g" % v for v in row))
            fh.write("\n")
    return Path(path)


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def to_graymap(values: np.ndarray, p_vertical: bool = True) -> np.ndarray:
    """8-bit image of a ``(n_theta, n_p)`` grid scaled by its maximum.

    With ``p_vertical`` the angle runs left to right and momentum bottom to top.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("graymap needs a non-empty 2-d array")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("graymap values must be finite and non-negative")
    top = values.max()
    scaled = values / top if top > 0 else values
    img = np.rint(255 * scaled).astype(np.uint8)
    if p_vertical:
        img = img.T[::-1]
    return np.ascontiguousarray(img)


def write_pgm(path, values: np.ndarray, meta: dict | None = None, p_vertical: bool = True) -> tuple[Path, Path]:
    """Binary portable graymap plus a JSON sidecar ``<name>.json`` describing the axes."""
    img = to_graymap(values, p_vertical)
    path = Path(path)
    height, width = img.shape
    with _open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    side = {
        "shape": list(np.shape(values)),
        "max": float(np.max(values)),
        "horizontal": "theta in [0, 2pi)" if p_vertical else "p in [-pi, pi)",
        "vertical": "p in [-pi, pi), increasing upward" if p_vertical else "theta in [0, 2pi), increasing downward",
    }
    side.update(meta or {})
    sidecar = path.with_suffix(".json")
    write_json(sidecar, side)
    return path, sidecar


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary graymap")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit graymaps are supported")
    pixels = parts[4]
    return np.frombuffer(pixels[: width * height], dtype=np.uint8).reshape(height, width)


def write_husimi(stem, grid) -> dict:
    """Matrix text, graymap and sidecar for a :class:`~qsawtooth.analysis.HusimiGrid`."""
    stem = Path(stem)
    meta = {
        "n_theta": grid.shape[0],
        "n_p": grid.shape[1],
        "width_p": grid.width_p,
        "width_theta": grid.width_theta,
        "window": list(grid.window) if grid.window is not None else None,
        "samples": grid.samples,
    }
    matrix = write_matrix(stem.with_suffix(".txt"), grid.values)
    pgm, sidecar = write_pgm(stem.with_suffix(".pgm"), grid.values, meta)
    return {"matrix": matrix.name, "graymap": pgm.name, "sidecar": sidecar.name}


def write_json(path, obj) -> Path:
    with _open(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return Path(path)


# -- register snapshots -------------------------------------------------------


def _n_q_for(size: int) -> int:
    n_q = size.bit_length() - 1
    if size < 2 or 2**n_q != size:
        raise ValueError(f"snapshot holds {size} amplitudes, not a power of two >= 2")
    return n_q


def save_register(path, reg: QuantumRegister) -> Path:
    """Raw little-endian ``(Re, Im)`` float64 pairs in index order, no header."""
    data = np.asarray(reg.amplitudes, dtype="<c16").tobytes()
    with _open(path, "wb") as fh:
        fh.write(data)
    return Path(path)


def load_register(path, basis: str = MOMENTUM) -> QuantumRegister:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise ValueError(f"{path}: size {len(raw)} is not a whole number of complex amplitudes")
    amps = np.frombuffer(raw, dtype="<c16").astype(np.complex128)
    return QuantumRegister(_n_q_for(amps.size), amps, basis)


def save_register_csv(path, reg: QuantumRegister) -> Path:
    """Rows ``m, Re, Im``; ``m`` is the basis index (momentum ``n = m - N/2``)."""
    rows = ((m, a.real, a.imag) for m, a in enumerate(reg.amplitudes.tolist()))
    return write_csv(path, ("m", "Re", "Im"), rows)


def load_register_csv(path, basis: str = MOMENTUM) -> QuantumRegister:
    header, rows = read_csv(path)
    if header != ["m", "Re", "Im"]:
        raise ValueError(f"{path}: unexpected header {header}")
    n_q = _n_q_for(len(rows))
    amps = np.zeros(2**n_q, dtype=np.complex128)
    for m, re, im in rows:
        amps[int(m)] = complex(float(re), float(im))
    return QuantumRegister(n_q, amps, basis)


def momentum_table(reg: QuantumRegister) -> list[tuple[int, float]]:
    """``(n, |c_n|**2)`` pairs in ascending momentum."""
    prob = np.abs(reg.amplitudes) ** 2
    return list(zip(momentum_values(reg.n_q).tolist(), prob.tolist()))
