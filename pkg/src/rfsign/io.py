"""Text and image artifacts exchanged between pipeline stages.

Matrices are written as CSV with ``%.17g`` so every float64 survives a round
trip bit for bit. A leading ``#`` line carries the axis scalings as
``key=value`` pairs. All writers go through a temporary file and a rename so
readers never observe a partial file.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .envelope import DistanceVector, EnvelopePair
from .motiondetect import MDI
from .rfrep import RAFrame, RDFrame, Spectrogram
from .seqdecode import DetectionReport, ScoreStream, TriggerEvent

__all__ = [
    "FormatError",
    "SCHEMA_VERSION",
    "write_atomic",
    "write_json",
    "read_json",
    "rd_to_csv",
    "rd_from_csv",
    "spectrogram_to_csv",
    "spectrogram_from_csv",
    "ra_to_csv",
    "ra_from_csv",
    "to_pgm",
    "envelopes_to_csv",
    "envelopes_from_csv",
    "distance_to_csv",
    "distance_from_csv",
    "mask_to_csv",
    "mask_from_csv",
    "scores_to_csv",
    "scores_from_csv",
    "mdis_to_json",
    "mdis_from_json",
    "events_to_json",
    "report_to_json",
]

SCHEMA_VERSION = 1
_FMT = "%.17g"


class FormatError(ValueError):
    """An input artifact does not follow its documented layout."""


def write_atomic(path, data: str | bytes) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc: dict) -> None:
    write_atomic(path, json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2) + "\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    return doc


# --- matrices -------------------------------------------------------------


def _matrix_csv(header: dict, matrix: np.ndarray, axis: np.ndarray | None = None) -> str:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={_num(v)}" for k, v in header.items()) + "\n")
    if axis is not None:
        buf.write("# axis=" + ",".join(_FMT % x for x in np.asarray(axis, dtype=float)) + "\n")
    np.savetxt(buf, np.atleast_2d(np.asarray(matrix, dtype=float)), fmt=_FMT, delimiter=",")
    return buf.getvalue()


def _num(v) -> str:
    return v if isinstance(v, str) else _FMT % v


def _parse_matrix_csv(text: str, kind: str, keys: tuple[str, ...], want_axis: bool = False):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise FormatError(f"{kind} CSV lacks its '#' header line")
    header = {}
    for item in lines[0][2:].split():
        k, sep, v = item.partition("=")
        if not sep:
            raise FormatError(f"bad header entry {item!r}")
        header[k] = v
    if header.get("kind") != kind:
        raise FormatError(f"expected a {kind} CSV, header says {header.get('kind')!r}")
    missing = [k for k in keys if k not in header]
    if missing:
        raise FormatError(f"{kind} CSV header misses {', '.join(missing)}")
    body = lines[1:]
    axis = None
    if want_axis:
        if not body or not body[0].startswith("# axis="):
            raise FormatError(f"{kind} CSV lacks its axis line")
        axis = np.array([float(x) for x in body[0][len("# axis="):].split(",") if x], dtype=float)
        body = body[1:]
    try:
        rows = [[float(x) for x in line.split(",")] for line in body if line.strip()]
        matrix = np.array(rows, dtype=float)
    except ValueError as exc:
        raise FormatError(f"{kind} CSV: non-numeric cell ({exc})") from exc
    if matrix.ndim != 2 or matrix.size == 0:
        raise FormatError(f"{kind} CSV: ragged or empty matrix")
    return {k: float(header[k]) for k in keys}, matrix, axis


def rd_to_csv(frame: RDFrame) -> str:
    """Rows are range bins, columns Doppler bins (zero-centred)."""
    header = {
        "kind": "rd",
        "range_bin_m": frame.range_bin_m,
        "doppler_bin_hz": frame.doppler_bin_hz,
        "timestamp_s": frame.timestamp_s,
    }
    return _matrix_csv(header, frame.magnitude)


def rd_from_csv(text: str) -> RDFrame:
    h, m, _ = _parse_matrix_csv(text, "rd", ("range_bin_m", "doppler_bin_hz", "timestamp_s"))
    return RDFrame(m, h["range_bin_m"], h["doppler_bin_hz"], h["timestamp_s"])


def spectrogram_to_csv(spec: Spectrogram) -> str:
    """Rows are Doppler bins, columns time bins; the axis line holds ``times_s``."""
    header = {
        "kind": "spectrogram",
        "window_s": spec.window_s,
        "hop_s": spec.hop_s,
        "doppler_bin_hz": spec.doppler_bin_hz,
    }
    return _matrix_csv(header, spec.power, spec.times_s)


def spectrogram_from_csv(text: str) -> Spectrogram:
    h, m, t = _parse_matrix_csv(text, "spectrogram", ("window_s", "hop_s", "doppler_bin_hz"), True)
    if t.size != m.shape[1]:
        raise FormatError(f"spectrogram has {m.shape[1]} columns but {t.size} time stamps")
    return Spectrogram(m, h["window_s"], h["hop_s"], h["doppler_bin_hz"], t)


def ra_to_csv(frame: RAFrame) -> str:
    """Rows are range bins, columns angles; the axis line holds the angle grid in radians."""
    header = {"kind": "ra", "range_bin_m": frame.range_bin_m, "timestamp_s": frame.timestamp_s}
    return _matrix_csv(header, frame.magnitude, frame.angles_rad)


def ra_from_csv(text: str) -> RAFrame:
    h, m, a = _parse_matrix_csv(text, "ra", ("range_bin_m", "timestamp_s"), True)
    try:
        return RAFrame(m, a, h["range_bin_m"], h["timestamp_s"])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def to_pgm(image: np.ndarray) -> bytes:
    """8-bit binary PGM, max-normalised; row 0 is the first array row."""
    a = np.asarray(image, dtype=float)
    if a.ndim != 2:
        raise ValueError("PGM export needs a 2-D array")
    top = a.max() if a.size else 0.0
    scaled = np.zeros(a.shape) if top <= 0 else np.clip(a, 0, None) / top
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


# --- per-step series --------------------------------------------------------


def _table(header: list[str], columns: list[np.ndarray]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    if columns and len(columns[0]):
        np.savetxt(buf, np.column_stack(columns), fmt=_FMT, delimiter=",")
    return buf.getvalue()


def _read_table(text: str, header: list[str], what: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != header:
        raise FormatError(f"{what} CSV must start with header {','.join(header)}")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{what} CSV: non-numeric cell ({exc})") from exc
    if data.size == 0:
        return np.zeros((0, len(header)))
    if data.ndim != 2 or data.shape[1] != len(header):
        raise FormatError(f"{what} CSV rows must have {len(header)} fields")
    return data


def envelopes_to_csv(env: EnvelopePair) -> str:
    return _table(["time_s", "upper_hz", "lower_hz"], [env.times_s, env.upper, env.lower])


def envelopes_from_csv(text: str) -> EnvelopePair:
    d = _read_table(text, ["time_s", "upper_hz", "lower_hz"], "envelope")
    try:
        return EnvelopePair(d[:, 1].copy(), d[:, 2].copy(), d[:, 0].copy())
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def distance_to_csv(dv: DistanceVector, times_s: np.ndarray | None = None) -> str:
    t = np.arange(len(dv)) * dv.step_s if times_s is None else np.asarray(times_s, dtype=float)
    return _table(["time_s", "value"], [t, dv.values])


def distance_from_csv(text: str, step_s: float = 0.2, normalized: bool = False) -> DistanceVector:
    d = _read_table(text, ["time_s", "value"], "distance")
    if len(d) > 1:
        step_s = float(d[1, 0] - d[0, 0])
    try:
        return DistanceVector(d[:, 1].copy(), normalized, step_s)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def mask_to_csv(mask) -> str:
    return "motion\n" + "".join(f"{int(bool(x))}\n" for x in mask)


def mask_from_csv(text: str) -> np.ndarray:
    d = _read_table(text, ["motion"], "mask")
    if not np.all(np.isin(d, (0.0, 1.0))):
        raise FormatError("mask CSV holds values other than 0 and 1")
    return d[:, 0].astype(bool)


def scores_to_csv(stream: ScoreStream) -> str:
    """One row per step; the blank class is the first column."""
    order = [stream.blank] + [c for c in stream.labels if c != stream.blank]
    cols = [stream.probs[:, stream.index(c)] for c in order]
    buf = io.StringIO()
    buf.write(f"# step_duration_s={_FMT % stream.step_duration_s}\n")
    buf.write(_table(order, cols))
    return buf.getvalue()


def scores_from_csv(text: str) -> ScoreStream:
    step = 0.2
    if text.startswith("# "):
        first, _, text = text.partition("\n")
        k, _, v = first[2:].partition("=")
        if k.strip() == "step_duration_s":
            step = float(v)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("score CSV is empty")
    labels = [c.strip() for c in rows[0]]
    d = _read_table(text, labels, "score")
    try:
        return ScoreStream(d, tuple(labels), labels[0], step)
    except ValueError as exc:
        raise FormatError(f"score CSV: {exc}") from exc


# --- JSON documents ---------------------------------------------------------


def mdis_to_json(mdis, step_s: float, n_steps: int | None = None) -> dict:
    doc = {"step_s": step_s, "mdis": [m.to_dict() for m in mdis]}
    if n_steps is not None:
        doc["n_steps"] = n_steps
    return doc


def mdis_from_json(doc: dict) -> tuple[list[MDI], float]:
    try:
        step_s = float(doc.get("step_s", 0.2))
        return [MDI.from_dict(d, step_s) for d in doc["mdis"]], step_s
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"MDI document: {exc}") from exc


def events_to_json(events: list[TriggerEvent]) -> dict:
    return {"events": [e.to_dict() for e in events]}


def report_to_json(report: DetectionReport, **extra) -> dict:
    return {**report.to_dict(), **extra}
