"""JSON-Lines record formats.

Every file starts with a header line ``{"format":...,"version":1}`` followed
by one record per line.  Records are written with a fixed field order and
floats with 17 significant digits so that parsing a written file gives back
exactly the same values.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from collections.abc import Iterable, Iterator
from pathlib import Path

import numpy as np

from .fusion import SourcedMeasurement, TrackOutput
from .synth import GroundTruthTrack

VERSION = 1
MEASUREMENT = "measurement"
GT = "gt"
PREDICTION = "prediction"

_FIELDS = {
    MEASUREMENT: ("t", "track_id", "source", "kind", "z", "p_vis"),
    GT: ("t", "track_id", "pos", "visible"),
    PREDICTION: ("t", "track_id", "pos", "cov_pos"),
}


class FormatError(ValueError):
    """Malformed input; carries the file and 1-based line number."""

    def __init__(self, path, line: int, msg: str):
        self.path = str(path)
        self.line = line
        self.msg = msg
        super().__init__(f"{path}:{line}: {msg}")


def fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x}")
    return format(x, ".17g")


def _vec(values) -> str:
    return "[" + ",".join(fmt_float(v) for v in values) + "]"


def header_line(kind: str) -> str:
    return f'{{"format":"{kind}","version":{VERSION}}}'


def measurement_line(m: SourcedMeasurement) -> str:
    return (
        f'{{"t":{fmt_float(m.t)},"track_id":{int(m.track_id)},"source":"{m.source}",'
        f'"kind":"{m.kind}","z":{_vec(m.z_raw)},"p_vis":{fmt_float(m.p_vis)}}}'
    )


def gt_line(track_id: int, t: float, pos, visible: bool) -> str:
    return (
        f'{{"t":{fmt_float(t)},"track_id":{int(track_id)},"pos":{_vec(pos)},'
        f'"visible":{"true" if visible else "false"}}}'
    )


def prediction_line(track_id: int, o: TrackOutput) -> str:
    return (
        f'{{"t":{fmt_float(o.t)},"track_id":{int(track_id)},"pos":{_vec(o.pos)},'
        f'"cov_pos":{_vec(np.ravel(o.cov_pos))}}}'
    )


def gt_lines(tracks: Iterable[GroundTruthTrack]) -> Iterator[str]:
    for tr in tracks:
        for k in range(len(tr.t)):
            yield gt_line(tr.track_id, tr.t[k], tr.pos[k], bool(tr.visible[k]))


def write_atomic(path, lines: Iterable[str]) -> None:
    """Write ``lines`` (newline-terminated) to ``path`` via temp file + rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line)
                f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_records(path, kind: str, lines: Iterable[str]) -> None:
    def all_lines():
        yield header_line(kind)
        yield from lines

    write_atomic(path, all_lines())


def _pair(v, path, line, name) -> np.ndarray:
    if not (isinstance(v, list) and len(v) == 2):
        raise FormatError(path, line, f"{name} must be a 2-element array")
    return _floats(v, path, line, name)


def _floats(v, path, line, name) -> np.ndarray:
    try:
        if any(isinstance(x, bool) for x in v):
            raise TypeError
        return np.array([float(x) for x in v], dtype=np.float64)
    except (TypeError, ValueError):
        raise FormatError(path, line, f"{name} must contain numbers") from None


def _number(v, path, line, name) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FormatError(path, line, f"{name} must be a number")
    return float(v)


def _int(v, path, line, name) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise FormatError(path, line, f"{name} must be an integer")
    return v


def read_records(path, kind: str) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)`` after validating header and field names."""
    fields = _FIELDS[kind]
    with open(path, encoding="utf-8") as f:
        first = True
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise FormatError(path, lineno, "record must be a JSON object")
            if first:
                first = False
                if obj.get("format") != kind or obj.get("version") != VERSION:
                    raise FormatError(path, lineno, f"expected {kind} header, got {obj}")
                continue
            if tuple(obj) != fields:
                raise FormatError(path, lineno, f"expected fields {list(fields)}, got {list(obj)}")
            yield lineno, obj
        if first:
            raise FormatError(path, 1, f"empty file, expected {kind} header")


def read_measurements(path) -> list[SourcedMeasurement]:
    out = []
    for ln, r in read_records(path, MEASUREMENT):
        try:
            out.append(SourcedMeasurement(
                _number(r["t"], path, ln, "t"), _int(r["track_id"], path, ln, "track_id"),
                r["source"], r["kind"], _pair(r["z"], path, ln, "z"),
                _number(r["p_vis"], path, ln, "p_vis"),
            ))
        except FormatError:
            raise
        except ValueError as exc:
            raise FormatError(path, ln, str(exc)) from None
    return out


def read_gt(path) -> list[GroundTruthTrack]:
    rows: dict[int, list] = {}
    for ln, r in read_records(path, GT):
        if not isinstance(r["visible"], bool):
            raise FormatError(path, ln, "visible must be a boolean")
        tid = _int(r["track_id"], path, ln, "track_id")
        rows.setdefault(tid, []).append(
            (_number(r["t"], path, ln, "t"), _pair(r["pos"], path, ln, "pos"), r["visible"])
        )
    tracks = []
    for tid, rs in rows.items():
        t = np.array([x[0] for x in rs])
        if np.any(np.diff(t) <= 0.0):
            raise FormatError(path, 0, f"track {tid}: timestamps not strictly increasing")
        tracks.append(GroundTruthTrack(
            tid, t, np.array([x[1] for x in rs]).reshape(-1, 2), np.array([x[2] for x in rs], bool)
        ))
    return tracks


def read_predictions(path) -> dict[int, list[TrackOutput]]:
    out: dict[int, list[TrackOutput]] = {}
    for ln, r in read_records(path, PREDICTION):
        cov = r["cov_pos"]
        if not (isinstance(cov, list) and len(cov) == 4):
            raise FormatError(path, ln, "cov_pos must be a 4-element array")
        tid = _int(r["track_id"], path, ln, "track_id")
        out.setdefault(tid, []).append(TrackOutput(
            _number(r["t"], path, ln, "t"), _pair(r["pos"], path, ln, "pos"),
            _floats(cov, path, ln, "cov_pos").reshape(2, 2),
        ))
    return out
