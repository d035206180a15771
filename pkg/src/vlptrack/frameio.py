"""File formats: binary PGM frames and newline-delimited JSON records.

Frames are plain 8-bit P5 PGM named ``frame_%06d.pgm``; the writer emits
a fixed-form header so identical pixels always produce identical bytes.
Ground truth and position fixes travel as one JSON object per line.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .geometry import PixelPoint, WorldPoint
from .pipeline import LampObservation, PositionFix
from .scene import Frame, GroundTruth, LampTruth

FRAME_NAME = "frame_{:06d}.pgm"
FRAME_RE = re.compile(r"frame_(\d{6})\.pgm$")


def write_pgm(path, pixels: np.ndarray) -> None:
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ValueError("PGM output wants a 2-D uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def parse_pgm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM (P5) stream")
    # header: magic, width, height, maxval; comments allowed
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        fields.append(int(data[start:pos]))
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    pos += 1
    if len(data) - pos < w * h:
        raise ValueError("truncated PGM pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return pixels.reshape(h, w).copy()


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return parse_pgm(data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_frame(directory, frame: Frame) -> Path:
    path = Path(directory) / FRAME_NAME.format(frame.frame_index)
    write_pgm(path, frame.pixels)
    return path


def read_frames(directory, fps: float):
    """Yield Frame objects from a directory of frame_%06d.pgm files."""
    paths = sorted(Path(directory).glob("frame_*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no frame_*.pgm files in {directory}")
    for path in paths:
        m = FRAME_RE.search(path.name)
        if not m:
            continue
        index = int(m.group(1))
        try:
            pixels = read_pgm(path)
        except ValueError as exc:
            raise ValueError(f"unreadable frame {path}: {exc}") from exc
        yield Frame(pixels.shape[1], pixels.shape[0], pixels, index / fps, index)


def _round(x, digits=6):
    return None if x is None else round(float(x), digits)


def truth_to_dict(truth: GroundTruth) -> dict:
    lamps = {}
    for lamp_id, lt in truth.lamps.items():
        lamps[str(lamp_id)] = {
            "u": _round(lt.centroid.u if lt.centroid else None),
            "v": _round(lt.centroid.v if lt.centroid else None),
            "radius_px": _round(lt.radius_px),
            "visible_fraction": _round(lt.visible_area_fraction),
            "in_view": lt.in_view,
        }
    return {
        "frame": truth.frame_index,
        "t": _round(truth.timestamp, 9),
        "terminal": [_round(truth.terminal_position.x),
                     _round(truth.terminal_position.y),
                     _round(truth.terminal_position.z)],
        "lamps": lamps,
    }


def truth_from_dict(record: dict) -> GroundTruth:
    lamps = {}
    for key, lt in record["lamps"].items():
        centroid = None
        if lt["u"] is not None:
            centroid = PixelPoint(lt["u"], lt["v"])
        lamps[int(key)] = LampTruth(centroid, lt["radius_px"],
                                    lt["visible_fraction"], lt["in_view"])
    x, y, z = record["terminal"]
    return GroundTruth(record["frame"], record["t"], WorldPoint(x, y, z), lamps)


def fix_to_dict(fix: PositionFix) -> dict:
    return {
        "frame": fix.frame_index,
        "t": _round(fix.timestamp, 9),
        "status": fix.status,
        "x_cm": _round(fix.x_cm),
        "y_cm": _round(fix.y_cm),
        "H_cm": _round(fix.height_cm),
        "stale": fix.stale,
        "lamps": [{"id": o.lamp_id, "u": _round(o.u, 3), "v": _round(o.v, 3),
                   "rho": _round(o.rho, 4), "iters": o.iterations}
                  for o in fix.lamps],
        "proc_ms": _round(fix.proc_ms, 3),
    }


def fix_from_dict(record: dict) -> PositionFix:
    lamps = [LampObservation(o["id"], o["u"], o["v"], o["rho"], o.get("iters", 0))
             for o in record["lamps"]]
    return PositionFix(record["frame"], record["t"], record["status"],
                       record["x_cm"], record["y_cm"], record["H_cm"],
                       record["stale"], lamps, record.get("proc_ms"))


def write_jsonl(path, records) -> int:
    count = 0
    with open(path, "w", encoding="ascii") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, allow_nan=False))
            fh.write("\n")
            count += 1
    return count


def read_jsonl(path) -> list[dict]:
    with open(path, "r", encoding="ascii") as fh:
        return [json.loads(line) for line in fh if line.strip()]
