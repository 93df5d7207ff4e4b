"""Little-endian binary containers (traces, fields, checkpoints, datasets) and CSV/PGM writers."""
from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, NormalizationMismatch
from .wave import ShotRecord

CHECKPOINT_VERSION = 1
DATASET_VERSION = 1


def _read(path) -> bytes:
    return Path(path).read_bytes()


class _Reader:
    def __init__(self, data: bytes, magic: bytes):
        if data[:4] != magic:
            raise FormatError(f"bad magic {data[:4]!r}, expected {magic!r}")
        self.data, self.pos = data, 4

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError("truncated file")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def floats(self, count: int) -> np.ndarray:
        end = self.pos + 4 * count
        if end > len(self.data):
            raise FormatError("truncated file")
        out = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.pos)
        self.pos = end
        return out.astype(np.float64)

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes")


def _f32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _field_payload(field: np.ndarray) -> bytes:
    # x varies fastest, so write the transpose in C order
    return _f32(np.asarray(field).T)


# -- traces ----------------------------------------------------------------

def write_traces(path, records: Sequence[ShotRecord]):
    if not records:
        raise FormatError("no shot records to write")
    nr, nt = records[0].traces.shape
    dt = records[0].dt
    if any(r.traces.shape != (nr, nt) for r in records):
        raise FormatError("all shots need the same receiver and time counts")
    body = b"".join(_f32(r.traces) for r in records)
    Path(path).write_bytes(b"FWIT" + struct.pack("<IIId", len(records), nr, nt, dt) + body)


def read_traces(path) -> list[ShotRecord]:
    r = _Reader(_read(path), b"FWIT")
    ns, nr, nt, dt = r.unpack("<IIId")
    recs = [ShotRecord(s, r.floats(nr * nt).reshape(nr, nt), dt) for s in range(ns)]
    r.done()
    return recs


# -- fields ----------------------------------------------------------------

def write_field(path, field: np.ndarray):
    field = np.asarray(field)
    if field.ndim != 2:
        raise FormatError(f"field must be 2D, got shape {field.shape}")
    nx, ny = field.shape
    Path(path).write_bytes(b"FWIF" + struct.pack("<II", nx, ny) + _field_payload(field))


def read_field(path) -> np.ndarray:
    r = _Reader(_read(path), b"FWIF")
    nx, ny = r.unpack("<II")
    out = r.floats(nx * ny).reshape(ny, nx).T.copy()
    r.done()
    return out


# -- checkpoints -----------------------------------------------------------

def write_checkpoint(path, tensors: Sequence[np.ndarray], seed: int, epoch: int):
    parts = [b"FWIC", struct.pack("<II", CHECKPOINT_VERSION, len(tensors))]
    for t in tensors:
        t = np.asarray(t)
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(_f32(t))
    parts.append(struct.pack("<QI", seed, epoch))
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path):
    """Returns (tensors, seed, epoch)."""
    r = _Reader(_read(path), b"FWIC")
    version, count = r.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    tensors = []
    for _ in range(count):
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}I") if rank else ()
        tensors.append(r.floats(int(np.prod(dims))).reshape(dims))
    seed, epoch = r.unpack("<QI")
    r.done()
    return tensors, seed, epoch


# -- datasets --------------------------------------------------------------

def write_dataset(path, records, norm_id: int):
    if not records:
        raise FormatError("empty dataset")
    nx, ny = records[0].input.shape
    parts = [b"FWID", struct.pack("<IIIIB", DATASET_VERSION, len(records), nx, ny, norm_id)]
    for rec in records:
        if rec.input.shape != (nx, ny) or rec.target.shape != (nx, ny):
            raise FormatError("records disagree on field shape")
        parts += [_field_payload(rec.input), _field_payload(rec.target), struct.pack("<Q", rec.seed)]
    Path(path).write_bytes(b"".join(parts))


def read_dataset(path, expect_norm: int | None = None):
    """Returns (records, norm_id)."""
    from .scenarios import DatasetRecord

    r = _Reader(_read(path), b"FWID")
    version, count, nx, ny, norm_id = r.unpack("<IIIIB")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if expect_norm is not None and norm_id != expect_norm:
        raise NormalizationMismatch(f"dataset normalization {norm_id}, expected {expect_norm}")
    records = []
    for _ in range(count):
        x = r.floats(nx * ny).reshape(ny, nx).T.copy()
        y = r.floats(nx * ny).reshape(ny, nx).T.copy()
        (seed,) = r.unpack("<Q")
        records.append(DatasetRecord(x, y, seed))
    r.done()
    return records, norm_id


# -- text outputs ----------------------------------------------------------

def render_pgm(field: np.ndarray) -> bytes:
    """8-bit binary PGM; gamma in [0, 1] maps linearly to 0..255, rows are y."""
    f = np.asarray(field, dtype=np.float64)
    gray = np.rint(np.clip(f, 0.0, 1.0) * 255.0).astype(np.uint8).T
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode() + gray.tobytes()


def write_pgm(path, field: np.ndarray):
    Path(path).write_bytes(render_pgm(field))


def read_pgm(path) -> np.ndarray:
    data = _read(path)
    head = data.split(b"\n", 3)
    if head[0] != b"P5" or len(head) < 4:
        raise FormatError("not a binary PGM")
    w, h = map(int, head[1].split())
    return np.frombuffer(head[3], dtype=np.uint8, count=w * h).reshape(h, w).T


METRICS_HEADER = ("iteration", "cost_scaled", "cost_raw", "mse", "wall_ms")
TRAIN_LOG_HEADER = ("epoch", "train_mse", "val_mse", "lr_factor")


def write_csv(path, header: Sequence[str], rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_metrics(path, metrics, include_wall: bool = True):
    """Per-iteration metrics; ``include_wall=False`` writes 0 for the timing column."""
    rows = [(m.iteration, m.cost_scaled, m.cost_raw, m.mse, m.wall_ms if include_wall else 0.0)
            for m in metrics]
    write_csv(path, METRICS_HEADER, rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
