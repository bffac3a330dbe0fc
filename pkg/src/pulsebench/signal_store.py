"""Waveforms, missingness masks, and the file formats they travel in.

Waveform matrices are stored as NPY files (one 100 Hz waveform per row) and
missingness patterns as text rows of ``(flag,length)`` run-length tuples,
where flag 1 means present and 0 means missing.
"""
from __future__ import annotations

import ast
import csv
import json
import logging
import math
import re
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, FormatError, UnsupportedLayoutError, VacuousCaseError

log = logging.getLogger(__name__)

SAMPLE_RATE_HZ = 100

PRESENT = 1
MISSING = 0


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Waveform:
    """A univariate fixed-rate signal. Samples are stored read-only."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ
    id: str = ""
    lead_label: str | None = None

    def __post_init__(self):
        arr = _frozen_array(self.samples)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError(f"waveform samples must be a non-empty 1-D sequence, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"waveform {self.id!r} contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate_hz, self.id, self.lead_label)


def _normalize_runs(runs: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    out: list[list[int]] = []
    for flag, length in runs:
        flag, length = int(flag), int(length)
        if flag not in (PRESENT, MISSING):
            raise FormatError(f"mask flag must be 0 or 1, got {flag}")
        if length <= 0:
            raise FormatError(f"mask run length must be positive, got {length}")
        if out and out[-1][0] == flag:
            out[-1][1] += length
        else:
            out.append([flag, length])
    return tuple((f, n) for f, n in out)


@dataclass(frozen=True)
class MissingnessMask:
    """Run-length encoded present/missing pattern.

    Runs are merged on construction, so two masks describing the same
    dense pattern compare equal.
    """

    runs: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "runs", _normalize_runs(self.runs))

    @classmethod
    def from_dense(cls, present: Sequence[bool] | np.ndarray) -> "MissingnessMask":
        present = np.asarray(present, dtype=bool)
        if present.size == 0:
            return cls(())
        change = np.flatnonzero(present[1:] != present[:-1]) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [present.size]))
        return cls(tuple((int(present[s]), int(e - s)) for s, e in zip(starts, ends)))

    @classmethod
    def all_present(cls, length: int) -> "MissingnessMask":
        return cls(((PRESENT, length),)) if length > 0 else cls(())

    @classmethod
    def all_missing(cls, length: int) -> "MissingnessMask":
        return cls(((MISSING, length),)) if length > 0 else cls(())

    def __len__(self) -> int:
        return sum(n for _, n in self.runs)

    @property
    def length(self) -> int:
        return len(self)

    def to_dense(self) -> np.ndarray:
        """Boolean vector, True where the sample is present."""
        if not self.runs:
            return np.zeros(0, dtype=bool)
        flags = np.array([f for f, _ in self.runs], dtype=bool)
        lengths = np.array([n for _, n in self.runs], dtype=np.int64)
        return np.repeat(flags, lengths)

    def missing_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.to_dense())

    @property
    def missing_count(self) -> int:
        return sum(n for f, n in self.runs if f == MISSING)

    @property
    def missing_fraction(self) -> float:
        total = len(self)
        return self.missing_count / total if total else 0.0

    def gap_lengths(self) -> list[int]:
        return [n for f, n in self.runs if f == MISSING]

    def crop(self, start: int, length: int) -> "MissingnessMask":
        """Sub-mask covering ``[start, start + length)``."""
        if start < 0 or start + length > len(self):
            raise DimensionError(f"crop [{start}, {start + length}) outside mask of length {len(self)}")
        return MissingnessMask.from_dense(self.to_dense()[start:start + length])

    def to_text(self) -> str:
        return ",".join(f"({f},{n})" for f, n in self.runs)


@dataclass(frozen=True)
class AblationCase:
    """Ground truth, its mask, and the ablated view (missing samples set to 0)."""

    ground_truth: Waveform
    mask: MissingnessMask
    ablated: Waveform

    @property
    def present(self) -> np.ndarray:
        return self.mask.to_dense()

    @property
    def missing(self) -> np.ndarray:
        return ~self.mask.to_dense()


def apply_mask(w: Waveform, m: MissingnessMask) -> AblationCase:
    if len(m) != len(w):
        raise DimensionError(f"mask length {len(m)} does not match waveform length {len(w)}")
    present = m.to_dense()
    if present.all():
        raise VacuousCaseError(f"mask leaves waveform {w.id!r} fully observed")
    ablated = np.where(present, w.samples, 0.0)
    return AblationCase(w, m, w.with_samples(ablated))


@dataclass(frozen=True)
class NormalizationRecord:
    method: str
    offset: float
    scale: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.offset) / self.scale

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.scale + self.offset


def normalize(w: Waveform, method: str = "minmax") -> tuple[Waveform, NormalizationRecord]:
    """Scale a waveform and return the record needed to undo it.

    A constant signal gets ``scale=1`` and ``offset`` equal to its value.
    """
    x = w.samples
    if method == "minmax":
        lo, hi = float(x.min()), float(x.max())
        rec = NormalizationRecord("minmax", lo, hi - lo if hi > lo else 1.0)
    elif method == "zscore":
        mu, sd = float(x.mean()), float(x.std())
        rec = NormalizationRecord("zscore", mu, sd if sd > 0 else 1.0)
    elif method == "none":
        rec = NormalizationRecord("none", 0.0, 1.0)
    else:
        raise ValueError(f"unknown normalization method {method!r}")
    return w.with_samples(rec.apply(x)), rec


# ---------------------------------------------------------------------------
# NPY

_NPY_MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCR = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _parse_npy_header(buf: bytes) -> tuple[np.dtype, tuple[int, ...], int]:
    if len(buf) < 10 or buf[:6] != _NPY_MAGIC:
        raise FormatError("missing NPY magic string")
    major, minor = buf[6], buf[7]
    if (major, minor) == (1, 0):
        (hlen,) = struct.unpack("<H", buf[8:10])
        start = 10
    elif (major, minor) in ((2, 0), (3, 0)):
        if len(buf) < 12:
            raise FormatError("truncated NPY header")
        (hlen,) = struct.unpack("<I", buf[8:12])
        start = 12
        if major == 3:
            raise UnsupportedLayoutError("NPY version 3.0 (utf-8 headers) is not supported")
    else:
        raise FormatError(f"unknown NPY version {major}.{minor}")
    raw = buf[start:start + hlen]
    if len(raw) != hlen:
        raise FormatError("truncated NPY header")
    try:
        header = ast.literal_eval(raw.decode("latin1"))
    except (SyntaxError, ValueError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"NPY header has wrong keys: {header!r}")
    descr, fortran, shape = header["descr"], header["fortran_order"], header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError(f"bad NPY shape {shape!r}")
    if fortran:
        raise UnsupportedLayoutError("Fortran-ordered NPY arrays are not supported")
    if descr not in _SUPPORTED_DESCR:
        raise UnsupportedLayoutError(f"unsupported NPY dtype {descr!r}; need little-endian float32/float64")
    if len(shape) not in (1, 2):
        raise UnsupportedLayoutError(f"NPY array must be 1-D or 2-D, got {len(shape)}-D")
    return _SUPPORTED_DESCR[descr], shape, start + hlen


def read_npy_matrix(path: str | Path) -> np.ndarray:
    """Read a float NPY file as a 2-D float64 matrix, one waveform per row.

    1-D files are returned as a single row. NaN cells are kept; a warning
    reports how many rows contain them.
    """
    data = Path(path).read_bytes()
    dtype, shape, offset = _parse_npy_header(data)
    count = int(np.prod(shape)) if shape else 1
    need = count * dtype.itemsize
    if len(data) - offset < need:
        raise FormatError(f"NPY payload truncated: need {need} bytes, have {len(data) - offset}")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape)
    if arr.ndim == 1:
        arr = arr[None, :]
    out = arr.astype(np.float64)
    nan_rows = int(np.isnan(out).any(axis=1).sum())
    if nan_rows:
        warnings.warn(f"{path}: {nan_rows} row(s) contain NaN", stacklevel=2)
    return out


def rows_with_nan(matrix: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.isnan(matrix).any(axis=1))


def write_npy(path: str | Path, array: np.ndarray, dtype: str = "<f8") -> None:
    """Write a C-ordered little-endian float NPY file (version 1.0 when it fits)."""
    arr = np.ascontiguousarray(array, dtype=np.dtype(dtype))
    if arr.ndim not in (1, 2):
        raise DimensionError("only 1-D or 2-D arrays are written")
    shape = arr.shape
    shape_txt = f"({shape[0]},)" if len(shape) == 1 else "(" + ", ".join(str(s) for s in shape) + ")"
    header = f"{{'descr': '{np.dtype(dtype).str}', 'fortran_order': False, 'shape': {shape_txt}, }}"
    pre_len = 10
    if len(header) + 1 + pre_len > 65535:
        version, pre_len = (2, 0), 12
    else:
        version = (1, 0)
    pad = (-(pre_len + len(header) + 1)) % 64
    header_bytes = (header + " " * pad + "\n").encode("latin1")
    with open(path, "wb") as fh:
        fh.write(_NPY_MAGIC + bytes(version))
        fh.write(struct.pack("<H" if version == (1, 0) else "<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(arr.tobytes(order="C"))


def waveforms_from_matrix(matrix: np.ndarray, prefix: str = "w", fill_nan: bool = False) -> list[Waveform]:
    """Wrap matrix rows as Waveforms.

    Rows with NaN are linearly interpolated when ``fill_nan`` is set and
    rejected otherwise.
    """
    out = []
    for i, row in enumerate(np.asarray(matrix, dtype=np.float64)):
        bad = np.isnan(row)
        if bad.any():
            if not fill_nan or bad.all():
                raise ValueError(f"row {i} contains NaN")
            idx = np.arange(row.size)
            row = row.copy()
            row[bad] = np.interp(idx[bad], idx[~bad], row[~bad])
        out.append(Waveform(row, SAMPLE_RATE_HZ, f"{prefix}{i}"))
    return out


# ---------------------------------------------------------------------------
# Mask CSV

_TUPLE_RE = re.compile(r"\(\s*([+-]?\d+)\s*,\s*([+-]?\d+)\s*\)")
_INDEX_RE = re.compile(r"^\s*\d+\s*,(?=\s*[\"'\[(])")  # leading row-index column


def parse_mask_row(text: str) -> MissingnessMask:
    pairs = _TUPLE_RE.findall(text)
    if not pairs:
        raise FormatError(f"no (flag,length) tuples in row {text[:60]!r}")
    leftover = _TUPLE_RE.sub("", text)
    if re.search(r"[0-9]", leftover):
        raise FormatError(f"stray numbers outside tuples in row {text[:60]!r}")
    return MissingnessMask(tuple((int(f), int(n)) for f, n in pairs))


def read_mask_csv(path: str | Path) -> list[MissingnessMask]:
    """Read one mask per non-empty line.

    Rows may be bare (``(1,3),(0,2)``) or wrapped in brackets/quotes, as
    written by common dataframe exporters, optionally after an integer
    row-index column. A leading header line without any tuple is skipped.
    """
    masks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            if lineno == 0 and not _TUPLE_RE.search(line):
                continue
            try:
                masks.append(parse_mask_row(_INDEX_RE.sub("", line, count=1)))
            except FormatError as exc:
                raise FormatError(f"{path}:{lineno + 1}: {exc}") from None
    log.debug("read %d masks from %s (total lengths %s)", len(masks), path, sorted({len(m) for m in masks}))
    return masks


def write_mask_csv(path: str | Path, masks: Iterable[MissingnessMask]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in masks:
            fh.write(m.to_text() + "\n")


# ---------------------------------------------------------------------------
# Result files


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: str | Path, obj) -> None:
    """Deterministic JSON: sorted keys, NaN written as null."""
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])


def _fmt_cell(v):
    if isinstance(v, (float, np.floating)):
        return "NaN" if math.isnan(v) else repr(float(v))
    return v


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
