"""Loading and saving of trajectory data: polar scans, descriptor sequences,
and pose files.

Two self-describing binary containers are used for bulk numeric data
(little-endian throughout):

* scans:        magic ``SPSC`` | u32 version | u32 azimuths | u32 range_bins |
                u32 count | count*azimuths*range_bins float32, row-major
* descriptors:  magic ``SPDS`` | u32 version | u32 dim | u32 count |
                count*dim float64, row-major

Descriptors are stored as float64 so a write/read cycle is bit-exact.  Both
containers have a CSV fallback (scans carry an ``azimuths,range_bins`` header
line, descriptors are plain rows of values).  Poses are CSV with an
``x,y,theta`` header.  Loaders reject invalid data instead of repairing it;
parse errors name the offending record.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCAN_MAGIC = b"SPSC"
DESCRIPTOR_MAGIC = b"SPDS"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<III")  # version + two payload-specific fields + count


class ParseError(ValueError):
    """An input file failed validation; the message names the bad record."""


def wrap_angle(theta):
    """Wrap angles (scalar or array) into [-pi, pi)."""
    return np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class PolarScan:
    """One azimuth x range grid of normalised sensor power returns in [0, 1]."""

    power: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power, dtype=np.float64)
        if power.ndim != 2 or power.shape[0] < 1 or power.shape[1] < 1:
            raise ValueError(f"scan power must be a non-empty 2-D grid, got shape {power.shape}")
        if not np.all(np.isfinite(power)):
            raise ValueError("scan power contains non-finite values")
        if float(power.min()) < 0.0 or float(power.max()) > 1.0:
            raise ValueError("scan power outside [0, 1]; refusing to clamp")
        object.__setattr__(self, "power", power)

    @property
    def azimuths(self) -> int:
        return self.power.shape[0]

    @property
    def range_bins(self) -> int:
        return self.power.shape[1]


@dataclass(frozen=True)
class DescriptorSequence:
    """Ordered fixed-dimension place descriptors for one trajectory."""

    vectors: np.ndarray  # (length, dim) float64
    source_id: str = ""

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValueError(f"descriptor sequence must be a non-empty 2-D array, got shape {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("descriptor sequence contains non-finite values")
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class PoseTrajectory:
    """Planar poses (x, y, theta), index-aligned with a descriptor sequence."""

    xy: np.ndarray     # (n, 2) metres
    theta: np.ndarray  # (n,) radians in [-pi, pi)

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=np.float64)
        theta = wrap_angle(self.theta)
        if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] < 1:
            raise ValueError(f"poses must be a non-empty (n, 2) array, got shape {xy.shape}")
        if theta.shape != (xy.shape[0],):
            raise ValueError("theta length does not match the number of poses")
        if not (np.all(np.isfinite(xy)) and np.all(np.isfinite(theta))):
            raise ValueError("pose trajectory contains non-finite values")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "theta", theta)

    def __len__(self) -> int:
        return self.xy.shape[0]


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

def save_scans(path, scans: list[PolarScan], format: str = "binary") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "binary":
        _save_scans_binary(path, scans)
    elif format == "csv":
        _save_scans_csv(path, scans)
    else:
        raise ValueError(f"unknown scan format {format!r}")


def load_scans(path, format: str = "binary") -> list[PolarScan]:
    """Load a scan container; an empty file is a valid zero-scan trajectory."""
    if format == "binary":
        return _load_scans_binary(Path(path))
    if format == "csv":
        return _load_scans_csv(Path(path))
    raise ValueError(f"unknown scan format {format!r}")


def _save_scans_binary(path: Path, scans: list[PolarScan]) -> None:
    if not scans:
        path.write_bytes(b"")
        return
    a, b = scans[0].power.shape
    for i, scan in enumerate(scans):
        if scan.power.shape != (a, b):
            raise ValueError(f"scan {i}: shape {scan.power.shape} differs from scan 0 {(a, b)}")
    stacked = np.stack([s.power for s in scans]).astype("<f4")
    with path.open("wb") as fh:
        fh.write(SCAN_MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, a, b, len(scans)))
        fh.write(stacked.tobytes())


def _load_scans_binary(path: Path) -> list[PolarScan]:
    data = path.read_bytes()
    if len(data) == 0:
        return []
    if data[:4] != SCAN_MAGIC:
        raise ParseError(f"{path} is not a scan container (bad magic)")
    if len(data) < 20:
        raise ParseError(f"{path}: truncated scan container header")
    version, a, b, count = struct.unpack_from("<IIII", data, 4)
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported container version {version}")
    if a < 1 or b < 1:
        raise ParseError(f"{path}: malformed header (azimuths={a}, range_bins={b})")
    expected = 20 + count * a * b * 4
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for {count} scans, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=20).astype(np.float64).reshape(count, a, b)
    return _scans_from_grid(values)


def _save_scans_csv(path: Path, scans: list[PolarScan]) -> None:
    lines = []
    if scans:
        a, b = scans[0].power.shape
        lines.append(f"{a},{b}")
        for i, scan in enumerate(scans):
            if scan.power.shape != (a, b):
                raise ValueError(f"scan {i}: shape {scan.power.shape} differs from scan 0 {(a, b)}")
            for row in scan.power:
                lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _load_scans_csv(path: Path) -> list[PolarScan]:
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        return []
    header = lines[0].split(",")
    if len(header) != 2:
        raise ParseError(f"{path}: malformed header {lines[0]!r}, expected 'azimuths,range_bins'")
    try:
        a, b = int(header[0]), int(header[1])
    except ValueError as exc:
        raise ParseError(f"{path}: malformed header {lines[0]!r}") from exc
    if a < 1 or b < 1:
        raise ParseError(f"{path}: malformed header (azimuths={a}, range_bins={b})")
    rows = lines[1:]
    if len(rows) % a != 0:
        raise ParseError(f"{path}: {len(rows)} grid rows is not a multiple of azimuths {a}")
    count = len(rows) // a
    grid = np.empty((count, a, b), dtype=np.float64)
    for r, line in enumerate(rows):
        fields = line.split(",")
        scan_idx = r // a
        if len(fields) != b:
            raise ParseError(f"scan {scan_idx}: row {r % a} has {len(fields)} values, expected {b}")
        try:
            grid[scan_idx, r % a] = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"scan {scan_idx}: unparseable value in row {r % a}") from exc
    return _scans_from_grid(grid)


def _scans_from_grid(values: np.ndarray) -> list[PolarScan]:
    scans = []
    for i in range(values.shape[0]):
        try:
            scans.append(PolarScan(values[i]))
        except ValueError as exc:
            raise ParseError(f"scan {i}: {exc}") from exc
    return scans


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------

def save_descriptors(path, sequence: DescriptorSequence, format: str = "binary") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "binary":
        with path.open("wb") as fh:
            fh.write(DESCRIPTOR_MAGIC)
            fh.write(struct.pack("<III", FORMAT_VERSION, sequence.dim, len(sequence)))
            fh.write(sequence.vectors.astype("<f8").tobytes())
    elif format == "csv":
        lines = [",".join(repr(float(v)) for v in row) for row in sequence.vectors]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown descriptor format {format!r}")


def load_descriptors(path) -> DescriptorSequence:
    """Load a descriptor sequence, sniffing binary vs text by the magic bytes."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) == 0:
        raise ParseError(f"{path}: empty descriptor file")
    if data[:4] == DESCRIPTOR_MAGIC:
        if len(data) < 16:
            raise ParseError(f"{path}: truncated descriptor container header")
        version, dim, count = struct.unpack_from("<III", data, 4)
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported container version {version}")
        expected = 16 + count * dim * 8
        if len(data) != expected:
            raise ParseError(f"{path}: expected {expected} bytes for {count} rows, got {len(data)}")
        vectors = np.frombuffer(data, dtype="<f8", offset=16).reshape(count, dim)
        return _descriptors_from_rows(vectors.copy(), path)
    return _load_descriptors_csv(path)


def _load_descriptors_csv(path: Path) -> DescriptorSequence:
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty descriptor file")
    width = len(lines[0].split(","))
    vectors = np.empty((len(lines), width), dtype=np.float64)
    for r, line in enumerate(lines):
        fields = line.split(",")
        if len(fields) != width:
            raise ParseError(f"row {r}: has {len(fields)} values, expected {width}")
        try:
            vectors[r] = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"row {r}: unparseable value") from exc
    return _descriptors_from_rows(vectors, path)


def _descriptors_from_rows(vectors: np.ndarray, path: Path) -> DescriptorSequence:
    bad = ~np.all(np.isfinite(vectors), axis=1)
    if bad.any():
        raise ParseError(f"row {int(np.argmax(bad))}: non-finite value")
    return DescriptorSequence(vectors, source_id=path.stem)


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

POSE_HEADER = "x,y,theta"


def save_poses(path, trajectory: PoseTrajectory) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [POSE_HEADER]
    for (x, y), theta in zip(trajectory.xy, trajectory.theta):
        lines.append(f"{float(x)!r},{float(y)!r},{float(theta)!r}")
    path.write_text("\n".join(lines) + "\n")


def load_poses(path) -> PoseTrajectory:
    """Load an ``x,y,theta`` CSV; headings are wrapped into [-pi, pi)."""
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty pose file")
    if lines[0] != POSE_HEADER:
        raise ParseError(f"{path}: line 1: expected header {POSE_HEADER!r}, got {lines[0]!r}")
    n = len(lines) - 1
    if n < 1:
        raise ParseError(f"{path}: no pose records")
    xy = np.empty((n, 2), dtype=np.float64)
    theta = np.empty(n, dtype=np.float64)
    for i, line in enumerate(lines[1:]):
        fields = line.split(",")
        if len(fields) != 3:
            raise ParseError(f"line {i + 2}: expected 3 fields, got {len(fields)}")
        try:
            x, y, t = float(fields[0]), float(fields[1]), float(fields[2])
        except ValueError as exc:
            raise ParseError(f"line {i + 2}: unparseable pose value") from exc
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(t)):
            raise ParseError(f"line {i + 2}: non-finite pose value")
        xy[i] = (x, y)
        theta[i] = t
    return PoseTrajectory(xy, theta)
