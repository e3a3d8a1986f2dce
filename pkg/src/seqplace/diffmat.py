"""Pairwise difference matrices between reference and live descriptor
sequences, and their windowed local contrast enhancement."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .ingest import FORMAT_VERSION, DescriptorSequence, ParseError

MATRIX_MAGIC = b"SPMX"

# Sections whose standard deviation falls below this are zero-filled instead
# of standardised (same convention as the descriptor patches).
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class DifferenceMatrix:
    """reference x live grid of descriptor distances, raw or enhanced."""

    values: np.ndarray  # (n_ref, n_live) float64
    enhanced: bool = False
    section: int | None = None  # enhancement section length when enhanced

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"difference matrix must be non-empty 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("difference matrix contains non-finite values")
        if not self.enhanced and float(values.min()) < 0.0:
            raise ValueError("raw difference matrix has negative entries")
        if self.enhanced and self.section is None:
            raise ValueError("enhanced matrices must record the section length that produced them")
        if not self.enhanced and self.section is not None:
            raise ValueError("raw matrices must not carry a section length")
        object.__setattr__(self, "values", values)

    @property
    def n_ref(self) -> int:
        return self.values.shape[0]

    @property
    def n_live(self) -> int:
        return self.values.shape[1]


def pairwise_distances(reference: DescriptorSequence, live: DescriptorSequence) -> DifferenceMatrix:
    """Euclidean distance between every reference/live descriptor pair."""
    if reference.dim != live.dim:
        raise ValueError(f"descriptor dimension mismatch: reference {reference.dim}, live {live.dim}")
    return DifferenceMatrix(cdist(reference.vectors, live.vectors, metric="euclidean"))


def enhance_contrast(d: DifferenceMatrix, section: int) -> DifferenceMatrix:
    """Standardise each column in non-overlapping sections along the reference axis.

    Rows are tiled into consecutive sections of the given length (the last one
    may be shorter).  Within each section every column is shifted to zero mean
    and scaled to unit population standard deviation; sections whose deviation
    falls below STD_FLOOR are zero-filled.
    """
    if d.enhanced:
        raise ValueError("difference matrix is already enhanced")
    if not 1 <= section <= d.n_ref:
        raise ValueError(f"section length {section} out of range [1, {d.n_ref}]")
    out = np.empty_like(d.values)
    for start in range(0, d.n_ref, section):
        block = d.values[start:start + section, :]
        mu = block.mean(axis=0)
        sigma = block.std(axis=0)
        safe = sigma >= STD_FLOOR
        out[start:start + section, :] = np.where(safe, (block - mu) / np.where(safe, sigma, 1.0), 0.0)
    return DifferenceMatrix(out, enhanced=True, section=section)


# ---------------------------------------------------------------------------
# container / CSV export (for inspection and staged pipelines)
# ---------------------------------------------------------------------------

def save_matrix(path, d: DifferenceMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<IIIBI", FORMAT_VERSION, d.n_ref, d.n_live,
                             1 if d.enhanced else 0, d.section or 0))
        fh.write(d.values.astype("<f8").tobytes())


def load_matrix(path) -> DifferenceMatrix:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MATRIX_MAGIC:
        raise ParseError(f"{path} is not a matrix container (bad magic)")
    version, n_ref, n_live, enhanced, section = struct.unpack_from("<IIIBI", data, 4)
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported container version {version}")
    offset = 4 + struct.calcsize("<IIIBI")
    expected = offset + n_ref * n_live * 8
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=offset).reshape(n_ref, n_live).copy()
    return DifferenceMatrix(values, enhanced=bool(enhanced), section=section if enhanced else None)


def save_matrix_csv(path, d: DifferenceMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(repr(float(v)) for v in row) for row in d.values]
    path.write_text("\n".join(lines) + "\n")
