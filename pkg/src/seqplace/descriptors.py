"""Fixed-dimension place descriptors computed from polar scans.

Two modes are provided.  The baseline mode is the classic sequence-matching
image preprocessing: block-mean downsampling to a thumbnail followed by
per-patch standardisation.  It is deliberately sensitive to the sensor's
orientation.  The rotation-invariant mode builds each descriptor from the
magnitude spectrum of every range column taken along the (circular) azimuth
axis, so any circular shift of the scan leaves the output unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ingest import DescriptorSequence, PolarScan

MODE_BASELINE = "baseline-thumbnail"
MODE_ROTATION_INVARIANT = "rotation-invariant"

# Patches with variance below this are emitted as all zeros instead of being
# standardised.
VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class DescriptorConfig:
    mode: str = MODE_ROTATION_INVARIANT
    thumb_azimuths: int = 32
    thumb_ranges: int = 32
    patch_size: int = 8
    spectrum_bins: int | None = None  # None: keep the full half spectrum

    def __post_init__(self):
        if self.mode not in (MODE_BASELINE, MODE_ROTATION_INVARIANT):
            raise ValueError(f"unknown descriptor mode {self.mode!r}")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.thumb_azimuths < self.patch_size or self.thumb_ranges < self.patch_size:
            raise ValueError("thumbnail dimensions must be >= patch_size")
        if self.spectrum_bins is not None and self.spectrum_bins < 1:
            raise ValueError("spectrum_bins must be >= 1")


def _chunk_edges(n: int, parts: int) -> tuple[np.ndarray, np.ndarray]:
    # Contiguous chunks whose sizes differ by at most one (np.array_split).
    base, extra = divmod(n, parts)
    sizes = np.full(parts, base, dtype=np.int64)
    sizes[:extra] += 1
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return starts, sizes


def _block_mean(grid: np.ndarray, rows_out: int, cols_out: int) -> np.ndarray:
    row_starts, row_sizes = _chunk_edges(grid.shape[0], rows_out)
    col_starts, col_sizes = _chunk_edges(grid.shape[1], cols_out)
    tmp = np.add.reduceat(grid, row_starts, axis=0) / row_sizes[:, None]
    return np.add.reduceat(tmp, col_starts, axis=1) / col_sizes[None, :]


def preprocess_baseline(scan: PolarScan, cfg: DescriptorConfig) -> np.ndarray:
    """Thumbnail + patch-standardised descriptor; not rotation invariant.

    The scan is block-mean downsampled to (thumb_azimuths, thumb_ranges) and
    each non-overlapping patch_size x patch_size patch (the trailing patches
    may be smaller) is standardised to zero mean and unit population variance.
    Patches with variance below VARIANCE_FLOOR become all zeros.  The result
    is the thumbnail flattened row-major.
    """
    if cfg.mode != MODE_BASELINE:
        raise ValueError(f"config mode is {cfg.mode!r}, expected {MODE_BASELINE!r}")
    a, b = scan.power.shape
    if a < cfg.thumb_azimuths or b < cfg.thumb_ranges:
        raise ValueError(
            f"scan shape {(a, b)} smaller than thumbnail target "
            f"{(cfg.thumb_azimuths, cfg.thumb_ranges)}"
        )
    thumb = _block_mean(scan.power, cfg.thumb_azimuths, cfg.thumb_ranges)
    out = np.empty_like(thumb)
    p = cfg.patch_size
    for r0 in range(0, thumb.shape[0], p):
        for c0 in range(0, thumb.shape[1], p):
            patch = thumb[r0:r0 + p, c0:c0 + p]
            var = float(patch.var())
            if var < VARIANCE_FLOOR:
                out[r0:r0 + p, c0:c0 + p] = 0.0
            else:
                out[r0:r0 + p, c0:c0 + p] = (patch - patch.mean()) / math.sqrt(var)
    return out.ravel()


def ri_descriptor(scan: PolarScan, cfg: DescriptorConfig) -> np.ndarray:
    """Rotation-invariant descriptor from per-range-column magnitude spectra.

    For each range column the magnitude spectrum of the circular azimuth
    sequence is computed and the first spectrum_bins magnitudes kept; the
    concatenation over columns is L2-normalised.  Circular shifts of the
    azimuth axis change only the spectrum phases, so the output is invariant
    to them.  An all-zero scan yields the all-zero vector (the degenerate
    case; see is_degenerate).
    """
    if cfg.mode != MODE_ROTATION_INVARIANT:
        raise ValueError(f"config mode is {cfg.mode!r}, expected {MODE_ROTATION_INVARIANT!r}")
    a = scan.azimuths
    half = a // 2 + 1
    bins = half if cfg.spectrum_bins is None else cfg.spectrum_bins
    if not 1 <= bins <= half:
        raise ValueError(f"spectrum_bins {bins} out of range [1, {half}] for {a} azimuths")
    mags = np.abs(np.fft.rfft(scan.power, axis=0))[:bins, :]
    vec = mags.T.ravel()  # per-column blocks of `bins` magnitudes
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


def is_degenerate(descriptor: np.ndarray) -> bool:
    """True for the all-zero descriptor produced by an all-zero scan."""
    return not np.any(descriptor)


def embed_sequence(scans: list[PolarScan], cfg: DescriptorConfig, source_id: str = "") -> DescriptorSequence:
    """Apply the configured per-scan descriptor to a whole trajectory in order."""
    if not scans:
        raise ValueError("empty trajectory")
    op = preprocess_baseline if cfg.mode == MODE_BASELINE else ri_descriptor
    shape = scans[0].power.shape
    vectors = []
    for idx, scan in enumerate(scans):
        if scan.power.shape != shape:
            raise ValueError(f"scan {idx}: shape {scan.power.shape} differs from scan 0 {shape}")
        try:
            vectors.append(op(scan, cfg))
        except ValueError as exc:
            raise ValueError(f"scan {idx}: {exc}") from exc
    return DescriptorSequence(np.stack(vectors), source_id=source_id)
