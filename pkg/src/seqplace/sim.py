"""Synthetic worlds for verifying the matching pipeline: trajectories with
forward and reverse revisits, controlled descriptor noise, optional perceptual
aliasing (segments forced to share descriptors), and optional azimuth
rotation of reverse traversals.

Places sit 1 m apart along a straight line, so a ground-truth radius of 15 m
spans 15 frames.  The reference trajectory is the map: every place from the
new-road segments in first-traversal order.  The live trajectory is the full
segment sequence; revisit segments re-traverse the target's places (reversed
for reverse revisits) with fresh per-revisit noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluate import DEFAULT_RADIUS_M, GroundTruth, gt_distance_matrix
from .ingest import DescriptorSequence, PolarScan, PoseTrajectory

KIND_NEW_ROAD = "new-road"
KIND_FORWARD_REVISIT = "forward-revisit"
KIND_REVERSE_REVISIT = "reverse-revisit"

EMIT_DESCRIPTORS = "descriptors"
EMIT_SCANS = "scans"


@dataclass(frozen=True)
class Segment:
    kind: str
    length: int
    target: int | None = None  # earlier new-road segment index, for revisits

    def __post_init__(self):
        if self.kind not in (KIND_NEW_ROAD, KIND_FORWARD_REVISIT, KIND_REVERSE_REVISIT):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.length < 1:
            raise ValueError("segment length must be >= 1")
        if self.kind == KIND_NEW_ROAD and self.target is not None:
            raise ValueError("new-road segments do not take a revisit target")
        if self.kind != KIND_NEW_ROAD and self.target is None:
            raise ValueError(f"{self.kind} segments need a target segment")


@dataclass(frozen=True)
class WorldSpec:
    segments: tuple[Segment, ...]
    place_dim: int = 16
    noise_sigma: float = 0.0
    alias_groups: tuple[tuple[int, ...], ...] = ()
    rotate_reverse: bool = False
    seed: int = 0
    emit: str = EMIT_DESCRIPTORS
    scan_azimuths: int = 64
    scan_range_bins: int = 128

    def __post_init__(self):
        if not self.segments:
            raise ValueError("world needs at least one segment")
        if self.place_dim < 1:
            raise ValueError("place_dim must be >= 1")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")
        if self.emit not in (EMIT_DESCRIPTORS, EMIT_SCANS):
            raise ValueError(f"unknown emit mode {self.emit!r}")
        for i, seg in enumerate(self.segments):
            if seg.kind != KIND_NEW_ROAD:
                t = seg.target
                if not 0 <= t < i:
                    raise ValueError(f"segment {i}: revisit target {t} is not an earlier segment")
                if self.segments[t].kind != KIND_NEW_ROAD:
                    raise ValueError(f"segment {i}: revisit target {t} is not a new-road segment")
                if seg.length > self.segments[t].length:
                    raise ValueError(f"segment {i}: revisit longer than its target segment")
        for group in self.alias_groups:
            if len(group) < 2:
                raise ValueError("alias groups need at least two segments")
            lengths = set()
            for s in group:
                if not 0 <= s < len(self.segments) or self.segments[s].kind != KIND_NEW_ROAD:
                    raise ValueError(f"alias group member {s} is not a new-road segment")
                lengths.add(self.segments[s].length)
            if len(lengths) != 1:
                raise ValueError("aliased segments must have equal lengths")


def perturb(seq: DescriptorSequence, sigma: float, seed: int) -> DescriptorSequence:
    """Add seeded zero-mean Gaussian noise of scale sigma per component."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return DescriptorSequence(seq.vectors.copy(), source_id=seq.source_id)
    rng = np.random.default_rng(seed)
    return DescriptorSequence(seq.vectors + rng.normal(0.0, sigma, seq.vectors.shape),
                              source_id=seq.source_id)


def generate_world(spec: WorldSpec, radius: float = DEFAULT_RADIUS_M):
    """Build (reference, live, ground truth) for a world spec.

    The returned reference/live are DescriptorSequences or PolarScan lists
    depending on spec.emit.  Output is deterministic under spec.seed.
    """
    rng = np.random.default_rng(spec.seed)

    # place ids per new-road segment
    place_range: dict[int, tuple[int, int]] = {}
    n_places = 0
    for i, seg in enumerate(spec.segments):
        if seg.kind == KIND_NEW_ROAD:
            place_range[i] = (n_places, n_places + seg.length)
            n_places += seg.length
    if n_places == 0:
        raise ValueError("world has no new-road segments, so the map is empty")

    if spec.emit == EMIT_DESCRIPTORS:
        canonical = rng.standard_normal((n_places, spec.place_dim))
        canonical /= np.linalg.norm(canonical, axis=1, keepdims=True)
    else:
        canonical = rng.random((n_places, spec.scan_azimuths, spec.scan_range_bins))

    for group in spec.alias_groups:
        first = place_range[group[0]]
        for other in group[1:]:
            lo, hi = place_range[other]
            canonical[lo:hi] = canonical[first[0]:first[1]]

    ref_xy = np.column_stack((np.arange(n_places, dtype=np.float64), np.zeros(n_places)))
    ref_theta = np.zeros(n_places)
    ref_poses = PoseTrajectory(ref_xy, ref_theta)

    live_frames = []
    live_xy = []
    live_theta = []
    for idx, seg in enumerate(spec.segments):
        if seg.kind == KIND_NEW_ROAD:
            lo, hi = place_range[idx]
            ids = np.arange(lo, hi)
            data = canonical[ids]
            theta = np.zeros(len(ids))
        else:
            lo, hi = place_range[seg.target]
            if seg.kind == KIND_FORWARD_REVISIT:
                ids = np.arange(lo, lo + seg.length)
                theta = np.zeros(seg.length)
            else:
                ids = np.arange(hi - 1, hi - 1 - seg.length, -1)
                theta = np.full(seg.length, np.pi)
            data = canonical[ids].copy()
            if seg.kind == KIND_REVERSE_REVISIT and spec.rotate_reverse and spec.emit == EMIT_SCANS:
                data = np.roll(data, spec.scan_azimuths // 2, axis=1)
            if spec.noise_sigma > 0.0:
                data = data + rng.normal(0.0, spec.noise_sigma, data.shape)
                if spec.emit == EMIT_SCANS:
                    data = np.clip(data, 0.0, 1.0)
        live_frames.append(data)
        live_xy.append(ref_xy[ids])
        live_theta.append(theta)

    live_data = np.concatenate(live_frames, axis=0)
    live_poses = PoseTrajectory(np.concatenate(live_xy, axis=0), np.concatenate(live_theta))
    gt = gt_distance_matrix(ref_poses, live_poses, radius)

    if spec.emit == EMIT_DESCRIPTORS:
        reference = DescriptorSequence(canonical, source_id="reference")
        live = DescriptorSequence(live_data, source_id="live")
    else:
        reference = [PolarScan(g) for g in canonical]
        live = [PolarScan(g) for g in live_data]
    return reference, live, gt


def reverse_segment_queries(spec: WorldSpec) -> list[int]:
    """Live query indices belonging to reverse-revisit segments."""
    out = []
    offset = 0
    for seg in spec.segments:
        if seg.kind == KIND_REVERSE_REVISIT:
            out.extend(range(offset, offset + seg.length))
        offset += seg.length
    return out


def segment_queries(spec: WorldSpec, index: int) -> list[int]:
    """Live query indices covered by one segment."""
    offset = sum(s.length for s in spec.segments[:index])
    return list(range(offset, offset + spec.segments[index].length))


def default_reverse_world(seed: int = 7) -> WorldSpec:
    """The default seeded world with one rotated reverse re-traversal.

    The vehicle maps a 90-frame road, overshoots onto 25 frames of new road,
    then drives the mapped road again in the opposite direction.  The
    overshoot separates the turnaround from the mapped road so matches near
    the boundary cannot ride on plain position adjacency.
    """
    return WorldSpec(
        segments=(Segment(KIND_NEW_ROAD, 90), Segment(KIND_NEW_ROAD, 25),
                  Segment(KIND_REVERSE_REVISIT, 80, target=0)),
        noise_sigma=0.05,
        rotate_reverse=True,
        seed=seed,
        emit=EMIT_SCANS,
        scan_azimuths=64,
        scan_range_bins=128,
    )


def default_aliased_world(seed: int = 11) -> WorldSpec:
    """Two identical corridor segments plus a noisy re-traversal of one of them."""
    return WorldSpec(
        segments=(
            Segment(KIND_NEW_ROAD, 30),
            Segment(KIND_NEW_ROAD, 25),   # corridor A
            Segment(KIND_NEW_ROAD, 30),
            Segment(KIND_NEW_ROAD, 25),   # corridor B, aliased with A
            Segment(KIND_NEW_ROAD, 30),
            Segment(KIND_FORWARD_REVISIT, 30, target=2),
            Segment(KIND_FORWARD_REVISIT, 25, target=3),
        ),
        place_dim=16,
        noise_sigma=0.25,
        alias_groups=((1, 3),),
        seed=seed,
        emit=EMIT_DESCRIPTORS,
    )


# ---------------------------------------------------------------------------
# JSON world specs
# ---------------------------------------------------------------------------

_SPEC_KEYS = {"segments", "place_dim", "noise_sigma", "alias_groups", "rotate_reverse",
              "seed", "emit", "scan_azimuths", "scan_range_bins"}
_SEGMENT_KEYS = {"kind", "length", "target"}


def world_spec_from_dict(raw: dict) -> WorldSpec:
    unknown = set(raw) - _SPEC_KEYS
    if unknown:
        raise ValueError(f"world spec: unknown key {sorted(unknown)[0]!r}")
    segments = []
    for i, seg in enumerate(raw.get("segments", [])):
        unknown = set(seg) - _SEGMENT_KEYS
        if unknown:
            raise ValueError(f"world spec segment {i}: unknown key {sorted(unknown)[0]!r}")
        segments.append(Segment(seg["kind"], int(seg["length"]),
                                None if seg.get("target") is None else int(seg["target"])))
    kwargs = {k: raw[k] for k in raw if k not in ("segments", "alias_groups")}
    if "alias_groups" in raw:
        kwargs["alias_groups"] = tuple(tuple(int(s) for s in g) for g in raw["alias_groups"])
    return WorldSpec(segments=tuple(segments), **kwargs)


def load_world_spec(path) -> WorldSpec:
    return world_spec_from_dict(json.loads(Path(path).read_text()))
