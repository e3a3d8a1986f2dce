"""Ground-truth labelling, precision/recall curves and summaries, and the
window/section hyperparameter grid search."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .diffmat import DifferenceMatrix, enhance_contrast, pairwise_distances
from .ingest import DescriptorSequence, PoseTrajectory
from .search import MatchSet, SearchConfig, nn_ball_search, run_search, threshold_matches

DEFAULT_RADIUS_M = 15.0


@dataclass(frozen=True)
class GroundTruth:
    """Pairwise planar distances between reference and live capture positions."""

    ref_poses: PoseTrajectory
    live_poses: PoseTrajectory
    radius: float
    distance: np.ndarray  # (n_ref, n_live) metres

    @property
    def n_ref(self) -> int:
        return self.distance.shape[0]

    @property
    def n_live(self) -> int:
        return self.distance.shape[1]


def gt_distance_matrix(ref: PoseTrajectory, live: PoseTrajectory, radius: float = DEFAULT_RADIUS_M) -> GroundTruth:
    """Full pairwise position-distance matrix; headings are ignored."""
    if len(ref) < 1 or len(live) < 1:
        raise ValueError("pose trajectories must be non-empty")
    if radius <= 0.0:
        raise ValueError("true-positive radius must be positive")
    return GroundTruth(ref, live, radius, cdist(ref.xy, live.xy, metric="euclidean"))


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def admissible(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def label_matches(m: MatchSet, gt: GroundTruth, queries: Iterable[int] | None = None) -> MatchCounts:
    """Count TP/FP/FN/TN over the matchset's entries (optionally a query subset).

    A match within the ground-truth radius (boundary inclusive) is a true
    positive.  Unmatched queries count as false negatives only when some
    reference lies within the radius; otherwise they are true negatives.
    """
    wanted = None if queries is None else frozenset(int(q) for q in queries)
    has_neighbour = gt.distance.min(axis=0) <= gt.radius
    tp = fp = fn = tn = 0
    for e in m.entries:
        if wanted is not None and e.query not in wanted:
            continue
        if not 0 <= e.query < gt.n_live:
            raise IndexError(f"query index {e.query} out of range for {gt.n_live} live poses")
        if e.ref is not None:
            if not 0 <= e.ref < gt.n_ref:
                raise IndexError(f"reference index {e.ref} out of range for {gt.n_ref} reference poses")
            if gt.distance[e.ref, e.query] <= gt.radius:
                tp += 1
            else:
                fp += 1
        elif has_neighbour[e.query]:
            fn += 1
        else:
            tn += 1
    return MatchCounts(tp, fp, fn, tn)


@dataclass(frozen=True)
class PRCurve:
    points: tuple[tuple[float, float, float], ...]  # (threshold, precision, recall)
    auc: float
    max_f1: float
    max_f2: float
    max_f05: float
    recall_at_p60: float
    recall_at_p80: float


def f_beta(precision: float, recall: float, beta: float) -> float:
    """(1 + beta^2) * P * R / (beta^2 * P + R); defined as 0 when P = R = 0."""
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ValueError("precision and recall must lie in [0, 1]")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if precision == 0.0 and recall == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def _trapezoid_auc(points: Sequence[tuple[float, float, float]]) -> float:
    if not points:
        return 0.0
    # sort by recall (precision as deterministic tie key), extend to recall 0
    # at the curve's maximum precision
    pr = sorted((r, p) for _, p, r in points)
    max_p = max(p for _, p in pr)
    pr = [(0.0, max_p)] + pr
    auc = 0.0
    for (r0, p0), (r1, p1) in zip(pr, pr[1:]):
        auc += (r1 - r0) * (p0 + p1) / 2.0
    return auc


def pr_curve(matchsets: Sequence[tuple[float, MatchSet]], gt: GroundTruth,
             queries: Iterable[int] | None = None) -> PRCurve:
    """Precision/recall over a threshold-indexed family of matchsets.

    Thresholds must be strictly increasing.  Points with no emitted matches
    (undefined precision) are skipped.  AUC is the trapezoid integral over
    recall with the curve extended to recall 0 at its maximum precision.
    """
    if not matchsets:
        raise ValueError("empty matchset family")
    thresholds = [t for t, _ in matchsets]
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    wanted = None if queries is None else frozenset(int(q) for q in queries)
    points = []
    for t, ms in matchsets:
        c = label_matches(ms, gt, wanted)
        if c.tp + c.fp == 0:
            continue
        precision = c.tp / (c.tp + c.fp)
        recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
        points.append((float(t), precision, recall))
    pts = tuple(points)
    return PRCurve(
        points=pts,
        auc=_trapezoid_auc(pts),
        max_f1=max((f_beta(p, r, 1.0) for _, p, r in pts), default=0.0),
        max_f2=max((f_beta(p, r, 2.0) for _, p, r in pts), default=0.0),
        max_f05=max((f_beta(p, r, 0.5) for _, p, r in pts), default=0.0),
        recall_at_p60=_recall_at(pts, 0.60),
        recall_at_p80=_recall_at(pts, 0.80),
    )


def _recall_at(points: Sequence[tuple[float, float, float]], p_target: float) -> float:
    return max((r for _, p, r in points if p >= p_target), default=0.0)


def recall_at_precision(curve: PRCurve, p_target: float) -> float:
    """Maximum recall among curve points with precision >= p_target (0 if none)."""
    return _recall_at(curve.points, p_target)


def score_thresholds(m: MatchSet, levels: int = 100) -> np.ndarray:
    """Strictly-increasing sweep thresholds from the empirical score quantiles."""
    scores = np.array([e.score for e in m.entries if e.score is not None and np.isfinite(e.score)])
    if scores.size == 0:
        return np.array([0.0])
    return np.unique(np.quantile(scores, np.linspace(0.0, 1.0, levels)))


def threshold_sweep(m: MatchSet, gt: GroundTruth, levels: int = 100,
                    queries: Iterable[int] | None = None) -> PRCurve:
    """PR curve for a sequence matchset by sweeping the minimum match score."""
    thresholds = score_thresholds(m, levels)
    family = [(float(t), threshold_matches(m, float(t))) for t in thresholds]
    return pr_curve(family, gt, queries)


def nn_radius_sweep(d: DifferenceMatrix, gt: GroundTruth, levels: int = 100,
                    queries: Iterable[int] | None = None) -> PRCurve:
    """PR curve for the nearest-neighbour baseline by sweeping the ball radius."""
    if d.enhanced:
        raise ValueError("nearest-neighbour evaluation operates on the raw difference matrix")
    mins = d.values.min(axis=0)
    radii = np.unique(np.quantile(mins, np.linspace(0.0, 1.0, levels)))
    family = [(float(r), nn_ball_search(d, float(r))) for r in radii]
    return pr_curve(family, gt, queries)


def summary_row(curve: PRCurve) -> dict[str, float]:
    """The tabulated PR summary statistics for one method."""
    return {
        "auc": curve.auc,
        "max_f1": curve.max_f1,
        "max_f2": curve.max_f2,
        "max_f05": curve.max_f05,
        "recall_at_p60": curve.recall_at_p60,
        "recall_at_p80": curve.recall_at_p80,
    }


# ---------------------------------------------------------------------------
# hyperparameter grid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TuneResult:
    grid: tuple[tuple[int, int, float], ...]  # (window, section, precision_at_80_recall)
    chosen: tuple[int, int]


def precision_at_recall_floor(curve: PRCurve, recall_floor: float = 0.8) -> float:
    """Precision at the smallest threshold whose recall reaches the floor (0 if none)."""
    for _, p, r in curve.points:  # points are in threshold order
        if r >= recall_floor:
            return p
    return 0.0


def grid_search(reference: DescriptorSequence, live: DescriptorSequence, gt: GroundTruth,
                windows: Sequence[int], sections: Sequence[int], cfg: SearchConfig,
                levels: int = 100, threads: int = 1) -> TuneResult:
    """Evaluate every (window, section) cell and pick the best objective.

    Each cell enhances the raw difference matrix with its section length,
    searches with its window, and records precision at 80% recall from the
    score-threshold sweep.  Ties resolve to the smaller window, then the
    smaller section.
    """
    if not windows or not sections:
        raise ValueError("grid search needs non-empty window and section ranges")
    raw = pairwise_distances(reference, live)
    cells = [(int(w), int(r)) for w in sorted(windows) for r in sorted(sections)]

    def evaluate_cell(cell: tuple[int, int]) -> tuple[int, int, float]:
        w, r = cell
        enhanced = enhance_contrast(raw, r)
        matches = run_search(enhanced, replace(cfg, window=w, exclusion=cfg.exclusion))
        if not matches.entries:
            return (w, r, 0.0)
        curve = threshold_sweep(matches, gt, levels)
        return (w, r, precision_at_recall_floor(curve, 0.8))

    if threads <= 1:
        grid = [evaluate_cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grid = list(pool.map(evaluate_cell, cells))

    best = grid[0]
    for cell in grid[1:]:
        if cell[2] > best[2]:  # strict: ties keep the earlier (smaller) cell
            best = cell
    return TuneResult(tuple(grid), (best[0], best[1]))
