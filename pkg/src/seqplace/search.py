"""Velocity-swept sequence search over an enhanced difference matrix, plus the
nearest-neighbour ball-search baseline.

For a query frame j, every candidate reference endpoint i is scored by
sliding constant-slope trajectories back through the last `window` live
frames:

    s(i, v) = (1/window) * sum_k values[round(i - v*k), j - k],  k = 0..window-1

Positive slopes model revisits driven in the same direction; when the config
asks for it the mirrored negative slopes are swept as well, which is what
detects revisits driven the opposite way.  Trajectories that leave the
reference axis are discarded rather than clamped.  The per-endpoint score is
the minimum over admissible slopes (ties keep the earlier slope in the sweep
order: positive slopes ascending, then their negatives).

A match's confidence is the ratio of the best score outside an exclusion zone
around the winner to the winning score.  Because enhanced matrices are
signed, the ratio is taken after shifting all scores by the matrix minimum
when that minimum is negative; on non-negative matrices it is the plain
ratio.  Confidence is therefore always >= 1 and higher means less ambiguous.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffmat import DifferenceMatrix

DIRECTION_FORWARD_ONLY = "forward-only"
DIRECTION_BOTH = "forward-and-backward"

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class SearchConfig:
    window: int = 10
    slope_min: float = 0.8
    slope_max: float = 1.2
    slope_step: float = 0.1
    exclusion: int | None = None  # None: defaults to window
    direction: str = DIRECTION_BOTH

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if not 0.0 < self.slope_min <= self.slope_max:
            raise ValueError("slopes must satisfy 0 < slope_min <= slope_max")
        if self.slope_step <= 0.0:
            raise ValueError("slope_step must be > 0")
        if self.exclusion is not None and self.exclusion < 1:
            raise ValueError("exclusion half-width must be >= 1")
        if self.direction not in (DIRECTION_FORWARD_ONLY, DIRECTION_BOTH):
            raise ValueError(f"unknown search direction {self.direction!r}")

    @property
    def exclusion_halfwidth(self) -> int:
        return self.window if self.exclusion is None else self.exclusion


@dataclass(frozen=True)
class MatchEntry:
    query: int
    ref: int | None = None
    score: float | None = None
    direction: str | None = None
    raw_sum: float | None = None

    @property
    def matched(self) -> bool:
        return self.ref is not None


@dataclass(frozen=True)
class MatchSet:
    entries: tuple[MatchEntry, ...]
    n_ref: int
    n_live: int
    warning: str | None = None


def slope_set(cfg: SearchConfig) -> list[float]:
    """The swept slopes in tie-break order: positives ascending, then mirrored."""
    count = int(math.floor((cfg.slope_max - cfg.slope_min) / cfg.slope_step + 1e-9)) + 1
    positives = [cfg.slope_min + m * cfg.slope_step for m in range(count)]
    if cfg.direction == DIRECTION_BOTH:
        return positives + [-v for v in positives]
    return positives


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.trunc(x + np.copysign(0.5, x)).astype(np.int64)


def _check_enhanced(d: DifferenceMatrix) -> None:
    if not d.enhanced:
        raise ValueError("sequence search requires a contrast-enhanced difference matrix")


def _sweep_all(d: DifferenceMatrix, cfg: SearchConfig) -> tuple[np.ndarray, np.ndarray]:
    """Score matrix S and slope-sign tags for every (endpoint, query) pair.

    Columns j < window-1 stay +inf (the frame buffer is not full yet), as do
    endpoints with no admissible trajectory.
    """
    values = d.values
    n_ref, n_live = values.shape
    scores = np.full((n_ref, n_live), np.inf)
    tags = np.zeros((n_ref, n_live), dtype=np.int8)
    w = cfg.window
    if n_live < w:
        return scores, tags
    n_cols = n_live - w + 1
    endpoints = np.arange(n_ref, dtype=np.float64)[:, None]
    steps = np.arange(w, dtype=np.float64)[None, :]
    region = scores[:, w - 1:]
    tag_region = tags[:, w - 1:]
    for v in slope_set(cfg):
        rows = _round_half_away(endpoints - v * steps)  # (n_ref, w)
        valid = ((rows >= 0) & (rows < n_ref)).all(axis=1)
        rows = np.clip(rows, 0, n_ref - 1)
        acc = np.zeros((n_ref, n_cols))
        for k in range(w):
            acc += values[rows[:, k], w - 1 - k:n_live - k]
        acc /= w
        acc[~valid, :] = np.inf
        better = acc < region
        region[better] = acc[better]
        tag_region[better] = 1 if v > 0 else -1
    return scores, tags


def sweep_scores(d: DifferenceMatrix, cfg: SearchConfig, query: int) -> np.ndarray:
    """Per-reference sequence scores S(., query); +inf where inadmissible."""
    _check_enhanced(d)
    if query < cfg.window - 1:
        raise ValueError(f"query {query} precedes the first full window (index {cfg.window - 1})")
    if query >= d.n_live:
        raise ValueError(f"query {query} out of range for {d.n_live} live frames")
    scores, _ = _sweep_all(d, cfg)
    return scores[:, query].copy()


def _score_baseline(d: DifferenceMatrix) -> float:
    # Shift that keeps confidence ratios >= 1 on signed enhanced matrices; a
    # non-negative matrix is left untouched so the ratio is the plain one.
    return min(0.0, float(d.values.min()))


def _select(scores: np.ndarray, tags: np.ndarray, cfg: SearchConfig, baseline: float, query: int) -> MatchEntry:
    best = int(np.argmin(scores))  # ties resolve to the smaller reference index
    best_score = float(scores[best])
    if not math.isfinite(best_score):
        return MatchEntry(query=query)
    half = cfg.exclusion_halfwidth
    outside = np.concatenate((scores[:max(best - half, 0)], scores[best + half + 1:]))
    if outside.size == 0:
        return MatchEntry(query=query)
    second = float(outside.min())
    if second == best_score:
        confidence = 1.0
    else:
        denom = best_score - baseline
        confidence = math.inf if denom == 0.0 else (second - baseline) / denom
    direction = FORWARD if tags[best] > 0 else BACKWARD
    return MatchEntry(query=query, ref=best, score=confidence, direction=direction, raw_sum=best_score)


def best_match(d: DifferenceMatrix, cfg: SearchConfig, query: int) -> MatchEntry:
    """Best-matching reference frame for one query with its confidence ratio."""
    _check_enhanced(d)
    if query < cfg.window - 1:
        raise ValueError(f"query {query} precedes the first full window (index {cfg.window - 1})")
    scores, tags = _sweep_all(d, cfg)
    return _select(scores[:, query], tags[:, query], cfg, _score_baseline(d), query)


def run_search(d: DifferenceMatrix, cfg: SearchConfig, threads: int = 1) -> MatchSet:
    """Sequence search over every admissible query index (j >= window-1)."""
    _check_enhanced(d)
    n_ref, n_live = d.values.shape
    if n_live < cfg.window:
        return MatchSet((), n_ref, n_live,
                        warning=f"live trajectory of {n_live} frames is shorter than the "
                                f"sequence window {cfg.window}; no queries are admissible")
    scores, tags = _sweep_all(d, cfg)
    baseline = _score_baseline(d)
    queries = range(cfg.window - 1, n_live)

    def build(j: int) -> MatchEntry:
        return _select(scores[:, j], tags[:, j], cfg, baseline, j)

    if threads <= 1:
        entries = [build(j) for j in queries]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(build, queries))
    return MatchSet(tuple(entries), n_ref, n_live)


def nn_ball_search(d: DifferenceMatrix, radius: float) -> MatchSet:
    """Nearest-neighbour baseline on the raw matrix: per query, the closest
    reference if it lies within `radius`; the score is the distance margin."""
    if d.enhanced:
        raise ValueError("nearest-neighbour search operates on the raw difference matrix")
    mins = d.values.min(axis=0)
    argmins = d.values.argmin(axis=0)
    entries = []
    for j in range(d.n_live):
        if mins[j] <= radius:
            entries.append(MatchEntry(query=j, ref=int(argmins[j]),
                                      score=float(radius - mins[j]), raw_sum=float(mins[j])))
        else:
            entries.append(MatchEntry(query=j))
    return MatchSet(tuple(entries), d.n_ref, d.n_live)


def threshold_matches(m: MatchSet, min_score: float) -> MatchSet:
    """Drop matches scoring below min_score (unscored entries stay unmatched)."""
    entries = tuple(
        e if (e.score is not None and e.score >= min_score) else MatchEntry(query=e.query)
        for e in m.entries
    )
    return MatchSet(entries, m.n_ref, m.n_live, warning=m.warning)


# ---------------------------------------------------------------------------
# full score grids (for plotting) and CSV export
# ---------------------------------------------------------------------------

def score_matrix(d: DifferenceMatrix, cfg: SearchConfig) -> np.ndarray:
    """The raw sequence-score grid S (mean enhanced differences)."""
    _check_enhanced(d)
    scores, _ = _sweep_all(d, cfg)
    return scores


def confidence_matrix(d: DifferenceMatrix, cfg: SearchConfig) -> np.ndarray:
    """Confidence-ratio grid: each endpoint scored against the best endpoint
    outside its own exclusion zone.  Inadmissible cells are 0."""
    _check_enhanced(d)
    scores, _ = _sweep_all(d, cfg)
    baseline = _score_baseline(d)
    n_ref, n_live = scores.shape
    half = cfg.exclusion_halfwidth
    out = np.zeros_like(scores)
    prefix = np.minimum.accumulate(scores, axis=0)
    suffix = np.minimum.accumulate(scores[::-1], axis=0)[::-1]
    for i in range(n_ref):
        lo = i - half - 1
        hi = i + half + 1
        best_outside = np.full(n_live, np.inf)
        if lo >= 0:
            best_outside = np.minimum(best_outside, prefix[lo])
        if hi < n_ref:
            best_outside = np.minimum(best_outside, suffix[hi])
        own = scores[i]
        with np.errstate(invalid="ignore"):
            ratio = np.where(best_outside == own, 1.0,
                             (best_outside - baseline) / np.where(own - baseline == 0.0, np.nan, own - baseline))
        ratio = np.where(np.isfinite(own) & np.isfinite(best_outside), np.nan_to_num(ratio, nan=np.inf, posinf=np.inf), 0.0)
        out[i] = ratio
    return out


MATCH_HEADER = "query_index,ref_index,score,direction,raw_sum"


def save_matches(path, m: MatchSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [MATCH_HEADER]
    for e in m.entries:
        ref = "-" if e.ref is None else str(e.ref)
        score = "-" if e.score is None else repr(e.score)
        direction = "-" if e.direction is None else e.direction
        raw = "-" if e.raw_sum is None else repr(e.raw_sum)
        lines.append(f"{e.query},{ref},{score},{direction},{raw}")
    path.write_text("\n".join(lines) + "\n")


def load_matches(path, n_ref: int, n_live: int) -> MatchSet:
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != MATCH_HEADER:
        raise ValueError(f"{path}: expected match CSV header {MATCH_HEADER!r}")
    entries = []
    for line in lines[1:]:
        q, ref, score, direction, raw = line.split(",")
        entries.append(MatchEntry(
            query=int(q),
            ref=None if ref == "-" else int(ref),
            score=None if score == "-" else float(score),
            direction=None if direction == "-" else direction,
            raw_sum=None if raw == "-" else float(raw),
        ))
    return MatchSet(tuple(entries), n_ref, n_live)
