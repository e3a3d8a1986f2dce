import math

import numpy as np
import pytest

from seqplace.diffmat import DifferenceMatrix
from seqplace.search import (BACKWARD, DIRECTION_BOTH, DIRECTION_FORWARD_ONLY, FORWARD,
                             MatchEntry, MatchSet, SearchConfig, best_match, load_matches,
                             nn_ball_search, run_search, save_matches, sweep_scores,
                             threshold_matches)

# ---------------------------------------------------------------------------
# independent enumeration oracle (pure python, written from the definitions)
# ---------------------------------------------------------------------------

def round_half_away(x):
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def oracle_slopes(slope_min, slope_max, slope_step, mirrored):
    count = int(math.floor((slope_max - slope_min) / slope_step + 1e-9)) + 1
    pos = [slope_min + m * slope_step for m in range(count)]
    return pos + [-v for v in pos] if mirrored else pos


def oracle_sweep(values, window, slopes, query):
    """Exhaustive enumeration over (endpoint, slope, step)."""
    n_ref = values.shape[0]
    best = [math.inf] * n_ref
    for i in range(n_ref):
        for v in slopes:
            rows = [round_half_away(i - v * k) for k in range(window)]
            if any(r < 0 or r >= n_ref for r in rows):
                continue
            total = 0.0
            for k, r in enumerate(rows):
                total += values[r, query - k]
            s = total / window
            if s < best[i]:
                best[i] = s
    return np.array(best)


def enhanced(values):
    values = np.asarray(values, dtype=np.float64)
    return DifferenceMatrix(values, enhanced=True, section=values.shape[0])


def plant_band(n, slope, endpoint_row, query, window, floor=1.0, band=0.0):
    """Matrix at `floor` with a constant-slope band of value `band` ending at
    (endpoint_row, query)."""
    values = np.full((n, n), floor)
    for k in range(window):
        r = round_half_away(endpoint_row - slope * k)
        values[r, query - k] = band
    return values


class TestSweepScores:
    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(30)
        cfg = SearchConfig(window=3, slope_min=0.8, slope_max=1.2, slope_step=0.2,
                           direction=DIRECTION_BOTH)
        values = rng.random((12, 12))
        d = enhanced(values)
        slopes = oracle_slopes(0.8, 1.2, 0.2, mirrored=True)
        for query in (2, 5, 11):
            got = sweep_scores(d, cfg, query)
            want = oracle_sweep(values, 3, slopes, query)
            finite = np.isfinite(want)
            assert np.array_equal(np.isfinite(got), finite)
            assert np.abs(got[finite] - want[finite]).max() <= 1e-12

    def test_planted_forward_band(self):
        cfg = SearchConfig(window=4, slope_min=1.0, slope_max=1.0, slope_step=0.1,
                           exclusion=2, direction=DIRECTION_FORWARD_ONLY)
        values = plant_band(10, slope=1.0, endpoint_row=7, query=8, window=4)
        scores = sweep_scores(enhanced(values), cfg, 8)
        assert scores[7] == 0.0
        others = np.delete(scores, 7)
        assert scores[7] < others[np.isfinite(others)].min()
        entry = best_match(enhanced(values), cfg, 8)
        assert entry.ref == 7 and entry.direction == FORWARD

    def test_planted_reverse_band(self):
        window = 4
        values = plant_band(12, slope=-1.0, endpoint_row=3, query=9, window=window)
        fwd = SearchConfig(window=window, slope_min=1.0, slope_max=1.0, slope_step=0.1,
                           exclusion=2, direction=DIRECTION_FORWARD_ONLY)
        both = SearchConfig(window=window, slope_min=1.0, slope_max=1.0, slope_step=0.1,
                            exclusion=2, direction=DIRECTION_BOTH)
        fwd_scores = sweep_scores(enhanced(values), fwd, 9)
        finite = fwd_scores[np.isfinite(fwd_scores)]
        assert finite.min() >= 0.75  # forward-only cannot trace the reverse band
        entry = best_match(enhanced(values), both, 9)
        assert entry.ref == 3 and entry.direction == BACKWARD
        assert entry.raw_sum == 0.0

    def test_query_before_buffer_filled(self):
        cfg = SearchConfig(window=5, direction=DIRECTION_BOTH)
        d = enhanced(np.ones((8, 8)))
        with pytest.raises(ValueError, match="window"):
            sweep_scores(d, cfg, 3)

    def test_requires_enhanced_matrix(self):
        cfg = SearchConfig(window=2)
        with pytest.raises(ValueError, match="enhanced"):
            sweep_scores(DifferenceMatrix(np.ones((4, 4))), cfg, 3)


class TestBestMatch:
    def test_planted_band_confidence_ratio(self):
        window, query, row = 3, 9, 6
        values = plant_band(12, slope=1.0, endpoint_row=row, query=query,
                            window=window, floor=1.0, band=0.01)
        cfg = SearchConfig(window=window, slope_min=1.0, slope_max=1.0, slope_step=0.1,
                           exclusion=2, direction=DIRECTION_FORWARD_ONLY)
        entry = best_match(enhanced(values), cfg, query)
        # independent oracle: enumerate scores, take the ratio directly
        scores = oracle_sweep(values, window, [1.0], query)
        best = int(np.argmin(scores))
        outside = np.concatenate((scores[:best - 2], scores[best + 3:]))
        want = outside[np.isfinite(outside)].min() / scores[best]
        assert entry.ref == row
        assert entry.score > 5.0
        assert math.isclose(entry.score, want, rel_tol=1e-12)

    def test_uniform_matrix_perfect_ambiguity(self):
        cfg = SearchConfig(window=3, exclusion=1, direction=DIRECTION_FORWARD_ONLY)
        entry = best_match(enhanced(np.zeros((9, 9))), cfg, 5)
        assert entry.score == 1.0

    def test_argmin_tie_breaks_low_index(self):
        values = np.ones((10, 10))
        values[2, :] = 0.0
        values[6, :] = 0.0  # two identical vertical zero bands
        cfg = SearchConfig(window=2, slope_min=0.1, slope_max=0.1, slope_step=0.1,
                           exclusion=1, direction=DIRECTION_FORWARD_ONLY)
        entry = best_match(enhanced(values), cfg, 4)
        assert entry.ref == 2

    def test_exclusion_zone_covering_everything_is_unmatched(self):
        cfg = SearchConfig(window=2, exclusion=20, direction=DIRECTION_FORWARD_ONLY)
        entry = best_match(enhanced(np.random.default_rng(31).random((6, 6))), cfg, 4)
        assert not entry.matched and entry.score is None

    def test_signed_matrix_confidence_at_least_one(self):
        rng = np.random.default_rng(32)
        values = rng.standard_normal((15, 15))  # signed, like real enhanced data
        cfg = SearchConfig(window=3, exclusion=2)
        m = run_search(enhanced(values), cfg)
        for e in m.entries:
            if e.score is not None:
                assert e.score >= 1.0


class TestRunSearch:
    def test_self_match(self):
        rng = np.random.default_rng(33)
        from seqplace.diffmat import enhance_contrast, pairwise_distances
        from seqplace.ingest import DescriptorSequence
        seq = DescriptorSequence(rng.standard_normal((30, 8)))
        d = enhance_contrast(pairwise_distances(seq, seq), 10)
        m = run_search(d, SearchConfig(window=5, direction=DIRECTION_BOTH))
        assert [e.query for e in m.entries] == list(range(4, 30))
        for e in m.entries:
            assert e.ref == e.query

    def test_short_live_trajectory_warns(self):
        m = run_search(enhanced(np.ones((8, 3))), SearchConfig(window=5))
        assert m.entries == ()
        assert "window" in m.warning

    def test_forward_only_equals_both_without_reverse_revisits(self):
        from seqplace import sim
        from seqplace.diffmat import enhance_contrast, pairwise_distances
        spec = sim.WorldSpec(segments=(sim.Segment(sim.KIND_NEW_ROAD, 30),
                                       sim.Segment(sim.KIND_FORWARD_REVISIT, 20, target=0)),
                             noise_sigma=0.05, seed=3)
        ref, live, _ = sim.generate_world(spec)
        d = enhance_contrast(pairwise_distances(ref, live), 10)
        fwd = run_search(d, SearchConfig(window=5, direction=DIRECTION_FORWARD_ONLY))
        both = run_search(d, SearchConfig(window=5, direction=DIRECTION_BOTH))
        assert fwd.entries == both.entries

    def test_thread_count_does_not_change_results(self):
        rng = np.random.default_rng(34)
        d = enhanced(rng.standard_normal((20, 25)))
        cfg = SearchConfig(window=4)
        assert run_search(d, cfg, threads=1).entries == run_search(d, cfg, threads=8).entries


class TestNNBallSearch:
    def test_exact_zero_with_zero_radius(self):
        values = np.ones((6, 7))
        values[3, 5] = 0.0
        m = nn_ball_search(DifferenceMatrix(values), 0.0)
        assert m.entries[5].ref == 3
        for j, e in enumerate(m.entries):
            if j != 5:
                assert not e.matched

    def test_infinite_radius_matches_all(self):
        rng = np.random.default_rng(35)
        values = rng.random((6, 7))
        m = nn_ball_search(DifferenceMatrix(values), math.inf)
        for j, e in enumerate(m.entries):
            assert e.ref == int(values[:, j].argmin())

    def test_matches_column_scan_oracle(self):
        rng = np.random.default_rng(36)
        values = rng.random((9, 11))
        radius = float(np.median(values.min(axis=0)))
        m = nn_ball_search(DifferenceMatrix(values), radius)
        for j in range(11):
            best, best_i = math.inf, None
            for i in range(9):
                if values[i, j] < best:
                    best, best_i = values[i, j], i
            e = m.entries[j]
            if best <= radius:
                assert e.ref == best_i
                assert math.isclose(e.score, radius - best, rel_tol=1e-12)
            else:
                assert not e.matched

    def test_rejects_enhanced_matrix(self):
        with pytest.raises(ValueError, match="raw"):
            nn_ball_search(enhanced(np.zeros((3, 3))), 1.0)


class TestThresholdMatches:
    def make_set(self, scores):
        entries = tuple(MatchEntry(query=j, ref=j, score=s, direction=FORWARD, raw_sum=0.0)
                        for j, s in enumerate(scores))
        return MatchSet(entries, n_ref=len(scores), n_live=len(scores))

    def test_min_score_one_retains_all(self):
        m = self.make_set([1.0, 2.5, 7.0])
        out = threshold_matches(m, 1.0)
        assert all(e.matched for e in out.entries)

    def test_infinite_threshold_unmatches_all(self):
        m = self.make_set([1.0, 2.5, 7.0])
        out = threshold_matches(m, math.inf)
        assert not any(e.matched for e in out.entries)

    def test_threshold_between_two_planted_scores(self):
        window = 3
        values = np.full((14, 14), 1.0)
        for k in range(window):  # strong band ending at (5, 6)
            values[5 - k, 6 - k] = 0.01
        for k in range(window):  # weaker band ending at (11, 12)
            values[11 - k, 12 - k] = 0.5
        cfg = SearchConfig(window=window, slope_min=1.0, slope_max=1.0, slope_step=0.1,
                           exclusion=2, direction=DIRECTION_FORWARD_ONLY)
        m = run_search(enhanced(values), cfg)
        strong = next(e for e in m.entries if e.query == 6)
        weak = next(e for e in m.entries if e.query == 12)
        assert strong.score > weak.score > 1.0
        out = threshold_matches(m, (strong.score + weak.score) / 2.0)
        kept = {e.query for e in out.entries if e.matched}
        assert 6 in kept and 12 not in kept

    def test_monotonic_shrinkage(self):
        rng = np.random.default_rng(37)
        d = enhanced(rng.standard_normal((18, 18)))
        m = run_search(d, SearchConfig(window=3))
        sizes = []
        for t in np.linspace(1.0, 2.0, 15):
            sizes.append(sum(e.matched for e in threshold_matches(m, float(t)).entries))
        assert all(b <= a for a, b in zip(sizes, sizes[1:]))


class TestMatchCSV:
    def test_round_trip(self, tmp_path):
        entries = (MatchEntry(0), MatchEntry(1, ref=4, score=2.5, direction=BACKWARD, raw_sum=-0.75),
                   MatchEntry(2, ref=1, score=1.0, direction=FORWARD, raw_sum=0.25))
        m = MatchSet(entries, n_ref=6, n_live=3)
        path = tmp_path / "matches.csv"
        save_matches(path, m)
        header = path.read_text().splitlines()[0]
        assert header == "query_index,ref_index,score,direction,raw_sum"
        back = load_matches(path, 6, 3)
        assert back.entries == entries
