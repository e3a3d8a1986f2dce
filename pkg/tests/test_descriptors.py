import numpy as np
import pytest

from seqplace.descriptors import (MODE_BASELINE, MODE_ROTATION_INVARIANT, DescriptorConfig,
                                  embed_sequence, is_degenerate, preprocess_baseline,
                                  ri_descriptor)
from seqplace.ingest import PolarScan


def dft_magnitudes(column):
    """Brute-force discrete-transform magnitudes (independent oracle)."""
    n = len(column)
    mags = []
    for freq in range(n // 2 + 1):
        re = sum(column[k] * np.cos(-2.0 * np.pi * freq * k / n) for k in range(n))
        im = sum(column[k] * np.sin(-2.0 * np.pi * freq * k / n) for k in range(n))
        mags.append(np.hypot(re, im))
    return np.array(mags)


def ri_oracle(power, bins):
    """Per-column brute-force spectrum descriptor (independent of the fft path)."""
    blocks = [dft_magnitudes(power[:, b])[:bins] for b in range(power.shape[1])]
    vec = np.concatenate(blocks)
    norm = np.linalg.norm(vec)
    return vec if norm == 0 else vec / norm


class TestBaseline:
    def test_constant_scan_all_zero(self):
        cfg = DescriptorConfig(mode=MODE_BASELINE, thumb_azimuths=4, thumb_ranges=4, patch_size=2)
        scan = PolarScan(np.full((8, 8), 0.5))
        assert np.array_equal(preprocess_baseline(scan, cfg), np.zeros(16))

    def test_hand_computed_two_by_two(self):
        # mean 0.5, population std 0.5 -> [-1, 1, 1, -1]
        cfg = DescriptorConfig(mode=MODE_BASELINE, thumb_azimuths=2, thumb_ranges=2, patch_size=2)
        scan = PolarScan(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(preprocess_baseline(scan, cfg), [-1.0, 1.0, 1.0, -1.0], atol=1e-12)

    def test_not_rotation_invariant(self):
        rng = np.random.default_rng(10)
        cfg = DescriptorConfig(mode=MODE_BASELINE, thumb_azimuths=16, thumb_ranges=16, patch_size=4)
        scan = PolarScan(rng.random((32, 32)))
        shifted = PolarScan(np.roll(scan.power, 7, axis=0))
        diff = np.abs(preprocess_baseline(scan, cfg) - preprocess_baseline(shifted, cfg)).max()
        assert diff > 0.1

    def test_patch_statistics(self):
        rng = np.random.default_rng(11)
        cfg = DescriptorConfig(mode=MODE_BASELINE, thumb_azimuths=8, thumb_ranges=8, patch_size=4)
        vec = preprocess_baseline(PolarScan(rng.random((16, 16))), cfg)
        thumb = vec.reshape(8, 8)
        for r0 in range(0, 8, 4):
            for c0 in range(0, 8, 4):
                patch = thumb[r0:r0 + 4, c0:c0 + 4]
                if not patch.any():
                    continue
                assert abs(patch.mean()) <= 1e-9
                assert abs(patch.var() - 1.0) <= 1e-6

    def test_scan_smaller_than_thumbnail(self):
        cfg = DescriptorConfig(mode=MODE_BASELINE, thumb_azimuths=8, thumb_ranges=8, patch_size=2)
        with pytest.raises(ValueError, match="smaller than thumbnail"):
            preprocess_baseline(PolarScan(np.zeros((4, 16))), cfg)

    def test_wrong_mode_rejected(self):
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT)
        with pytest.raises(ValueError, match="mode"):
            preprocess_baseline(PolarScan(np.zeros((64, 64))), cfg)


class TestRotationInvariant:
    def test_length_four_impulse_spectrum(self):
        # column [1,0,0,0]: every DFT magnitude is 1 before normalisation
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT, spectrum_bins=3)
        scan = PolarScan(np.array([[1.0], [0.0], [0.0], [0.0]]))
        expected = ri_oracle(scan.power, 3)
        assert np.allclose(expected * np.sqrt(3.0), [1.0, 1.0, 1.0], atol=1e-12)
        assert np.allclose(ri_descriptor(scan, cfg), expected, atol=1e-12)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(12)
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT, spectrum_bins=5)
        scan = PolarScan(rng.random((12, 6)))
        assert np.allclose(ri_descriptor(scan, cfg), ri_oracle(scan.power, 5), atol=1e-9)

    def test_shift_invariance_property(self):
        rng = np.random.default_rng(13)
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT)
        for _ in range(20):
            scan = PolarScan(rng.random((32, 16)))
            shift = int(rng.integers(0, 32))
            shifted = PolarScan(np.roll(scan.power, shift, axis=0))
            diff = np.abs(ri_descriptor(scan, cfg) - ri_descriptor(shifted, cfg)).max()
            assert diff <= 1e-9

    def test_all_zero_scan_degenerate(self):
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT)
        vec = ri_descriptor(PolarScan(np.zeros((8, 4))), cfg)
        assert not vec.any()
        assert is_degenerate(vec)

    def test_unit_norm_unless_degenerate(self):
        rng = np.random.default_rng(14)
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT, spectrum_bins=9)
        for _ in range(10):
            vec = ri_descriptor(PolarScan(rng.random((16, 8))), cfg)
            assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9
            assert not is_degenerate(vec)

    def test_spectrum_bins_bound(self):
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT, spectrum_bins=6)
        with pytest.raises(ValueError, match="spectrum_bins"):
            ri_descriptor(PolarScan(np.zeros((8, 4))), cfg)  # limit is 8//2+1 = 5


class TestEmbedSequence:
    def test_identical_scans_identical_vectors(self):
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT)
        scans = [PolarScan(np.full((8, 4), 0.25))] * 5
        seq = embed_sequence(scans, cfg)
        assert len(seq) == 5
        for row in seq.vectors[1:]:
            assert np.array_equal(row, seq.vectors[0])

    def test_empty_list(self):
        with pytest.raises(ValueError, match="empty trajectory"):
            embed_sequence([], DescriptorConfig())

    def test_mixed_shapes_name_index(self):
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT)
        scans = [PolarScan(np.zeros((8, 4))), PolarScan(np.zeros((8, 5)))]
        with pytest.raises(ValueError, match="scan 1"):
            embed_sequence(scans, cfg)

    def test_preserves_order(self):
        rng = np.random.default_rng(15)
        cfg = DescriptorConfig(mode=MODE_ROTATION_INVARIANT)
        scans = [PolarScan(rng.random((8, 4))) for _ in range(4)]
        seq = embed_sequence(scans, cfg, source_id="t")
        for i, scan in enumerate(scans):
            assert np.allclose(seq.vectors[i], ri_descriptor(scan, cfg))
        assert seq.source_id == "t"


class TestConfigValidation:
    def test_thumb_smaller_than_patch(self):
        with pytest.raises(ValueError):
            DescriptorConfig(mode=MODE_BASELINE, thumb_azimuths=4, thumb_ranges=4, patch_size=8)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            DescriptorConfig(mode="banana")
