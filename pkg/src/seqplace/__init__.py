"""Sequence-based place recognition over trajectories of place descriptors."""

from .descriptors import (DescriptorConfig, MODE_BASELINE, MODE_ROTATION_INVARIANT,
                          embed_sequence, is_degenerate, preprocess_baseline, ri_descriptor)
from .diffmat import DifferenceMatrix, enhance_contrast, pairwise_distances
from .evaluate import (GroundTruth, MatchCounts, PRCurve, TuneResult, f_beta,
                       grid_search, gt_distance_matrix, label_matches, nn_radius_sweep,
                       pr_curve, recall_at_precision, threshold_sweep)
from .ingest import (DescriptorSequence, ParseError, PolarScan, PoseTrajectory,
                     load_descriptors, load_poses, load_scans, save_descriptors,
                     save_poses, save_scans)
from .search import (MatchEntry, MatchSet, SearchConfig, best_match, nn_ball_search,
                     run_search, sweep_scores, threshold_matches)
from .sim import Segment, WorldSpec, generate_world, perturb

__version__ = "0.1.0"

__all__ = [
    "DescriptorConfig", "MODE_BASELINE", "MODE_ROTATION_INVARIANT",
    "embed_sequence", "is_degenerate", "preprocess_baseline", "ri_descriptor",
    "DifferenceMatrix", "enhance_contrast", "pairwise_distances",
    "GroundTruth", "MatchCounts", "PRCurve", "TuneResult", "f_beta",
    "grid_search", "gt_distance_matrix", "label_matches", "nn_radius_sweep",
    "pr_curve", "recall_at_precision", "threshold_sweep",
    "DescriptorSequence", "ParseError", "PolarScan", "PoseTrajectory",
    "load_descriptors", "load_poses", "load_scans", "save_descriptors",
    "save_poses", "save_scans",
    "MatchEntry", "MatchSet", "SearchConfig", "best_match", "nn_ball_search",
    "run_search", "sweep_scores", "threshold_matches",
    "Segment", "WorldSpec", "generate_world", "perturb",
    "__version__",
]
