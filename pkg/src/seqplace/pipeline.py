"""Batch pipeline: run-config parsing and the staged commands that move data
between files (simulate, embed, diff, search, eval, tune, full).

The one-shot ``full`` command literally executes the staged commands in
sequence through the same intermediate files, so staged and one-shot runs are
byte-identical by construction.  All randomness lives in the simulator and is
seed-controlled through the config; the matching pipeline itself is
deterministic, and the thread count never changes numerical results.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

from . import evaluate, sim
from .descriptors import MODE_BASELINE, DescriptorConfig, embed_sequence
from .diffmat import enhance_contrast, load_matrix, pairwise_distances, save_matrix, save_matrix_csv
from .ingest import load_descriptors, load_poses, load_scans, save_descriptors, save_poses, save_scans
from .search import (DIRECTION_BOTH, DIRECTION_FORWARD_ONLY, SearchConfig, confidence_matrix,
                     load_matches, nn_ball_search, run_search, save_matches, score_matrix)

COMMANDS = ("embed", "diff", "search", "eval", "tune", "simulate", "full")

NN_METHOD = "nn"
FORWARD_METHOD = "seq_forward"
BOTH_METHOD = "seq_forward_backward"

SUMMARY_HEADER = "representation,search,auc,max_f1,max_f2,max_f05,recall_at_p60,recall_at_p80"


@dataclass(frozen=True)
class InputPaths:
    ref_scans: str | None = None
    live_scans: str | None = None
    ref_descriptors: str | None = None
    live_descriptors: str | None = None
    ref_poses: str | None = None
    live_poses: str | None = None


@dataclass(frozen=True)
class TuneGrid:
    windows: tuple[int, ...]
    sections: tuple[int, ...]


@dataclass(frozen=True)
class RunConfig:
    descriptor: DescriptorConfig
    search: SearchConfig
    enhancement_section: int
    gt_radius: float
    threshold_levels: int
    nn_radius: float | None
    inputs: InputPaths
    sim: sim.WorldSpec | None
    tune: TuneGrid | None


def _check_keys(raw: dict, allowed: set[str], context: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"{context}: unknown key {sorted(unknown)[0]!r}")


_TOP_KEYS = {"descriptor", "search", "enhancement_section", "gt_radius", "threshold_levels",
             "nn_radius", "inputs", "sim", "tune"}
_DESCRIPTOR_KEYS = {"mode", "thumb_azimuths", "thumb_ranges", "patch_size", "spectrum_bins"}
_SEARCH_KEYS = {"window", "slope_min", "slope_max", "slope_step", "exclusion", "direction"}
_INPUT_KEYS = {"ref_scans", "live_scans", "ref_descriptors", "live_descriptors",
               "ref_poses", "live_poses"}
_TUNE_KEYS = {"windows", "sections"}


def parse_run_config(path) -> tuple[RunConfig, dict]:
    """Parse and validate the JSON run config; unknown keys are errors."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")

    desc_raw = raw.get("descriptor", {})
    _check_keys(desc_raw, _DESCRIPTOR_KEYS, "config.descriptor")
    descriptor = DescriptorConfig(**desc_raw)

    search_raw = raw.get("search", {})
    _check_keys(search_raw, _SEARCH_KEYS, "config.search")
    search_cfg = SearchConfig(**search_raw)

    inputs_raw = raw.get("inputs", {})
    _check_keys(inputs_raw, _INPUT_KEYS, "config.inputs")
    inputs = InputPaths(**inputs_raw)

    world = None
    if raw.get("sim") is not None:
        world = sim.world_spec_from_dict(raw["sim"])

    tune = None
    if raw.get("tune") is not None:
        tune_raw = raw["tune"]
        _check_keys(tune_raw, _TUNE_KEYS, "config.tune")
        tune = TuneGrid(windows=tuple(int(w) for w in tune_raw.get("windows", ())),
                        sections=tuple(int(r) for r in tune_raw.get("sections", ())))

    cfg = RunConfig(
        descriptor=descriptor,
        search=search_cfg,
        enhancement_section=int(raw.get("enhancement_section", 10)),
        gt_radius=float(raw.get("gt_radius", evaluate.DEFAULT_RADIUS_M)),
        threshold_levels=int(raw.get("threshold_levels", 100)),
        nn_radius=None if raw.get("nn_radius") is None else float(raw["nn_radius"]),
        inputs=inputs,
        sim=world,
        tune=tune,
    )
    if cfg.enhancement_section < 1:
        raise ValueError("enhancement_section must be >= 1")
    if cfg.gt_radius <= 0.0:
        raise ValueError("gt_radius must be positive")
    if cfg.threshold_levels < 2:
        raise ValueError("threshold_levels must be >= 2")
    return cfg, raw


def _require(value, name: str):
    if value is None:
        raise ValueError(f"config.inputs.{name} is required for this command")
    return value


def _scan_format(path: str) -> str:
    return "csv" if str(path).endswith(".csv") else "binary"


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header] + rows) + "\n")


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_simulate(cfg: RunConfig, out: Path) -> None:
    if cfg.sim is None:
        raise ValueError("config.sim is required for the simulate command")
    reference, live, gt = sim.generate_world(cfg.sim, radius=cfg.gt_radius)
    if cfg.sim.emit == sim.EMIT_SCANS:
        ref_path = _require(cfg.inputs.ref_scans, "ref_scans")
        live_path = _require(cfg.inputs.live_scans, "live_scans")
        save_scans(ref_path, reference, format=_scan_format(ref_path))
        save_scans(live_path, live, format=_scan_format(live_path))
    else:
        save_descriptors(_require(cfg.inputs.ref_descriptors, "ref_descriptors"), reference)
        save_descriptors(_require(cfg.inputs.live_descriptors, "live_descriptors"), live)
    save_poses(_require(cfg.inputs.ref_poses, "ref_poses"), gt.ref_poses)
    save_poses(_require(cfg.inputs.live_poses, "live_poses"), gt.live_poses)


def stage_embed(cfg: RunConfig, out: Path) -> None:
    ref_path = _require(cfg.inputs.ref_scans, "ref_scans")
    live_path = _require(cfg.inputs.live_scans, "live_scans")
    ref_scans = load_scans(ref_path, format=_scan_format(ref_path))
    live_scans = load_scans(live_path, format=_scan_format(live_path))
    ref = embed_sequence(ref_scans, cfg.descriptor, source_id="reference")
    live = embed_sequence(live_scans, cfg.descriptor, source_id="live")
    save_descriptors(_require(cfg.inputs.ref_descriptors, "ref_descriptors"), ref)
    save_descriptors(_require(cfg.inputs.live_descriptors, "live_descriptors"), live)


def _load_sequences(cfg: RunConfig):
    ref = load_descriptors(_require(cfg.inputs.ref_descriptors, "ref_descriptors"))
    live = load_descriptors(_require(cfg.inputs.live_descriptors, "live_descriptors"))
    return ref, live


def stage_diff(cfg: RunConfig, out: Path) -> None:
    ref, live = _load_sequences(cfg)
    raw = pairwise_distances(ref, live)
    if cfg.enhancement_section > raw.n_ref:
        raise ValueError(f"enhancement_section ({cfg.enhancement_section}) exceeds the "
                         f"reference trajectory length ({raw.n_ref})")
    save_matrix(out / "diffmat.bin", raw)
    save_matrix_csv(out / "diffmat.csv", raw)
    save_matrix(out / "diffmat_enhanced.bin", enhance_contrast(raw, cfg.enhancement_section))


def stage_search(cfg: RunConfig, out: Path, threads: int) -> None:
    raw = load_matrix(out / "diffmat.bin")
    enhanced = load_matrix(out / "diffmat_enhanced.bin")
    if enhanced.n_live < cfg.search.window:
        raise ValueError(f"sequence window ({cfg.search.window}) exceeds the live "
                         f"trajectory length ({enhanced.n_live})")
    forward = run_search(enhanced, replace(cfg.search, direction=DIRECTION_FORWARD_ONLY), threads)
    both = run_search(enhanced, replace(cfg.search, direction=DIRECTION_BOTH), threads)
    configured = forward if cfg.search.direction == DIRECTION_FORWARD_ONLY else both
    save_matches(out / "matches.csv", configured)
    save_matches(out / "matches_seq_forward.csv", forward)
    save_matches(out / "matches_seq_both.csv", both)
    nn_radius = cfg.nn_radius if cfg.nn_radius is not None else float(raw.values.max())
    save_matches(out / "matches_nn.csv", nn_ball_search(raw, nn_radius))
    from .diffmat import DifferenceMatrix
    save_matrix(out / "score_matrix.bin",
                DifferenceMatrix(score_matrix_clipped(enhanced, cfg.search), enhanced=True,
                                 section=enhanced.section))
    save_matrix(out / "confidence_matrix.bin",
                DifferenceMatrix(confidence_matrix(enhanced, cfg.search), enhanced=True,
                                 section=enhanced.section))


def score_matrix_clipped(enhanced, search_cfg):
    # +inf cells (no admissible trajectory / unfilled buffer) are stored as 0
    # so the grid stays finite for plotting
    import numpy as np
    grid = score_matrix(enhanced, search_cfg)
    return np.where(np.isfinite(grid), grid, 0.0)


def stage_eval(cfg: RunConfig, raw_config: dict, out: Path, command: str) -> dict:
    gt = evaluate.gt_distance_matrix(load_poses(_require(cfg.inputs.ref_poses, "ref_poses")),
                                     load_poses(_require(cfg.inputs.live_poses, "live_poses")),
                                     radius=cfg.gt_radius)
    raw = load_matrix(out / "diffmat.bin")
    forward = load_matches(out / "matches_seq_forward.csv", raw.n_ref, raw.n_live)
    both = load_matches(out / "matches_seq_both.csv", raw.n_ref, raw.n_live)

    curves = {
        NN_METHOD: evaluate.nn_radius_sweep(raw, gt, cfg.threshold_levels),
        FORWARD_METHOD: evaluate.threshold_sweep(forward, gt, cfg.threshold_levels),
        BOTH_METHOD: evaluate.threshold_sweep(both, gt, cfg.threshold_levels),
    }

    representation = "precomputed" if cfg.inputs.ref_scans is None else cfg.descriptor.mode
    summary_rows = []
    summary = {}
    for method, curve in curves.items():
        row = evaluate.summary_row(curve)
        summary[method] = row
        summary_rows.append(",".join([representation, method] + [_fmt(row[k]) for k in
                                      ("auc", "max_f1", "max_f2", "max_f05",
                                       "recall_at_p60", "recall_at_p80")]))
    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows)

    pr_rows = []
    for method, curve in curves.items():
        for t, p, r in curve.points:
            pr_rows.append(f"{method},{_fmt(t)},{_fmt(p)},{_fmt(r)}")
    _write_csv(out / "pr_curve.csv", "method,threshold,precision,recall", pr_rows)

    report = {
        "command": command,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": raw_config,
        "summary": summary,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return summary


def stage_tune(cfg: RunConfig, raw_config: dict, out: Path, threads: int) -> evaluate.TuneResult:
    if cfg.tune is None or not cfg.tune.windows or not cfg.tune.sections:
        raise ValueError("config.tune with windows and sections is required for the tune command")
    ref, live = _load_sequences(cfg)
    gt = evaluate.gt_distance_matrix(load_poses(_require(cfg.inputs.ref_poses, "ref_poses")),
                                     load_poses(_require(cfg.inputs.live_poses, "live_poses")),
                                     radius=cfg.gt_radius)
    result = evaluate.grid_search(ref, live, gt, cfg.tune.windows, cfg.tune.sections,
                                  cfg.search, levels=cfg.threshold_levels, threads=threads)
    rows = [f"{w},{r},{_fmt(score)}" for w, r, score in result.grid]
    _write_csv(out / "tune.csv", "window,section,precision_at_80_recall", rows)
    report = {
        "command": "tune",
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": raw_config,
        "grid": [{"window": w, "section": r, "precision_at_80_recall": s} for w, r, s in result.grid],
        "chosen": {"window": result.chosen[0], "section": result.chosen[1]},
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return result


def run_pipeline(config_path, command: str, out_dir, threads: int | None = None) -> None:
    """Execute one pipeline command; raises ValueError/ParseError on bad input."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    cfg, raw = parse_run_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = threads if threads and threads > 0 else (os.cpu_count() or 1)

    if command == "simulate":
        stage_simulate(cfg, out)
    elif command == "embed":
        stage_embed(cfg, out)
    elif command == "diff":
        stage_diff(cfg, out)
    elif command == "search":
        stage_search(cfg, out, threads)
    elif command == "eval":
        stage_eval(cfg, raw, out, command)
    elif command == "tune":
        stage_tune(cfg, raw, out, threads)
    elif command == "full":
        if cfg.inputs.ref_scans is not None:
            stage_embed(cfg, out)
        stage_diff(cfg, out)
        stage_search(cfg, out, threads)
        stage_eval(cfg, raw, out, "full")
