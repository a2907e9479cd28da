"""Objective evaluation and scale-distribution reporting.

Metrics are root-mean-square differences in Hz over frames voiced in
both tracks: reconstruction compares a track against its encode and
reconstruct round trip, transformation compares a converted track
against the parallel target after syllable alignment, and the identity
baseline warps the unconverted source onto the target for the same
comparison.  The learned scale values double as durations in
milliseconds (one sample per millisecond), reported as a CSV table and
a self-contained SVG strip histogram with reference duration markers.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .errors import EvalError
from .pipeline import F0Track, ParallelPair, align_pair, prepare
from .training import DIRECTIONS, ModelBundle, convert
from .wavelets import (
    adaptive_scale_select,
    dense_scale_grid,
    encode,
    fixed_grid_plane,
    reconstruct,
)

log = logging.getLogger(__name__)

# nominal duration ratios relating phones and words to syllables
PHONE_PER_SYLLABLE = 1.0 / 2.5
WORD_PER_SYLLABLE = 2.5
MARKER_NAMES = ("P", "SY", "W", "SE")

# fallback markers when no corpus is at hand to measure durations from
NOMINAL_SYLLABLE_MS = 200.0
NOMINAL_UTTERANCE_MS = 1500.0


def nominal_markers() -> dict[str, float]:
    """Duration markers from typical speech rates, not from data."""
    return {
        "P": NOMINAL_SYLLABLE_MS * PHONE_PER_SYLLABLE,
        "SY": NOMINAL_SYLLABLE_MS,
        "W": NOMINAL_SYLLABLE_MS * WORD_PER_SYLLABLE,
        "SE": NOMINAL_UTTERANCE_MS,
    }


def rmse_hz(pred: F0Track, ref: F0Track) -> float:
    """Root-mean-square Hz difference over frames voiced in both tracks."""
    if len(pred.f0_hz) != len(ref.f0_hz):
        raise EvalError(
            f"track lengths differ: {len(pred.f0_hz)} vs {len(ref.f0_hz)}"
        )
    both = pred.voicing & ref.voicing
    if not both.any():
        raise EvalError("tracks share no voiced frames")
    diff = pred.f0_hz[both] - ref.f0_hz[both]
    return float(np.sqrt(np.mean(diff * diff)))


def reconstruct_track(track: F0Track, bundle: ModelBundle) -> F0Track:
    """Encoder round trip of one track, back on its own timeline."""
    mi = prepare(track)
    valid = mi.valid_length
    plane = encode(
        mi.signal[:valid], bundle.bank, mean=mi.mean_logf0, valid_length=valid
    )
    scales = bundle.bank.scale_values() if bundle.constants.classic_icwt_norm else None
    rec = reconstruct(plane, bundle.constants, scales=scales)
    f0 = np.where(track.voicing, np.exp(rec[: len(track.f0_hz)]), 0.0)
    return F0Track(
        f0_hz=f0,
        voicing=track.voicing.copy(),
        syllables=list(track.syllables),
        attitude=track.attitude,
        utterance_id=track.utterance_id,
        speaker_id=track.speaker_id,
    )


def corpus_markers(pairs: list[ParallelPair]) -> dict[str, float]:
    """Mean phone, syllable, word and sentence durations in milliseconds."""
    if not pairs:
        raise EvalError("no pairs to derive duration markers from")
    syl = []
    sent = []
    for pair in pairs:
        for track in (pair.source, pair.target):
            syl.extend(float(e - s) for s, e in track.syllables)
            sent.append(float(len(track.f0_hz)))
    sy = float(np.mean(syl))
    return {
        "P": sy * PHONE_PER_SYLLABLE,
        "SY": sy,
        "W": sy * WORD_PER_SYLLABLE,
        "SE": float(np.mean(sent)),
    }


def cwt_as_scales(pairs: list[ParallelPair], top_m: int = 10,
                  d_j: float = 0.125) -> np.ndarray:
    """Fixed-grid scales whose rows best separate the two attitudes.

    This is the comparison selector: analysis on a dense dyadic grid,
    then the top_m scales by mean absolute row difference between the
    aligned renditions of each utterance.
    """
    grid = dense_scale_grid(d_j=d_j)
    planes_a, planes_b, masks = [], [], []
    for pair in pairs:
        aligned = align_pair(pair)
        mi_a = prepare(aligned.source)
        mi_b = prepare(aligned.target)
        valid = mi_a.valid_length
        planes_a.append(
            fixed_grid_plane(mi_a.signal[:valid], grid, mi_a.mean_logf0, valid)
        )
        planes_b.append(
            fixed_grid_plane(mi_b.signal[:valid], grid, mi_b.mean_logf0, valid)
        )
        masks.append(mi_a.voicing_mask[:valid] * mi_b.voicing_mask[:valid])
    idx = adaptive_scale_select(planes_a, planes_b, top_m=top_m, masks=masks)
    return grid[idx]


@dataclass
class EvalReport:
    """Per-utterance metric rows plus aggregate means and scale data."""

    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    scales_ms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    markers: dict[str, float] = field(default_factory=dict)

    def mean(self, metric: str, direction: str = "all") -> float:
        for row in self.summary:
            if row["metric"] == metric and row["direction"] == direction:
                return row["mean_rmse_hz"]
        raise EvalError(f"no summary entry for {metric}/{direction}")


def _summarize(rows: list[dict], metric: str, direction: str) -> dict | None:
    vals = [
        r["rmse_hz"]
        for r in rows
        if r["metric"] == metric and (direction == "all" or r["direction"] == direction)
    ]
    if not vals:
        return None
    return {
        "metric": metric,
        "direction": direction,
        "mean_rmse_hz": float(np.mean(vals)),
        "n": len(vals),
    }


def evaluate(
    bundle: ModelBundle,
    corpus: Corpus,
    directions: tuple[str, ...] = DIRECTIONS,
    split: str = "valid",
    seed: int = 0,
) -> EvalReport:
    """Reconstruction, transformation and identity-baseline RMSE tables."""
    pairs = corpus.split(split) if corpus.valid_ids else corpus.pairs
    if not pairs:
        raise EvalError(f"corpus has no pairs in split {split!r}")
    for d in directions:
        if d not in DIRECTIONS:
            raise EvalError(f"unknown direction {d!r}")
    if bundle.steps_dualgan == 0:
        log.warning("bundle has no adversarial training; transformation is untrained")

    rows: list[dict] = []
    for k, pair in enumerate(pairs):
        for track in (pair.source, pair.target):
            rec = reconstruct_track(track, bundle)
            rows.append(
                {
                    "utterance_id": track.utterance_id,
                    "metric": "reconstruction",
                    "direction": track.attitude,
                    "rmse_hz": rmse_hz(rec, track),
                }
            )
        for d, di in ((d, i) for i, d in enumerate(DIRECTIONS) if d in directions):
            src, tgt = (pair.source, pair.target) if d == "ab" else (pair.target, pair.source)
            conv_seed = int(
                np.random.SeedSequence((seed, k, di)).generate_state(1)[0]
            )
            conv = convert(src, bundle, d, rng_seed=conv_seed)
            warped = align_pair(ParallelPair(source=conv, target=tgt)).source
            rows.append(
                {
                    "utterance_id": pair.utterance_id,
                    "metric": "transformation",
                    "direction": d,
                    "rmse_hz": rmse_hz(warped, tgt),
                }
            )
            ident = align_pair(ParallelPair(source=src, target=tgt)).source
            rows.append(
                {
                    "utterance_id": pair.utterance_id,
                    "metric": "identity",
                    "direction": d,
                    "rmse_hz": rmse_hz(ident, tgt),
                }
            )

    for row in rows:
        v = row["rmse_hz"]
        if not (np.isfinite(v) and v >= 0.0):
            raise EvalError(f"metric went non-finite on {row['utterance_id']}")

    summary = []
    attitudes = sorted({r["direction"] for r in rows if r["metric"] == "reconstruction"})
    for att in attitudes + ["all"]:
        entry = _summarize(rows, "reconstruction", att)
        if entry:
            summary.append(entry)
    for metric in ("transformation", "identity"):
        for d in list(directions) + ["all"]:
            entry = _summarize(rows, metric, d)
            if entry:
                summary.append(entry)

    return EvalReport(
        rows=rows,
        summary=summary,
        scales_ms=bundle.bank.scale_values(),
        markers=corpus_markers(pairs),
    )


def write_report(report: EvalReport, out_dir: Path) -> tuple[Path, Path]:
    """Emit report.csv (per utterance) and summary.csv (aggregates)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.csv"
    with open(report_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance_id", "metric", "direction", "rmse_hz"])
        for r in report.rows:
            writer.writerow(
                [r["utterance_id"], r["metric"], r["direction"], repr(r["rmse_hz"])]
            )
    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "direction", "mean_rmse_hz", "n"])
        for r in report.summary:
            writer.writerow(
                [r["metric"], r["direction"], repr(r["mean_rmse_hz"]), r["n"]]
            )
    return report_path, summary_path


# scale plot

def _svg_scale_plot(scales_ms: np.ndarray, markers: dict[str, float]) -> str:
    width, height = 860.0, 240.0
    left, right, top, bottom = 60.0, 24.0, 36.0, 48.0
    plot_w = width - left - right
    plot_h = height - top - bottom
    anchors = list(markers.values()) or [float(scales_ms.min())]
    lo = min(float(scales_ms.min()), min(anchors)) * 0.8
    hi = max(float(scales_ms.max()), max(anchors)) * 1.25

    def x_of(v: float) -> float:
        return left + plot_w * (np.log10(v) - np.log10(lo)) / (np.log10(hi) - np.log10(lo))

    n_bins = 24
    edges = np.geomspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(scales_ms, bins=edges)
    peak = max(int(counts.max()), 1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        '<text x="12" y="20" font-size="13">Learned scale distribution (ms)</text>',
    ]
    base_y = top + plot_h
    for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
        if c == 0:
            continue
        x0, x1 = x_of(e0), x_of(e1)
        h = plot_h * (c / peak)
        parts.append(
            f'<rect x="{x0:.2f}" y="{base_y - h:.2f}" width="{x1 - x0:.2f}" '
            f'height="{h:.2f}" fill="#7aa6c2" stroke="white" stroke-width="0.5"/>'
        )
    for s in scales_ms:
        x = x_of(float(s))
        parts.append(
            f'<line x1="{x:.2f}" y1="{base_y:.2f}" x2="{x:.2f}" y2="{base_y + 10:.2f}" '
            f'stroke="#1f4e6b" stroke-width="1.2"/>'
        )
    for name in MARKER_NAMES:
        if name not in markers:
            continue
        x = x_of(markers[name])
        parts.append(
            f'<line x1="{x:.2f}" y1="{top - 6:.2f}" x2="{x:.2f}" y2="{base_y:.2f}" '
            f'stroke="#b33" stroke-width="1" stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{x + 3:.2f}" y="{top + 4:.2f}" fill="#b33">{name}</text>'
        )
    parts.append(
        f'<line x1="{left:.2f}" y1="{base_y:.2f}" x2="{left + plot_w:.2f}" '
        f'y2="{base_y:.2f}" stroke="black" stroke-width="1"/>'
    )
    for tick in (5, 10, 20, 50, 100, 200, 500, 1000, 2000, 4000):
        if not lo <= tick <= hi:
            continue
        x = x_of(tick)
        parts.append(
            f'<line x1="{x:.2f}" y1="{base_y:.2f}" x2="{x:.2f}" y2="{base_y + 4:.2f}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{base_y + 28:.2f}" text-anchor="middle">{tick}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scale_histogram(
    bundle: ModelBundle, markers: dict[str, float], out_dir: Path
) -> tuple[Path, Path]:
    """Write scales.csv and scales.svg; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scales_ms = bundle.bank.scale_values()
    csv_path = out_dir / "scales.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "scale_ms"])
        for i, s in enumerate(scales_ms):
            writer.writerow([i, repr(float(s))])
    svg_path = out_dir / "scales.svg"
    svg_path.write_text(_svg_scale_plot(scales_ms, markers))
    return csv_path, svg_path
