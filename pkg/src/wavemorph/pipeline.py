"""Pitch-track preparation, pair alignment, and block slicing.

Tracks are sampled on a fixed 1 ms grid.  Preparation takes the natural log
of voiced pitch, fills unvoiced gaps by linear interpolation (holding the
edge values before the first and after the last voiced frame), and zero-pads
to the model length.  Parallel pairs are aligned by piecewise-linear time
warping of the source onto the target's syllable intervals.  Coefficient
planes are sliced into fixed-width blocks for the block-wise networks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as wt
from .errors import AlignmentError, ContractError, DimensionError, PipelineError
from .tensor import Tensor

SAMPLE_PERIOD_MS = 1.0
MODEL_LENGTH = 4000
BLOCK_LENGTH = 512


@dataclass
class F0Track:
    """A pitch contour in Hz with voicing flags and syllable intervals."""

    f0_hz: np.ndarray
    voicing: np.ndarray
    syllables: list[tuple[float, float]] = field(default_factory=list)
    attitude: str = ""
    utterance_id: str = ""
    speaker_id: str = ""

    def __post_init__(self):
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float64)
        self.voicing = np.asarray(self.voicing, dtype=bool)
        if self.f0_hz.ndim != 1 or self.f0_hz.shape != self.voicing.shape:
            raise DimensionError("f0 and voicing must be equal-length vectors")
        if not np.all(np.isfinite(self.f0_hz)):
            raise PipelineError("f0 contains non-finite values")
        if np.any(self.f0_hz[self.voicing] <= 0.0):
            raise PipelineError("voiced frames must have positive f0")
        self.syllables = [(float(a), float(b)) for a, b in self.syllables]
        last = -np.inf
        for a, b in self.syllables:
            if not (0.0 <= a < b <= len(self.f0_hz)):
                raise PipelineError(f"syllable ({a}, {b}) outside the track")
            if a < last:
                raise PipelineError("syllables must be sorted and non-overlapping")
            last = b

    def __len__(self) -> int:
        return int(self.f0_hz.shape[0])


@dataclass
class ParallelPair:
    """The same utterance produced under two attitudes (source and target)."""

    source: F0Track
    target: F0Track

    def __post_init__(self):
        if self.source.utterance_id != self.target.utterance_id:
            raise PipelineError("parallel tracks must share an utterance id")

    @property
    def utterance_id(self) -> str:
        return self.source.utterance_id


@dataclass
class ModelInput:
    """Log-pitch signal padded to the model length, with its voicing mask."""

    signal: np.ndarray
    voicing_mask: np.ndarray
    mean_logf0: float
    valid_length: int

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=np.float64)
        self.voicing_mask = np.asarray(self.voicing_mask, dtype=np.float64)
        if self.signal.shape != self.voicing_mask.shape or self.signal.ndim != 1:
            raise DimensionError("signal and mask must be equal-length vectors")
        if not 0 < self.valid_length <= self.signal.size:
            raise ContractError("valid_length outside the signal")
        if np.any(self.signal[self.valid_length:] != 0.0):
            raise ContractError("padding region must be zero")


def _voiced_interp(values: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    """Linear interpolation across unvoiced gaps; edges hold the nearest value."""
    idx = np.flatnonzero(voiced)
    return np.interp(np.arange(values.size, dtype=np.float64), idx, values[idx])


def prepare(track: F0Track, model_length: int = MODEL_LENGTH) -> ModelInput:
    """Log, interpolate, and zero-pad a track into a fixed-length model input."""
    n = len(track)
    if n == 0:
        raise PipelineError("empty track")
    if n > model_length:
        raise PipelineError(f"track length {n} exceeds the model length {model_length}")
    if not track.voicing.any():
        raise PipelineError("track has no voiced frames")
    log_f0 = np.zeros(n)
    log_f0[track.voicing] = np.log(track.f0_hz[track.voicing])
    continuous = _voiced_interp(log_f0, track.voicing)
    signal = np.zeros(model_length)
    signal[:n] = continuous
    mask = np.zeros(model_length)
    mask[:n][track.voicing] = 1.0
    mean = float(continuous[track.voicing].mean())
    return ModelInput(signal=signal, voicing_mask=mask, mean_logf0=mean, valid_length=n)


def _warp_knots(src: F0Track, tgt: F0Track) -> tuple[np.ndarray, np.ndarray]:
    if len(src.syllables) != len(tgt.syllables):
        raise AlignmentError(
            f"syllable counts differ: {len(src.syllables)} vs {len(tgt.syllables)}")
    tk = [0.0]
    sk = [0.0]
    for (sa, sb), (ta, tb) in zip(src.syllables, tgt.syllables):
        for t_knot, s_knot in ((ta, sa), (tb, sb)):
            if t_knot == tk[-1]:
                if s_knot != sk[-1]:
                    raise AlignmentError("inconsistent syllable boundary mapping")
                continue
            if t_knot < tk[-1] or s_knot < sk[-1]:
                raise AlignmentError("syllable boundaries must be monotone")
            tk.append(float(t_knot))
            sk.append(float(s_knot))
    t_end, s_end = float(len(tgt)), float(len(src))
    if tk[-1] < t_end:
        tk.append(t_end)
        sk.append(s_end)
    elif sk[-1] != s_end:
        raise AlignmentError("inconsistent syllable boundary mapping")
    return np.array(tk), np.array(sk)


def align_pair(pair: ParallelPair) -> ParallelPair:
    """Warp the source track onto the target timeline, syllable by syllable.

    Pitch values are resampled from the voiced-interpolated source curve;
    the voicing mask is carried by nearest-neighbour resampling.  The warped
    source inherits the target's syllable intervals.
    """
    src, tgt = pair.source, pair.target
    tk, sk = _warp_knots(src, tgt)
    tau = np.interp(np.arange(len(tgt), dtype=np.float64), tk, sk)
    nearest = np.clip(np.round(tau).astype(int), 0, len(src) - 1)
    voiced_w = src.voicing[nearest]
    continuous = _voiced_interp(src.f0_hz, src.voicing)
    f0_w = np.interp(tau, np.arange(len(src), dtype=np.float64), continuous)
    f0_w[~voiced_w] = 0.0
    warped = F0Track(
        f0_hz=f0_w,
        voicing=voiced_w,
        syllables=list(tgt.syllables),
        attitude=src.attitude,
        utterance_id=src.utterance_id,
        speaker_id=src.speaker_id,
    )
    return ParallelPair(source=warped, target=tgt)


# --------------------------------------------------------------------------
# block slicing

@dataclass
class CoefficientBlock:
    """A fixed-width slice of a coefficient plane with its unpadded width."""

    values: np.ndarray
    width: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError("block must be 2-D [scales, block_length]")
        if not 0 < self.width <= self.values.shape[1]:
            raise ContractError("block width outside (0, block_length]")


def slice_plan(valid_length: int, block_length: int = BLOCK_LENGTH) -> list[tuple[int, int]]:
    """(start, width) pairs tiling [0, valid_length) in block_length steps."""
    if valid_length < 1:
        raise ContractError("valid_length must be positive")
    if block_length < 1:
        raise ContractError("block_length must be positive")
    return [(s, min(block_length, valid_length - s))
            for s in range(0, valid_length, block_length)]


def slice_windows(plane, valid_length: int,
                  block_length: int = BLOCK_LENGTH) -> list[CoefficientBlock]:
    """Slice the first valid_length columns into zero-padded blocks."""
    coeffs = plane.coeffs if hasattr(plane, "coeffs") else np.asarray(plane, dtype=np.float64)
    if valid_length > coeffs.shape[1]:
        raise ContractError("valid_length exceeds the plane length")
    blocks = []
    for start, width in slice_plan(valid_length, block_length):
        vals = np.zeros((coeffs.shape[0], block_length))
        vals[:, :width] = coeffs[:, start:start + width]
        blocks.append(CoefficientBlock(values=vals, width=width))
    return blocks


def slice_tensor(plane: Tensor, valid_length: int,
                 block_length: int = BLOCK_LENGTH) -> list[tuple[Tensor, int]]:
    """Taped version of slice_windows; returns (block, width) pairs."""
    if valid_length > plane.shape[1]:
        raise ContractError("valid_length exceeds the plane length")
    out = []
    for start, width in slice_plan(valid_length, block_length):
        piece = wt.getitem(plane, (slice(None), slice(start, start + width)))
        if width < block_length:
            piece = wt.pad_last(piece, 0, block_length - width)
        out.append((piece, width))
    return out


def unslice_tensor(blocks: list[tuple[Tensor, int]], valid_length: int) -> Tensor:
    """Invert slice_tensor: trim each block to its width and concatenate."""
    if not blocks:
        raise ContractError("cannot unslice an empty block list")
    parts = []
    total = 0
    for block, width in blocks:
        parts.append(wt.getitem(block, (slice(None), slice(0, width))))
        total += width
    if total != valid_length:
        raise ContractError(f"block widths sum to {total}, expected {valid_length}")
    return wt.concat(parts, axis=1)


def unslice(blocks: list[CoefficientBlock], valid_length: int) -> np.ndarray:
    """Invert slice_windows on plain arrays."""
    if not blocks:
        raise ContractError("cannot unslice an empty block list")
    parts = [b.values[:, :b.width] for b in blocks]
    out = np.concatenate(parts, axis=1)
    if out.shape[1] != valid_length:
        raise ContractError(f"block widths sum to {out.shape[1]}, expected {valid_length}")
    return out
