"""Ricker-kernel analysis bank with trainable scales and its inverse map.

The analysis side correlates a zero-mean signal with one Ricker (Mexican hat)
kernel per scale; scales live behind a softplus-of-increments parameterization
so gradient steps can never reorder or collapse them.  The synthesis side is a
fixed-prefactor sum over scale rows plus the stored signal mean.  A dyadic
non-learnable grid plus a class-distance scale selector provide the fixed
baseline the learned bank is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from . import tensor as wt
from .errors import ContractError, DimensionError, DomainError
from .tensor import Tensor

# Peak amplitude of the unit-scale kernel: 2 / (sqrt(3) * pi ** 0.25).
RICKER_AMPLITUDE = 2.0 / (math.sqrt(3.0) * math.pi ** 0.25)

# Kernel support spans +-5 scale units before truncation.
SUPPORT_FACTOR = 10.0

DEFAULT_N_SCALES = 32
DEFAULT_SCALE_LO = 5.0
DEFAULT_SCALE_HI = 2000.0


def ricker_support(scale: float, cap: int | None = None) -> int:
    """Smallest odd tap count covering SUPPORT_FACTOR * scale, optionally capped."""
    if scale <= 0.0:
        raise DomainError("scale must be positive")
    k = int(math.ceil(SUPPORT_FACTOR * scale))
    if k % 2 == 0:
        k += 1
    if cap is not None:
        odd_cap = cap if cap % 2 == 1 else cap - 1
        if odd_cap < 1:
            raise DimensionError("support cap leaves no room for a single tap")
        k = min(k, odd_cap)
    return k


def ricker_kernel(scale, support: int) -> Tensor:
    """Symmetric Ricker taps on an odd integer grid, differentiable in scale.

    ``scale`` may be a float or a scalar Tensor; the taps are
    a * (1 - (t/s)^2) * exp(-(t/s)^2 / 2) with a = RICKER_AMPLITUDE.
    """
    if support < 1 or support % 2 == 0:
        raise ContractError(f"support must be odd and positive, got {support}")
    is_tensor = isinstance(scale, Tensor)
    s = scale.item() if is_tensor else float(scale)
    if s <= 0.0:
        raise DomainError("scale must be positive")
    half = (support - 1) // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    u = t / s
    gauss = np.exp(-0.5 * u * u)
    taps = RICKER_AMPLITUDE * (1.0 - u * u) * gauss
    if not is_tensor:
        return Tensor(taps)

    def back(g, scale=scale, u=u, gauss=gauss, s=s):
        if scale.requires_grad:
            d_ds = RICKER_AMPLITUDE * (3.0 * u * u - u ** 4) * gauss / s
            scale.grad += np.dot(g, d_ds)

    return wt._make(taps, (scale,), back)


def _softplus_inv(y: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    small = y < 30.0
    out[small] = np.log(np.expm1(y[small]))
    out[~small] = y[~small]
    return out


class ScaleBank:
    """Strictly increasing scales: s_i = s_min + cumsum(softplus(raw))."""

    def __init__(self, raw: np.ndarray, s_min: float = 1.0):
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 1 or raw.size == 0:
            raise DimensionError("ScaleBank raw parameters must be a non-empty vector")
        if s_min <= 0.0:
            raise DomainError("s_min must be positive")
        self.raw = Tensor(raw.copy(), requires_grad=True)
        self.s_min = float(s_min)

    @classmethod
    def log_spaced(cls, n: int = DEFAULT_N_SCALES, lo: float = DEFAULT_SCALE_LO,
                   hi: float = DEFAULT_SCALE_HI, s_min: float = 1.0) -> "ScaleBank":
        if n < 1:
            raise DimensionError("need at least one scale")
        if not (0.0 < s_min < lo <= hi):
            raise DomainError("need 0 < s_min < lo <= hi")
        targets = np.geomspace(lo, hi, n)
        increments = np.diff(np.concatenate([[s_min], targets]))
        return cls(_softplus_inv(increments), s_min=s_min)

    @property
    def n_scales(self) -> int:
        return self.raw.data.size

    def scales_tensor(self) -> Tensor:
        """Scale vector on the active tape; gradients reach self.raw."""
        return wt.add(wt.cumsum(wt.softplus(self.raw)), self.s_min)

    def scale_values(self) -> np.ndarray:
        return self.s_min + np.cumsum(np.logaddexp(0.0, self.raw.data))


@dataclass(frozen=True)
class ReconstructionConstants:
    """Fixed synthesis constants; prefactor = d_j * sqrt(d_t) / (c_d * y_0)."""

    d_t: float = 1.2
    d_j: float = 0.125
    c_d: float = 3.541
    y_0: float = 0.867
    classic_icwt_norm: bool = False

    @property
    def prefactor(self) -> float:
        return self.d_j * math.sqrt(self.d_t) / (self.c_d * self.y_0)


@dataclass
class CoefficientPlane:
    """One correlation row per scale plus the mean removed before analysis."""

    coeffs: np.ndarray
    signal_mean: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 2:
            raise DimensionError("coefficient plane must be 2-D [scales, time]")
        self.signal_mean = float(self.signal_mean)

    @property
    def n_scales(self) -> int:
        return self.coeffs.shape[0]

    @property
    def length(self) -> int:
        return self.coeffs.shape[1]


def _centered_input(signal: np.ndarray, mean: float, valid_length: int) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise DimensionError("encode expects a 1-D signal")
    if not 0 < valid_length <= signal.size:
        raise ContractError(f"valid_length {valid_length} outside (0, {signal.size}]")
    centered = np.zeros_like(signal)
    centered[:valid_length] = signal[:valid_length] - mean
    return centered


def encode_tensor(signal: np.ndarray, bank: ScaleBank, mean: float = 0.0,
                  valid_length: int | None = None) -> Tensor:
    """Correlation plane [n_scales, T] with gradients flowing to the bank."""
    signal = np.asarray(signal, dtype=np.float64)
    if valid_length is None:
        valid_length = signal.size
    centered = _centered_input(signal, mean, valid_length)
    x = Tensor(centered[None, :])
    scales = bank.scales_tensor()
    svals = bank.scale_values()
    cap = signal.size
    rows = []
    for i in range(bank.n_scales):
        support = ricker_support(float(svals[i]), cap=cap)
        taps = ricker_kernel(wt.getitem(scales, i), support)
        kern = wt.reshape(taps, (1, 1, support))
        row = wt.conv1d(x, kern, stride=1, padding="same")
        rows.append(wt.getitem(row, 0))
    return wt.stack(rows, axis=0)


def encode(signal: np.ndarray, bank: ScaleBank, mean: float = 0.0,
           valid_length: int | None = None) -> CoefficientPlane:
    """Untaped analysis pass returning a plain CoefficientPlane."""
    plane = encode_tensor(signal, bank, mean=mean, valid_length=valid_length)
    return CoefficientPlane(plane.data, signal_mean=mean)


def fixed_grid_plane(signal: np.ndarray, scales: np.ndarray, mean: float = 0.0,
                     valid_length: int | None = None) -> CoefficientPlane:
    """Analysis over a fixed, non-learnable scale grid."""
    signal = np.asarray(signal, dtype=np.float64)
    if valid_length is None:
        valid_length = signal.size
    centered = _centered_input(signal, mean, valid_length)
    x = Tensor(centered[None, :])
    cap = signal.size
    rows = np.empty((len(scales), signal.size))
    for i, s in enumerate(np.asarray(scales, dtype=np.float64)):
        support = ricker_support(float(s), cap=cap)
        kern = wt.reshape(ricker_kernel(float(s), support), (1, 1, support))
        rows[i] = wt.conv1d(x, kern, stride=1, padding="same").data[0]
    return CoefficientPlane(rows, signal_mean=mean)


def _classic_weights(constants: ReconstructionConstants, n_rows: int,
                     scales: np.ndarray | None) -> np.ndarray | None:
    if not constants.classic_icwt_norm:
        return None
    if scales is None:
        raise ContractError("classic_icwt_norm needs the scale values")
    scales = np.asarray(scales, dtype=np.float64)
    if scales.size != n_rows:
        raise DimensionError("scale count does not match plane rows")
    return 1.0 / np.sqrt(scales)


def reconstruct(plane: CoefficientPlane, constants: ReconstructionConstants,
                scales: np.ndarray | None = None) -> np.ndarray:
    """Prefactor-weighted sum of scale rows plus the stored mean."""
    w = _classic_weights(constants, plane.n_scales, scales)
    rows = plane.coeffs if w is None else plane.coeffs * w[:, None]
    return constants.prefactor * rows.sum(axis=0) + plane.signal_mean


def reconstruct_tensor(plane: Tensor, mean: float, constants: ReconstructionConstants,
                       scales: np.ndarray | None = None) -> Tensor:
    """Taped synthesis of a coefficient plane back to a signal."""
    if plane.ndim != 2:
        raise DimensionError("reconstruct expects a 2-D plane")
    w = _classic_weights(constants, plane.shape[0], scales)
    if w is not None:
        plane = wt.mul(plane, np.broadcast_to(w[:, None], plane.shape).copy())
    summed = wt.asum(plane, axis=0)
    return wt.add(wt.scale(summed, constants.prefactor), float(mean))


def dense_scale_grid(s_lo: float = DEFAULT_SCALE_LO, s_hi: float = DEFAULT_SCALE_HI,
                     d_j: float = 0.125) -> np.ndarray:
    """Dyadic grid s_lo * 2**(j * d_j), largest entry <= s_hi."""
    if not 0.0 < s_lo <= s_hi:
        raise DomainError("need 0 < s_lo <= s_hi")
    j_max = int(math.floor(math.log2(s_hi / s_lo) / d_j))
    return s_lo * 2.0 ** (d_j * np.arange(j_max + 1))


def adaptive_scale_select(corpus_a: list[CoefficientPlane],
                          corpus_b: list[CoefficientPlane],
                          top_m: int = 10,
                          masks: list[np.ndarray] | None = None) -> np.ndarray:
    """Rank fixed-grid scales by mean absolute between-class coefficient distance.

    Planes are paired positionally (one utterance per pair over the same
    grid); ``masks`` optionally restricts each pair's columns, typically to
    the frames voiced on both sides.  Returns top_m row indices, best first;
    ties break toward the lower index.
    """
    if len(corpus_a) != len(corpus_b) or not corpus_a:
        raise DimensionError("scale selection needs equal, non-empty plane lists")
    n = corpus_a[0].n_scales
    if not 1 <= top_m <= n:
        raise ContractError(f"top_m must be in [1, {n}]")
    if masks is not None and len(masks) != len(corpus_a):
        raise DimensionError("one mask per plane pair required")
    scores = np.zeros(n)
    for idx, (pa, pb) in enumerate(zip(corpus_a, corpus_b)):
        if pa.coeffs.shape != pb.coeffs.shape:
            raise DimensionError("paired planes must share a shape")
        if pa.n_scales != n:
            raise DimensionError("all planes must share the scale grid")
        diff = np.abs(pa.coeffs - pb.coeffs)
        if masks is not None:
            m = np.asarray(masks[idx], dtype=bool)
            if m.size != pa.length:
                raise DimensionError("mask length does not match plane length")
            if not m.any():
                continue
            diff = diff[:, m]
        scores += diff.mean(axis=1)
    scores /= len(corpus_a)
    order = np.argsort(-scores, kind="stable")
    return order[:top_m]
