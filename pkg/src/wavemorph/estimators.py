"""Scikit-learn style wrappers around the encoder and the converter.

Samples here are F0Track objects (or parallel pairs of them) rather
than feature matrices, so both estimators accept plain Python lists as
X.  Hyperparameters follow estimator conventions: stored verbatim in
__init__, learned state in trailing-underscore attributes, so
get_params, set_params and clone behave as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import losses as wl
from .errors import ContractError
from .networks import ArchConfig
from .pipeline import F0Track, prepare, slice_windows
from .tensor import Adam, Tape, Tensor, backward, zero_grads
from .training import (
    DIRECTIONS,
    TrainConfig,
    convert,
    pretrain,
    train_dualgan,
)
from .wavelets import (
    DEFAULT_N_SCALES,
    DEFAULT_SCALE_HI,
    DEFAULT_SCALE_LO,
    CoefficientPlane,
    ReconstructionConstants,
    ScaleBank,
    encode,
    encode_tensor,
    reconstruct,
    reconstruct_tensor,
)


class ContourWaveletTransform(TransformerMixin, BaseEstimator):
    """Wavelet analysis of pitch contours with optionally learned scales.

    fit initializes a log-spaced scale bank and, when steps > 0, refines
    the scale values by minimizing the voiced L1 reconstruction error of
    the training tracks.  transform maps each track to its coefficient
    plane; inverse_transform maps planes back to log-F0 contours.
    """

    def __init__(
        self,
        n_scales: int = DEFAULT_N_SCALES,
        scale_lo: float = DEFAULT_SCALE_LO,
        scale_hi: float = DEFAULT_SCALE_HI,
        s_min: float = 1.0,
        steps: int = 0,
        lr: float = 1e-4,
        seed: int = 0,
    ):
        self.n_scales = n_scales
        self.scale_lo = scale_lo
        self.scale_hi = scale_hi
        self.s_min = s_min
        self.steps = steps
        self.lr = lr
        self.seed = seed

    def fit(self, X, y=None):
        tracks = list(X)
        if not tracks:
            raise ContractError("fit needs at least one track")
        if self.steps < 0:
            raise ContractError("steps must be non-negative")
        bank = ScaleBank.log_spaced(
            self.n_scales, self.scale_lo, self.scale_hi, s_min=self.s_min
        )
        constants = ReconstructionConstants()
        inputs = [prepare(t) for t in tracks]
        rng = np.random.default_rng(self.seed)
        opt = Adam([bank.raw], lr=self.lr)
        for _ in range(self.steps):
            mi = inputs[int(rng.integers(len(inputs)))]
            valid = mi.valid_length
            zero_grads([bank.raw])
            with Tape():
                plane = encode_tensor(
                    mi.signal[:valid], bank, mean=mi.mean_logf0, valid_length=valid
                )
                rec = reconstruct_tensor(plane, mi.mean_logf0, constants)
                loss = wl.masked_l1(
                    rec, Tensor(mi.signal[:valid]), mi.voicing_mask[:valid]
                )
                backward(loss)
            opt.step()
        self.bank_ = bank
        self.constants_ = constants
        self.scales_ = bank.scale_values()
        self.n_iter_ = self.steps
        return self

    def transform(self, X) -> list[CoefficientPlane]:
        check_is_fitted(self, "bank_")
        planes = []
        for track in X:
            mi = prepare(track)
            valid = mi.valid_length
            planes.append(
                encode(mi.signal[:valid], self.bank_,
                       mean=mi.mean_logf0, valid_length=valid)
            )
        return planes

    def inverse_transform(self, Xt) -> list[np.ndarray]:
        """Map coefficient planes back to continuous log-F0 contours."""
        check_is_fitted(self, "bank_")
        return [reconstruct(plane, self.constants_) for plane in Xt]


class AttitudeConverter(BaseEstimator):
    """End-to-end contour converter between two expressive classes.

    fit runs both training phases on a parallel corpus; transform
    converts tracks along the configured direction; predict labels
    tracks with the more probable attitude (config B trains the
    classifier this relies on, config A leaves it at initialization).
    """

    def __init__(
        self,
        config: str = "A",
        direction: str = "ab",
        steps_pretrain: int = 500,
        steps_dualgan: int = 1000,
        lr: float = 1e-4,
        seed: int = 0,
        arch: ArchConfig | None = None,
        scale_lo: float = DEFAULT_SCALE_LO,
        scale_hi: float = DEFAULT_SCALE_HI,
        s_min: float = 1.0,
        d_steps_per_g: int = 1,
        dual_plain: bool = False,
    ):
        self.config = config
        self.direction = direction
        self.steps_pretrain = steps_pretrain
        self.steps_dualgan = steps_dualgan
        self.lr = lr
        self.seed = seed
        self.arch = arch
        self.scale_lo = scale_lo
        self.scale_hi = scale_hi
        self.s_min = s_min
        self.d_steps_per_g = d_steps_per_g
        self.dual_plain = dual_plain

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            config=self.config,
            lr=self.lr,
            steps_pretrain=self.steps_pretrain,
            steps_dualgan=self.steps_dualgan,
            seed=self.seed,
            d_steps_per_g=self.d_steps_per_g,
            dual_plain=self.dual_plain,
            arch=self.arch if self.arch is not None else ArchConfig(),
            s_min=self.s_min,
            scale_lo=self.scale_lo,
            scale_hi=self.scale_hi,
        )

    def fit(self, X, y=None):
        if self.direction not in DIRECTIONS:
            raise ContractError(f"direction must be one of {DIRECTIONS}")
        cfg = self._train_config()
        bundle = pretrain(X, cfg)
        train_dualgan(X, bundle, cfg)
        self.bundle_ = bundle
        self.attitudes_ = bundle.attitudes
        self.scales_ = bundle.bank.scale_values()
        return self

    def transform(self, X) -> list[F0Track]:
        check_is_fitted(self, "bundle_")
        return [
            convert(track, self.bundle_, self.direction,
                    rng_seed=self.seed + i)
            for i, track in enumerate(X)
        ]

    def predict(self, X) -> list[str]:
        check_is_fitted(self, "bundle_")
        labels = []
        for track in X:
            mi = prepare(track)
            plane = encode(
                mi.signal[: mi.valid_length], self.bundle_.bank,
                mean=mi.mean_logf0, valid_length=mi.valid_length,
            )
            posts = [
                self.bundle_.classifier.predict_proba(Tensor(b.values))
                for b in slice_windows(
                    plane.coeffs, mi.valid_length, self.bundle_.arch.block_length
                )
            ]
            labels.append(self.attitudes_[int(np.argmax(np.mean(posts, axis=0)))])
        return labels
