"""Convolutional networks operating on coefficient blocks.

Three models share the same hand-rolled layer vocabulary: a U-Net style
generator that rewrites a [n_scales, block_length] coefficient block, a
strided-convolution discriminator that scores a block with a single
sigmoid unit, and a 2-D convolutional classifier that assigns a block to
one of two expressive classes.  All parameters are float64 tensors; each
model exposes them in declaration order so optimizers and checkpoints
can address them positionally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as wt
from .errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass(frozen=True)
class ArchConfig:
    """Sizes for the three block-level networks."""

    n_scales: int = 32
    block_length: int = 512
    gen_channels: tuple[int, ...] = (64, 128, 256, 256)
    gen_kernel: int = 5
    gen_dropout: float = 0.5
    disc_channels: tuple[int, ...] = (64, 128, 256, 256)
    disc_kernel: int = 5
    disc_leak: float = 0.2
    cls_filters: tuple[int, ...] = (32, 64, 128)
    cls_convs_per_block: int = 3
    cls_kernel: int = 3
    cls_dense_units: int = 1000
    cls_dropout: float = 0.2
    cls_time_pool: int = 4
    n_classes: int = 2

    def __post_init__(self):
        if self.n_scales < 1 or self.block_length < 1:
            raise ContractError("n_scales and block_length must be positive")
        down = 2 ** len(self.gen_channels)
        if self.block_length % down:
            raise ContractError(
                f"block_length must be divisible by {down} for the strided stacks"
            )
        if self.block_length % 2 ** len(self.disc_channels):
            raise ContractError("block_length incompatible with discriminator strides")
        pool = self.cls_time_pool ** len(self.cls_filters)
        if self.block_length % pool:
            raise ContractError(
                f"block_length must be divisible by {pool} for classifier pooling"
            )
        for rate in (self.gen_dropout, self.cls_dropout):
            if not 0.0 <= rate < 1.0:
                raise ContractError("dropout rate must lie in [0, 1)")


def _he_normal(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    data = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return Tensor(data, requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _dropout_rng(rng, training: bool):
    if not training:
        return 0
    if rng is None:
        raise ContractError("training-mode forward needs a dropout rng")
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    return rng


class _Network:
    """Shared parameter bookkeeping for the three models."""

    def __init__(self):
        self._params: list[tuple[str, Tensor]] = []

    def _register(self, name: str, t: Tensor) -> Tensor:
        self._params.append((name, t))
        return t

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self._params]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self._params)

    def n_parameters(self) -> int:
        return sum(t.data.size for _, t in self._params)


class Generator(_Network):
    """U-Net over coefficient blocks.

    Four stride-2 encoder convolutions are mirrored by four
    nearest-neighbour upsampling stages with skip concatenation; the
    innermost skips reuse encoder activations and the outermost reuses
    the raw input block.  A final linear convolution also sees the raw
    input, so an identity tap on those channels reproduces the input
    exactly regardless of dropout elsewhere.  The final convolution
    starts at zero, making a freshly built generator emit zero blocks.
    """

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        super().__init__()
        self.arch = arch
        k = arch.gen_kernel
        chans = arch.gen_channels
        self.down: list[tuple[Tensor, Tensor]] = []
        c_in = arch.n_scales
        for i, c_out in enumerate(chans):
            w = self._register(f"down{i}.w", _he_normal(rng, (c_out, c_in, k), c_in * k))
            b = self._register(f"down{i}.b", _zeros(c_out))
            self.down.append((w, b))
            c_in = c_out
        # decoder input channels: upsampled carry + skip
        skip_chans = [chans[2], chans[1], chans[0], arch.n_scales]
        out_chans = [chans[2], chans[1], chans[0], chans[0]]
        self.up: list[tuple[Tensor, Tensor]] = []
        carry = chans[-1]
        for i, (skip_c, c_out) in enumerate(zip(skip_chans, out_chans)):
            cat = carry + skip_c
            w = self._register(f"up{i}.w", _he_normal(rng, (c_out, cat, k), cat * k))
            b = self._register(f"up{i}.b", _zeros(c_out))
            self.up.append((w, b))
            carry = c_out
        cat = carry + arch.n_scales
        self.final_w = self._register("final.w", _zeros((arch.n_scales, cat, k)))
        self.final_b = self._register("final.b", _zeros(arch.n_scales))

    def forward(self, x: Tensor, rng=None, training: bool = True) -> Tensor:
        if x.data.shape != (self.arch.n_scales, self.arch.block_length):
            raise DimensionError(
                f"generator expects [{self.arch.n_scales}, {self.arch.block_length}]"
            )
        rng = _dropout_rng(rng, training)
        rate = self.arch.gen_dropout
        skips = []
        h = x
        for w, b in self.down:
            h = wt.conv1d(h, w, stride=2)
            h = wt.add_channelwise(h, b)
            h = wt.relu(h)
            h = wt.dropout(h, rate, rng, training)
            skips.append(h)
        cats = [skips[2], skips[1], skips[0], x]
        for (w, b), skip in zip(self.up, cats):
            h = wt.upsample1d(h, 2)
            h = wt.concat([h, skip], axis=0)
            h = wt.conv1d(h, w, stride=1)
            h = wt.add_channelwise(h, b)
            h = wt.relu(h)
            h = wt.dropout(h, rate, rng, training)
        h = wt.concat([h, x], axis=0)
        h = wt.conv1d(h, self.final_w, stride=1)
        return wt.add_channelwise(h, self.final_b)

    def set_passthrough(self) -> None:
        """Wire the network to copy its input block unchanged.

        Only the final projection is rewritten: its trunk block stays
        zero, so the output is exactly the raw-input skip, while the
        trunk keeps its random weights and remains trainable.
        """
        self.final_w.data[...] = 0.0
        self.final_b.data[...] = 0.0
        tap = self.arch.gen_kernel // 2
        lead = self.arch.gen_channels[0]
        for i in range(self.arch.n_scales):
            self.final_w.data[i, lead + i, tap] = 1.0


class Discriminator(_Network):
    """Strided convolutional critic with a single sigmoid output.

    The last dense layer starts at zero, so an untrained critic scores
    every block exactly 0.5.  `forward_logit` exposes the pre-sigmoid
    value for numerically stable loss evaluation.
    """

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        super().__init__()
        self.arch = arch
        k = arch.disc_kernel
        self.convs: list[tuple[Tensor, Tensor]] = []
        c_in = arch.n_scales
        for i, c_out in enumerate(arch.disc_channels):
            w = self._register(f"conv{i}.w", _he_normal(rng, (c_out, c_in, k), c_in * k))
            b = self._register(f"conv{i}.b", _zeros(c_out))
            self.convs.append((w, b))
            c_in = c_out
        flat = c_in * (arch.block_length // 2 ** len(arch.disc_channels))
        self.flat_size = flat
        self.dense_w = self._register("dense.w", _zeros((1, flat)))
        self.dense_b = self._register("dense.b", _zeros(1))

    def forward_logit(self, x: Tensor) -> Tensor:
        if x.data.shape != (self.arch.n_scales, self.arch.block_length):
            raise DimensionError(
                f"discriminator expects [{self.arch.n_scales}, {self.arch.block_length}]"
            )
        h = x
        for w, b in self.convs:
            h = wt.conv1d(h, w, stride=2)
            h = wt.add_channelwise(h, b)
            h = wt.leaky_relu(h, self.arch.disc_leak)
        flat = wt.reshape(h, (self.flat_size,))
        out = wt.dense(flat, self.dense_w, self.dense_b)
        return wt.getitem(out, 0)

    def forward(self, x: Tensor) -> Tensor:
        return wt.sigmoid(self.forward_logit(x))


class Classifier(_Network):
    """2-D convolutional attitude classifier over one coefficient block.

    Three stages of stacked 3x3 convolutions treat the block as a
    single-channel image [1, n_scales, block_length]; the last
    convolution of each stage halves the scale axis and a pooling layer
    then shrinks the time axis.  Two dense layers produce class logits;
    the final one starts at zero so an untrained classifier is uniform.
    """

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        super().__init__()
        self.arch = arch
        k = arch.cls_kernel
        self.blocks: list[list[tuple[Tensor, Tensor]]] = []
        c_in = 1
        h_dim = arch.n_scales
        w_dim = arch.block_length
        for bi, c_out in enumerate(arch.cls_filters):
            layers = []
            for ci in range(arch.cls_convs_per_block):
                w = self._register(
                    f"block{bi}.conv{ci}.w",
                    _he_normal(rng, (c_out, c_in, k, k), c_in * k * k),
                )
                b = self._register(f"block{bi}.conv{ci}.b", _zeros(c_out))
                layers.append((w, b))
                c_in = c_out
                if ci == arch.cls_convs_per_block - 1:
                    h_dim = -(-h_dim // 2)
            self.blocks.append(layers)
            w_dim //= arch.cls_time_pool
        self.flat_size = c_in * h_dim * w_dim
        fan = self.flat_size
        self.dense0_w = self._register(
            "dense0.w", _he_normal(rng, (arch.cls_dense_units, fan), fan)
        )
        self.dense0_b = self._register("dense0.b", _zeros(arch.cls_dense_units))
        self.dense1_w = self._register("dense1.w", _zeros((arch.n_classes, arch.cls_dense_units)))
        self.dense1_b = self._register("dense1.b", _zeros(arch.n_classes))

    def forward(self, x: Tensor, rng=None, training: bool = True) -> Tensor:
        """Return class logits [n_classes] for one block [n_scales, block_length]."""
        if x.data.shape != (self.arch.n_scales, self.arch.block_length):
            raise DimensionError(
                f"classifier expects [{self.arch.n_scales}, {self.arch.block_length}]"
            )
        rng = _dropout_rng(rng, training)
        rate = self.arch.cls_dropout
        last = self.arch.cls_convs_per_block - 1
        h = wt.reshape(x, (1,) + x.data.shape)
        for layers in self.blocks:
            for ci, (w, b) in enumerate(layers):
                stride = (2, 1) if ci == last else (1, 1)
                h = wt.conv2d(h, w, stride=stride)
                h = wt.add_channelwise(h, b)
                h = wt.relu(h)
                h = wt.dropout(h, rate, rng, training)
            h = wt.maxpool2d(h, (1, self.arch.cls_time_pool))
        flat = wt.reshape(h, (self.flat_size,))
        hidden = wt.relu(wt.dense(flat, self.dense0_w, self.dense0_b))
        return wt.dense(hidden, self.dense1_w, self.dense1_b)

    def predict_proba(self, x: Tensor) -> np.ndarray:
        """Class probabilities for one block, dropout disabled."""
        return wt.softmax(self.forward(x, training=False)).data.copy()
