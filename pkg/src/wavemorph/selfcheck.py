"""Built-in sanity suite: closed-form oracles and gradient spot checks.

Each check recomputes an expected value from first principles inside
this module, so a passing run certifies the installed package against
independent arithmetic, not against itself.  Kept fast enough to run
on every fresh checkout.
"""

from __future__ import annotations

import math

import numpy as np

from . import losses as wl
from . import tensor as wt
from .networks import ArchConfig, Generator
from .pipeline import slice_tensor, unslice_tensor
from .tensor import Adam, Tape, Tensor, backward, zero_grads
from .wavelets import (
    RICKER_AMPLITUDE,
    ReconstructionConstants,
    ScaleBank,
    encode_tensor,
    reconstruct_tensor,
    ricker_kernel,
    ricker_support,
)


class CheckFailure(Exception):
    pass


def _expect(ok: bool, detail: str) -> None:
    if not ok:
        raise CheckFailure(detail)


def _numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def _grads_close(analytic: np.ndarray, numeric: np.ndarray,
                 rtol: float = 1e-3, floor: float = 1e-5) -> bool:
    denom = np.maximum(np.abs(numeric), floor)
    return bool(np.all(np.abs(analytic - numeric) <= rtol * denom + floor))


def check_kernel_closed_form() -> None:
    for s in (2.0, 7.5, 31.0):
        taps = ricker_kernel(s, ricker_support(s)).data
        half = (taps.size - 1) // 2
        t = np.arange(-half, half + 1, dtype=np.float64)
        u = t / s
        direct = RICKER_AMPLITUDE * (1.0 - u * u) * np.exp(-0.5 * u * u)
        _expect(np.allclose(taps, direct, atol=1e-12),
                f"kernel mismatch at scale {s}")
        _expect(np.allclose(taps, taps[::-1], atol=0.0),
                f"kernel at scale {s} is not symmetric")


def check_synthesis_closed_form() -> None:
    constants = ReconstructionConstants()
    direct = constants.d_j * math.sqrt(constants.d_t) / (constants.c_d * constants.y_0)
    _expect(abs(constants.prefactor - direct) < 1e-15, "prefactor formula drifted")
    rng = np.random.default_rng(0)
    plane = Tensor(rng.normal(size=(6, 40)))
    rec = reconstruct_tensor(plane, 4.7, constants).data
    expected = constants.prefactor * plane.data.sum(axis=0) + 4.7
    _expect(np.allclose(rec, expected, atol=1e-12), "synthesis mismatch")


def check_conv_gradients() -> None:
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(3, 16)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 3, 5)), requires_grad=True)
    weights = rng.normal(size=(2, 16))

    def run() -> float:
        with Tape():
            out = wt.conv1d(x, w, stride=1)
            loss = wt.asum(wt.mul(out, weights))
            backward(loss)
        return loss.item()

    run()
    ax, aw = x.grad.copy(), w.grad.copy()
    for tensor, analytic in ((x, ax), (w, aw)):
        def value(arr, tensor=tensor):
            tensor.data = arr
            zero_grads([x, w])
            return run()

        numeric = _numeric_grad(value, tensor.data.copy())
        _expect(_grads_close(analytic, numeric), "conv1d gradient mismatch")


def check_scale_gradient() -> None:
    rng = np.random.default_rng(2)
    bank = ScaleBank(rng.normal(size=4) * 0.3 + 1.0, s_min=1.0)
    signal = rng.normal(size=60)
    mask = (rng.random(60) < 0.8).astype(np.float64)
    mask[0] = 1.0
    target = rng.normal(size=60)

    def run() -> float:
        with Tape():
            plane = encode_tensor(signal, bank)
            rec = reconstruct_tensor(plane, 0.0, ReconstructionConstants())
            loss = wl.masked_l1(rec, Tensor(target), mask)
            backward(loss)
        return loss.item()

    run()
    analytic = bank.raw.grad.copy()

    def value(arr):
        bank.raw.data = arr
        zero_grads([bank.raw])
        return run()

    numeric = _numeric_grad(value, bank.raw.data.copy())
    _expect(_grads_close(analytic, numeric), "scale-parameter gradient mismatch")


def check_adversarial_values() -> None:
    zeros = [Tensor(np.array(0.0)) for _ in range(4)]
    val = wl.adv_d_loss(zeros, zeros).item()
    _expect(abs(val - 2.0 * math.log(2.0)) < 1e-12,
            "critic loss at chance is not 2 ln 2")
    huge = wl.adv_g_loss(
        [Tensor(np.array(1000.0)), Tensor(np.array(-1000.0))]
    ).item()
    _expect(np.isfinite(huge), "generator loss overflows on extreme logits")
    p_real, p_fake = 0.8, 0.3
    z_real = [Tensor(np.array(math.log(p_real / (1 - p_real))))]
    z_fake = [Tensor(np.array(math.log(p_fake / (1 - p_fake))))]
    expected = -(math.log(p_real) + math.log(1 - p_fake))
    _expect(abs(wl.adv_d_loss(z_real, z_fake).item() - expected) < 1e-12,
            "critic loss value mismatch")


def check_masked_metric() -> None:
    pred = Tensor(np.array([1.0, 2.0, 5.0, 9.0]))
    target = Tensor(np.array([0.0, 4.0, 4.0, 0.0]))
    mask = np.array([1.0, 1.0, 1.0, 0.0])
    got = wl.masked_l1(pred, target, mask).item()
    _expect(abs(got - 4.0 / 3.0) < 1e-12, "masked L1 value mismatch")


def check_bank_monotonicity() -> None:
    rng = np.random.default_rng(3)
    for _ in range(5):
        bank = ScaleBank(rng.normal(size=8) * 2.0, s_min=0.5)
        s = bank.scale_values()
        _expect(bool(np.all(np.diff(s) > 0)), "scales are not increasing")
        _expect(bool(np.all(s > 0.5)), "scales fell below the floor")


def check_block_round_trip() -> None:
    rng = np.random.default_rng(4)
    plane = Tensor(rng.normal(size=(3, 50)))
    blocks = slice_tensor(plane, 50, 32)
    back = unslice_tensor(blocks, 50)
    _expect(np.array_equal(back.data, plane.data), "slice round trip drifted")


def check_passthrough_generator() -> None:
    arch = ArchConfig(
        n_scales=3, block_length=32,
        gen_channels=(3, 4, 4, 4), gen_kernel=3,
        disc_channels=(3, 4, 4, 4), disc_kernel=3,
        cls_filters=(2, 2, 2), cls_convs_per_block=1,
        cls_kernel=3, cls_dense_units=4, cls_time_pool=2,
    )
    gen = Generator(arch, np.random.default_rng(5))
    gen.set_passthrough()
    x = Tensor(np.random.default_rng(6).normal(size=(3, 32)))
    out = gen.forward(x, rng=7, training=True)
    _expect(np.array_equal(out.data, x.data), "passthrough generator altered input")


def check_optimizer_descends() -> None:
    target = np.array([3.0, -2.0, 0.5])
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p], lr=0.1)
    first = None
    for _ in range(200):
        with Tape():
            diff = wt.add(p, -target)
            loss = wt.asum(wt.mul(diff, diff))
            backward(loss)
        if first is None:
            first = loss.item()
        opt.step()
    _expect(loss.item() < 1e-2 * first, "optimizer failed to descend")


CHECKS = (
    ("kernel closed form", check_kernel_closed_form),
    ("synthesis closed form", check_synthesis_closed_form),
    ("conv1d gradients", check_conv_gradients),
    ("scale gradients", check_scale_gradient),
    ("adversarial loss values", check_adversarial_values),
    ("masked metric value", check_masked_metric),
    ("scale bank monotonicity", check_bank_monotonicity),
    ("block slicing round trip", check_block_round_trip),
    ("passthrough generator", check_passthrough_generator),
    ("optimizer descent", check_optimizer_descends),
)


def run_selftest(verbose: bool = True) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
        except CheckFailure as exc:
            failures += 1
            if verbose:
                print(f"FAIL {name}: {exc}")
        else:
            if verbose:
                print(f"ok   {name}")
    if verbose:
        print(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
