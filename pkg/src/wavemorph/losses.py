"""Training objectives for pretraining and adversarial conversion.

Every function builds tape ops over `Tensor` inputs and returns a scalar
`Tensor`.  Voicing masks are constants (plain arrays or grad-free
tensors): masked means divide by the number of selected entries so that
unvoiced regions neither contribute error nor dilute it.  Adversarial
terms are evaluated from discriminator logits through softplus
identities, which stay finite for arbitrarily confident scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as wt
from .errors import ContractError, DimensionError, DomainError
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights tying the individual objectives together."""

    alpha: float = 1.0
    beta: float = 0.0
    lambda_: float = 5.0
    gamma: float = 15.0


def config_A() -> LossWeights:
    """Reconstruction-only pretraining weights."""
    return LossWeights(alpha=1.0, beta=0.0)


def config_B() -> LossWeights:
    """Joint reconstruction and classification pretraining weights."""
    return LossWeights(alpha=10.0, beta=1.0)


def _mask_array(mask, shape) -> np.ndarray:
    m = np.asarray(mask.data if isinstance(mask, Tensor) else mask, dtype=np.float64)
    if m.shape == shape:
        return m
    if m.ndim == 1 and len(shape) == 2 and m.shape[0] == shape[1]:
        # column mask broadcast across rows
        return np.broadcast_to(m, shape).copy()
    raise DimensionError(f"mask shape {m.shape} incompatible with {shape}")


def masked_l1(pred: Tensor, target: Tensor, mask) -> Tensor:
    """Mean absolute difference over mask-selected entries.

    ``mask`` holds 0/1 weights matching the full shape, or just the last
    axis of a 2-D input to select time columns of every row.
    """
    pred, target = wt._coerce(pred), wt._coerce(target)
    if pred.data.shape != target.data.shape:
        raise DimensionError("masked_l1: shapes differ")
    m = _mask_array(mask, pred.data.shape)
    count = float(m.sum())
    if count <= 0.0:
        raise DomainError("masked_l1: mask selects no entries")
    diff = wt.abs_(wt.sub(pred, target))
    return wt.scale(wt.asum(wt.mul(diff, Tensor(m))), 1.0 / count)


def loss_rec(pred_log: Tensor, target_log: Tensor, voicing) -> Tensor:
    """Voicing-masked L1 between log-domain contours on one timeline."""
    return masked_l1(pred_log, target_log, voicing)


def loss_cl(logits_seq, labels) -> Tensor:
    """Mean cross-entropy of class logits against integer labels."""
    logits_seq = list(logits_seq)
    labels = [int(v) for v in labels]
    if not logits_seq or len(logits_seq) != len(labels):
        raise ContractError("loss_cl needs one label per logit vector")
    acc = None
    for logits, label in zip(logits_seq, labels):
        if not 0 <= label < logits.data.shape[0]:
            raise DomainError(f"label {label} out of range")
        term = wt.neg(wt.getitem(wt.log_softmax(logits), label))
        acc = term if acc is None else wt.add(acc, term)
    return wt.scale(acc, 1.0 / len(logits_seq))


def _scalar_list(logits):
    if isinstance(logits, Tensor):
        logits = [logits]
    out = list(logits)
    if not out:
        raise ContractError("adversarial loss needs at least one logit")
    for z in out:
        if z.data.shape != ():
            raise DimensionError("adversarial logits must be scalars")
    return out


def _mean_terms(terms) -> Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = wt.add(acc, t)
    return wt.scale(acc, 1.0 / len(terms))


def adv_d_loss(real_logits, fake_logits) -> Tensor:
    """Critic objective: score real blocks 1 and generated blocks 0.

    Equals -(mean log D(real) + mean log(1 - D(fake))) written in terms
    of logits z: softplus(-z) for real and softplus(z) for fake.
    """
    real = [wt.softplus(wt.neg(z)) for z in _scalar_list(real_logits)]
    fake = [wt.softplus(z) for z in _scalar_list(fake_logits)]
    return wt.add(_mean_terms(real), _mean_terms(fake))


def adv_g_loss(fake_logits) -> Tensor:
    """Non-saturating generator objective: -mean log D(fake)."""
    fake = [wt.softplus(wt.neg(z)) for z in _scalar_list(fake_logits)]
    return _mean_terms(fake)


def loss_dual(plane_a: Tensor, plane_b: Tensor, joint_mask) -> Tensor:
    """L1 agreement of the two cross-domain planes.

    ``joint_mask`` selects time columns voiced in both utterances; only
    those columns carry gradient, keeping the term invariant to
    unvoiced filler.
    """
    return masked_l1(plane_a, plane_b, joint_mask)


def compose_pretrain(weights: LossWeights, l_rec: Tensor, l_cl: Tensor | None = None) -> Tensor:
    """alpha * L_rec + beta * L_cl."""
    total = wt.scale(l_rec, weights.alpha)
    if weights.beta != 0.0:
        if l_cl is None:
            raise ContractError("beta != 0 requires a classification loss")
        total = wt.add(total, wt.scale(l_cl, weights.beta))
    return total


def compose_gan(weights: LossWeights, l_ab: Tensor, l_adv_g: Tensor, l_dual: Tensor) -> Tensor:
    """lambda * L_ab + L_adv(G) + gamma * L_dual."""
    total = wt.add(wt.scale(l_ab, weights.lambda_), l_adv_g)
    return wt.add(total, wt.scale(l_dual, weights.gamma))
