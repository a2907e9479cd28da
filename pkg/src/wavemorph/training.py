"""Training orchestration: pretraining, adversarial training, conversion.

Pretraining fits the encoder's scale parameters (and, in config B, the
block classifier) by reconstruction; adversarial training then updates
the two generators, the two critics and the scale bank on phrase-sized
batches.  All randomness flows from one seeded generator per run, so a
fixed seed reproduces loss logs bit for bit.  Bundles serialize to a
single binary file: a magic string, a JSON header describing the
architecture and bookkeeping, then every parameter array raw in
declaration order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses as wl
from . import tensor as wt
from .errors import ContractError, TrainingDiverged
from .corpus import Corpus
from .networks import ArchConfig, Classifier, Discriminator, Generator
from .pipeline import (
    F0Track,
    ModelInput,
    ParallelPair,
    align_pair,
    prepare,
    slice_tensor,
    slice_windows,
    unslice_tensor,
)
from .tensor import Adam, Tape, Tensor, backward, zero_grads
from .wavelets import (
    DEFAULT_SCALE_HI,
    DEFAULT_SCALE_LO,
    ReconstructionConstants,
    ScaleBank,
    encode_tensor,
    reconstruct_tensor,
)

BUNDLE_MAGIC = b"WMBUNDLE"
LOSS_COLUMNS = ("step", "phase", "L_rec", "L_cl", "L_ab", "L_adv_D", "L_adv_G", "L_dual", "total")
DIRECTIONS = ("ab", "ba")


@dataclass
class TrainConfig:
    """Hyperparameters for both training phases."""

    config: str = "A"
    weights: wl.LossWeights | None = None
    lr: float = 1e-4
    steps_pretrain: int = 500
    steps_dualgan: int = 1000
    seed: int = 0
    d_steps_per_g: int = 1
    checkpoint_every: int = 0
    dual_plain: bool = False
    arch: ArchConfig = field(default_factory=ArchConfig)
    s_min: float = 1.0
    scale_lo: float = DEFAULT_SCALE_LO
    scale_hi: float = DEFAULT_SCALE_HI
    constants: ReconstructionConstants = field(default_factory=ReconstructionConstants)

    def __post_init__(self):
        if self.config not in ("A", "B"):
            raise ContractError(f"unknown config {self.config!r}")
        expected = wl.config_A() if self.config == "A" else wl.config_B()
        if self.weights is None:
            self.weights = expected
        elif (self.weights.alpha, self.weights.beta) != (expected.alpha, expected.beta):
            raise ContractError(
                f"config {self.config} fixes alpha={expected.alpha}, beta={expected.beta}"
            )
        if self.lr <= 0 or self.d_steps_per_g < 1:
            raise ContractError("lr must be positive and d_steps_per_g >= 1")
        if self.steps_pretrain < 0 or self.steps_dualgan < 0:
            raise ContractError("step counts must be non-negative")


@dataclass
class ModelBundle:
    """Every learnable component plus training bookkeeping."""

    arch: ArchConfig
    bank: ScaleBank
    g_ab: Generator
    g_ba: Generator
    d_a: Discriminator
    d_b: Discriminator
    classifier: Classifier
    attitudes: tuple[str, str]
    constants: ReconstructionConstants = field(default_factory=ReconstructionConstants)
    config: str = "A"
    sample_weights: dict[str, float] = field(default_factory=dict)
    mean_shift: dict[str, float] = field(default_factory=dict)
    steps_pretrain: int = 0
    steps_dualgan: int = 0

    def named_arrays(self) -> list[tuple[str, Tensor]]:
        out = [("bank.raw", self.bank.raw)]
        for prefix, net in (
            ("g_ab", self.g_ab),
            ("g_ba", self.g_ba),
            ("d_a", self.d_a),
            ("d_b", self.d_b),
            ("classifier", self.classifier),
        ):
            out.extend((f"{prefix}.{n}", t) for n, t in net.named_parameters())
        return out

    def generator(self, direction: str) -> Generator:
        if direction not in DIRECTIONS:
            raise ContractError(f"direction must be one of {DIRECTIONS}")
        return self.g_ab if direction == "ab" else self.g_ba


def new_bundle(cfg: TrainConfig, attitudes: tuple[str, str]) -> ModelBundle:
    """Freshly initialized bundle; all draws derive from cfg.seed."""
    if len(attitudes) != 2 or attitudes[0] == attitudes[1]:
        raise ContractError("need two distinct attitude labels")
    seeds = np.random.SeedSequence(cfg.seed).spawn(5)
    bank = ScaleBank.log_spaced(
        cfg.arch.n_scales, cfg.scale_lo, cfg.scale_hi, s_min=cfg.s_min
    )
    return ModelBundle(
        arch=cfg.arch,
        bank=bank,
        g_ab=Generator(cfg.arch, np.random.default_rng(seeds[0])),
        g_ba=Generator(cfg.arch, np.random.default_rng(seeds[1])),
        d_a=Discriminator(cfg.arch, np.random.default_rng(seeds[2])),
        d_b=Discriminator(cfg.arch, np.random.default_rng(seeds[3])),
        classifier=Classifier(cfg.arch, np.random.default_rng(seeds[4])),
        attitudes=(attitudes[0], attitudes[1]),
        constants=cfg.constants,
        config=cfg.config,
    )


# checkpoint format

def save_bundle(bundle: ModelBundle, path: Path) -> None:
    path = Path(path)
    arrays = bundle.named_arrays()
    header = {
        "format_version": 1,
        "arch": {k: list(v) if isinstance(v, tuple) else v
                 for k, v in vars(bundle.arch).items()},
        "attitudes": list(bundle.attitudes),
        "config": bundle.config,
        "s_min": bundle.bank.s_min,
        "constants": {
            "d_t": bundle.constants.d_t,
            "d_j": bundle.constants.d_j,
            "c_d": bundle.constants.c_d,
            "y_0": bundle.constants.y_0,
            "classic_icwt_norm": bundle.constants.classic_icwt_norm,
        },
        "steps_pretrain": bundle.steps_pretrain,
        "steps_dualgan": bundle.steps_dualgan,
        "sample_weights": bundle.sample_weights,
        "mean_shift": bundle.mean_shift,
        "scale_values": [float(s) for s in bundle.bank.scale_values()],
        "arrays": [{"name": n, "shape": list(t.data.shape)} for n, t in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, t in arrays:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_bundle(path: Path) -> ModelBundle:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(BUNDLE_MAGIC))
        if magic != BUNDLE_MAGIC:
            raise ContractError(f"{path} is not a model bundle")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode())
        if header.get("format_version") != 1:
            raise ContractError(f"{path}: unsupported bundle version")
        arch_fields = {
            k: tuple(v) if isinstance(v, list) else v for k, v in header["arch"].items()
        }
        arch = ArchConfig(**arch_fields)
        cons = ReconstructionConstants(**header["constants"])
        cfg = TrainConfig(
            config=header["config"], arch=arch, s_min=header["s_min"], constants=cons
        )
        bundle = new_bundle(cfg, tuple(header["attitudes"]))
        bundle.steps_pretrain = int(header["steps_pretrain"])
        bundle.steps_dualgan = int(header["steps_dualgan"])
        bundle.sample_weights = dict(header["sample_weights"])
        bundle.mean_shift = {k: float(v) for k, v in header["mean_shift"].items()}
        arrays = bundle.named_arrays()
        manifest = header["arrays"]
        if [n for n, _ in arrays] != [a["name"] for a in manifest]:
            raise ContractError(f"{path}: array manifest does not match architecture")
        for (name, t), meta in zip(arrays, manifest):
            shape = tuple(meta["shape"])
            if shape != t.data.shape:
                raise ContractError(f"{path}: {name} shape {shape} != {t.data.shape}")
            raw = fh.read(t.data.size * 8)
            if len(raw) != t.data.size * 8:
                raise ContractError(f"{path}: truncated array {name}")
            t.data[...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
    return bundle


class LossLog:
    """Appends one CSV row per training step."""

    def __init__(self, path: Path):
        self.path = Path(path)
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(",".join(LOSS_COLUMNS) + "\n")

    def append(self, step: int, phase: str, **values) -> None:
        cells = [str(step), phase]
        for col in LOSS_COLUMNS[2:]:
            v = values.get(col)
            cells.append("" if v is None else repr(float(v)))
        with open(self.path, "a") as fh:
            fh.write(",".join(cells) + "\n")


def _train_pairs(corpus: Corpus) -> list[ParallelPair]:
    pairs = corpus.split("train") if corpus.train_ids else corpus.pairs
    if not pairs:
        raise ContractError("corpus has no training pairs")
    return pairs


def _check_attitudes(corpus: Corpus, bundle: ModelBundle) -> None:
    if tuple(corpus.attitudes) != bundle.attitudes:
        raise ContractError(
            f"corpus attitudes {corpus.attitudes} != bundle {bundle.attitudes}"
        )


class _EpochSampler:
    """Seeded shuffling over pair indices, reshuffled each epoch."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.order: list[int] = []

    def next(self) -> int:
        if not self.order:
            self.order = list(self.rng.permutation(self.n))
        return self.order.pop(0)


def _diverged(phase: str, step: int, utterance: str, values: dict,
              out_dir: Path | None):
    payload = {
        "phase": phase,
        "step": step,
        "utterance_id": utterance,
        "losses": {k: float(v) for k, v in values.items()},
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "diagnostics.json").write_text(json.dumps(payload, indent=2) + "\n")
    raise TrainingDiverged(f"{phase} step {step}: non-finite loss on {utterance}")


def _encode_prepared(mi: ModelInput, bank: ScaleBank) -> Tensor:
    sig = mi.signal[: mi.valid_length]
    return encode_tensor(sig, bank, mean=mi.mean_logf0, valid_length=mi.valid_length)


def _reconstruct(plane: Tensor, mean: float, bundle: ModelBundle) -> Tensor:
    scales = bundle.bank.scale_values() if bundle.constants.classic_icwt_norm else None
    return reconstruct_tensor(plane, mean, bundle.constants, scales=scales)


def _mean_shift_from_pairs(pairs: list[ParallelPair]) -> dict[str, float]:
    deltas = []
    for pair in pairs:
        ma = prepare(pair.source).mean_logf0
        mb = prepare(pair.target).mean_logf0
        deltas.append(mb - ma)
    shift = float(np.mean(deltas))
    return {"ab": shift, "ba": -shift}


def _classifier_blocks(mi: ModelInput, bundle: ModelBundle) -> list[np.ndarray]:
    plane = _encode_prepared(mi, bundle.bank)
    blocks = slice_windows(plane.data, mi.valid_length, bundle.arch.block_length)
    return [b.values for b in blocks]


def _compute_sample_weights(corpus: Corpus, bundle: ModelBundle) -> dict[str, float]:
    """Mean posterior of the true class per utterance, dropout disabled."""
    weights: dict[str, float] = {}
    for pair in corpus.pairs:
        for label, track in ((0, pair.source), (1, pair.target)):
            mi = prepare(track)
            posts = [
                bundle.classifier.predict_proba(Tensor(b))[label]
                for b in _classifier_blocks(mi, bundle)
            ]
            weights[f"{track.utterance_id}:{track.attitude}"] = float(np.mean(posts))
    return weights


def pretrain(
    corpus: Corpus,
    cfg: TrainConfig,
    log_path: Path | None = None,
    checkpoint_dir: Path | None = None,
) -> ModelBundle:
    """Fit scale parameters (and the classifier in config B) by reconstruction."""
    bundle = new_bundle(cfg, corpus.attitudes)
    _check_attitudes(corpus, bundle)
    pairs = _train_pairs(corpus)
    log = LossLog(log_path) if log_path else None
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    sampler = _EpochSampler(len(pairs), rng)

    params = [bundle.bank.raw]
    if cfg.config == "B":
        params = params + bundle.classifier.parameters()
    opt = Adam(params, lr=cfg.lr)

    for step in range(cfg.steps_pretrain):
        pair = pairs[sampler.next()]
        mi_a = prepare(pair.source)
        mi_b = prepare(pair.target)
        zero_grads(params)
        with Tape():
            rec_terms = []
            cl_logits: list[Tensor] = []
            cl_labels: list[int] = []
            for label, mi in ((0, mi_a), (1, mi_b)):
                plane = _encode_prepared(mi, bundle.bank)
                rec = _reconstruct(plane, mi.mean_logf0, bundle)
                mask = mi.voicing_mask[: mi.valid_length]
                target = Tensor(mi.signal[: mi.valid_length])
                rec_terms.append(wl.masked_l1(rec, target, mask))
                if cfg.config == "B":
                    for block, _width in slice_tensor(
                        plane, mi.valid_length, bundle.arch.block_length
                    ):
                        cl_logits.append(
                            bundle.classifier.forward(block, rng=rng, training=True)
                        )
                        cl_labels.append(label)
            l_rec = wt.scale(wt.add(rec_terms[0], rec_terms[1]), 0.5)
            l_cl = wl.loss_cl(cl_logits, cl_labels) if cl_logits else None
            total = wl.compose_pretrain(cfg.weights, l_rec, l_cl)
            values = {"L_rec": l_rec.item(), "total": total.item()}
            if l_cl is not None:
                values["L_cl"] = l_cl.item()
            if not all(np.isfinite(v) for v in values.values()):
                _diverged("pretrain", step, pair.utterance_id, values, checkpoint_dir)
            backward(total)
        opt.step()
        bundle.steps_pretrain = step + 1
        if log:
            log.append(step, "pretrain", **values)
        if checkpoint_dir and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save_bundle(bundle, Path(checkpoint_dir) / f"pretrain_{step + 1:06d}.bundle")

    bundle.mean_shift = _mean_shift_from_pairs(pairs)
    if cfg.config == "B":
        bundle.sample_weights = _compute_sample_weights(corpus, bundle)
    if checkpoint_dir:
        save_bundle(bundle, Path(checkpoint_dir) / "pretrain_final.bundle")
    return bundle


def train_dualgan(
    corpus: Corpus,
    bundle: ModelBundle,
    cfg: TrainConfig,
    log_path: Path | None = None,
    checkpoint_dir: Path | None = None,
) -> ModelBundle:
    """Alternate critic and generator+encoder updates on phrase batches."""
    _check_attitudes(corpus, bundle)
    pairs = _train_pairs(corpus)
    log = LossLog(log_path) if log_path else None
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    sampler = _EpochSampler(len(pairs), rng)

    d_params = bundle.d_a.parameters() + bundle.d_b.parameters()
    g_params = bundle.g_ab.parameters() + bundle.g_ba.parameters() + [bundle.bank.raw]
    opt_d = Adam(d_params, lr=cfg.lr)
    opt_g = Adam(g_params, lr=cfg.lr)
    block_len = bundle.arch.block_length

    for step in range(cfg.steps_dualgan):
        pair = pairs[sampler.next()]
        aligned = align_pair(pair)
        mi_a = prepare(aligned.source)
        mi_b = prepare(aligned.target)
        valid = mi_a.valid_length
        mask_a = mi_a.voicing_mask[:valid]
        mask_b = mi_b.voicing_mask[:valid]

        # critic update: generators act as fixed noise sources
        l_adv_d_value = None
        plane_a = _encode_prepared(mi_a, bundle.bank)
        plane_b = _encode_prepared(mi_b, bundle.bank)
        real_a = [Tensor(b.values) for b in slice_windows(plane_a.data, valid, block_len)]
        real_b = [Tensor(b.values) for b in slice_windows(plane_b.data, valid, block_len)]
        for _ in range(cfg.d_steps_per_g):
            fake_b = [
                Tensor(bundle.g_ab.forward(x, rng=rng, training=True).data)
                for x in real_a
            ]
            fake_a = [
                Tensor(bundle.g_ba.forward(x, rng=rng, training=True).data)
                for x in real_b
            ]
            zero_grads(d_params)
            with Tape():
                d_dir_a = wl.adv_d_loss(
                    [bundle.d_a.forward_logit(x) for x in real_a],
                    [bundle.d_a.forward_logit(x) for x in fake_a],
                )
                d_dir_b = wl.adv_d_loss(
                    [bundle.d_b.forward_logit(x) for x in real_b],
                    [bundle.d_b.forward_logit(x) for x in fake_b],
                )
                l_adv_d = wt.scale(wt.add(d_dir_a, d_dir_b), 0.5)
                l_adv_d_value = l_adv_d.item()
                if not np.isfinite(l_adv_d_value):
                    _diverged("dualgan", step, pair.utterance_id,
                              {"L_adv_D": l_adv_d_value}, checkpoint_dir)
                backward(l_adv_d)
            opt_d.step()

        # joint generator and encoder update
        w_a = bundle.sample_weights.get(f"{pair.source.utterance_id}:{pair.source.attitude}", 1.0)
        w_b = bundle.sample_weights.get(f"{pair.target.utterance_id}:{pair.target.attitude}", 1.0)
        zero_grads(g_params + d_params)
        with Tape():
            plane_a = _encode_prepared(mi_a, bundle.bank)
            plane_b = _encode_prepared(mi_b, bundle.bank)
            blocks_a = slice_tensor(plane_a, valid, block_len)
            blocks_b = slice_tensor(plane_b, valid, block_len)
            out_ab = [
                (bundle.g_ab.forward(x, rng=rng, training=True), w)
                for x, w in blocks_a
            ]
            out_ba = [
                (bundle.g_ba.forward(x, rng=rng, training=True), w)
                for x, w in blocks_b
            ]
            conv_ab = unslice_tensor(out_ab, valid)
            conv_ba = unslice_tensor(out_ba, valid)

            shift = bundle.mean_shift
            rec_ab = _reconstruct(conv_ab, mi_a.mean_logf0 + shift.get("ab", 0.0), bundle)
            rec_ba = _reconstruct(conv_ba, mi_b.mean_logf0 + shift.get("ba", 0.0), bundle)
            term_ab = wl.masked_l1(rec_ab, Tensor(mi_b.signal[:valid]), mask_b)
            term_ba = wl.masked_l1(rec_ba, Tensor(mi_a.signal[:valid]), mask_a)
            l_ab = wt.scale(
                wt.add(wt.scale(term_ab, w_a), wt.scale(term_ba, w_b)), 0.5
            )

            g_dir_b = wl.adv_g_loss([bundle.d_b.forward_logit(x) for x, _ in out_ab])
            g_dir_a = wl.adv_g_loss([bundle.d_a.forward_logit(x) for x, _ in out_ba])
            l_adv_g = wt.scale(wt.add(g_dir_a, g_dir_b), 0.5)

            joint = mask_a * mask_b
            if joint.sum() == 0.0:
                # no mutually voiced frame; the dual term has nothing to compare
                l_dual = Tensor(np.array(0.0))
            elif cfg.dual_plain:
                l_dual = wl.loss_dual(conv_ab, conv_ba, joint)
            else:
                prod_a = wt.mul(plane_a, conv_ab)
                prod_b = wt.mul(plane_b, conv_ba)
                l_dual = wl.loss_dual(prod_a, prod_b, joint)

            total = wl.compose_gan(cfg.weights, l_ab, l_adv_g, l_dual)
            values = {
                "L_ab": l_ab.item(),
                "L_adv_D": l_adv_d_value,
                "L_adv_G": l_adv_g.item(),
                "L_dual": l_dual.item(),
                "total": total.item(),
            }
            if not all(np.isfinite(v) for v in values.values()):
                _diverged("dualgan", step, pair.utterance_id, values, checkpoint_dir)
            backward(total)
        opt_g.step()
        bundle.steps_dualgan += 1
        if log:
            log.append(step, "dualgan", **values)
        if checkpoint_dir and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save_bundle(bundle, Path(checkpoint_dir) / f"dualgan_{step + 1:06d}.bundle")

    if checkpoint_dir and cfg.steps_dualgan:
        save_bundle(bundle, Path(checkpoint_dir) / "dualgan_final.bundle")
    return bundle


def convert(
    track: F0Track,
    bundle: ModelBundle,
    direction: str,
    rng_seed: int = 0,
) -> F0Track:
    """Convert one track's contour; output stays on the source timeline.

    The generator runs with dropout active as its noise source, seeded
    for reproducibility.  Unvoiced frames of the input remain unvoiced
    (and zero) in the output.
    """
    gen = bundle.generator(direction)
    mi = prepare(track)
    valid = mi.valid_length
    plane = _encode_prepared(mi, bundle.bank)
    rng = np.random.default_rng(rng_seed)
    blocks = slice_tensor(plane, valid, bundle.arch.block_length)
    outs = [(gen.forward(x, rng=rng, training=True), w) for x, w in blocks]
    conv_plane = unslice_tensor(outs, valid)
    mean = mi.mean_logf0 + bundle.mean_shift.get(direction, 0.0)
    rec = _reconstruct(conv_plane, mean, bundle).data
    f0 = np.where(track.voicing, np.exp(rec[: len(track.f0_hz)]), 0.0)
    target_attitude = bundle.attitudes[1] if direction == "ab" else bundle.attitudes[0]
    return F0Track(
        f0_hz=f0,
        voicing=track.voicing.copy(),
        syllables=list(track.syllables),
        attitude=target_attitude,
        utterance_id=track.utterance_id,
        speaker_id=track.speaker_id,
    )
