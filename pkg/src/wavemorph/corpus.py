"""Synthetic parallel expressive-contour corpus and CSV/JSON ingestion.

Utterances are built in the semitone domain from three parts: a linear
declination line, Gaussian accent bumps centred on a subset of
syllables, and slowly varying jitter interpolated between seeded knots.
A profile scales these parts; the skeleton (syllable layout, accent
choice, voicing gaps) and every random draw are shared between the two
renditions of an utterance, so two equal profiles produce identical
tracks and any contour difference is attributable to the profiles.

Files use three plain formats: per-frame pitch CSV `time_ms,f0_hz,voiced`
at 1 ms steps, syllable CSV `syl_index,start_ms,end_ms`, and a manifest
JSON listing every track with its attitude label plus the train/valid
utterance split.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, CorpusError
from .pipeline import F0Track, ParallelPair

log = logging.getLogger(__name__)

MAX_SKELETON_MS = 3800
JITTER_KNOT_MS = 150
# amplitudes are calibrated at this pitch range; the range knob then acts
# as a master gain on accents and jitter together
REFERENCE_RANGE_ST = 4.0


@dataclass(frozen=True)
class AttitudeProfile:
    """Parametric family of expressive contours."""

    name: str
    base_hz: float
    range_semitones: float
    declination_st_per_s: float
    accent_amplitude_st: float
    accent_width_ms: float
    jitter_st: float

    def __post_init__(self):
        if not self.name:
            raise ContractError("profile needs a name")
        for label in ("base_hz", "range_semitones", "accent_amplitude_st", "accent_width_ms"):
            if getattr(self, label) <= 0:
                raise ContractError(f"profile {self.name}: {label} must be positive")
        if self.jitter_st < 0:
            raise ContractError(f"profile {self.name}: jitter_st must be non-negative")


PROFILE_PRESETS: dict[str, AttitudeProfile] = {
    "neutral": AttitudeProfile("neutral", 120.0, 4.0, -1.0, 1.0, 60.0, 0.15),
    "animated": AttitudeProfile("animated", 190.0, 9.0, -0.5, 1.8, 50.0, 0.25),
    "bright": AttitudeProfile("bright", 240.0, 6.0, -0.3, 1.4, 45.0, 0.2),
    "subdued": AttitudeProfile("subdued", 95.0, 2.5, -1.5, 0.6, 80.0, 0.1),
}


def toy_contrast_pair() -> tuple[AttitudeProfile, AttitudeProfile]:
    """Source profile and a +20% range, steeper-declination counterpart."""
    a = PROFILE_PRESETS["neutral"]
    b = AttitudeProfile(
        "neutral-wide",
        a.base_hz,
        a.range_semitones * 1.2,
        a.declination_st_per_s - 0.5,
        a.accent_amplitude_st,
        a.accent_width_ms,
        a.jitter_st,
    )
    return a, b


@dataclass(frozen=True)
class UtteranceSkeleton:
    """Profile-independent utterance layout."""

    syllable_durations_ms: tuple[int, ...]
    accent_positions: tuple[int, ...] = ()
    voicing_gaps: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        n = len(self.syllable_durations_ms)
        if not 3 <= n <= 20:
            raise ContractError(f"syllable count {n} outside [3, 20]")
        if any(d <= 0 for d in self.syllable_durations_ms):
            raise ContractError("syllable durations must be positive")
        if self.duration_ms > MAX_SKELETON_MS:
            raise ContractError(
                f"skeleton spans {self.duration_ms} ms, over the {MAX_SKELETON_MS} ms cap"
            )
        if any(not 0 <= j < n for j in self.accent_positions):
            raise ContractError("accent position outside syllable range")
        for start, length in self.voicing_gaps:
            if length <= 0 or start < 0 or start + length > self.duration_ms:
                raise ContractError("voicing gap outside the utterance")

    @property
    def syllable_count(self) -> int:
        return len(self.syllable_durations_ms)

    @property
    def duration_ms(self) -> int:
        return int(sum(self.syllable_durations_ms))

    def syllables(self) -> list[tuple[int, int]]:
        bounds = np.concatenate([[0], np.cumsum(self.syllable_durations_ms)])
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def random_skeleton(
    rng: np.random.Generator,
    min_syllables: int = 3,
    max_syllables: int = 8,
    min_syl_ms: int = 120,
    max_syl_ms: int = 350,
) -> UtteranceSkeleton:
    """Draw a skeleton; durations are rescaled if they overrun the cap."""
    n = int(rng.integers(min_syllables, max_syllables + 1))
    durations = rng.integers(min_syl_ms, max_syl_ms + 1, size=n).astype(float)
    total = durations.sum()
    if total > MAX_SKELETON_MS:
        durations *= MAX_SKELETON_MS / total
    durations = np.maximum(durations.astype(int), 1)
    accents = tuple(int(j) for j in np.nonzero(rng.random(n) < 0.7)[0])
    skeleton = UtteranceSkeleton(tuple(int(d) for d in durations), accents)
    # unvoiced stretches at interior syllable junctures
    gaps = []
    bounds = np.cumsum(skeleton.syllable_durations_ms)[:-1]
    for b in bounds:
        if rng.random() < 0.35:
            length = int(rng.integers(30, 81))
            start = max(1, int(b) - length // 2)
            end = min(skeleton.duration_ms - 1, start + length)
            if end > start:
                gaps.append((start, end - start))
    return UtteranceSkeleton(
        skeleton.syllable_durations_ms, skeleton.accent_positions, tuple(gaps)
    )


def _cosine_jitter(duration: int, knots: np.ndarray) -> np.ndarray:
    """Interpolate unit-variance knots spaced JITTER_KNOT_MS apart."""
    t = np.arange(duration, dtype=np.float64)
    pos = t / JITTER_KNOT_MS
    idx = np.minimum(pos.astype(int), len(knots) - 2)
    frac = pos - idx
    w = 0.5 * (1.0 - np.cos(np.pi * frac))
    return knots[idx] * (1.0 - w) + knots[idx + 1] * w


def _render_semitones(
    skeleton: UtteranceSkeleton,
    profile: AttitudeProfile,
    accent_gains: np.ndarray,
    jitter_knots: np.ndarray,
) -> np.ndarray:
    duration = skeleton.duration_ms
    t = np.arange(duration, dtype=np.float64)
    st = profile.declination_st_per_s * (t / 1000.0)
    bumps = np.zeros(duration)
    syllables = skeleton.syllables()
    for j in skeleton.accent_positions:
        start, end = syllables[j]
        center = 0.5 * (start + end)
        u = t - center
        bumps += accent_gains[j] * np.exp(-(u * u) / (2.0 * profile.accent_width_ms**2))
    textured = profile.accent_amplitude_st * bumps
    textured += profile.jitter_st * _cosine_jitter(duration, jitter_knots)
    return st + (profile.range_semitones / REFERENCE_RANGE_ST) * textured


def synth_pair(
    skeleton: UtteranceSkeleton,
    prof_a: AttitudeProfile,
    prof_b: AttitudeProfile,
    seed: int,
    utterance_id: str = "utt000",
    speaker_id: str = "syn0",
) -> ParallelPair:
    """Render one utterance under two profiles with shared randomness."""
    rng = np.random.default_rng(seed)
    accent_gains = rng.uniform(0.6, 1.4, size=skeleton.syllable_count)
    n_knots = skeleton.duration_ms // JITTER_KNOT_MS + 2
    jitter_knots = rng.standard_normal(n_knots)

    voiced = np.ones(skeleton.duration_ms, dtype=bool)
    for start, length in skeleton.voicing_gaps:
        voiced[start : start + length] = False
    syllables = skeleton.syllables()

    tracks = []
    for profile in (prof_a, prof_b):
        st = _render_semitones(skeleton, profile, accent_gains, jitter_knots)
        f0 = profile.base_hz * np.exp2(st / 12.0)
        f0 = np.where(voiced, f0, 0.0)
        tracks.append(
            F0Track(
                f0_hz=f0,
                voicing=voiced.copy(),
                syllables=syllables,
                attitude=profile.name,
                utterance_id=utterance_id,
                speaker_id=speaker_id,
            )
        )
    return ParallelPair(source=tracks[0], target=tracks[1])


# file formats

def write_track_csv(track: F0Track, f0_path: Path, syl_path: Path) -> None:
    with open(f0_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ms", "f0_hz", "voiced"])
        for i, (hz, v) in enumerate(zip(track.f0_hz, track.voicing)):
            writer.writerow([i, repr(float(hz)), int(v)])
    with open(syl_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["syl_index", "start_ms", "end_ms"])
        for j, (start, end) in enumerate(track.syllables):
            writer.writerow([j, int(start), int(end)])


def read_track_csv(
    f0_path: Path,
    syl_path: Path,
    attitude: str = "",
    utterance_id: str = "",
    speaker_id: str = "",
) -> F0Track:
    f0 = []
    voiced = []
    with open(f0_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["time_ms", "f0_hz", "voiced"]:
            raise CorpusError(f"{f0_path}:1: expected header time_ms,f0_hz,voiced")
        for ln, row in enumerate(reader, start=2):
            try:
                t, hz, v = int(row[0]), float(row[1]), int(row[2])
            except (ValueError, IndexError) as exc:
                raise CorpusError(f"{f0_path}:{ln}: malformed row {row!r}") from exc
            if t != ln - 2:
                raise CorpusError(f"{f0_path}:{ln}: frames must advance by 1 ms")
            if v not in (0, 1):
                raise CorpusError(f"{f0_path}:{ln}: voiced flag must be 0 or 1")
            f0.append(hz)
            voiced.append(bool(v))
    syllables = []
    with open(syl_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["syl_index", "start_ms", "end_ms"]:
            raise CorpusError(f"{syl_path}:1: expected header syl_index,start_ms,end_ms")
        for ln, row in enumerate(reader, start=2):
            try:
                j, start, end = int(row[0]), float(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise CorpusError(f"{syl_path}:{ln}: malformed row {row!r}") from exc
            if j != ln - 2:
                raise CorpusError(f"{syl_path}:{ln}: syllable indices must be contiguous")
            syllables.append((start, end))
    return F0Track(
        f0_hz=np.array(f0),
        voicing=np.array(voiced, dtype=bool),
        syllables=syllables,
        attitude=attitude,
        utterance_id=utterance_id,
        speaker_id=speaker_id,
    )


def generate_corpus(
    out_dir: Path,
    n_utterances: int,
    profiles: tuple[AttitudeProfile, AttitudeProfile],
    seed: int,
    min_syllables: int = 3,
    max_syllables: int = 8,
    speaker_id: str = "syn0",
) -> Path:
    """Write a parallel corpus and return the manifest path.

    The train/valid split is 80/20 over utterance ids; both renditions
    of an utterance always land on the same side.
    """
    if n_utterances < 1:
        raise ContractError("need at least one utterance")
    prof_a, prof_b = profiles
    if prof_a.name == prof_b.name:
        raise ContractError("corpus profiles need distinct names")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    master = np.random.SeedSequence(seed)
    entries = []
    ids = []
    for i, child in enumerate(master.spawn(n_utterances)):
        rng = np.random.default_rng(child)
        skeleton = random_skeleton(rng, min_syllables, max_syllables)
        pair_seed = int(rng.integers(0, 2**63))
        utt = f"utt{i:03d}"
        ids.append(utt)
        pair = synth_pair(skeleton, prof_a, prof_b, pair_seed, utt, speaker_id)
        syl_path = out_dir / f"{utt}.syl.csv"
        for track in (pair.source, pair.target):
            f0_path = out_dir / f"{utt}.{track.attitude}.f0.csv"
            write_track_csv(track, f0_path, syl_path)
            entries.append(
                {
                    "utterance_id": utt,
                    "speaker_id": speaker_id,
                    "attitude": track.attitude,
                    "f0_path": f0_path.name,
                    "syl_path": syl_path.name,
                }
            )
    n_train = max(1, int(round(0.8 * n_utterances)))
    if n_train == n_utterances and n_utterances > 1:
        n_train -= 1
    manifest = {
        "entries": entries,
        "train_ids": ids[:n_train],
        "valid_ids": ids[n_train:],
        "attitudes": [prof_a.name, prof_b.name],
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


@dataclass
class Corpus:
    """Loaded parallel corpus with its split and attitude order."""

    pairs: list[ParallelPair]
    train_ids: list[str]
    valid_ids: list[str]
    attitudes: tuple[str, str]

    def split(self, which: str) -> list[ParallelPair]:
        wanted = {"train": set(self.train_ids), "valid": set(self.valid_ids)}[which]
        return [p for p in self.pairs if p.utterance_id in wanted]


def import_corpus(manifest_path: Path) -> list[ParallelPair]:
    """Load pairs from a manifest, skipping incomplete or inconsistent ones."""
    return load_corpus(manifest_path).pairs


def load_corpus(manifest_path: Path) -> Corpus:
    manifest_path = Path(manifest_path)
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{manifest_path}: invalid JSON: {exc}") from exc
    attitudes = manifest.get("attitudes", [])
    if len(attitudes) != 2:
        raise CorpusError(f"{manifest_path}: manifest must list exactly two attitudes")
    root = manifest_path.parent
    by_utt: dict[str, dict[str, F0Track]] = {}
    for entry in manifest.get("entries", []):
        track = read_track_csv(
            root / entry["f0_path"],
            root / entry["syl_path"],
            attitude=entry["attitude"],
            utterance_id=entry["utterance_id"],
            speaker_id=entry.get("speaker_id", ""),
        )
        by_utt.setdefault(entry["utterance_id"], {})[entry["attitude"]] = track
    pairs = []
    for utt in sorted(by_utt):
        tracks = by_utt[utt]
        if set(tracks) != set(attitudes):
            log.warning("utterance %s lacks a complete pair, skipping", utt)
            continue
        a, b = tracks[attitudes[0]], tracks[attitudes[1]]
        if len(a.syllables) != len(b.syllables):
            log.warning("utterance %s has mismatched syllable counts, skipping", utt)
            continue
        pairs.append(ParallelPair(source=a, target=b))
    return Corpus(
        pairs=pairs,
        train_ids=list(manifest.get("train_ids", [])),
        valid_ids=list(manifest.get("valid_ids", [])),
        attitudes=(attitudes[0], attitudes[1]),
    )
