"""Command-line front end wiring corpus, training and evaluation together.

Every artifact-producing run writes a run.json next to its outputs
echoing the fully resolved flags, the seed and the timestamps; nothing
else an invocation writes depends on the clock, so reruns with the
same flags reproduce every other artifact byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .corpus import (
    PROFILE_PRESETS,
    generate_corpus,
    load_corpus,
    read_track_csv,
    write_track_csv,
)
from .errors import ContractError, WavemorphError
from .evaluation import (
    corpus_markers,
    evaluate,
    nominal_markers,
    scale_histogram,
    write_report,
)
from .selfcheck import run_selftest
from .training import (
    DIRECTIONS,
    TrainConfig,
    convert,
    load_bundle,
    pretrain,
    save_bundle,
    train_dualgan,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    # spec'd exit code for usage problems is 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="wavemorph",
                     description="Pitch contour conversion toolkit.")
    parser.add_argument("--config-file", type=Path, default=None,
                        help="JSON file of flag defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    parser.subcommand_parsers = []

    def add_parser(name, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("--config-file", type=Path, default=None,
                       help=argparse.SUPPRESS)
        parser.subcommand_parsers.append(p)
        return p

    p = add_parser("synth-corpus", help="generate a synthetic parallel corpus")
    p.add_argument("--n", type=int, required=True, help="number of utterances")
    p.add_argument("--profiles", default="neutral,animated",
                   help="two preset names, comma separated")
    p.add_argument("--out", type=Path, required=True, help="corpus directory")
    p.add_argument("--seed", type=int, default=0)

    p = add_parser("pretrain", help="fit scales (and classifier) by reconstruction")
    p.add_argument("--corpus", type=Path, required=True, help="manifest.json path")
    p.add_argument("--config", choices=("A", "B"), default="A")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--out", type=Path, required=True, help="bundle file to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = add_parser("train", help="adversarial phase on a pretrained bundle")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--from", dest="from_bundle", type=Path, required=True,
                   help="bundle produced by pretrain")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--d-steps-per-g", type=int, default=1)
    p.add_argument("--dual-plain", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = add_parser("convert", help="convert one track between attitudes")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--track", type=Path, required=True, help="input f0 CSV")
    p.add_argument("--syllables", type=Path, default=None,
                   help="syllable CSV; inferred from the track name if omitted")
    p.add_argument("--direction", choices=DIRECTIONS, required=True)
    p.add_argument("--out", type=Path, required=True, help="output f0 CSV")
    p.add_argument("--seed", type=int, default=0)

    p = add_parser("evaluate", help="metric tables on a corpus split")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--split", choices=("train", "valid"), default="valid")
    p.add_argument("--seed", type=int, default=0)

    p = add_parser("scales", help="scale distribution table and plot")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--corpus", type=Path, default=None,
                   help="manifest for duration markers; nominal ones if omitted")

    add_parser("selftest", help="run built-in oracle and gradient checks")
    return parser


def _syl_path_for(track_path: Path) -> Path:
    # utt000.neutral.f0.csv -> utt000.syl.csv
    name = track_path.name
    if name.endswith(".f0.csv"):
        stem = name[: -len(".f0.csv")]
        head = stem.rsplit(".", 1)[0] if "." in stem else stem
        return track_path.parent / f"{head}.syl.csv"
    return track_path.with_suffix(".syl.csv")


def _track_identity(track_path: Path) -> tuple[str, str]:
    name = track_path.name
    if name.endswith(".f0.csv"):
        stem = name[: -len(".f0.csv")]
        if "." in stem:
            utt, att = stem.rsplit(".", 1)
            return utt, att
        return stem, ""
    return track_path.stem, ""


def _write_run_json(out: Path, args: argparse.Namespace, started: float) -> None:
    record = {
        "command": args.command,
        "config": {
            k: str(v) if isinstance(v, Path) else v
            for k, v in sorted(vars(args).items())
            if k not in ("command", "config_file")
        },
        "started_unix": started,
        "finished_unix": time.time(),
    }
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_sidecar(out: Path) -> Path:
    if out.suffix == "":
        return out / "run.json"
    return out.with_name(out.name + ".run.json")


def _cmd_synth_corpus(args) -> int:
    names = [n.strip() for n in args.profiles.split(",") if n.strip()]
    if len(names) != 2:
        raise ContractError("exactly two profile names are required")
    unknown = [n for n in names if n not in PROFILE_PRESETS]
    if unknown:
        known = ", ".join(sorted(PROFILE_PRESETS))
        raise ContractError(f"unknown profiles {unknown}; available: {known}")
    manifest = generate_corpus(
        args.out, args.n, (PROFILE_PRESETS[names[0]], PROFILE_PRESETS[names[1]]),
        seed=args.seed,
    )
    print(f"wrote {manifest}")
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = TrainConfig(
        config=args.config,
        steps_pretrain=args.steps,
        seed=args.seed,
        lr=args.lr,
        checkpoint_every=args.checkpoint_every,
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    log_path = args.out.with_name(args.out.name + ".loss.csv")
    ckpt_dir = args.out.parent if args.checkpoint_every else None
    bundle = pretrain(corpus, cfg, log_path=log_path, checkpoint_dir=ckpt_dir)
    save_bundle(bundle, args.out)
    print(f"wrote {args.out} after {bundle.steps_pretrain} pretrain steps")
    return EXIT_OK


def _cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    bundle = load_bundle(args.from_bundle)
    cfg = TrainConfig(
        config=bundle.config,
        steps_dualgan=args.steps,
        seed=args.seed,
        lr=args.lr,
        d_steps_per_g=args.d_steps_per_g,
        dual_plain=args.dual_plain,
        checkpoint_every=args.checkpoint_every,
        arch=bundle.arch,
        s_min=bundle.bank.s_min,
        constants=bundle.constants,
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    log_path = args.out.with_name(args.out.name + ".loss.csv")
    ckpt_dir = args.out.parent if args.checkpoint_every else None
    train_dualgan(corpus, bundle, cfg, log_path=log_path, checkpoint_dir=ckpt_dir)
    save_bundle(bundle, args.out)
    print(f"wrote {args.out} after {bundle.steps_dualgan} adversarial steps")
    return EXIT_OK


def _cmd_convert(args) -> int:
    syl = args.syllables if args.syllables else _syl_path_for(args.track)
    utt, att = _track_identity(args.track)
    track = read_track_csv(args.track, syl, attitude=att, utterance_id=utt)
    bundle = load_bundle(args.bundle)
    out_track = convert(track, bundle, args.direction, rng_seed=args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_track_csv(out_track, args.out, _syl_path_for(args.out))
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    bundle = load_bundle(args.bundle)
    report = evaluate(bundle, corpus, split=args.split, seed=args.seed)
    report_path, summary_path = write_report(report, args.out)
    csv_path, svg_path = scale_histogram(bundle, report.markers, args.out)
    for path in (report_path, summary_path, csv_path, svg_path):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_scales(args) -> int:
    bundle = load_bundle(args.bundle)
    if args.corpus:
        corpus = load_corpus(args.corpus)
        markers = corpus_markers(corpus.pairs)
    else:
        markers = nominal_markers()
    csv_path, svg_path = scale_histogram(bundle, markers, args.out)
    print(f"wrote {csv_path}")
    print(f"wrote {svg_path}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    failures = run_selftest(verbose=True)
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


_COMMANDS = {
    "synth-corpus": _cmd_synth_corpus,
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "convert": _cmd_convert,
    "evaluate": _cmd_evaluate,
    "scales": _cmd_scales,
    "selftest": _cmd_selftest,
}


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    # first pass only reads --config-file so its values become defaults
    probe = _Parser(add_help=False, allow_abbrev=False)
    probe.add_argument("--config-file", type=Path, default=None)
    known, _rest = probe.parse_known_args(argv)
    if known.config_file is not None:
        try:
            with open(known.config_file) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            sys.stderr.write(f"wavemorph: bad config file: {exc}\n")
            return EXIT_USAGE
        if not isinstance(overrides, dict):
            sys.stderr.write("wavemorph: config file must hold a JSON object\n")
            return EXIT_USAGE
        defaults = {k.replace("-", "_"): v for k, v in overrides.items()}
        # subcommands parse into a fresh namespace, so they need the
        # defaults as well; explicit flags still take precedence
        for target in [parser] + parser.subcommand_parsers:
            target.set_defaults(**defaults)

    started = time.time()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        code = _COMMANDS[args.command](args)
    except WavemorphError as exc:
        sys.stderr.write(f"wavemorph: {exc}\n")
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_RUNTIME
    except OSError as exc:
        sys.stderr.write(f"wavemorph: {exc}\n")
        return EXIT_RUNTIME
    if code == EXIT_OK and args.command != "selftest":
        out = getattr(args, "out", None)
        if out is not None:
            _write_run_json(_run_sidecar(Path(out)), args, started)
    return code


def main() -> None:
    raise SystemExit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
