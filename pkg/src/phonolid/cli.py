"""Command-line entry point.

Commands: synth, prepare, train, predict, evaluate, selftest. Every run
works inside a user-named run directory; the effective configuration is
echoed there so later commands (and reruns) see exactly the same settings.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .corpus import Corpus, SplitSpec, load_manifest, save_manifest
from .corpus.synth import SynthSpec, generate_synth, make_block_languages, make_mixture_language
from .evaluate import format_report
from .experiment import (
    ScenarioSpec,
    TrainedSystem,
    evaluate_system,
    prepare_data,
    train_system,
)
from .selftest import run_selftest
from .training import TRAIN_MODES

logger = logging.getLogger(__name__)


def _load_effective_config(args) -> dict:
    if args.config:
        cfg = config_mod.load_config(args.config)
    else:
        echoed = Path(args.run_dir) / "config.yaml" if args.run_dir else None
        if echoed and echoed.exists():
            cfg = config_mod.load_config(echoed)
        else:
            cfg = config_mod.default_config()
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "scenario", None):
        cfg["scenario"]["kind"] = args.scenario
    if getattr(args, "mode", None):
        cfg["training"]["mode"] = args.mode
    return config_mod.validate_config(cfg)


def _echo_config(cfg: dict, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    config_mod.save_config(cfg, run_dir / "config.yaml")


def _synth_language_names(cfg):
    s = cfg["synth"]
    targets = [f"t{i}" for i in range(s["target_languages"])]
    others = [f"o{i}" for i in range(s["others_languages"])]
    ood = [f"x{i}" for i in range(s["ood_languages"])]
    return targets, others, ood


def cmd_synth(args) -> int:
    cfg = _load_effective_config(args)
    run_dir = Path(args.run_dir)
    corpus_dir = run_dir / "corpus"
    s = cfg["synth"]
    fcfg = config_mod.feature_config(cfg)
    targets, others, ood = _synth_language_names(cfg)
    block_langs = make_block_languages(targets + others, block_size=s["block_size"])
    spec = SynthSpec(
        languages=block_langs,
        songs_per_language=s["songs_per_language"],
        song_duration=s["song_duration"],
        noise_level=s["noise_level"],
        seed=cfg["seed"],
        artists_per_language=s["artists_per_language"],
    )
    corpus = generate_synth(spec, corpus_dir, fcfg, write_manifest=False)
    songs = list(corpus.songs)
    if ood:
        parents = block_langs[len(targets) :] or block_langs
        ood_langs = [make_mixture_language(name, parents) for name in ood]
        ood_spec = SynthSpec(
            languages=ood_langs,
            songs_per_language=s["ood_songs_per_language"],
            song_duration=s["song_duration"],
            noise_level=s["noise_level"],
            seed=cfg["seed"] + 1,
            artists_per_language=s["artists_per_language"],
        )
        songs += list(generate_synth(ood_spec, corpus_dir, fcfg, write_manifest=False).songs)
    combined = Corpus(songs)
    save_manifest(combined, corpus_dir / "manifest.tsv")

    cfg["corpus"]["manifest"] = str((corpus_dir / "manifest.tsv").resolve())
    cfg["scenario"]["kind"] = "open" if (others or ood) else "closed"
    cfg["scenario"]["target_languages"] = targets
    cfg["scenario"]["others_languages"] = others
    cfg["scenario"]["ood_languages"] = ood
    _echo_config(cfg, run_dir)
    print(f"wrote {len(combined)} songs to {corpus_dir / 'manifest.tsv'}")
    return 0


def _scenario_from_config(cfg) -> ScenarioSpec:
    sc = cfg["scenario"]
    return ScenarioSpec(
        kind=sc["kind"],
        target_languages=tuple(sc["target_languages"]),
        others_languages=tuple(sc["others_languages"]),
        ood_languages=tuple(sc["ood_languages"]),
        others_label=sc["others_label"],
    )


def _prepare_from_config(cfg, run_dir: Path, workers: int = 1):
    manifest = cfg["corpus"]["manifest"]
    if not manifest:
        raise ValueError("corpus.manifest is not set (run synth or point it at a manifest)")
    corpus = load_manifest(manifest)
    c = cfg["corpus"]
    return prepare_data(
        corpus,
        _scenario_from_config(cfg),
        config_mod.feature_config(cfg),
        SplitSpec(ratios=tuple(c["split_ratios"]), seed=cfg["seed"]),
        seg_len=c["seg_len"],
        overlap=c["overlap"],
        min_words=c["min_words"],
        rep_threshold=c["rep_threshold"],
        conf_threshold=c["conf_threshold"],
        cache_dir=run_dir / "feature_cache",
        workers=workers,
    )


def _write_prepared_artifacts(prepared, run_dir: Path) -> None:
    out = run_dir / "prepared"
    out.mkdir(parents=True, exist_ok=True)
    prepared.charset.save(out / "charset.json")
    splits = {name: [song.song_id for song in songs] for name, songs in prepared.splits.items()}
    (out / "splits.json").write_text(json.dumps(splits, indent=2, sort_keys=True), encoding="utf-8")
    lines = ["song_id\tsplit\tclass\traw_language\tn_segments"]
    for name, songs in prepared.splits.items():
        for song in songs:
            lines.append(
                f"{song.song_id}\t{name}\t{prepared.classes[song.class_idx]}"
                f"\t{song.raw_language}\t{len(song.segments)}"
            )
    (out / "songs.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_prepare(args) -> int:
    cfg = _load_effective_config(args)
    run_dir = Path(args.run_dir)
    prepared = _prepare_from_config(cfg, run_dir, args.workers)
    _write_prepared_artifacts(prepared, run_dir)
    _echo_config(cfg, run_dir)
    counts = {name: len(songs) for name, songs in prepared.splits.items()}
    print(
        f"prepared charset of {len(prepared.charset)} tokens, classes {prepared.classes}, "
        f"songs {counts}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_effective_config(args)
    run_dir = Path(args.run_dir)
    mode = cfg["training"]["mode"]
    prepared = _prepare_from_config(cfg, run_dir, args.workers)
    _write_prepared_artifacts(prepared, run_dir)
    _echo_config(cfg, run_dir)

    log_dir = run_dir / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    log_path = log_dir / f"train_{mode}.log"
    with open(log_path, "w", encoding="utf-8") as log_fh:

        def log_fn(line):
            log_fh.write(line + "\n")
            log_fh.flush()

        system = train_system(
            prepared,
            mode,
            config_mod.train_config(cfg, mode),
            acoustic_config=config_mod.acoustic_config(cfg),
            classifier_config=config_mod.classifier_config(cfg),
            min_decoded_words=cfg["evaluation"]["min_decoded_words"],
            log_fn=log_fn,
            posteriorgram_dir=(run_dir / "posteriorgrams" / mode) if mode == "two_step" else None,
        )
    ckpt_dir = run_dir / "checkpoints" / mode
    system.save(ckpt_dir, fingerprint=config_mod.config_fingerprint(cfg))
    print(f"trained {mode}; checkpoints in {ckpt_dir}, log in {log_path}")
    return 0


def _load_system(cfg, run_dir: Path) -> TrainedSystem:
    mode = cfg["training"]["mode"]
    ckpt_dir = run_dir / "checkpoints" / mode
    if not (ckpt_dir / "acoustic.ckpt").exists():
        raise FileNotFoundError(f"no trained {mode} system under {ckpt_dir} (run train first)")
    return TrainedSystem.load(ckpt_dir)


def cmd_predict(args) -> int:
    cfg = _load_effective_config(args)
    run_dir = Path(args.run_dir)
    system = _load_system(cfg, run_dir)
    prepared = _prepare_from_config(cfg, run_dir, args.workers)
    if prepared.classes != system.classes:
        raise ValueError(
            f"label-space mismatch: checkpoint classes {system.classes} vs prepared {prepared.classes}"
        )
    lines = []
    for song in prepared.splits["test"]:
        idx, scores = system.predict_song(song)
        if idx is None:
            lines.append(f"{song.song_id}\tinstrumental\t0.0")
        else:
            lines.append(f"{song.song_id}\t{system.classes[idx]}\t{scores[idx]:.6f}")
    out_path = run_dir / f"predictions_{system.mode}.tsv"
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_effective_config(args)
    run_dir = Path(args.run_dir)
    system = _load_system(cfg, run_dir)
    prepared = _prepare_from_config(cfg, run_dir, args.workers)
    report = evaluate_system(
        prepared,
        system,
        resamples=cfg["evaluation"]["bootstrap_resamples"],
        seed=cfg["seed"],
        workers=args.workers,
    )
    reports_dir = run_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{system.mode}_{report.scenario}"
    (reports_dir / f"{stem}.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    text = format_report(report)
    (reports_dir / f"{stem}.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest(print) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonolid",
        description="Singing-language identification via CTC phoneme posteriorgrams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "synth": (cmd_synth, "generate a synthetic corpus + manifest"),
        "prepare": (cmd_prepare, "build feature/charset caches and splits"),
        "train": (cmd_train, "train a system variant"),
        "predict": (cmd_predict, "per-song language verdicts for the test split"),
        "evaluate": (cmd_evaluate, "evaluation report for the test split"),
        "selftest": (cmd_selftest, "run CTC-oracle and gradient-check suites"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--config", type=str, default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="parallel workers")
        if name != "selftest":
            p.add_argument("--run-dir", type=str, required=True, help="run directory")
        if name in ("train", "predict", "evaluate"):
            p.add_argument("--mode", choices=TRAIN_MODES, default=None, help="training strategy")
        if name in ("synth", "prepare", "train", "evaluate"):
            p.add_argument("--scenario", choices=("closed", "open"), default=None, help="label-space scenario")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # single-line machine-parsable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
