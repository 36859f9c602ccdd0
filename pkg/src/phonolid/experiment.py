"""End-to-end pipeline: prepare a corpus, train a system, evaluate it.

This module owns the protocol glue: the scenario class space (closed, or
open with an "others" bucket and test-only out-of-domain languages), the
text-LID segment labeling, per-segment feature slicing from song-level
matrices, and trained-system persistence.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acoustic import AcousticConfig, AcousticModel
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    AMBIGUOUS,
    INSTRUMENTAL,
    Charset,
    Corpus,
    SplitSpec,
    build_charset,
    label_segments,
    segment_song,
    split_corpus,
    train_text_lid,
)
from .evaluate import (
    EvalReport,
    predict_from_posteriorgrams,
    predict_from_stats,
    run_scenario,
)
from .features import FeatureConfig, FeatureMatrix, extract_features, load_feature_cache, read_wav, save_feature_cache
from .lid import ClassifierConfig, LanguageClassifier, LinearClassifier, clean_posteriorgram, length_normalize, stats_pool
from .nn import softmax
from .training import (
    TrainConfig,
    TrainingSegment,
    compute_class_weights,
    train_acoustic,
    train_joint,
    train_lid,
    train_statistics,
)

logger = logging.getLogger(__name__)

OTHERS_LABEL = "others"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "closed"  # closed | open
    target_languages: tuple[str, ...] = ()
    others_languages: tuple[str, ...] = ()
    ood_languages: tuple[str, ...] = ()
    others_label: str = OTHERS_LABEL

    def __post_init__(self):
        if self.kind not in ("closed", "open"):
            raise ValueError(f"scenario kind must be closed or open, got {self.kind!r}")
        if self.kind == "closed" and (self.others_languages or self.ood_languages):
            raise ValueError("closed scenario cannot have others/out-of-domain languages")


@dataclass
class PreparedSong:
    song_id: str
    raw_language: str
    class_idx: int
    segments: list[TrainingSegment] = field(default_factory=list)


@dataclass
class PreparedData:
    charset: Charset
    classes: list[str]
    feature_config: FeatureConfig
    scenario: ScenarioSpec
    splits: dict[str, list[PreparedSong]]
    training_languages: set[str]
    dropped_tokens: int = 0

    def segments(self, split: str) -> list[TrainingSegment]:
        return [seg for song in self.splits[split] for seg in song.segments]


def _map_ordered(fn, items, workers: int = 1):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def song_feature_matrix(song, feature_config: FeatureConfig, cache_dir=None) -> FeatureMatrix:
    """Song-level features: from the precomputed cache or the waveform."""
    if song.uses_feature_cache():
        return load_feature_cache(song.path)
    if cache_dir is not None:
        cached = Path(cache_dir) / f"{song.id}.fbin"
        if cached.exists():
            return load_feature_cache(cached)
    matrix = extract_features(read_wav(song.path, feature_config.sample_rate), feature_config)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_feature_cache(Path(cache_dir) / f"{song.id}.fbin", matrix)
    return matrix


def segment_feature_rows(matrix: FeatureMatrix, start: float, end: float, config: FeatureConfig) -> np.ndarray:
    """Feature rows of a [start, end) segment, sliced from the song matrix."""
    n_samples = int(round((end - start) * config.sample_rate))
    n_frames = config.n_frames(n_samples)
    n_frames = min(n_frames, matrix.n_frames)
    first = int(round(start * config.frame_rate))
    first = max(0, min(first, matrix.n_frames - n_frames))
    return matrix.data[first : first + n_frames]


def make_scenario(corpus: Corpus, spec: ScenarioSpec) -> ScenarioSpec:
    """Fill an empty target-language list from the corpus."""
    if spec.target_languages:
        return spec
    excluded = set(spec.others_languages) | set(spec.ood_languages)
    targets = tuple(l for l in corpus.languages() if l not in excluded)
    return ScenarioSpec(
        kind=spec.kind,
        target_languages=targets,
        others_languages=spec.others_languages,
        ood_languages=spec.ood_languages,
        others_label=spec.others_label,
    )


def scenario_classes(spec: ScenarioSpec) -> list[str]:
    classes = sorted(spec.target_languages)
    if spec.kind == "open":
        classes.append(spec.others_label)
    return classes


def prepare_data(
    corpus: Corpus,
    scenario: ScenarioSpec,
    feature_config: FeatureConfig,
    split_spec: SplitSpec,
    seg_len: float = 20.0,
    overlap: float = 0.5,
    min_words: int = 3,
    rep_threshold: float = 0.3,
    conf_threshold: float = 0.5,
    cache_dir=None,
    workers: int = 1,
) -> PreparedData:
    """Split, label, build the charset, and materialize training segments."""
    scenario = make_scenario(corpus, scenario)
    classes = scenario_classes(scenario)
    class_index = {c: i for i, c in enumerate(classes)}

    def class_of(raw_language: str) -> int | None:
        if raw_language in class_index:
            return class_index[raw_language]
        if scenario.kind == "open":
            return class_index[scenario.others_label]
        return None

    ood = set(scenario.ood_languages)
    known = [s for s in corpus if s.language not in ood]
    test_only = [s for s in corpus if s.language in ood]
    if not known:
        raise ValueError("no songs outside the out-of-domain languages")
    train_c, val_c, test_c = split_corpus(Corpus(known), split_spec)
    split_songs = {
        "train": list(train_c),
        "val": list(val_c),
        "test": list(test_c) + test_only,
    }

    text_lid = train_text_lid([(song.text, song.language) for song in split_songs["train"] if song.text])
    training_languages = {song.language for song in split_songs["train"]}

    all_songs = [song for songs in split_songs.values() for song in songs]
    matrices = _map_ordered(
        lambda song: song_feature_matrix(song, feature_config, cache_dir), all_songs, workers
    )
    matrix_of = {song.id: m for song, m in zip(all_songs, matrices)}

    segmented: dict[str, list] = {}
    train_segments_flat = []
    for split, songs in split_songs.items():
        rows = []
        for song in songs:
            duration = feature_config.duration(matrix_of[song.id].n_frames)
            segs = segment_song(song, duration, seg_len=seg_len, overlap=overlap)
            label_segments(
                segs,
                text_lid,
                min_words=min_words,
                rep_threshold=rep_threshold,
                conf_threshold=conf_threshold,
            )
            rows.append((song, segs))
            if split == "train":
                train_segments_flat.extend(segs)
        segmented[split] = rows

    charset = build_charset(train_segments_flat)
    dropped_total = 0
    splits: dict[str, list[PreparedSong]] = {}
    for split, rows in segmented.items():
        prepared_songs = []
        for song, segs in rows:
            matrix = matrix_of[song.id]
            song_class = class_of(song.language)
            if song_class is None:
                raise ValueError(
                    f"song {song.id!r}: language {song.language!r} outside the closed scenario classes"
                )
            prepared = PreparedSong(song_id=song.id, raw_language=song.language, class_idx=song_class)
            for seg in segs:
                if seg.label == INSTRUMENTAL:
                    ctc_labels = [charset.instrumental_id]
                    lid_target = None
                else:
                    ctc_labels, dropped = charset.encode(seg.text, drop_unknown=True)
                    dropped_total += dropped
                    lid_target = None if seg.label == AMBIGUOUS else class_of(seg.label)
                prepared.segments.append(
                    TrainingSegment(
                        song_id=song.id,
                        features=segment_feature_rows(matrix, seg.start, seg.end, feature_config),
                        ctc_labels=ctc_labels,
                        lid_target=lid_target,
                    )
                )
            prepared_songs.append(prepared)
        splits[split] = prepared_songs

    if dropped_total:
        logger.warning("dropped %d transcription tokens outside the training charset", dropped_total)
    return PreparedData(
        charset=charset,
        classes=classes,
        feature_config=feature_config,
        scenario=scenario,
        splits=splits,
        training_languages=training_languages,
        dropped_tokens=dropped_total,
    )


# ---------------------------------------------------------------------------
# trained system
# ---------------------------------------------------------------------------


@dataclass
class TrainedSystem:
    mode: str
    charset: Charset
    classes: list[str]
    acoustic: AcousticModel
    classifier: LanguageClassifier | None = None
    linear: LinearClassifier | None = None
    clean_threshold: float = 0.95
    min_decoded_words: int = 3

    def segment_posteriorgrams(self, segments) -> list[np.ndarray]:
        """Posteriorgrams for a list of segments, batching equal-length ones."""
        out: list[np.ndarray | None] = [None] * len(segments)
        by_frames: dict[int, list[int]] = {}
        for i, seg in enumerate(segments):
            by_frames.setdefault(seg.features.shape[0], []).append(i)
        for _, idx in sorted(by_frames.items()):
            feats = np.stack([segments[i].features for i in idx])
            logits = self.acoustic.forward_batch(feats, train=False)
            probs = softmax(np.asarray(logits, dtype=np.float64), axis=2)
            for row, i in enumerate(idx):
                out[i] = probs[row]
        return out  # type: ignore[return-value]

    def predict_song(self, song: PreparedSong):
        """Verdict for one prepared song: (class_idx | None, scores | None)."""
        posts = self.segment_posteriorgrams(song.segments)
        if self.mode == "statistics":
            idx, scores, _ = predict_from_stats(self.linear, posts, self.clean_threshold)
        else:
            idx, scores, _ = predict_from_posteriorgrams(
                self.classifier,
                posts,
                clean_threshold=self.clean_threshold,
                min_decoded_words=self.min_decoded_words,
                space_id=self.charset.space_id,
            )
        return idx, scores

    def save(self, out_dir, fingerprint: str = "") -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        base_meta = {
            "mode": self.mode,
            "charset": list(self.charset.tokens),
            "classes": self.classes,
            "clean_threshold": self.clean_threshold,
            "min_decoded_words": self.min_decoded_words,
            "fingerprint": fingerprint,
        }
        save_checkpoint(
            out_dir / "acoustic.ckpt",
            self.acoustic.params(),
            {**base_meta, "kind": "acoustic", "config": self.acoustic.config.to_dict(), "seed": self.acoustic.seed},
        )
        if self.classifier is not None:
            save_checkpoint(
                out_dir / "classifier.ckpt",
                self.classifier.params(),
                {**base_meta, "kind": "classifier", "config": self.classifier.config.to_dict(), "seed": self.classifier.seed},
            )
        if self.linear is not None:
            save_checkpoint(
                out_dir / "stats.ckpt",
                {"weights": self.linear.weights, "bias": self.linear.bias},
                {**base_meta, "kind": "linear"},
            )

    @classmethod
    def load(cls, out_dir) -> "TrainedSystem":
        out_dir = Path(out_dir)
        arrays, meta = load_checkpoint(out_dir / "acoustic.ckpt")
        charset = Charset(tuple(meta["charset"]))
        acoustic = AcousticModel(
            charset_size=len(charset),
            config=AcousticConfig.from_dict(meta["config"]),
            seed=meta.get("seed", 0),
        ).astype(np.float32)
        acoustic.load_params(arrays)
        system = cls(
            mode=meta["mode"],
            charset=charset,
            classes=list(meta["classes"]),
            acoustic=acoustic,
            clean_threshold=meta["clean_threshold"],
            min_decoded_words=meta["min_decoded_words"],
        )
        clf_path = out_dir / "classifier.ckpt"
        if clf_path.exists():
            arrays, cmeta = load_checkpoint(clf_path)
            classifier = LanguageClassifier(
                input_dim=len(charset),
                n_classes=len(system.classes),
                config=ClassifierConfig.from_dict(cmeta["config"]),
                seed=cmeta.get("seed", 0),
            ).astype(np.float32)
            classifier.load_params(arrays)
            system.classifier = classifier
        stats_path = out_dir / "stats.ckpt"
        if stats_path.exists():
            arrays, _ = load_checkpoint(stats_path)
            system.linear = LinearClassifier(
                weights=arrays["weights"], bias=arrays["bias"], classes=list(system.classes)
            )
        return system


def _cleaned_items(system: TrainedSystem, songs, labeled_only=True):
    """(cleaned posteriorgram, lid_target) pairs for classifier training."""
    items = []
    for song in songs:
        posts = system.segment_posteriorgrams(song.segments)
        for seg, post in zip(song.segments, posts):
            if labeled_only and seg.lid_target is None:
                continue
            items.append((clean_posteriorgram(post, system.clean_threshold), seg.lid_target, post))
    return items


def _song_stats_vectors(system: TrainedSystem, songs):
    vectors, targets, kept = [], [], []
    for song in songs:
        posts = system.segment_posteriorgrams(song.segments)
        rows = [clean_posteriorgram(p, system.clean_threshold) for p in posts]
        rows = [r for r in rows if r.shape[0] > 0]
        if not rows:
            logger.warning("song %s has no voiced frames; skipped from statistics training", song.song_id)
            continue
        vectors.append(length_normalize(stats_pool(np.concatenate(rows, axis=0))))
        targets.append(song.class_idx)
        kept.append(song.song_id)
    return np.array(vectors), np.array(targets), kept


def train_system(
    prepared: PreparedData,
    mode: str,
    train_config: TrainConfig,
    acoustic_config: AcousticConfig = AcousticConfig(),
    classifier_config: ClassifierConfig = ClassifierConfig(),
    min_decoded_words: int = 3,
    log_fn=None,
    posteriorgram_dir=None,
    acoustic_override: AcousticModel | None = None,
) -> TrainedSystem:
    """Train one system variant on prepared data."""
    charset = prepared.charset
    classes = prepared.classes
    train_segments = prepared.segments("train")
    val_segments = prepared.segments("val")
    class_weights = compute_class_weights(
        [seg.lid_target for seg in train_segments], len(classes)
    )
    dtype = np.dtype(train_config.compute_dtype)
    system = TrainedSystem(
        mode=mode,
        charset=charset,
        classes=classes,
        acoustic=acoustic_override
        or AcousticModel(len(charset), acoustic_config, seed=train_config.seed).astype(dtype),
        clean_threshold=classifier_config.clean_threshold,
        min_decoded_words=min_decoded_words,
    )

    if mode in ("two_step", "statistics"):
        if acoustic_override is None:
            train_acoustic(system.acoustic, train_segments, val_segments, train_config, log_fn)
        if mode == "two_step":
            train_items = _cleaned_items(system, prepared.splits["train"])
            val_items = _cleaned_items(system, prepared.splits["val"])
            if posteriorgram_dir is not None:
                _write_posteriorgrams(posteriorgram_dir, prepared, system)
            classifier = LanguageClassifier(
                len(charset), len(classes), classifier_config, seed=train_config.seed
            ).astype(dtype)
            train_lid(
                classifier,
                [(rows, t) for rows, t, _ in train_items],
                [(rows, t) for rows, t, _ in val_items],
                class_weights,
                train_config,
                log_fn,
            )
            system.classifier = classifier
        else:
            vectors, targets, _ = _song_stats_vectors(system, prepared.splits["train"])
            song_weights = compute_class_weights(targets.tolist(), len(classes))
            system.linear = train_statistics(vectors, targets, song_weights, classes)
    elif mode in ("joint", "e2e"):
        classifier = LanguageClassifier(
            len(charset), len(classes), classifier_config, seed=train_config.seed
        ).astype(dtype)
        train_joint(
            system.acoustic, classifier, train_segments, val_segments, class_weights, train_config, log_fn
        )
        system.classifier = classifier
    else:
        raise ValueError(f"unknown training mode {mode!r}")
    return system


def _write_posteriorgrams(out_dir, prepared: PreparedData, system: TrainedSystem):
    """Persist training-split posteriorgrams in the feature-cache layout."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_rate = prepared.feature_config.frame_rate / (system.acoustic.config.pool[0] ** 2)
    for song in prepared.splits["train"]:
        posts = system.segment_posteriorgrams(song.segments)
        for i, post in enumerate(posts):
            matrix = FeatureMatrix(
                data=post.astype(np.float32), frame_rate=frame_rate, layout="posteriorgram"
            )
            save_feature_cache(out_dir / f"{song.song_id}_{i:03d}.fbin", matrix)


def evaluate_system(
    prepared: PreparedData,
    system: TrainedSystem,
    resamples: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> EvalReport:
    """Run the scenario evaluation over the test split."""
    if system.classes != prepared.classes:
        raise ValueError(
            f"label-space mismatch: system classes {system.classes} vs prepared {prepared.classes}"
        )
    songs = prepared.splits["test"]
    predictions = _map_ordered(lambda song: system.predict_song(song)[0], songs, workers)
    records = [
        (song.class_idx, pred, song.raw_language) for song, pred in zip(songs, predictions)
    ]
    return run_scenario(
        records,
        prepared.classes,
        prepared.scenario.kind,
        others_label=prepared.scenario.others_label,
        training_languages=prepared.training_languages,
        resamples=resamples,
        seed=seed,
    )
