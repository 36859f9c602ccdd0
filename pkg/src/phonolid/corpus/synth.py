"""Synthetic singing corpus: bigram phoneme chains rendered as banded tones.

Each language is a bigram transition matrix over a shared phoneme alphabet.
A song samples a phoneme chain, groups it into words, and renders every
phoneme as a held sine tone in that phoneme's own mel band (plus white
noise), with short silences at word boundaries. Word-level annotations match
the rendering exactly, so the phoneme identity is recoverable from the
dominant band by construction.

Generated corpora are written as feature caches plus a standard manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..features import FeatureConfig, extract_features, mel_to_hz, hz_to_mel, save_feature_cache
from .manifest import Corpus, Song, save_manifest

# 25 symbols; deliberately avoids the blank/space/instrumental specials
DEFAULT_ALPHABET = tuple("aeioubdfgklmnprstvwz") + ("ʃ", "ʒ", "ŋ", "ø", "œ")


@dataclass
class SynthLanguage:
    name: str
    transition: np.ndarray  # (P, P), rows sum to 1

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        p = self.transition.shape
        if len(p) != 2 or p[0] != p[1]:
            raise ValueError(f"language {self.name!r}: transition matrix must be square, got {p}")
        if np.any(self.transition < 0) or not np.allclose(self.transition.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError(f"language {self.name!r}: transition rows must be distributions")

    @property
    def initial(self) -> np.ndarray:
        avg = self.transition.mean(axis=0)
        return avg / avg.sum()


@dataclass
class SynthSpec:
    languages: list[SynthLanguage]
    songs_per_language: int
    song_duration: float
    noise_level: float
    seed: int
    alphabet: tuple[str, ...] = DEFAULT_ALPHABET
    artists_per_language: int = 10
    phoneme_duration: float = 0.25
    word_gap: float = 0.2
    word_length: tuple[int, int] = (2, 4)
    amplitude: float = 0.25

    def __post_init__(self):
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        for lang in self.languages:
            if lang.transition.shape[0] != len(self.alphabet):
                raise ValueError(
                    f"language {lang.name!r}: transition size {lang.transition.shape[0]} "
                    f"!= alphabet size {len(self.alphabet)}"
                )


def phoneme_band_frequencies(alphabet, config: FeatureConfig = FeatureConfig()) -> dict[str, float]:
    """Assign each phoneme the center frequency of its own mel filter.

    Filters are spread across the mel axis with at least one filter of
    separation so neighboring phonemes stay distinguishable.
    """
    n = len(alphabet)
    if n > config.n_mels - 2:
        raise ValueError(f"alphabet of {n} phonemes needs at most {config.n_mels - 2} symbols")
    mel_pts = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    centers = mel_to_hz(mel_pts[1:-1])  # filter peak frequencies
    idx = np.round(np.linspace(1, config.n_mels - 2, n)).astype(int)
    return {ph: float(centers[i]) for ph, i in zip(alphabet, idx)}


def _sample_song(rng, spec: SynthSpec, language: SynthLanguage, bands, sample_rate):
    n_samples = int(round(spec.song_duration * sample_rate))
    wave = np.zeros(n_samples)
    words = []
    phoneme_samples = int(round(spec.phoneme_duration * sample_rate))
    gap_samples = int(round(spec.word_gap * sample_rate))
    state = int(rng.choice(len(spec.alphabet), p=language.initial))
    cursor = 0
    while True:
        w_len = int(rng.integers(spec.word_length[0], spec.word_length[1] + 1))
        if cursor + w_len * phoneme_samples > n_samples:
            break
        start = cursor
        symbols = []
        for _ in range(w_len):
            symbols.append(spec.alphabet[state])
            freq = bands[spec.alphabet[state]]
            n = np.arange(cursor, cursor + phoneme_samples)
            wave[cursor : cursor + phoneme_samples] = spec.amplitude * np.sin(
                2.0 * np.pi * freq * n / sample_rate
            )
            cursor += phoneme_samples
            state = int(rng.choice(len(spec.alphabet), p=language.transition[state]))
        words.append(("".join(symbols), start / sample_rate, cursor / sample_rate))
        cursor += gap_samples
    if spec.noise_level > 0:
        wave += spec.noise_level * rng.standard_normal(n_samples)
    return wave, words


def generate_synth(
    spec: SynthSpec,
    out_dir,
    feature_config: FeatureConfig = FeatureConfig(),
    write_manifest: bool = True,
) -> Corpus:
    """Render the corpus into ``out_dir`` (feature caches + manifest.tsv)."""
    out_dir = Path(out_dir)
    feature_dir = out_dir / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)
    bands = phoneme_band_frequencies(spec.alphabet, feature_config)
    songs = []
    song_index = 0
    for language in spec.languages:
        for i in range(spec.songs_per_language):
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, song_index]))
            wave, words = _sample_song(rng, spec, language, bands, feature_config.sample_rate)
            song_id = f"{language.name}-s{i:03d}"
            path = feature_dir / f"{song_id}.fbin"
            save_feature_cache(path, extract_features(wave, feature_config))
            songs.append(
                Song(
                    id=song_id,
                    artist_id=f"{language.name}-a{i % spec.artists_per_language:02d}",
                    language=language.name,
                    path=path,
                    words=words,
                )
            )
            song_index += 1
    corpus = Corpus(songs)
    if write_manifest:
        save_manifest(corpus, out_dir / "manifest.tsv")
    return corpus


def make_block_languages(names, alphabet=DEFAULT_ALPHABET, block_size=5, cycle_weight=0.6):
    """One language per name, each owning its own block of consecutive phonemes.

    Within a block, transitions prefer the next symbol of a cycle
    (weight ``cycle_weight``) with the rest spread over the other block
    members; symbols outside the block all lead uniformly into it. This gives
    every language both a distinct phoneme inventory and a distinct bigram
    structure.
    """
    if len(names) * block_size > len(alphabet):
        raise ValueError(
            f"{len(names)} languages x block {block_size} exceeds alphabet of {len(alphabet)}"
        )
    p = len(alphabet)
    languages = []
    for k, name in enumerate(names):
        block = list(range(k * block_size, (k + 1) * block_size))
        matrix = np.zeros((p, p))
        for s in range(p):
            if s in block:
                pos = block.index(s)
                others = [b for b in block if b != s]
                matrix[s, others] = (1.0 - cycle_weight) / len(others)
                matrix[s, block[(pos + 1) % block_size]] += cycle_weight
            else:
                matrix[s, block] = 1.0 / block_size
        languages.append(SynthLanguage(name=name, transition=matrix))
    return languages


def make_mixture_language(name, parents, alphabet=DEFAULT_ALPHABET):
    """A language over the union of the parents' inventories, with fully
    shuffled (uniform) transitions: familiar phonemes, novel phonotactics."""
    p = len(alphabet)
    support = sorted({s for parent in parents for s in np.flatnonzero(parent.transition.sum(axis=0) > 0)})
    matrix = np.zeros((p, p))
    for s in range(p):
        targets = [b for b in support if b != s] or support
        matrix[s, targets] = 1.0 / len(targets)
    return SynthLanguage(name=name, transition=matrix)
