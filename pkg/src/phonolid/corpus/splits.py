"""Language-wise, artist-aware corpus splitting.

Artists never span two splits. Within each language, whole artists are
assigned greedily to whichever split is furthest below its target song
count, after a seeded shuffle; songs of an artist already placed by an
earlier language stay where that artist lives.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass

from .manifest import Corpus

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or not all(0.0 < r < 1.0 for r in self.ratios):
            raise ValueError(f"split ratios must be three fractions in (0,1), got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {self.ratios}")


def split_corpus(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Partition songs into (train, val, test) with artist disjointness."""
    if len(corpus) == 0:
        raise ValueError("cannot split an empty corpus")
    rng = random.Random(spec.seed)
    artist_split: dict[str, int] = {}

    by_language: dict[str, list] = {}
    for song in corpus:
        by_language.setdefault(song.language, []).append(song)

    for language in sorted(by_language):
        songs = by_language[language]
        artist_counts: dict[str, int] = {}
        for song in songs:
            artist_counts[song.artist_id] = artist_counts.get(song.artist_id, 0) + 1
        n_songs = len(songs)
        targets = [r * n_songs for r in spec.ratios]
        placed = [0.0, 0.0, 0.0]
        pending = []
        for artist in sorted(artist_counts):
            if artist in artist_split:
                placed[artist_split[artist]] += artist_counts[artist]
            else:
                pending.append(artist)
        rng.shuffle(pending)
        # largest artists first so small ones can still balance the quotas
        pending.sort(key=lambda a: -artist_counts[a])
        for artist in pending:
            deficits = [targets[i] - placed[i] for i in range(3)]
            choice = max(range(3), key=lambda i: deficits[i])
            artist_split[artist] = choice
            placed[choice] += artist_counts[artist]
        for i, name in enumerate(SPLIT_NAMES):
            if abs(placed[i] - targets[i]) > 1.0:
                logger.warning(
                    "language %s: %s split has %d songs, target %.1f (artist structure limits the ratios)",
                    language,
                    name,
                    int(placed[i]),
                    targets[i],
                )

    buckets: tuple[list, list, list] = ([], [], [])
    for song in corpus:
        buckets[artist_split[song.artist_id]].append(song)
    return Corpus(buckets[0]), Corpus(buckets[1]), Corpus(buckets[2])
