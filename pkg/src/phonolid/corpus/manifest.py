"""Manifest-backed song corpus.

One song per line, UTF-8, tab-separated:

    id<TAB>artist_id<TAB>language<TAB>audio_or_feature_path<TAB>words

where ``words`` is ``word|start|end`` entries joined by ``;`` (word text is
IPA codepoints, times in seconds). The path points either at a 16 kHz mono
waveform (``.wav``) or a precomputed feature cache; relative paths resolve
against the manifest's directory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)


@dataclass
class Song:
    id: str
    artist_id: str
    language: str
    path: Path
    words: list[tuple[str, float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.language:
            raise ValueError(f"song {self.id!r}: empty language code")
        prev_start = 0.0
        for word, start, end in self.words:
            if start < 0 or end < start:
                raise ValueError(f"song {self.id!r}: bad word interval {word!r} [{start}, {end}]")
            if start < prev_start:
                raise ValueError(f"song {self.id!r}: word starts not non-decreasing at {word!r}")
            prev_start = start

    @property
    def text(self) -> str:
        return " ".join(w for w, _, _ in self.words)

    def uses_feature_cache(self) -> bool:
        return self.path.suffix.lower() != ".wav"


@dataclass
class Corpus:
    songs: list[Song] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for song in self.songs:
            if song.id in seen:
                raise ValueError(f"duplicate id {song.id!r}")
            seen.add(song.id)

    def __len__(self):
        return len(self.songs)

    def __iter__(self):
        return iter(self.songs)

    def by_id(self, song_id: str) -> Song:
        for song in self.songs:
            if song.id == song_id:
                return song
        raise KeyError(song_id)

    def languages(self) -> list[str]:
        return sorted({song.language for song in self.songs})

    def subset(self, song_ids) -> "Corpus":
        wanted = set(song_ids)
        return Corpus([song for song in self.songs if song.id in wanted])


def _parse_words(chunk: str) -> list[tuple[str, float, float]]:
    words = []
    if not chunk:
        return words
    for entry in chunk.split(";"):
        parts = entry.split("|")
        if len(parts) != 3:
            raise ValueError(f"bad word entry {entry!r} (expected word|start|end)")
        words.append((parts[0], float(parts[1]), float(parts[2])))
    return words


def load_manifest(path) -> Corpus:
    """Parse a manifest file; every referenced path must exist."""
    path = Path(path)
    root = path.parent
    songs = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
            song_id, artist_id, language, raw_path, words_chunk = fields
            if song_id in seen_ids:
                raise ValueError(f"{path}:{lineno}: duplicate id {song_id!r}")
            seen_ids.add(song_id)
            try:
                words = _parse_words(words_chunk)
                audio_path = Path(raw_path)
                if not audio_path.is_absolute():
                    audio_path = root / audio_path
                song = Song(id=song_id, artist_id=artist_id, language=language, path=audio_path, words=words)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if not song.path.exists():
                raise FileNotFoundError(f"song {song_id!r}: missing file {song.path}")
            songs.append(song)
    if not songs:
        logger.warning("manifest %s is empty", path)
    return Corpus(songs)


def save_manifest(corpus: Corpus, path) -> None:
    """Write a corpus back out, with paths relative to the manifest when possible."""
    path = Path(path)
    root = path.parent.resolve()
    lines = []
    for song in corpus:
        try:
            rel = song.path.resolve().relative_to(root)
        except ValueError:
            rel = song.path
        words = ";".join(f"{w}|{s:.3f}|{e:.3f}" for w, s, e in song.words)
        lines.append(f"{song.id}\t{song.artist_id}\t{song.language}\t{rel.as_posix()}\t{words}")
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
