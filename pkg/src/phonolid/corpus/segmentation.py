"""Song segmentation and segment labeling.

Songs are cut into fixed 20 s segments with 0.5 overlap (10 s hop). When the
song end is not already covered by a regular segment, one extra 20 s segment
is appended end-aligned; songs shorter than one segment produce a single
whole-song segment. Words are assigned to every segment whose time span
contains the word midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

INSTRUMENTAL = "instrumental"
AMBIGUOUS = "ambiguous"

_EPS = 1e-9


@dataclass
class Segment:
    song_id: str
    start: float
    end: float
    words: list[str] = field(default_factory=list)
    label: str | None = None

    @property
    def text(self) -> str:
        return " ".join(self.words)

    @property
    def duration(self) -> float:
        return self.end - self.start


def segment_spans(duration: float, seg_len: float = 20.0, overlap: float = 0.5):
    """(start, end) spans for a song of the given duration."""
    if duration <= 0:
        raise ValueError(f"song duration must be positive, got {duration}")
    hop = seg_len * (1.0 - overlap)
    spans = []
    start = 0.0
    while start + seg_len <= duration + _EPS:
        spans.append((start, start + seg_len))
        start += hop
    if not spans:
        return [(0.0, duration)]
    leftover = duration - (spans[-1][0] + hop)
    final_start = duration - seg_len
    # End-aligned extra segment, skipped when it would duplicate the last one.
    if leftover >= seg_len / 2 - _EPS and final_start > spans[-1][0] + _EPS:
        spans.append((final_start, duration))
    return spans


def segment_song(song, duration: float, seg_len: float = 20.0, overlap: float = 0.5) -> list[Segment]:
    """Cut a song into segments and assign words by midpoint."""
    segments = []
    for start, end in segment_spans(duration, seg_len=seg_len, overlap=overlap):
        words = []
        for word, w_start, w_end in song.words:
            mid = 0.5 * (w_start + w_end)
            # half-open [start, end), closed at the song end so the last
            # word always lands somewhere
            if start <= mid < end or (mid == end and end >= duration - _EPS):
                words.append(word)
        segments.append(Segment(song_id=song.id, start=start, end=end, words=words))
    return segments


def label_segment(
    segment: Segment,
    text_lid,
    min_words: int = 3,
    rep_threshold: float = 0.3,
    conf_threshold: float = 0.5,
) -> str:
    """Label a segment: instrumental, ambiguous, or a language code.

    Fewer than ``min_words`` words means instrumental. Highly repetitive
    lyrics (distinct-word ratio below ``rep_threshold``) or an unconfident
    text LID verdict mean ambiguous; otherwise the text LID language wins.
    """
    if len(segment.words) < min_words:
        return INSTRUMENTAL
    distinct_ratio = len(set(segment.words)) / len(segment.words)
    if distinct_ratio < rep_threshold:
        return AMBIGUOUS
    language, confidence = text_lid.predict(segment.text)
    if confidence < conf_threshold:
        return AMBIGUOUS
    return language


def label_segments(segments, text_lid, min_words=3, rep_threshold=0.3, conf_threshold=0.5):
    """Label a list of segments in place and return it."""
    for segment in segments:
        segment.label = label_segment(
            segment,
            text_lid,
            min_words=min_words,
            rep_threshold=rep_threshold,
            conf_threshold=conf_threshold,
        )
    return segments
