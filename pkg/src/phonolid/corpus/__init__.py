"""Corpus handling: manifests, segmentation, charsets, splits, synthesis."""

from .charset import BLANK_TOKEN, INSTRUMENTAL_TOKEN, SPACE_TOKEN, Charset, build_charset
from .manifest import Corpus, Song, load_manifest, save_manifest
from .segmentation import AMBIGUOUS, INSTRUMENTAL, Segment, label_segment, label_segments, segment_song
from .splits import SplitSpec, split_corpus
from .synth import SynthLanguage, SynthSpec, generate_synth, make_block_languages, make_mixture_language
from .textlid import TextLid, train_text_lid

__all__ = [
    "AMBIGUOUS",
    "BLANK_TOKEN",
    "Charset",
    "Corpus",
    "INSTRUMENTAL",
    "INSTRUMENTAL_TOKEN",
    "SPACE_TOKEN",
    "Segment",
    "Song",
    "SplitSpec",
    "SynthLanguage",
    "SynthSpec",
    "TextLid",
    "build_charset",
    "generate_synth",
    "label_segment",
    "label_segments",
    "load_manifest",
    "make_block_languages",
    "make_mixture_language",
    "save_manifest",
    "segment_song",
    "split_corpus",
    "train_text_lid",
]
