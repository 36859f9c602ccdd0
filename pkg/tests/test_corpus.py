"""Manifest, segmentation, charset, text LID, and split behavior."""

import logging

import numpy as np
import pytest

from phonolid.corpus import (
    AMBIGUOUS,
    INSTRUMENTAL,
    Charset,
    Corpus,
    Song,
    SplitSpec,
    build_charset,
    label_segment,
    load_manifest,
    save_manifest,
    segment_song,
    split_corpus,
    train_text_lid,
)
from phonolid.corpus.segmentation import Segment, segment_spans

from conftest import make_song, write_song_features


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def _write_manifest(tmp_path, lines):
    path = tmp_path / "manifest.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_manifest_two_songs(tmp_path):
    write_song_features(tmp_path, "s1", 100)
    write_song_features(tmp_path, "s2", 100)
    path = _write_manifest(
        tmp_path,
        [
            "s1\ta1\ten\ts1.fbin\tab|0.0|0.5;cd|0.6|1.0",
            "s2\ta2\tfr\ts2.fbin\t",
        ],
    )
    corpus = load_manifest(path)
    assert len(corpus) == 2
    assert corpus.by_id("s1").words == [("ab", 0.0, 0.5), ("cd", 0.6, 1.0)]
    assert corpus.by_id("s2").language == "fr"


def test_duplicate_id_rejected(tmp_path):
    write_song_features(tmp_path, "s1", 10)
    path = _write_manifest(
        tmp_path,
        ["s1\ta1\ten\ts1.fbin\t", "s1\ta2\tfr\ts1.fbin\t"],
    )
    with pytest.raises(ValueError, match="duplicate id"):
        load_manifest(path)


def test_empty_manifest_warns(tmp_path, caplog):
    path = tmp_path / "manifest.tsv"
    path.write_text("", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        corpus = load_manifest(path)
    assert len(corpus) == 0
    assert any("empty" in r.message for r in caplog.records)


def test_missing_file_names_song(tmp_path):
    path = _write_manifest(tmp_path, ["s9\ta1\ten\tnope.fbin\t"])
    with pytest.raises(FileNotFoundError, match="s9"):
        load_manifest(path)


def test_parse_error_carries_line_number(tmp_path):
    write_song_features(tmp_path, "s1", 10)
    path = _write_manifest(
        tmp_path,
        ["s1\ta1\ten\ts1.fbin\t", "s2\ta2\tfr\tonly\tfour\tbad|fields"],
    )
    with pytest.raises(ValueError, match=":2"):
        load_manifest(path)


def test_song_invariants():
    with pytest.raises(ValueError, match="language"):
        make_song(language="")
    with pytest.raises(ValueError, match="interval"):
        make_song(words=[("ab", 1.0, 0.5)])
    with pytest.raises(ValueError, match="non-decreasing"):
        make_song(words=[("ab", 2.0, 3.0), ("cd", 1.0, 1.5)])


def test_manifest_round_trip(tmp_path):
    write_song_features(tmp_path, "s1", 10)
    song = Song(
        id="s1", artist_id="a1", language="en", path=tmp_path / "s1.fbin", words=[("ab", 0.0, 0.25)]
    )
    save_manifest(Corpus([song]), tmp_path / "out.tsv")
    corpus = load_manifest(tmp_path / "out.tsv")
    assert corpus.by_id("s1").words == [("ab", 0.0, 0.25)]


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------


def test_sixty_second_song_five_segments():
    assert segment_spans(60.0) == [(0.0, 20.0), (10.0, 30.0), (20.0, 40.0), (30.0, 50.0), (40.0, 60.0)]


def test_twenty_second_song_single_segment():
    assert segment_spans(20.0) == [(0.0, 20.0)]


def test_thirty_five_second_song_end_aligned_final():
    assert segment_spans(35.0) == [(0.0, 20.0), (10.0, 30.0), (15.0, 35.0)]


def test_short_song_whole_segment():
    assert segment_spans(12.0) == [(0.0, 12.0)]


def test_nonpositive_duration_rejected():
    with pytest.raises(ValueError):
        segment_spans(0.0)


def test_word_assignment_by_midpoint():
    song = make_song(words=[("aa", 0.0, 2.0), ("bb", 9.0, 11.0), ("cc", 25.0, 27.0)])
    segments = segment_song(song, 30.0)
    texts = [seg.text for seg in segments]
    # midpoints: aa=1.0 (first segment only), bb=10.0 (in both [0,20) and
    # [10,30)), cc=26.0 (second only)
    assert texts[0] == "aa bb"
    assert texts[1] == "bb cc"


def test_every_word_lands_in_some_segment():
    rng = np.random.default_rng(0)
    duration = 47.0
    words = []
    t = 0.0
    i = 0
    while t < duration - 1.0:
        w = t + rng.uniform(0.2, 0.8)
        words.append((f"w{i}", t, min(w, duration)))
        t = w + rng.uniform(0.05, 0.4)
        i += 1
    song = make_song(words=words)
    segments = segment_song(song, duration)
    seen = set()
    for seg in segments:
        seen.update(seg.words)
    assert seen == {w for w, _, _ in words}


class _FixedLid:
    def __init__(self, language="en", confidence=0.9):
        self.language = language
        self.confidence = confidence

    def predict(self, text):
        return self.language, self.confidence


def test_label_segment_instrumental_under_three_words():
    seg = Segment("s", 0, 20, words=["aa", "bb"])
    assert label_segment(seg, _FixedLid()) == INSTRUMENTAL


def test_label_segment_repetitive_is_ambiguous():
    seg = Segment("s", 0, 20, words=["la"] * 6)
    assert label_segment(seg, _FixedLid()) == AMBIGUOUS


def test_label_segment_low_confidence_is_ambiguous():
    seg = Segment("s", 0, 20, words=["aa", "bb", "cc", "dd"])
    assert label_segment(seg, _FixedLid(confidence=0.3)) == AMBIGUOUS


def test_label_segment_confident_language():
    seg = Segment("s", 0, 20, words=["aa", "bb", "cc", "dd"])
    assert label_segment(seg, _FixedLid("fr", 0.95)) == "fr"


def test_label_segment_pure_function():
    seg = Segment("s", 0, 20, words=["aa", "bb", "cc"])
    lid = _FixedLid("en", 0.8)
    assert label_segment(seg, lid) == label_segment(seg, lid)


# ---------------------------------------------------------------------------
# charset
# ---------------------------------------------------------------------------


def test_build_charset_small():
    segs = [Segment("s", 0, 20, words=["ab", "ba"])]
    charset = build_charset(segs)
    assert charset.tokens == ("ε", " ", "I", "a", "b")
    assert len(charset) == 5
    assert charset.blank_id == 0
    assert charset.space_id == 1
    assert charset.instrumental_id == 2


def test_charset_orders_phonemes_by_codepoint():
    segs = [Segment("s", 0, 20, words=["zb", "ʃa"])]
    charset = build_charset(segs)
    assert charset.tokens[3:] == ("a", "b", "z", "ʃ")


def test_charset_empty_segments_error():
    with pytest.raises(ValueError):
        build_charset([])


def test_charset_encode_decode():
    charset = Charset(("ε", " ", "I", "a", "b"))
    ids, dropped = charset.encode("ba ab")
    assert ids == [4, 3, 1, 3, 4]
    assert dropped == 0
    assert charset.decode(ids) == "ba ab"


def test_charset_encode_drops_unknown_and_counts():
    charset = Charset(("ε", " ", "I", "a", "b"))
    ids, dropped = charset.encode("axb", drop_unknown=True)
    assert ids == [3, 4]
    assert dropped == 1
    with pytest.raises(ValueError):
        charset.encode("axb")


def test_charset_rejects_duplicates_and_bad_specials():
    with pytest.raises(ValueError):
        Charset(("ε", " ", "I", "a", "a"))
    with pytest.raises(ValueError):
        Charset(("a", " ", "I"))


def test_charset_save_load(tmp_path):
    charset = Charset(("ε", " ", "I", "a", "ʃ"))
    charset.save(tmp_path / "c.json")
    assert Charset.load(tmp_path / "c.json") == charset


# ---------------------------------------------------------------------------
# text LID
# ---------------------------------------------------------------------------


def test_text_lid_toy_corpus():
    lid = train_text_lid([("the cat", "en"), ("le chat", "fr")])
    lang, conf = lid.predict("the dog")
    assert lang == "en"
    assert conf > 0.5


def test_text_lid_matches_hand_computation():
    import math
    from collections import Counter

    corpus = [("the cat", "en"), ("le chat", "fr")]
    lid = train_text_lid(corpus)
    text = "the dog"

    # independent hand computation of the smoothed multinomial posterior
    def grams(s):
        out = []
        for n in (1, 2, 3):
            out += [s[i : i + n] for i in range(len(s) - n + 1)]
        return out

    counts = {lang: Counter(grams(t)) for t, lang in corpus}
    vocab = len(set(grams(corpus[0][0])) | set(grams(corpus[1][0]))) + 1
    scores = {}
    for lang in ("en", "fr"):
        total = sum(counts[lang].values())
        scores[lang] = sum(
            k * math.log((counts[lang].get(g, 0) + 1.0) / (total + vocab))
            for g, k in Counter(grams(text)).items()
        )
    z = sum(math.exp(s - max(scores.values())) for s in scores.values())
    expected_conf = math.exp(scores["en"] - max(scores.values())) / z
    lang, conf = lid.predict(text)
    assert lang == "en"
    assert conf == pytest.approx(expected_conf, abs=1e-12)


def test_text_lid_empty_text():
    lid = train_text_lid([("abc", "en"), ("def", "fr")])
    assert lid.predict("") == ("unknown", 0.0)


def test_text_lid_verbatim_training_sentence():
    lid = train_text_lid([("the cat sat", "en"), ("le chat noir", "fr")])
    assert lid.predict("le chat noir")[0] == "fr"
    assert lid.predict("the cat sat")[0] == "en"


def test_text_lid_requires_training_texts():
    with pytest.raises(ValueError):
        train_text_lid([])


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def _corpus_with_artists(tmp_path, spec):
    """spec: list of (artist, language, n_songs)."""
    songs = []
    for artist, language, n in spec:
        for i in range(n):
            sid = f"{artist}_{language}_{i}"
            path = write_song_features(tmp_path, sid, 10)
            songs.append(Song(id=sid, artist_id=artist, language=language, path=path))
    return Corpus(songs)


def test_split_ten_artists_801010(tmp_path):
    corpus = _corpus_with_artists(tmp_path, [(f"a{i}", "en", 1) for i in range(10)])
    train, val, test = split_corpus(corpus, SplitSpec((0.8, 0.1, 0.1), seed=3))
    assert (len(train), len(val), len(test)) == (8, 1, 1)


def test_split_keeps_artists_together(tmp_path):
    corpus = _corpus_with_artists(
        tmp_path, [("big", "en", 5)] + [(f"a{i}", "en", 1) for i in range(5)]
    )
    train, val, test = split_corpus(corpus, SplitSpec((0.8, 0.1, 0.1), seed=0))
    for split in (train, val, test):
        big = [s for s in split if s.artist_id == "big"]
        assert len(big) in (0, 5)


def test_split_artist_disjoint_and_language_wise(tmp_path):
    spec = [(f"a{i}", "en", 2) for i in range(10)] + [(f"b{i}", "fr", 2) for i in range(10)]
    corpus = _corpus_with_artists(tmp_path, spec)
    train, val, test = split_corpus(corpus, SplitSpec((0.8, 0.1, 0.1), seed=5))
    artist_sets = [set(s.artist_id for s in c) for c in (train, val, test)]
    assert not (artist_sets[0] & artist_sets[1])
    assert not (artist_sets[0] & artist_sets[2])
    assert not (artist_sets[1] & artist_sets[2])
    for language in ("en", "fr"):
        n_train = sum(1 for s in train if s.language == language)
        assert abs(n_train - 16) <= 1


def test_split_deterministic(tmp_path):
    corpus = _corpus_with_artists(tmp_path, [(f"a{i}", "en", 1) for i in range(12)])
    ids1 = [sorted(s.id for s in c) for c in split_corpus(corpus, SplitSpec(seed=11))]
    ids2 = [sorted(s.id for s in c) for c in split_corpus(corpus, SplitSpec(seed=11))]
    assert ids1 == ids2
    ids3 = [sorted(s.id for s in c) for c in split_corpus(corpus, SplitSpec(seed=12))]
    assert ids1 != ids3  # different seed shuffles differently (overwhelmingly likely)


def test_split_empty_corpus_rejected():
    with pytest.raises(ValueError):
        split_corpus(Corpus([]), SplitSpec())


def test_split_warns_when_ratios_unreachable(tmp_path, caplog):
    corpus = _corpus_with_artists(tmp_path, [("solo", "en", 10)])
    with caplog.at_level(logging.WARNING):
        train, val, test = split_corpus(corpus, SplitSpec((0.8, 0.1, 0.1), seed=0))
    assert len(train) + len(val) + len(test) == 10
    assert any("artist structure" in r.message for r in caplog.records)


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec((0.8, 0.1, 0.2))
    with pytest.raises(ValueError):
        SplitSpec((1.0, 0.0, 0.0))
