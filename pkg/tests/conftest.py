import numpy as np
import pytest

from phonolid.corpus.manifest import Corpus, Song
from phonolid.features import FeatureConfig, FeatureMatrix, save_feature_cache


@pytest.fixture
def feature_config():
    return FeatureConfig()


def make_song(song_id="s0", artist="a0", language="en", path="x.fbin", words=None):
    return Song(id=song_id, artist_id=artist, language=language, path=path, words=words or [])


def write_song_features(tmp_path, song_id, n_frames, dim=123, seed=0, frame_rate=62.5):
    """Write a random feature cache and return its path."""
    rng = np.random.default_rng(seed)
    path = tmp_path / f"{song_id}.fbin"
    matrix = FeatureMatrix(data=rng.normal(size=(n_frames, dim)).astype(np.float32), frame_rate=frame_rate)
    save_feature_cache(path, matrix)
    return path


def toy_corpus(tmp_path, n_songs=4, language="en", seconds=20.0, words_per_song=4):
    """Corpus of feature-cache songs with simple word annotations."""
    cfg = FeatureConfig()
    songs = []
    for i in range(n_songs):
        n_frames = cfg.n_frames(int(seconds * cfg.sample_rate))
        path = write_song_features(tmp_path, f"{language}{i}", n_frames, seed=i)
        words = [(chr(ord("a") + (i + j) % 5) * 2, 0.5 + j, 1.0 + j) for j in range(words_per_song)]
        songs.append(
            Song(id=f"{language}{i}", artist_id=f"art{i}", language=language, path=path, words=words)
        )
    return Corpus(songs)
