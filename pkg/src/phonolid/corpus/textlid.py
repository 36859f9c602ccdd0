"""Character n-gram text language identifier used for segment labeling.

A multinomial scorer over character 1- to 3-grams with Laplace smoothing and
a uniform language prior. Confidence is the normalized posterior of the top
language. This is the default implementation behind the pluggable text-LID
hook; anything with a compatible ``predict`` works.
"""

from __future__ import annotations

import math
from collections import Counter


def char_ngrams(text: str, n_max: int = 3):
    for n in range(1, n_max + 1):
        for i in range(len(text) - n + 1):
            yield text[i : i + n]


class TextLid:
    """Char n-gram multinomial language scorer."""

    def __init__(self, n_max: int = 3, alpha: float = 1.0):
        self.n_max = n_max
        self.alpha = alpha
        self.languages: list[str] = []
        self._counts: dict[str, Counter] = {}
        self._totals: dict[str, int] = {}
        self._vocab: set[str] = set()

    def train(self, corpus_texts) -> "TextLid":
        """Fit on (text, language) pairs; needs at least one text per language."""
        counts: dict[str, Counter] = {}
        for text, language in corpus_texts:
            counts.setdefault(language, Counter()).update(char_ngrams(text, self.n_max))
        if not counts:
            raise ValueError("no training texts")
        self.languages = sorted(counts)
        self._counts = counts
        self._totals = {lang: sum(c.values()) for lang, c in counts.items()}
        self._vocab = set().union(*counts.values())
        return self

    def predict(self, text: str) -> tuple[str, float]:
        """Return (language, confidence in [0, 1]); ("unknown", 0) on empty text."""
        grams = Counter(char_ngrams(text, self.n_max))
        if not grams or not self.languages:
            return "unknown", 0.0
        vocab_size = len(self._vocab) + 1  # +1 bucket for unseen grams
        scores = []
        for lang in self.languages:
            counts = self._counts[lang]
            denom = self._totals[lang] + self.alpha * vocab_size
            score = 0.0
            for gram, k in grams.items():
                score += k * math.log((counts.get(gram, 0) + self.alpha) / denom)
            scores.append(score)
        top = max(scores)
        weights = [math.exp(s - top) for s in scores]
        posterior = [w / sum(weights) for w in weights]
        best = max(range(len(self.languages)), key=lambda i: posterior[i])
        return self.languages[best], posterior[best]


def train_text_lid(corpus_texts, n_max: int = 3, alpha: float = 1.0) -> TextLid:
    return TextLid(n_max=n_max, alpha=alpha).train(corpus_texts)
