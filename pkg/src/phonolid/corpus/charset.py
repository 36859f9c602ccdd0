"""Token inventory for the acoustic model output.

The charset is built once from the training segments: the blank token, the
word-boundary space, the instrumental token, then every IPA codepoint seen in
training, ordered by Unicode codepoint. Ids are stable; blank is always 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

BLANK_TOKEN = "ε"  # ε
SPACE_TOKEN = " "
INSTRUMENTAL_TOKEN = "I"

_SPECIALS = (BLANK_TOKEN, SPACE_TOKEN, INSTRUMENTAL_TOKEN)


@dataclass(frozen=True)
class Charset:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("charset tokens must be unique")
        if self.tokens[:3] != _SPECIALS:
            raise ValueError(f"charset must start with {_SPECIALS}")

    def __len__(self):
        return len(self.tokens)

    @property
    def blank_id(self) -> int:
        return 0

    @property
    def space_id(self) -> int:
        return 1

    @property
    def instrumental_id(self) -> int:
        return 2

    def id_of(self, token: str) -> int:
        return self.tokens.index(token)

    def encode(self, text: str, drop_unknown: bool = False) -> tuple[list[int], int]:
        """Text -> token ids, with the space token between words.

        Returns ``(ids, n_dropped)``. Codepoints outside the charset are
        dropped and counted if ``drop_unknown`` is set, otherwise they raise.
        """
        lookup = {t: i for i, t in enumerate(self.tokens)}
        ids: list[int] = []
        dropped = 0
        first = True
        for word in text.split(SPACE_TOKEN):
            if not word:
                continue
            if not first:
                ids.append(self.space_id)
            first = False
            for ch in word:
                token_id = lookup.get(ch)
                if token_id is None:
                    if drop_unknown:
                        dropped += 1
                        continue
                    raise ValueError(f"token {ch!r} not in charset")
                ids.append(token_id)
        return ids, dropped

    def decode(self, ids) -> str:
        return "".join(self.tokens[i] for i in ids)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"tokens": list(self.tokens)}, fh, ensure_ascii=False, indent=0)

    @classmethod
    def load(cls, path) -> "Charset":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(tokens=tuple(payload["tokens"]))


def build_charset(train_segments) -> Charset:
    """Union of phonemes in training segments + blank, space, instrumental."""
    segments = list(train_segments)
    if not segments:
        raise ValueError("cannot build a charset from zero segments")
    phonemes: set[str] = set()
    for segment in segments:
        for word in segment.words:
            phonemes.update(word)
    phonemes.difference_update(_SPECIALS)
    return Charset(tokens=_SPECIALS + tuple(sorted(phonemes)))
