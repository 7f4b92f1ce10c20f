"""Sentence strings and the normalization that defines their identity.

Every string entering the engine is normalized once: case-folded, internal
whitespace collapsed, trailing sentence-terminal punctuation stripped. Two
sentences are the same sentence iff their normalized token sequences are
equal, so membership checks downstream are exact and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

TERMINAL_PUNCTUATION = (".", "!", "?")


def normalize_tokens(text: str) -> tuple[str, ...]:
    """Normalize raw text into the canonical token sequence.

    Case-folds, splits on whitespace (collapsing runs), and strips
    sentence-terminal punctuation from the end of the sentence. Stripping
    runs until the sentence no longer ends with a terminal mark, which
    makes the function idempotent; interior punctuation is preserved.
    """
    tokens = text.casefold().split()
    while tokens:
        last = tokens[-1]
        if last[-1] in TERMINAL_PUNCTUATION:
            last = last[:-1]
            if last:
                tokens[-1] = last
            else:
                tokens.pop()
        else:
            break
    return tuple(tokens)


def canon(text) -> str:
    """Canonical single-string form: normalized tokens joined by one space."""
    if isinstance(text, Sentence):
        return text.text
    return " ".join(normalize_tokens(text))


@dataclass(frozen=True)
class Sentence:
    """A sentence string: raw surface form plus its normalized tokens.

    Equality and hashing ignore the raw form; two Sentences are equal iff
    they normalize to the same token sequence.
    """

    tokens: tuple[str, ...]
    raw: str = field(compare=False, default="")

    @classmethod
    def of(cls, text: str) -> "Sentence":
        return cls(tokens=normalize_tokens(text), raw=text)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __str__(self) -> str:
        return self.text
