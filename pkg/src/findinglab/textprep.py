"""Text normalization: tokenizing, lemmatizing, vocabularies, bags.

The lemmatizer is rule-based (exception table + ordered suffix rules)
rather than dictionary-based: it is deterministic, ships with the
package, and needs no external models.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import DataError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _read_packaged(name: str) -> str:
    return resources.files("findinglab.data").joinpath(name).read_text("utf-8")


def load_stopwords(path=None) -> frozenset[str]:
    """Stopword set, one token per line; defaults to the shipped list."""
    text = Path(path).read_text("utf-8") if path else _read_packaged("stopwords.txt")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def load_lemma_exceptions(path=None) -> dict[str, str]:
    """Lemma exception map from a "surface<TAB>lemma" file.

    Any lemma that is itself a surface key must map to itself, otherwise
    the lemmatizer could not be idempotent.
    """
    text = (
        Path(path).read_text("utf-8") if path else _read_packaged("lemma_exceptions.tsv")
    )
    table: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"lemma exceptions line {lineno}: expected 'surface<TAB>lemma'")
        table[parts[0].strip()] = parts[1].strip()
    for surface, lemma in table.items():
        if lemma in table and table[lemma] != lemma:
            raise DataError(
                f"lemma exception {surface!r} -> {lemma!r} conflicts with "
                f"{lemma!r} -> {table[lemma]!r}"
            )
    return table


_DEFAULT_STOPWORDS = load_stopwords()
_DEFAULT_EXCEPTIONS = load_lemma_exceptions()


@dataclass(frozen=True)
class TokenSequence:
    """Normalized tokens from one text field of one finding."""

    tokens: tuple[str, ...]
    source_field: str = "description"


def _apply_suffix_rule(token: str) -> str:
    # First matching rule wins; each rule strictly shortens the token.
    if token.endswith("ies"):
        return token[:-3] + "y"
    if token.endswith("sses"):
        return token[:-2]
    if token.endswith("ing") and len(token) - 3 >= 3:
        return token[:-3]
    if token.endswith("ed") and len(token) - 2 >= 3:
        return token[:-2]
    if token.endswith("s") and not token.endswith("ss") and len(token) - 1 >= 3:
        return token[:-1]
    return token


def lemmatize(token: str, exceptions: dict[str, str] | None = None) -> str:
    """Reduce a lowercase token to its base form.

    Applies the exception table (terminal) and then the suffix rules
    repeatedly until a fixed point, so the result is idempotent:
    ``lemmatize(lemmatize(t)) == lemmatize(t)``.
    """
    table = _DEFAULT_EXCEPTIONS if exceptions is None else exceptions
    while True:
        if token in table:
            return table[token]
        nxt = _apply_suffix_rule(token)
        if nxt == token:
            return token
        token = nxt


def preprocess(
    text: str,
    stopwords: frozenset[str] | set[str] | None = None,
    exceptions: dict[str, str] | None = None,
    source_field: str = "description",
) -> TokenSequence:
    """Normalize raw text into a token sequence.

    Lowercases, splits on non-alphanumeric boundaries, drops pure-numeric
    and single-character fragments (possessive "s" and the like), removes
    stopwords, lemmatizes, and drops any token that the lemmatizer mapped
    back onto a stopword.
    """
    stop = _DEFAULT_STOPWORDS if stopwords is None else stopwords
    out = []
    for raw in _TOKEN_RE.findall(text.lower()):
        if len(raw) < 2 or raw.isdigit():
            continue
        if raw in stop:
            continue
        token = lemmatize(raw, exceptions)
        if token in stop:
            continue
        out.append(token)
    return TokenSequence(tokens=tuple(out), source_field=source_field)


@dataclass(frozen=True)
class Vocabulary:
    """Token -> dense column index, with document frequencies."""

    index: dict[str, int]
    doc_freq: dict[str, int]
    min_df: int

    def __post_init__(self):
        if sorted(self.index.values()) != list(range(len(self.index))):
            raise DataError("vocabulary indices must be dense 0..V-1")

    def __len__(self) -> int:
        return len(self.index)

    @property
    def tokens_by_index(self) -> tuple[str, ...]:
        inv = sorted(self.index, key=self.index.get)
        return tuple(inv)


def build_vocabulary(sequences, min_df: int = 2) -> Vocabulary:
    """Index tokens with document frequency >= min_df.

    Order: descending document frequency, ties lexicographic.
    """
    if min_df < 1:
        raise DataError(f"min_df={min_df} must be >= 1")
    df: dict[str, int] = {}
    for seq in sequences:
        tokens = seq.tokens if isinstance(seq, TokenSequence) else tuple(seq)
        for token in set(tokens):
            df[token] = df.get(token, 0) + 1
    kept = sorted(
        (t for t, c in df.items() if c >= min_df), key=lambda t: (-df[t], t)
    )
    if not kept:
        raise DataError(f"no token reaches document frequency {min_df}")
    return Vocabulary(
        index={t: i for i, t in enumerate(kept)},
        doc_freq={t: df[t] for t in kept},
        min_df=min_df,
    )


def vectorize(sequence, vocab: Vocabulary) -> dict[int, int]:
    """Sparse bag of in-vocabulary token counts; OOV tokens are dropped."""
    tokens = sequence.tokens if isinstance(sequence, TokenSequence) else sequence
    bag: dict[int, int] = {}
    for token in tokens:
        col = vocab.index.get(token)
        if col is not None:
            bag[col] = bag.get(col, 0) + 1
    return bag
