"""Phrase-embedding matrices, the hashing fallback embedder, and feature fusion.

Embeddings are consumed from EMB1 files produced externally; the
in-package :func:`hash_embed` is a deterministic stand-in so nothing here
ever needs transformer weights.  Feature vectors are laid out as four
fixed blocks: [title bag | description bag | title embedding |
description embedding].
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .textprep import TokenSequence, Vocabulary

BLOCK_NAMES = ("title_bag", "desc_bag", "title_emb", "desc_emb")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-aligned embedding vectors for a list of finding ids."""

    ids: tuple[str, ...]
    values: np.ndarray
    model_name: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("embedding values must be a 2-D matrix")
        if values.shape[0] != len(self.ids):
            raise DataError(
                f"embedding row count {values.shape[0]} != id count {len(self.ids)}"
            )
        if values.shape[1] < 1:
            raise DataError("embedding dimension must be >= 1")
        if not np.all(np.isfinite(values)):
            raise DataError("embedding matrix contains non-finite values")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("embedding ids must be unique")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row(self, finding_id: str) -> np.ndarray:
        try:
            return self.values[self.ids.index(finding_id)]
        except ValueError:
            raise DataError(f"no embedding row for id {finding_id!r}") from None


def load_embeddings(path) -> EmbeddingMatrix:
    """Read an EMB1 file: header "EMB1 n d model_name", then n id+vector rows."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split(maxsplit=3)
        if len(parts) != 4 or parts[0] != "EMB1":
            raise DataError(f"{path}:1: expected header 'EMB1 <n> <d> <model_name>'")
        try:
            n, d = int(parts[1]), int(parts[2])
        except ValueError:
            raise DataError(f"{path}:1: non-integer n or d in header") from None
        model_name = parts[3]
        ids: list[str] = []
        rows = np.empty((n, d), dtype=float)
        seen: set[str] = set()
        for i in range(n):
            line = fh.readline()
            if not line:
                raise DataError(f"{path}: header declares {n} rows but only {i} follow")
            fields = line.split()
            if len(fields) != d + 1:
                raise DataError(
                    f"{path}:{i + 2}: expected id + {d} values, got {len(fields)} fields"
                )
            fid = fields[0]
            if fid in seen:
                raise DataError(f"{path}:{i + 2}: duplicate id {fid!r}")
            seen.add(fid)
            try:
                rows[i] = [float(v) for v in fields[1:]]
            except ValueError:
                raise DataError(f"{path}:{i + 2}: unparseable float value") from None
            if not np.all(np.isfinite(rows[i])):
                raise DataError(f"{path}:{i + 2}: non-finite value")
            ids.append(fid)
        if fh.readline().strip():
            raise DataError(f"{path}: more rows than the declared {n}")
    return EmbeddingMatrix(ids=tuple(ids), values=rows, model_name=model_name)


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write EMB1 with shortest round-trip float formatting."""
    for fid in matrix.ids:
        if any(ch.isspace() for ch in fid):
            raise DataError(f"id {fid!r} contains whitespace; not representable in EMB1")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        n, d = matrix.values.shape
        fh.write(f"EMB1 {n} {d} {matrix.model_name}\n")
        for fid, row in zip(matrix.ids, matrix.values):
            fh.write(fid + " " + " ".join(repr(float(v)) for v in row) + "\n")


def hash_embed(tokens, d: int, seed: int) -> np.ndarray:
    """Signed feature hashing of a token multiset into a unit vector.

    Each token is hashed (keyed on the seed) to a column and a sign;
    signed counts are accumulated and L2-normalized.  Order-invariant;
    empty input gives the zero vector.
    """
    if d < 1:
        raise DataError(f"hash embedding dimension d={d} must be >= 1")
    if isinstance(tokens, TokenSequence):
        tokens = tokens.tokens
    vec = np.zeros(d)
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big")
    for token in tokens:
        h = int.from_bytes(
            hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest(),
            "big",
        )
        sign = 1.0 if h >> 63 else -1.0
        vec[h % d] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


@dataclass(frozen=True)
class FeatureLayout:
    """Maps every fused-feature index to its block and token/component."""

    title_tokens: tuple[str, ...]
    desc_tokens: tuple[str, ...]
    title_dim: int
    desc_dim: int

    @classmethod
    def from_components(
        cls,
        title_vocab: Vocabulary,
        desc_vocab: Vocabulary,
        title_dim: int,
        desc_dim: int,
    ) -> "FeatureLayout":
        return cls(
            title_tokens=title_vocab.tokens_by_index,
            desc_tokens=desc_vocab.tokens_by_index,
            title_dim=title_dim,
            desc_dim=desc_dim,
        )

    @property
    def widths(self) -> tuple[int, int, int, int]:
        return (len(self.title_tokens), len(self.desc_tokens), self.title_dim, self.desc_dim)

    @property
    def offsets(self) -> tuple[int, int, int, int]:
        w = self.widths
        return (0, w[0], w[0] + w[1], w[0] + w[1] + w[2])

    @property
    def total_length(self) -> int:
        return sum(self.widths)

    def block_slice(self, block: str) -> slice:
        i = BLOCK_NAMES.index(block)
        start = self.offsets[i]
        return slice(start, start + self.widths[i])

    def describe(self, index: int) -> tuple[str, str]:
        """(block name, token or embedding-component label) for one index."""
        if not 0 <= index < self.total_length:
            raise DataError(f"feature index {index} outside layout of length {self.total_length}")
        for block, off, width in zip(BLOCK_NAMES, self.offsets, self.widths):
            if index < off + width:
                local = index - off
                if block == "title_bag":
                    return block, self.title_tokens[local]
                if block == "desc_bag":
                    return block, self.desc_tokens[local]
                return block, f"component_{local}"
        raise AssertionError("unreachable")


def fuse_features(
    title_bag: dict[int, int],
    desc_bag: dict[int, int],
    title_emb: np.ndarray,
    desc_emb: np.ndarray,
    layout: FeatureLayout,
) -> np.ndarray:
    """Concatenate the four blocks into one dense vector per the layout."""
    w_tb, w_db, w_te, w_de = layout.widths
    title_emb = np.asarray(title_emb, dtype=float)
    desc_emb = np.asarray(desc_emb, dtype=float)
    if title_bag and max(title_bag) >= w_tb:
        raise DataError(f"title_bag index {max(title_bag)} exceeds block width {w_tb}")
    if desc_bag and max(desc_bag) >= w_db:
        raise DataError(f"desc_bag index {max(desc_bag)} exceeds block width {w_db}")
    if title_emb.shape != (w_te,):
        raise DataError(f"title_emb width {title_emb.shape} != declared {w_te}")
    if desc_emb.shape != (w_de,):
        raise DataError(f"desc_emb width {desc_emb.shape} != declared {w_de}")
    vec = np.zeros(layout.total_length)
    for col, count in title_bag.items():
        vec[col] = count
    off = layout.offsets[1]
    for col, count in desc_bag.items():
        vec[off + col] = count
    vec[layout.block_slice("title_emb")] = title_emb
    vec[layout.block_slice("desc_emb")] = desc_emb
    return vec


def build_feature_matrix(
    ids,
    title_bags,
    desc_bags,
    title_embeddings: EmbeddingMatrix,
    desc_embeddings: EmbeddingMatrix,
    layout: FeatureLayout,
) -> np.ndarray:
    """Stack fused vectors for a whole corpus, rows aligned to ``ids``."""
    ids = tuple(ids)
    if title_embeddings.ids != ids or desc_embeddings.ids != ids:
        raise DataError("embedding matrices are not row-aligned with the corpus ids")
    out = np.empty((len(ids), layout.total_length))
    for i in range(len(ids)):
        out[i] = fuse_features(
            title_bags[i], desc_bags[i],
            title_embeddings.values[i], desc_embeddings.values[i],
            layout,
        )
    return out
