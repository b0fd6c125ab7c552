"""Tokenization and sparse lexical features (bag-of-words, TF-IDF)."""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    df: tuple[int, ...]
    n_docs: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})
        idf = np.array([math.log((1 + self.n_docs) / (1 + d)) + 1.0 for d in self.df], dtype=np.float64)
        object.__setattr__(self, "_idf", idf)

    def __len__(self) -> int:
        return len(self.terms)

    def index(self, term: str) -> int | None:
        return self._index.get(term)

    @property
    def idf(self) -> np.ndarray:
        return self._idf

    def dumps(self) -> str:
        """Plain-text form: a ``#n_docs`` header, then ``term<TAB>df`` per line.

        Lines starting with ``"# "`` are comments and ignored by :meth:`loads`.
        """
        lines = [f"#n_docs\t{self.n_docs}"]
        lines += [f"{t}\t{d}" for t, d in zip(self.terms, self.df)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = [line for line in text.splitlines() if not line.startswith("# ")]
        if not lines or not lines[0].startswith("#n_docs\t"):
            raise ValueError("vocabulary text is missing its '#n_docs' header")
        n_docs = int(lines[0].split("\t")[1])
        terms, dfs = [], []
        for line in lines[1:]:
            term, df = line.rsplit("\t", 1)
            terms.append(term)
            dfs.append(int(df))
        return cls(tuple(terms), tuple(dfs), n_docs)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_vocabulary(train_texts: Iterable[str | Sequence[str]], min_df: int = 1) -> Vocabulary:
    """Build from raw texts or pre-tokenized documents."""
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    df: Counter[str] = Counter()
    n_docs = 0
    for doc in train_texts:
        tokens = tokenize(doc) if isinstance(doc, str) else doc
        df.update(set(tokens))
        n_docs += 1
    if n_docs == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    terms = sorted(t for t, d in df.items() if d >= min_df)
    return Vocabulary(tuple(terms), tuple(df[t] for t in terms), n_docs)


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[self.indices] = self.values
        return out

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))


def _counts(tokens: Sequence[str], vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    counts: Counter[int] = Counter()
    for tok in tokens:
        idx = vocab.index(tok)
        if idx is not None:
            counts[idx] += 1
    indices = np.array(sorted(counts), dtype=np.int64)
    tf = np.array([counts[i] for i in indices], dtype=np.float64)
    return indices, tf


def bow_vectorize(tokens: Sequence[str], vocab: Vocabulary) -> SparseVector:
    indices, tf = _counts(tokens, vocab)
    return SparseVector(indices, tf, len(vocab))


def tfidf_vectorize(tokens: Sequence[str], vocab: Vocabulary) -> SparseVector:
    indices, tf = _counts(tokens, vocab)
    weights = tf * vocab.idf[indices]
    if weights.size:
        weights = weights / np.sqrt(np.dot(weights, weights))
    return SparseVector(indices, weights, len(vocab))


def stack(vectors: Sequence[SparseVector], dim: int | None = None) -> sp.csr_matrix:
    """Stack sparse vectors into an (N, V) CSR matrix."""
    if dim is None:
        if not vectors:
            raise ValueError("cannot infer the dimension of an empty stack")
        dim = vectors[0].dim
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        if v.dim != dim:
            raise ValueError(f"vector {i} has dimension {v.dim}, expected {dim}")
        indptr[i + 1] = indptr[i] + v.indices.size
    indices = np.concatenate([v.indices for v in vectors]) if vectors else np.zeros(0, np.int64)
    data = np.concatenate([v.values for v in vectors]) if vectors else np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def featurize(texts: Iterable[str], vocab: Vocabulary, kind: str = "tfidf") -> sp.csr_matrix:
    vectorize = {"tfidf": tfidf_vectorize, "bow": bow_vectorize}[kind]
    return stack([vectorize(tokenize(t), vocab) for t in texts], len(vocab))
