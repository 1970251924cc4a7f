"""Pre-trained word embedding tables in GloVe-style text format.

Each line holds a token followed by its vector components separated by single
spaces. A word2vec-style ``<count> <dim>`` header line is recognised and skipped.
Tables are frozen after loading: the backing matrix is read-only and acts as the
non-trainable embedding layer of the network.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import DimensionError, FormatError, ParseError

logger = logging.getLogger(__name__)

_SPLIT_RE = re.compile(r"[-\s_]+")


@dataclass(frozen=True)
class EmbeddingTable:
    name: str
    dimension: int
    index: Mapping[str, int]
    matrix: np.ndarray
    warnings: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and word.lower() in self.index

    @property
    def words(self) -> list[str]:
        return list(self.index)

    @classmethod
    def from_dict(cls, vectors: Mapping[str, np.ndarray], name: str = "table") -> "EmbeddingTable":
        """Build a table in memory. Keys are lowercased; the first key wins on collision."""
        if not vectors:
            raise FormatError("embedding table has no entries")
        index: dict[str, int] = {}
        rows = []
        warnings = []
        dim = None
        for word, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.ndim != 1:
                raise FormatError(f"vector for {word!r} is not one-dimensional")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise FormatError(f"vector for {word!r} has {vec.shape[0]} components, expected {dim}")
            if not np.all(np.isfinite(vec)):
                raise FormatError(f"vector for {word!r} has non-finite components")
            key = word.lower()
            if key in index:
                warnings.append(f"duplicate token {key!r} ignored")
                continue
            index[key] = len(rows)
            rows.append(vec)
        return cls._frozen(name, dim, index, np.vstack(rows), warnings)

    @classmethod
    def _frozen(cls, name, dim, index, matrix, warnings) -> "EmbeddingTable":
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        matrix.setflags(write=False)
        return cls(name=name, dimension=int(dim), index=MappingProxyType(index),
                   matrix=matrix, warnings=tuple(warnings))


def _is_header(fields: list[str]) -> bool:
    return len(fields) == 2 and all(f.isdigit() for f in fields)


def load_table(path, expected_dim: int | None = None, name: str | None = None) -> EmbeddingTable:
    """Load a GloVe-style text embedding file.

    Tokens are lowercased. When a lowercased token repeats, the first occurrence
    is kept and a warning is recorded on the returned table.

    Raises:
        ParseError: a component is not a finite decimal number, or a line has
            fewer than two fields.
        FormatError: lines disagree on the vector dimension.
        DimensionError: ``expected_dim`` is given and does not match.
    """
    path = Path(path)
    index: dict[str, int] = {}
    rows: list[np.ndarray] = []
    warnings: list[str] = []
    dim: int | None = None

    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n").rstrip(" ")
            if not line:
                continue
            fields = line.split(" ")
            if lineno == 1 and _is_header(fields):
                continue
            if len(fields) < 2:
                raise ParseError("expected a token followed by vector components", lineno)
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric component ({exc})", lineno) from None
            if not np.all(np.isfinite(vec)):
                raise ParseError("non-finite component", lineno)
            if dim is None:
                dim = vec.shape[0]
                if expected_dim is not None and dim != expected_dim:
                    raise DimensionError(
                        f"{path}: vectors have dimension {dim}, expected {expected_dim}")
            elif vec.shape[0] != dim:
                raise FormatError(
                    f"{path}: line {lineno} has {vec.shape[0]} components, expected {dim}")
            token = fields[0].lower()
            if token in index:
                msg = f"line {lineno}: duplicate token {token!r} ignored"
                logger.warning("%s: %s", path, msg)
                warnings.append(msg)
                continue
            index[token] = len(rows)
            rows.append(vec)

    if dim is None:
        raise FormatError(f"{path}: no embedding entries found")
    return EmbeddingTable._frozen(name or path.stem, dim, index, np.vstack(rows), warnings)


def lookup(table: EmbeddingTable, word: str) -> np.ndarray | None:
    """Case-insensitive exact lookup; ``None`` for out-of-vocabulary words."""
    row = table.index.get(word.lower())
    if row is None:
        return None
    return table.matrix[row]


def embed_descriptor(table: EmbeddingTable, descriptor: str) -> np.ndarray | None:
    """Embed a possibly multi-token descriptor such as ``"heart-warming"``.

    The whole lowercased descriptor is tried first. Otherwise it is split on
    hyphens, underscores and whitespace and the mean of the sub-token vectors
    that are present is returned. ``None`` when nothing is found.
    """
    if not descriptor or not descriptor.strip():
        raise ValueError("descriptor must be non-empty")
    key = descriptor.strip().lower()
    vec = lookup(table, key)
    if vec is not None:
        return vec
    parts = [p for p in _SPLIT_RE.split(key) if p]
    if len(parts) < 2:
        return None
    found = [v for v in (lookup(table, p) for p in parts) if v is not None]
    if not found:
        return None
    return np.mean(found, axis=0)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def nearest_words(table: EmbeddingTable, word: str, k: int = 5) -> list[tuple[str, float]]:
    """Top-``k`` neighbours of ``word`` by cosine similarity, excluding itself."""
    vec = embed_descriptor(table, word)
    if vec is None:
        return []
    norms = np.linalg.norm(table.matrix, axis=1)
    norms[norms == 0] = np.inf
    sims = table.matrix @ vec / (norms * np.linalg.norm(vec))
    order = np.argsort(-sims, kind="stable")
    words = table.words
    out = []
    for i in order:
        if words[i] == word.lower():
            continue
        out.append((words[i], float(sims[i])))
        if len(out) == k:
            break
    return out
