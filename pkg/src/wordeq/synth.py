"""Synthetic SocialEQ-like data with planted semantic structure.

Descriptors are grouped into clusters. Every cluster owns a smooth prototype EQ
curve and a random direction in embedding space; a word's curve is its
cluster prototype plus a small smooth deviation, and its embedding vector is
the cluster direction plus isotropic noise. Words in the same cluster are
therefore near-synonyms both semantically and in EQ space, which is the
structure an embedding input can exploit and a one-hot input cannot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import EMBEDDING_DIM, NUM_BANDS
from .config import read_builtin
from .dataset import GAIN_LIMIT_DB, EqCurve, EqExample, default_band_centers, parse_fold_words
from .embeddings import EmbeddingTable
from .io_utils import atomic_write_text

OTHER_LANGUAGES = ("spanish", "italian", "german", "french", "portuguese")


@dataclass(frozen=True)
class SyntheticCorpus:
    examples: list[EqExample]
    table: EmbeddingTable
    clusters: dict[str, int]
    prototypes: np.ndarray


def _smooth_curve(rng: np.random.Generator, xs: np.ndarray, n_bumps: int, amp: float) -> np.ndarray:
    curve = np.zeros_like(xs)
    for _ in range(n_bumps):
        center = rng.uniform(xs[0], xs[-1])
        width = rng.uniform(0.15, 0.5)
        curve += rng.uniform(-amp, amp) * np.exp(-0.5 * ((xs - center) / width) ** 2)
    return curve


def _split_total(rng: np.random.Generator, total: int, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Integer counts within [lows, highs] summing exactly to ``total``."""
    if not lows.sum() <= total <= highs.sum():
        raise ValueError(f"cannot distribute {total} examples within the given bounds")
    counts = lows.copy()
    remaining = total - counts.sum()
    while remaining > 0:
        room = np.flatnonzero(counts < highs)
        pick = rng.choice(room, size=min(remaining, room.size), replace=False)
        counts[pick] += 1
        remaining -= pick.size
    return counts


def make_synthetic(seed: int = 0, *, n_total: int = 1595, n_english: int = 918,
                   n_unique: int = 388, n_clusters: int = 12, dim: int = EMBEDDING_DIM,
                   word_spread_db: float = 1.0, example_spread_db: float = 0.25,
                   jitter_db: float = 0.05,
                   embedding_noise: float = 0.35, fold_text: str | None = None,
                   band_centers_hz=None) -> SyntheticCorpus:
    """Generate a corpus whose English part contains every fold word.

    Fold words always get at least two examples, one of them with consistency
    above 0.7, so each becomes a test word and qualifies for the two-occurrence
    rule. Filler words (``synNNN``) stay at or below 0.7.
    """
    rng = np.random.default_rng(seed)
    centers = default_band_centers() if band_centers_hz is None else np.asarray(band_centers_hz, float)
    xs = np.log10(centers)

    folds = parse_fold_words(fold_text if fold_text is not None else read_builtin("table1_folds.ini"))
    fold_words = list(dict.fromkeys(w for f in folds for w in f.words))
    if n_unique < len(fold_words):
        raise ValueError(f"n_unique={n_unique} is smaller than the {len(fold_words)} fold words")
    fillers = [f"syn{i:03d}" for i in range(n_unique - len(fold_words))]
    words = fold_words + fillers

    prototypes = np.array([_smooth_curve(rng, xs, 3, 3.0) for _ in range(n_clusters)])
    prototypes = np.clip(prototypes, -3.0, 3.0)
    directions = rng.standard_normal((n_clusters, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    cluster_of = {w: int(rng.integers(n_clusters)) for w in words}
    word_curve = {w: prototypes[cluster_of[w]] + _smooth_curve(rng, xs, 2, word_spread_db)
                  for w in words}

    is_fold = np.array([w in set(fold_words) for w in words])
    lows = np.where(is_fold, 2, 1)
    highs = np.where(is_fold, 5, 4)
    counts = _split_total(rng, n_english, lows, highs)

    english: list[EqExample] = []
    for w, n, fold_word in zip(words, counts, is_fold):
        for k in range(n):
            if fold_word and k == 0:
                consistency = rng.uniform(0.72, 1.0)
            elif fold_word:
                consistency = rng.uniform(0.3, 1.0)
            else:
                consistency = rng.uniform(0.05, 0.7)
            noise = (1.5 - consistency) * _smooth_curve(rng, xs, 2, example_spread_db)
            noise += jitter_db * rng.standard_normal(NUM_BANDS)
            gains = np.clip(word_curve[w] + noise, -GAIN_LIMIT_DB, GAIN_LIMIT_DB)
            english.append(EqExample(w, "english", f"audio{rng.integers(3)}",
                                     round(float(consistency), 6), EqCurve(gains, centers)))
    order = rng.permutation(len(english))
    english = [english[i] for i in order]

    foreign = []
    for i in range(n_total - n_english):
        lang = OTHER_LANGUAGES[i % len(OTHER_LANGUAGES)]
        gains = np.clip(_smooth_curve(rng, xs, 3, 3.0), -GAIN_LIMIT_DB, GAIN_LIMIT_DB)
        foreign.append(EqExample(f"palabra{i % 200:03d}", lang, f"audio{rng.integers(3)}",
                                 round(float(rng.uniform(0, 1)), 6), EqCurve(gains, centers)))

    merged: list[EqExample] = []
    slots = np.sort(rng.choice(n_total, size=len(foreign), replace=False))
    fi = ei = 0
    for pos in range(n_total):
        if fi < len(slots) and slots[fi] == pos:
            merged.append(foreign[fi])
            fi += 1
        else:
            merged.append(english[ei])
            ei += 1

    vectors = {}
    for w in words:
        vec = directions[cluster_of[w]] + embedding_noise * rng.standard_normal(dim) / np.sqrt(dim)
        vectors[w] = vec
    # sub-tokens so multi-token descriptors resolve through averaging as well
    for w in words:
        for part in w.split("-"):
            if part not in vectors:
                vectors[part] = directions[cluster_of[w]] + embedding_noise * rng.standard_normal(dim) / np.sqrt(dim)
    table = EmbeddingTable.from_dict(vectors, name=f"synthetic-{seed}")
    return SyntheticCorpus(merged, table, cluster_of, prototypes)


def write_table(table: EmbeddingTable, path) -> None:
    """Write a table in the GloVe text format read by ``load_table``."""
    atomic_write_text(path, "".join(
        word + " " + " ".join(repr(float(v)) for v in table.matrix[row]) + "\n"
        for word, row in table.index.items()))
