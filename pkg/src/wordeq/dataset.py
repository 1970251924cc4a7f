"""SocialEQ-style records, dB normalisation and the four-fold word split."""

from __future__ import annotations

import configparser
import csv
import io
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import NUM_BANDS
from .config import split_list
from .errors import FoldConstructionError, ParseError, SchemaError
from .io_utils import atomic_write_text

logger = logging.getLogger(__name__)

GAIN_LIMIT_DB = 4.0
CONSISTENCY_THRESHOLD = 0.7
ENGLISH_TAG = "english"


def default_band_centers() -> np.ndarray:
    return np.geomspace(20.0, 20000.0, NUM_BANDS)


@dataclass(frozen=True, eq=False)
class EqCurve:
    gains_db: np.ndarray
    band_centers_hz: np.ndarray

    def __post_init__(self):
        gains = np.array(self.gains_db, dtype=np.float64)
        centers = np.array(self.band_centers_hz, dtype=np.float64)
        if gains.shape != (NUM_BANDS,) or centers.shape != (NUM_BANDS,):
            raise ValueError(f"an EQ curve needs exactly {NUM_BANDS} gains and band centers")
        if np.any(centers <= 0) or np.any(np.diff(centers) <= 0):
            raise ValueError("band centers must be positive and strictly increasing")
        if not np.all(np.isfinite(gains)):
            raise ValueError("EQ gains must be finite")
        if np.any(np.abs(gains) > GAIN_LIMIT_DB):
            raise ValueError(f"EQ gains must lie within +/-{GAIN_LIMIT_DB} dB")
        gains.setflags(write=False)
        centers.setflags(write=False)
        object.__setattr__(self, "gains_db", gains)
        object.__setattr__(self, "band_centers_hz", centers)

    @classmethod
    def flat(cls, band_centers_hz=None, gain_db: float = 0.0) -> "EqCurve":
        centers = default_band_centers() if band_centers_hz is None else band_centers_hz
        return cls(np.full(NUM_BANDS, gain_db), centers)


@dataclass(frozen=True)
class EqExample:
    descriptor: str
    language: str
    audio_id: str
    consistency: float
    curve: EqCurve

    def __post_init__(self):
        if not self.descriptor:
            raise ValueError("descriptor must be non-empty")
        if not 0.0 <= self.consistency <= 1.0:
            raise ValueError(f"consistency {self.consistency} outside [0, 1]")


def normalize_descriptor(word: str) -> str:
    return word.strip().lower()


def normalize_curve(curve) -> np.ndarray:
    """Map gains in [-4, +4] dB linearly onto [0, 1]."""
    gains = curve.gains_db if isinstance(curve, EqCurve) else np.asarray(curve, dtype=np.float64)
    return (gains + GAIN_LIMIT_DB) / (2 * GAIN_LIMIT_DB)


def denormalize(target) -> np.ndarray:
    """Inverse of :func:`normalize_curve`; components must lie in [0, 1]."""
    target = np.asarray(target, dtype=np.float64)
    if np.any(~np.isfinite(target)) or np.any(target < 0.0) or np.any(target > 1.0):
        raise ValueError("normalized EQ values must lie within [0, 1]")
    return target * (2 * GAIN_LIMIT_DB) - GAIN_LIMIT_DB


def _parse_float(text: str, what: str) -> float:
    value = float(text.strip())
    if not np.isfinite(value):
        raise ValueError(f"non-finite {what}")
    return value


def load_dataset(path, column_map: dict | None = None, band_centers_hz=None,
                 warnings: list[str] | None = None) -> list[EqExample]:
    """Read a comma-separated export with a header row.

    ``column_map`` names the descriptor, language, audio_id and consistency
    columns and lists the 40 gain columns in band order under ``"gains"``.
    ``units`` may be ``"db"`` (default) or ``"normalized"``. Out-of-range gains
    are clamped to +/-4 dB and a message is appended to ``warnings``.
    """
    cmap = dict(column_map or default_column_map())
    gain_cols = list(cmap.get("gains", []))
    if len(gain_cols) != NUM_BANDS:
        raise SchemaError(f"column map lists {len(gain_cols)} gain columns, expected {NUM_BANDS}")
    units = cmap.get("units", "db").lower()
    if units not in ("db", "normalized"):
        raise SchemaError(f"unknown gain units {units!r}")
    centers = default_band_centers() if band_centers_hz is None else np.asarray(band_centers_hz, float)
    notes = warnings if warnings is not None else []

    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row expected") from None
        pos = {name: i for i, name in enumerate(header)}
        wanted = [cmap["descriptor"], cmap["language"], cmap["audio_id"], cmap["consistency"], *gain_cols]
        missing = [c for c in wanted if c not in pos]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        gain_idx = [pos[c] for c in gain_cols]

        examples: list[EqExample] = []
        bad_rows: list[str] = []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                if len(row) < len(header):
                    raise ValueError(f"{len(row)} fields, header has {len(header)}")
                descriptor = normalize_descriptor(row[pos[cmap["descriptor"]]])
                if not descriptor:
                    raise ValueError("empty descriptor")
                consistency = _parse_float(row[pos[cmap["consistency"]]], "consistency")
                if not 0.0 <= consistency <= 1.0:
                    raise ValueError(f"consistency {consistency} outside [0, 1]")
                gains = np.array([_parse_float(row[i], "gain") for i in gain_idx])
            except ValueError as exc:
                bad_rows.append(f"row {rowno}: {exc}")
                continue
            if units == "normalized":
                gains = gains * (2 * GAIN_LIMIT_DB) - GAIN_LIMIT_DB
            if np.any(np.abs(gains) > GAIN_LIMIT_DB):
                msg = (f"row {rowno}: {int(np.sum(np.abs(gains) > GAIN_LIMIT_DB))} gain(s) "
                       f"clamped to +/-{GAIN_LIMIT_DB:g} dB")
                logger.warning("%s: %s", path, msg)
                notes.append(msg)
                gains = np.clip(gains, -GAIN_LIMIT_DB, GAIN_LIMIT_DB)
            examples.append(EqExample(
                descriptor=descriptor,
                language=row[pos[cmap["language"]]].strip(),
                audio_id=row[pos[cmap["audio_id"]]].strip(),
                consistency=consistency,
                curve=EqCurve(gains, centers),
            ))
    if bad_rows:
        raise ParseError(f"{path}: unparseable rows: " + "; ".join(bad_rows))
    return examples


def default_column_map() -> dict:
    return {
        "descriptor": "descriptor",
        "language": "language",
        "audio_id": "audio_id",
        "consistency": "consistency",
        "gains": [f"gain_{i:02d}" for i in range(NUM_BANDS)],
        "units": "db",
    }


def write_dataset(examples: Sequence[EqExample], path, column_map: dict | None = None) -> None:
    cmap = column_map or default_column_map()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([cmap["descriptor"], cmap["language"], cmap["audio_id"],
                     cmap["consistency"], *cmap["gains"]])
    for ex in examples:
        writer.writerow([ex.descriptor, ex.language, ex.audio_id, repr(float(ex.consistency)),
                         *(repr(float(g)) for g in ex.curve.gains_db)])
    atomic_write_text(path, buf.getvalue())


def filter_english(examples: Iterable[EqExample], english_tag: str = ENGLISH_TAG) -> list[EqExample]:
    tag = english_tag.strip().lower()
    return [ex for ex in examples if ex.language.strip().lower() == tag]


def unique_descriptors(examples: Iterable[EqExample]) -> list[str]:
    """Distinct descriptors in first-occurrence order."""
    return list(OrderedDict.fromkeys(ex.descriptor for ex in examples))


def group_by_descriptor(examples: Iterable[EqExample]) -> "OrderedDict[str, list[EqExample]]":
    groups: OrderedDict[str, list[EqExample]] = OrderedDict()
    for ex in examples:
        groups.setdefault(ex.descriptor, []).append(ex)
    return groups


def select_human_label(examples: Sequence[EqExample]) -> EqCurve:
    """Curve of the most consistent example; the earliest row wins ties."""
    if not examples:
        raise ValueError("no examples given")
    best = examples[0]
    for ex in examples[1:]:
        if ex.consistency > best.consistency:
            best = ex
    return best.curve


def mean_human_label(examples: Sequence[EqExample]) -> EqCurve:
    if len(examples) < 2:
        raise ValueError("the mean human label needs at least two examples of the word")
    gains = np.mean([ex.curve.gains_db for ex in examples], axis=0)
    return EqCurve(gains, examples[0].curve.band_centers_hz)


# -- folds ---------------------------------------------------------------------


@dataclass(frozen=True)
class FoldWords:
    hq: tuple[str, ...]
    hr: tuple[str, ...]

    @property
    def words(self) -> tuple[str, ...]:
        return self.hq + self.hr


def parse_fold_words(text: str) -> list[FoldWords]:
    """Parse the ``[foldN]`` sections (keys ``hq`` and ``hr``) of a fold file."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    sections = sorted((s for s in parser.sections() if s.lower().startswith("fold")),
                      key=lambda s: int(s[4:]))
    if not sections:
        raise FoldConstructionError("fold file has no [foldN] sections")
    folds = []
    for sec in sections:
        hq = tuple(normalize_descriptor(w) for w in split_list(parser[sec].get("hq", "")))
        hr = tuple(normalize_descriptor(w) for w in split_list(parser[sec].get("hr", "")))
        folds.append(FoldWords(hq=hq, hr=hr))
    return folds


@dataclass(frozen=True)
class Fold:
    number: int
    test_words: frozenset[str]
    hq_words: frozenset[str]
    hr_words: frozenset[str]
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]
    warnings: tuple[str, ...] = field(default=())

    def __iter__(self):
        return iter(self.folds)

    def __len__(self) -> int:
        return len(self.folds)

    def fold_for_word(self, word: str) -> Fold | None:
        word = normalize_descriptor(word)
        for fold in self.folds:
            if word in fold.test_words:
                return fold
        return None


def build_folds(examples: Sequence[EqExample], hq_words: Iterable[str], hr_words: Iterable[str],
                fold_assignments: Sequence[Iterable[str]], *,
                consistency_threshold: float = CONSISTENCY_THRESHOLD,
                hq_per_fold: int | None = 9, hr_per_fold: int | None = 22) -> FoldPlan:
    """Split ``examples`` into train/test sets, one per entry of ``fold_assignments``.

    A fold's test set holds the examples of its words whose consistency is
    strictly above ``consistency_threshold``; its training set holds every
    example of every other word, unfiltered.
    """
    hq_all = {normalize_descriptor(w) for w in hq_words}
    hr_all = {normalize_descriptor(w) for w in hr_words}
    both = hq_all & hr_all
    if both:
        raise FoldConstructionError(f"words listed as both HQ and HR: {sorted(both)}")

    folds = []
    notes = []
    covered_hq: set[str] = set()
    covered_hr: set[str] = set()
    for number, assigned in enumerate(fold_assignments, start=1):
        words = frozenset(normalize_descriptor(w) for w in assigned)
        unknown = words - hq_all - hr_all
        if unknown:
            raise FoldConstructionError(f"fold {number}: words neither HQ nor HR: {sorted(unknown)}")
        hq = words & hq_all
        hr = words & hr_all
        if hq_per_fold is not None and len(hq) != hq_per_fold:
            raise FoldConstructionError(f"fold {number}: {len(hq)} HQ words, expected {hq_per_fold}")
        if hr_per_fold is not None and len(hr) != hr_per_fold:
            raise FoldConstructionError(f"fold {number}: {len(hr)} HR words, expected {hr_per_fold}")
        train_idx = tuple(i for i, ex in enumerate(examples) if ex.descriptor not in words)
        test_idx = tuple(i for i, ex in enumerate(examples)
                         if ex.descriptor in words and ex.consistency > consistency_threshold)
        leaked = {examples[i].descriptor for i in train_idx} & words
        if leaked:
            raise FoldConstructionError(f"fold {number}: test words in training set: {sorted(leaked)}")
        tested = {examples[i].descriptor for i in test_idx}
        for w in sorted(words - tested):
            notes.append(f"fold {number}: no test example for {w!r} above consistency "
                         f"{consistency_threshold}")
        covered_hq |= hq
        covered_hr |= hr
        folds.append(Fold(number, words, frozenset(hq), frozenset(hr), train_idx, test_idx))

    if covered_hq != hq_all or covered_hr != hr_all:
        missing = sorted((hq_all - covered_hq) | (hr_all - covered_hr))
        raise FoldConstructionError(f"words never tested in any fold: {missing}")
    for msg in notes:
        logger.warning(msg)
    return FoldPlan(tuple(folds), tuple(notes))


def build_folds_from_text(examples: Sequence[EqExample], text: str, **kwargs) -> FoldPlan:
    folds = parse_fold_words(text)
    hq = {w for f in folds for w in f.hq}
    hr = {w for f in folds for w in f.hr}
    return build_folds(examples, hq, hr, [f.words for f in folds], **kwargs)
