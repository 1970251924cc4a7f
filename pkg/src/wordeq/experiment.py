"""Cross-validated comparison of embedding inputs against the one-hot baseline."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import nn
from .config import band_centers, column_map, fold_source, load_config, read_builtin
from .dataset import (EqCurve, EqExample, FoldPlan, build_folds_from_text, denormalize,
                      filter_english, group_by_descriptor, load_dataset, mean_human_label,
                      normalize_curve, select_human_label)
from .embeddings import EmbeddingTable, embed_descriptor, load_table
from .errors import DataError, ExperimentError, WordEqRuntimeError
from .io_utils import atomic_write_text
from .metrics import pcm_distance

logger = logging.getLogger(__name__)

BASELINE = "no_embedding"
ERROR_SCALES = ("mae_normalized", "mae_db", "sum_normalized")


@dataclass
class ExperimentConfig:
    dataset_path: str | None = None
    tables: dict[str, str] = field(default_factory=dict)
    fold_text: str | None = None
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    out_dir: str | None = None
    master_seed: int = 20220
    fold_seed_stride: int = 1000
    include_baseline: bool = True
    column_map: dict | None = None
    band_centers_hz: np.ndarray | None = None
    english_tag: str = "english"
    consistency_threshold: float = 0.7
    hq_per_fold: int | None = 9
    hr_per_fold: int | None = 22

    def fold_seed(self, fold_number: int) -> int:
        return self.master_seed + self.fold_seed_stride * fold_number

    @classmethod
    def from_ini(cls, cfg, base_dir=None) -> "ExperimentConfig":
        t = cfg["train"]
        patience = t.get("early_stop_patience", "").strip()
        train = nn.TrainConfig(
            learning_rate=float(t["learning_rate"]), batch_size=int(t["batch_size"]),
            max_epochs=int(t["max_epochs"]), dropout_rate=float(t["dropout_rate"]),
            optimizer=t.get("optimizer", "adam"), beta1=float(t["beta1"]),
            beta2=float(t["beta2"]), epsilon=float(t["epsilon"]),
            early_stop_patience=int(patience) if patience and patience != "none" else None,
        )
        e = cfg["experiment"]
        tables = dict(cfg["embeddings"]) if cfg.has_section("embeddings") else {}
        tables = {name: _resolve(path, base_dir) for name, path in tables.items()}
        dataset = cfg["data"].get("dataset") if cfg.has_section("data") else None
        hq = cfg["folds"].get("hq_per_fold", "9").strip()
        hr = cfg["folds"].get("hr_per_fold", "22").strip()
        return cls(
            dataset_path=_resolve(dataset, base_dir) if dataset else None,
            tables=tables,
            fold_text=fold_source(cfg, base_dir),
            train=train,
            master_seed=int(e.get("master_seed", "20220")),
            fold_seed_stride=int(e.get("fold_seed_stride", "1000")),
            include_baseline=e.getboolean("include_baseline", True),
            column_map=column_map(cfg),
            band_centers_hz=band_centers(cfg),
            english_tag=cfg["columns"].get("english_tag", "english"),
            consistency_threshold=float(cfg["folds"].get("consistency_threshold", "0.7")),
            hq_per_fold=int(hq) if hq and hq != "none" else None,
            hr_per_fold=int(hr) if hr and hr != "none" else None,
        )


def _resolve(path: str, base_dir) -> str:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    return str(p)


@dataclass
class PreparedData:
    english: list[EqExample]
    plan: FoldPlan
    n_total: int

    @property
    def unique_words(self) -> int:
        return len(group_by_descriptor(self.english))


def prepare(config: ExperimentConfig, examples: Sequence[EqExample] | None = None) -> PreparedData:
    if examples is None:
        if config.dataset_path is None:
            raise DataError("no dataset given")
        examples = load_dataset(config.dataset_path, config.column_map, config.band_centers_hz)
    english = filter_english(examples, config.english_tag)
    if not english:
        raise DataError("dataset has no English examples")
    fold_text = config.fold_text
    if fold_text is None:
        fold_text = read_builtin("table1_folds.ini")
    plan = build_folds_from_text(english, fold_text,
                                 consistency_threshold=config.consistency_threshold,
                                 hq_per_fold=config.hq_per_fold, hr_per_fold=config.hr_per_fold)
    return PreparedData(english, plan, len(examples))


def indices_digest(indices: Sequence[int]) -> str:
    return hashlib.sha256(np.asarray(indices, dtype="<i8").tobytes()).hexdigest()


@dataclass
class FoldResult:
    model: str
    fold: int
    seed: int
    n_train: int
    n_test: int
    errors: dict[str, float]
    test_digest: str
    epochs: int
    final_loss: float
    skipped_train: int = 0
    skipped_test: int = 0


@dataclass
class ResultTable:
    fold_results: list[FoldResult]
    models: dict[tuple[str, int], nn.MlpModel]
    traces: dict[tuple[str, int], list[float]]
    pcm: dict[str, dict] = field(default_factory=dict)

    @property
    def model_names(self) -> list[str]:
        if self.fold_results:
            return list(dict.fromkeys(r.model for r in self.fold_results))
        return list(dict.fromkeys(name for name, _ in self.models))

    def fold_errors(self, model: str, scale: str = "mae_normalized") -> list[float]:
        return [r.errors[scale] for r in self.fold_results if r.model == model]

    def stats(self, model: str, scale: str = "mae_normalized") -> tuple[float, float]:
        """Mean and sample standard deviation over the folds."""
        vals = np.array(self.fold_errors(model, scale))
        return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    def summary(self) -> dict:
        out: dict = {"models": {}}
        for name in self.model_names:
            entry: dict = {"folds": {}}
            for r in self.fold_results:
                if r.model != name:
                    continue
                entry["folds"][str(r.fold)] = {
                    "seed": r.seed, "n_train": r.n_train, "n_test": r.n_test,
                    "epochs": r.epochs, "final_train_loss": r.final_loss,
                    "test_set_sha256": r.test_digest,
                    "skipped_train": r.skipped_train, "skipped_test": r.skipped_test,
                    **r.errors,
                }
            for scale in ERROR_SCALES:
                mean, std = self.stats(name, scale)
                entry[f"{scale}_mean"] = mean
                entry[f"{scale}_std"] = std
            if name in self.pcm:
                entry["pcm"] = self.pcm[name]
            out["models"][name] = entry
        if "human" in self.pcm:
            out["human_pcm"] = self.pcm["human"]
        return out


def _model_inputs(model: nn.MlpModel, examples: Sequence[EqExample], table: EmbeddingTable | None):
    """Encode examples, dropping those an embedding table cannot cover."""
    if model.input_mode == nn.EMBEDDING:
        kept = [ex for ex in examples if embed_descriptor(table, ex.descriptor) is not None]
    else:
        kept = list(examples)
    x = nn.encode_inputs(model, [ex.descriptor for ex in kept], table)
    return kept, x


def _train_one(name: str, table: EmbeddingTable | None, fold, data: PreparedData,
               config: ExperimentConfig):
    seed = config.fold_seed(fold.number)
    train_ex = [data.english[i] for i in fold.train_indices]
    test_ex = [data.english[i] for i in fold.test_indices]
    if table is None:
        vocab = list(dict.fromkeys(ex.descriptor for ex in train_ex))
        model = nn.init_model(nn.ONE_HOT, seed, vocab=vocab)
    else:
        model = nn.init_model(nn.EMBEDDING, seed, input_dim=table.dimension)
    kept_train, x = _model_inputs(model, train_ex, table)
    if not kept_train:
        raise ExperimentError(f"model {name!r}, fold {fold.number}: no trainable examples")
    y = np.array([normalize_curve(ex.curve) for ex in kept_train])
    cfg = nn.TrainConfig(**{**config.train.__dict__, "seed": seed})
    try:
        trained, trace = nn.train(model, x, y, cfg)
    except (WordEqRuntimeError, FloatingPointError, ValueError) as exc:
        raise ExperimentError(f"model {name!r}, fold {fold.number}: training failed: {exc}") from exc

    kept_test, xt = _model_inputs(trained, test_ex, table)
    if not kept_test:
        raise ExperimentError(f"model {name!r}, fold {fold.number}: no evaluable test examples")
    pred, _ = nn.forward(trained, xt, training=False)
    target = np.array([normalize_curve(ex.curve) for ex in kept_test])
    abs_err = np.abs(pred - target)
    errors = {
        "mae_normalized": float(abs_err.mean()),
        "mae_db": float(abs_err.mean() * 8.0),
        "sum_normalized": float(abs_err.sum(axis=1).mean()),
    }
    result = FoldResult(name, fold.number, seed, len(kept_train), len(kept_test), errors,
                        indices_digest(fold.test_indices), len(trace), trace[-1],
                        len(train_ex) - len(kept_train), len(test_ex) - len(kept_test))
    return trained, trace, result


def run_cv(config: ExperimentConfig, data: PreparedData | None = None,
           tables: Mapping[str, EmbeddingTable] | None = None) -> ResultTable:
    """Train and test every model variant on every fold."""
    if data is None:
        data = prepare(config)
    if tables is None:
        tables = {name: load_table(path, name=name) for name, path in config.tables.items()}
    variants: list[tuple[str, EmbeddingTable | None]] = list(tables.items())
    if config.include_baseline:
        variants.append((BASELINE, None))
    if not variants:
        raise ExperimentError("no model variants: give an embedding table or enable the baseline")

    results, models, traces = [], {}, {}
    for name, table in variants:
        for fold in data.plan:
            logger.info("training %s on fold %d", name, fold.number)
            model, trace, res = _train_one(name, table, fold, data, config)
            results.append(res)
            models[(name, fold.number)] = model
            traces[(name, fold.number)] = trace
    return ResultTable(results, models, traces)


def _curve(pred: np.ndarray, centers) -> EqCurve:
    return EqCurve(denormalize(pred), centers)


def pcm_entries(result: ResultTable, data: PreparedData,
                tables: Mapping[str, EmbeddingTable]) -> dict[str, list[tuple[int, str, float]]]:
    """Per-(fold, word) PCM distances for humans and every model."""
    groups = group_by_descriptor(data.english)
    counts = Counter(ex.descriptor for ex in data.english)
    entries: dict[str, list[tuple[int, str, float]]] = {"human": []}
    for name in result.model_names:
        entries[name] = []
    for fold in data.plan:
        words = sorted(w for w in fold.test_words if counts[w] >= 2)
        for word in words:
            truth = mean_human_label(groups[word])
            entries["human"].append((fold.number, word, pcm_distance(truth, select_human_label(groups[word]))))
            centers = truth.band_centers_hz
            for name in result.model_names:
                model = result.models[(name, fold.number)]
                table = tables.get(name)
                if model.input_mode == nn.EMBEDDING and embed_descriptor(table, word) is None:
                    continue
                pred = nn.predict(model, word, table).normalized
                entries[name].append((fold.number, word, pcm_distance(truth, _curve(pred, centers))))
    return entries


def run_pcm_comparison(result: ResultTable, data: PreparedData,
                       tables: Mapping[str, EmbeddingTable]) -> dict[str, dict]:
    """Mean/std PCM distance to the mean human label, over words seen at least twice."""
    entries = pcm_entries(result, data, tables)
    if not entries["human"]:
        raise ExperimentError("no test word occurs at least twice in the dataset")
    stats = {}
    for name, rows in entries.items():
        vals = np.array([r[2] for r in rows])
        stats[name] = {
            "n_words": int(vals.size),
            "mean": float(vals.mean()) if vals.size else float("nan"),
            "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        }
    result.pcm = stats
    return stats


def word_plot_table(result: ResultTable, data: PreparedData, tables: Mapping[str, EmbeddingTable],
                    word: str) -> tuple[list[str], np.ndarray]:
    """Columns and 40 rows of (band Hz, human dB, one dB column per model)."""
    word = word.strip().lower()
    fold = data.plan.fold_for_word(word)
    if fold is None:
        raise ValueError(f"{word!r} is not a test word of any fold")
    groups = group_by_descriptor(data.english)
    if word not in groups:
        raise ValueError(f"{word!r} has no examples in the dataset")
    human = select_human_label(groups[word])
    columns = ["band_center_hz", "human_db"]
    cols = [human.band_centers_hz, human.gains_db]
    for name in result.model_names:
        model = result.models[(name, fold.number)]
        pred = nn.predict(model, word, tables.get(name))
        columns.append(f"{name}_db")
        cols.append(pred.gains_db)
    return columns, np.column_stack(cols)


def export_word_plots(result: ResultTable, data: PreparedData, tables: Mapping[str, EmbeddingTable],
                      words: Sequence[str], out_dir, svg: bool = False) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for word in words:
        columns, rows = word_plot_table(result, data, tables, word)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
        path = out_dir / f"{word.strip().lower()}.csv"
        atomic_write_text(path, buf.getvalue())
        written.append(path)
        if svg:
            written.append(_render_svg(word, columns, rows, out_dir))
    return written


def _render_svg(word: str, columns, rows, out_dir: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3))
    for j, name in enumerate(columns[1:], start=1):
        ax.semilogx(rows[:, 0], rows[:, j], label=name.removesuffix("_db"))
    ax.set_xlabel("Frequency (Hz)")
    ax.set_ylabel("Gain (dB)")
    ax.set_ylim(-4.2, 4.2)
    ax.set_title(word)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / f"{word.strip().lower()}.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def results_csv(result: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "fold", "seed", "n_train", "n_test", *ERROR_SCALES])
    for r in result.fold_results:
        writer.writerow([r.model, r.fold, r.seed, r.n_train, r.n_test,
                         *(repr(r.errors[s]) for s in ERROR_SCALES)])
    return buf.getvalue()


def dumps_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n"


def load_experiment_config(path=None, overrides=None) -> ExperimentConfig:
    cfg = load_config(path, overrides)
    base = Path(path).parent if path is not None else None
    return ExperimentConfig.from_ini(cfg, base)
