"""Command-line entry point: ``wordeq <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime error
(training divergence, failed experiment).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, nn
from .config import band_centers, load_config, to_dict
from .dataset import EqCurve, write_dataset
from .embeddings import load_table
from .errors import DataError, WordEqRuntimeError
from .io_utils import atomic_write_text

logger = logging.getLogger("wordeq")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _versions() -> dict:
    import scipy

    from .metrics import BACKEND
    return {"wordeq": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pcm_backend": BACKEND}


def write_manifest(out_dir, command: str, args: argparse.Namespace, cfg=None, seed=None) -> Path:
    manifest = {
        "command": command,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                 if k != "func"},
        "config": to_dict(cfg) if cfg is not None else None,
        "seed": seed,
        "versions": _versions(),
    }
    path = Path(out_dir) / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _overrides(args) -> dict:
    over: dict[str, dict[str, str]] = {}
    if getattr(args, "dataset", None):
        over.setdefault("data", {})["dataset"] = str(Path(args.dataset).resolve())
    if getattr(args, "epochs", None) is not None:
        over.setdefault("train", {})["max_epochs"] = str(args.epochs)
    if getattr(args, "patience", None) is not None:
        over.setdefault("train", {})["early_stop_patience"] = str(args.patience)
    if getattr(args, "seed", None) is not None:
        over.setdefault("experiment", {})["master_seed"] = str(args.seed)
    specs = getattr(args, "embedding", None)
    for spec in specs if isinstance(specs, list) else []:
        if spec == "none":
            continue
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = Path(spec).stem, spec
        over.setdefault("embeddings", {})[name] = str(Path(path).resolve())
    if getattr(args, "no_baseline", False):
        over.setdefault("experiment", {})["include_baseline"] = "false"
    return over


def _load_experiment(args):
    from .experiment import ExperimentConfig

    cfg = load_config(args.config, _overrides(args))
    base = Path(args.config).resolve().parent if args.config else None
    exp = ExperimentConfig.from_ini(cfg, base)
    # the manifest echo must not depend on the working directory
    if exp.dataset_path:
        cfg["data"]["dataset"] = str(Path(exp.dataset_path).resolve())
    for name, path in exp.tables.items():
        cfg["embeddings"][name] = str(Path(path).resolve())
    source = cfg["folds"].get("source", "")
    if source and not source.startswith("builtin:"):
        cfg["folds"]["source"] = str(Path(_join(base, source)).resolve())
    return cfg, exp


def _join(base, path) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else Path(base) / p


# -- subcommands -----------------------------------------------------------------


def cmd_prepare(args) -> int:
    from .experiment import prepare

    cfg, exp = _load_experiment(args)
    data = prepare(exp)
    out = Path(args.out)
    summary = {
        "n_examples": data.n_total,
        "n_english": len(data.english),
        "n_unique_english": data.unique_words,
        "folds": [],
        "warnings": list(data.plan.warnings),
    }
    for fold in data.plan:
        summary["folds"].append({
            "fold": fold.number,
            "hq_words": sorted(fold.hq_words),
            "hr_words": sorted(fold.hr_words),
            "n_test_words": len(fold.test_words),
            "n_train_examples": len(fold.train_indices),
            "n_test_examples": len(fold.test_indices),
        })
        atomic_write_text(out / f"fold{fold.number}_words.txt",
                          "".join(f"{w}\n" for w in sorted(fold.test_words)))
    atomic_write_text(out / "folds.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "prepare", args, cfg)
    print(f"{summary['n_examples']} examples, {summary['n_english']} English, "
          f"{summary['n_unique_english']} unique English descriptors, {len(data.plan)} folds")
    return EXIT_OK


def cmd_train(args) -> int:
    from .experiment import _train_one, prepare

    cfg, exp = _load_experiment(args)
    data = prepare(exp)
    folds = {f.number: f for f in data.plan}
    if args.fold not in folds:
        raise UsageError(f"--fold must be one of {sorted(folds)}")
    fold = folds[args.fold]
    if args.embedding in (None, "none"):
        name, table = "no_embedding", None
    else:
        table = load_table(args.embedding)
        name = table.name
    if args.seed is not None:
        exp.master_seed = args.seed - exp.fold_seed_stride * fold.number
    model, trace, res = _train_one(name, table, fold, data, exp)
    out = Path(args.out)
    nn.save_model(model, out / "model.weq")
    atomic_write_text(out / "loss_trace.csv",
                      "epoch,train_mae\n" + "".join(f"{i + 1},{v!r}\n" for i, v in enumerate(trace)))
    atomic_write_text(out / "fold_result.json", json.dumps({
        "model": name, "fold": res.fold, "seed": res.seed, "n_train": res.n_train,
        "n_test": res.n_test, "epochs": res.epochs, "final_train_loss": res.final_loss,
        **res.errors}, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "train", args, cfg, res.seed)
    print(f"{name} fold {res.fold}: {res.epochs} epochs, final train MAE {res.final_loss:.5f}, "
          f"test MAE {res.errors['mae_normalized']:.5f} ({res.errors['mae_db']:.3f} dB)")
    return EXIT_OK


def _predict_curve(model_path, word, embedding, centers) -> EqCurve:
    model = nn.load_model(model_path)
    table = None
    if model.input_mode == nn.EMBEDDING:
        if not embedding:
            raise UsageError("this model needs --embedding")
        table = load_table(embedding, expected_dim=model.input_dim)
    pred = nn.predict(model, word, table)
    return EqCurve(pred.gains_db, centers)


def _curve_lines(curve: EqCurve) -> str:
    return "".join(f"{float(f)!r} {float(g)!r}\n" for f, g in zip(curve.band_centers_hz, curve.gains_db))


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    curve = _predict_curve(args.model, args.word, args.embedding, band_centers(cfg))
    text = _curve_lines(curve)
    sys.stdout.write(text)
    if args.out:
        atomic_write_text(args.out, text)
    return EXIT_OK


def read_curve_file(path, centers=None) -> EqCurve:
    """Read ``frequency_hz gain_db`` pairs (space or comma separated, ``#`` comments)."""
    freqs, gains = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                f, g = float(parts[0]), float(parts[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise DataError(f"{path}: line {lineno}: expected 'frequency_hz gain_db'") from None
            freqs.append(f)
            gains.append(g)
    try:
        return EqCurve(np.clip(gains, -4.0, 4.0), freqs)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_render(args) -> int:
    from .render import apply_eq, clip_report, read_wav, write_wav

    cfg = load_config(args.config)
    if args.curve:
        curve = read_curve_file(args.curve)
    elif args.model and args.word:
        curve = _predict_curve(args.model, args.word, args.embedding, band_centers(cfg))
    else:
        raise UsageError("render needs --curve FILE or --model PATH --word W")
    audio = read_wav(args.input)
    out = apply_eq(audio, curve, args.taps)
    write_wav(out, args.output, args.format)
    report = clip_report(out)
    report.update({"taps": args.taps, "format": args.format, "frames": out.frames,
                   "sample_rate": out.sample_rate, "curve_db": curve.gains_db.tolist()})
    out_path = Path(args.output)
    atomic_write_text(out_path.with_suffix(out_path.suffix + ".report.json"),
                      json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_manifest(out_path.parent, "render", args, cfg)
    if report["clipped_samples"]:
        print(f"warning: {report['clipped_samples']} samples exceed full scale "
              f"(peak {report['peak_dbfs']:.2f} dBFS)", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .embeddings import load_table as _load
    from .experiment import (dumps_summary, pcm_entries, prepare, results_csv, run_cv,
                             run_pcm_comparison)

    cfg, exp = _load_experiment(args)
    data = prepare(exp)
    tables = {name: _load(path, name=name) for name, path in exp.tables.items()}
    result = run_cv(exp, data, tables)
    run_pcm_comparison(result, data, tables)
    out = Path(args.out)
    for (name, fold), model in result.models.items():
        nn.save_model(model, out / "models" / f"{name}_fold{fold}.weq")
    summary = result.summary()
    summary["n_english"] = len(data.english)
    summary["n_unique_english"] = data.unique_words
    atomic_write_text(out / "summary.json", dumps_summary(summary))
    atomic_write_text(out / "results.csv", results_csv(result))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "fold", "word", "pcm"])
    for name, rows in pcm_entries(result, data, tables).items():
        for fold, word, dist in rows:
            writer.writerow([name, fold, word, repr(dist)])
    atomic_write_text(out / "pcm.csv", buf.getvalue())
    write_manifest(out, "evaluate", args, cfg, exp.master_seed)

    print(f"{'model':<16} {'MAE [0,1]':>18} {'MAE dB':>18} {'PCM':>18}")
    for name in result.model_names:
        m, s = result.stats(name)
        md, sd = result.stats(name, "mae_db")
        p = result.pcm.get(name, {})
        print(f"{name:<16} {m:>9.4f} ± {s:<6.4f} {md:>9.3f} ± {sd:<6.3f} "
              f"{p.get('mean', float('nan')):>9.3f} ± {p.get('std', float('nan')):<6.3f}")
    h = result.pcm["human"]
    print(f"{'human':<16} {'':>18} {'':>18} {h['mean']:>9.3f} ± {h['std']:<6.3f}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .experiment import ExperimentConfig, ResultTable, export_word_plots, prepare

    run = Path(args.run)
    manifest_path = run / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"{run} is not an evaluate output directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    cfg = load_config(None, manifest["config"])
    exp = ExperimentConfig.from_ini(cfg)
    data = prepare(exp)
    tables = {name: load_table(path, name=name) for name, path in exp.tables.items()}
    models = {}
    names = list(tables) + (["no_embedding"] if exp.include_baseline else [])
    for name in names:
        for fold in data.plan:
            models[(name, fold.number)] = nn.load_model(run / "models" / f"{name}_fold{fold.number}.weq")
    result = ResultTable([], models, {})
    out = Path(args.out)
    try:
        paths = export_word_plots(result, data, tables, args.word, out, svg=args.svg)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    write_manifest(out, "plot", args, cfg)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_synth_data(args) -> int:
    from .synth import make_synthetic, write_table

    corpus = make_synthetic(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(corpus.examples, out / "dataset.csv")
    write_table(corpus.table, out / "embeddings.txt")
    atomic_write_text(out / "config.ini",
                      "[data]\ndataset = dataset.csv\n\n[embeddings]\nsynthetic = embeddings.txt\n")
    write_manifest(out, "synth-data", args, seed=args.seed)
    print(f"wrote {len(corpus.examples)} examples and {len(corpus.table)} vectors to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wordeq", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *, dataset=True):
        p.add_argument("--config", help="INI configuration file")
        if dataset:
            p.add_argument("--dataset", help="comma-separated dataset export")

    p = sub.add_parser("prepare", help="build the cross-validation folds")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model on one fold")
    common(p)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--embedding", default="none", help="embedding table path, or 'none' for one-hot")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict the EQ curve for a word")
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("--embedding")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("render", help="apply an EQ curve to a WAV file")
    p.add_argument("--config")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--curve")
    p.add_argument("--model")
    p.add_argument("--word")
    p.add_argument("--embedding")
    p.add_argument("--taps", type=int, default=2047)
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="four-fold evaluation of all models")
    common(p)
    p.add_argument("--embedding", action="append", metavar="[NAME=]PATH")
    p.add_argument("--no-baseline", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="per-word curve tables from an evaluate run")
    p.add_argument("--run", required=True, help="evaluate output directory")
    p.add_argument("--word", action="append", required=True)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth-data", help="write a synthetic dataset and embedding table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wordeq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"wordeq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (WordEqRuntimeError, FloatingPointError) as exc:
        print(f"wordeq: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
