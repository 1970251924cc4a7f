"""INI configuration shared by the dataset, experiment and CLI layers."""

from __future__ import annotations

import configparser
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SchemaError

DEFAULT_CONFIG = "default.ini"


def read_builtin(name: str) -> str:
    return resources.files("wordeq.data").joinpath(name).read_text(encoding="utf-8")


def load_config(path=None, overrides: dict[str, dict[str, str]] | None = None) -> configparser.ConfigParser:
    """Defaults first, then ``path`` (if any), then explicit ``overrides``."""
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read_string(read_builtin(DEFAULT_CONFIG), source="<default.ini>")
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise SchemaError(f"config file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            cfg.read_file(fh, source=str(path))
    for section, values in (overrides or {}).items():
        if not cfg.has_section(section):
            cfg.add_section(section)
        for key, value in values.items():
            cfg[section][key] = str(value)
    return cfg


def split_list(value: str) -> list[str]:
    return [item.strip() for item in value.replace("\n", ",").split(",") if item.strip()]


def column_map(cfg: configparser.ConfigParser) -> dict:
    sec = cfg["columns"]
    if "gains" in sec and sec["gains"].strip():
        gains = split_list(sec["gains"])
    else:
        prefix = sec.get("gain_prefix", "gain_")
        gains = [f"{prefix}{i:02d}" for i in range(int(cfg["bands"].get("count", "40")))]
    return {
        "descriptor": sec.get("descriptor", "descriptor"),
        "language": sec.get("language", "language"),
        "audio_id": sec.get("audio_id", "audio_id"),
        "consistency": sec.get("consistency", "consistency"),
        "gains": gains,
        "units": sec.get("units", "db"),
    }


def band_centers(cfg: configparser.ConfigParser) -> np.ndarray:
    sec = cfg["bands"]
    if "centers" in sec and sec["centers"].strip():
        return np.array([float(v) for v in split_list(sec["centers"])])
    return np.geomspace(float(sec["min_hz"]), float(sec["max_hz"]), int(sec["count"]))


def fold_source(cfg: configparser.ConfigParser, base_dir=None) -> str:
    """Return the text of the fold word-list file named in ``[folds] source``."""
    source = cfg["folds"].get("source", "builtin:table1_folds.ini")
    if source.startswith("builtin:"):
        return read_builtin(source.split(":", 1)[1])
    path = Path(source)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path.read_text(encoding="utf-8")


def to_dict(cfg: configparser.ConfigParser) -> dict[str, dict[str, str]]:
    return {s: dict(cfg[s]) for s in cfg.sections()}
