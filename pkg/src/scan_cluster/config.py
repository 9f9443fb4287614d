"""Pipeline configuration: flat ``key = value`` text with one section per stage.

Values are parsed as Python literals where possible (numbers, booleans,
``none``), otherwise kept as strings.  :func:`resolve` fills every missing
key with its default so the effective configuration can be embedded in
reports and re-run verbatim.
"""

from __future__ import annotations

import configparser
import copy
from pathlib import Path

from .core import OptimizerConfig, TrainConfig
from .embio import SynthConfig, preset
from .errors import ConfigError, ValidationError
from .selflabel import SelfLabelConfig

DEFAULTS = {
    "data": {
        "input": None,        # path to a .semb dataset; overrides preset
        "preset": "separated",
        "n": None, "d": None, "c_true": None, "v": None, "sep": None,
        "within_std": None, "view_jitter_std": None, "seed": None,
    },
    "mine": {
        "k": None,            # defaults to train.k
        "metric": "cosine",
        "remove_false_positives": False,
        "noise_fraction": 0.0,
        "noise_mode": "uniform",
        "noise_seed": 0,
    },
    "train": {
        "clusters": 10,
        "k": 20,
        "entropy_weight": 5.0,
        "epochs": 100,
        "batch_size": 128,
        "optimizer": "adam",
        "lr": 1e-4,
        "weight_decay": 1e-4,
        "momentum": 0.9,
        "heads": 10,
        "seed": 0,
        "neighbor_mode": "sample_one",
        "ema_alpha": None,
        "head_kind": "linear",
        "hidden": 128,
        "marginal": "anchors_and_neighbors",
    },
    "selflabel": {
        "enabled": True,
        "threshold": 0.99,
        "epochs": 200,
        "batch_size": 128,
        "optimizer": "adam",
        "lr": 1e-4,
        "weight_decay": 1e-4,
        "momentum": 0.9,
        "ema_alpha": None,
        "class_balance": True,
        "plateau_window": 5,
        "plateau_growth": 1e-3,
        "noise_std": None,
        "seed": 0,
    },
    "eval": {
        "overcluster": False,
        "prototypes_per_cluster": 10,
        "low_confidence": 10,
    },
}

_COMMENTS = {
    ("train", "entropy_weight"): "weight on the marginal-entropy term",
    ("train", "k"): "neighbors per sample used by the consistency term",
    ("train", "heads"): "independent heads; the lowest-loss one is kept",
    ("train", "lr"): "Adam default; head-only training on unit-norm features usually wants 1e-2",
    ("selflabel", "threshold"): "confidence needed to become a pseudo-label",
    ("selflabel", "plateau_window"): "stop once the confident count grows < plateau_growth over this many epochs",
}


def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def loads(text: str) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            out.setdefault(section, {})[key] = parse_value(raw)
    return out


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def resolve(cfg: dict | None) -> dict:
    """Merge ``cfg`` over the defaults; returns a fresh nested dict."""
    out = copy.deepcopy(DEFAULTS)
    for section, values in (cfg or {}).items():
        if section not in out:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in values.items():
            if key not in out[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            out[section][key] = value
    if out["mine"]["k"] is None:
        out["mine"]["k"] = out["train"]["k"]
    return out


def dumps(cfg: dict) -> str:
    lines = []
    for section, values in cfg.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            note = _COMMENTS.get((section, key))
            if note:
                lines.append(f"# {note}")
            lines.append(f"{key} = {format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def set_value(cfg: dict, dotted: str, value) -> dict:
    """Return a copy of ``cfg`` with ``section.key`` set to ``value``."""
    section, _, key = dotted.partition(".")
    out = copy.deepcopy(cfg)
    if section not in out or key not in out[section]:
        raise ConfigError(f"unknown config key '{dotted}'")
    out[section][key] = value
    return out


def _optimizer(sec: dict) -> OptimizerConfig:
    return OptimizerConfig(kind=sec["optimizer"], lr=float(sec["lr"]),
                           weight_decay=float(sec["weight_decay"]), momentum=float(sec["momentum"]))


def _wrap(fn, *args):
    try:
        return fn(*args)
    except (ValidationError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def synth_config(cfg: dict) -> SynthConfig:
    data = cfg["data"]
    overrides = {k: v for k, v in data.items() if k not in ("input", "preset") and v is not None}
    return _wrap(lambda: preset(data["preset"], **overrides))


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return _wrap(lambda: TrainConfig(
        k=int(t["k"]), entropy_weight=float(t["entropy_weight"]), epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]), optimizer=_optimizer(t), heads=int(t["heads"]),
        seed=int(t["seed"]), neighbor_mode=t["neighbor_mode"], ema_alpha=t["ema_alpha"],
        head_kind=t["head_kind"], hidden=int(t["hidden"]), marginal=t["marginal"]))


def selflabel_config(cfg: dict) -> SelfLabelConfig:
    s = cfg["selflabel"]
    return _wrap(lambda: SelfLabelConfig(
        threshold=float(s["threshold"]), epochs=int(s["epochs"]), batch_size=int(s["batch_size"]),
        optimizer=_optimizer(s), ema_alpha=s["ema_alpha"], class_balance=bool(s["class_balance"]),
        plateau_window=int(s["plateau_window"]), plateau_growth=float(s["plateau_growth"]),
        noise_std=s["noise_std"], seed=int(s["seed"])))
