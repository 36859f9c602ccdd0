"""Run configuration: one YAML file with a section per pipeline stage.

Every hyperparameter of the pipeline is surfaced here with its default;
unknown keys and wrong types are rejected with the full key path in the
error message. The merged, effective config is what gets echoed into run
directories and fingerprinted into checkpoints.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .acoustic import AcousticConfig
from .features import FeatureConfig
from .lid import ClassifierConfig
from .training import TrainConfig


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int(x):
    return isinstance(x, int) and not isinstance(x, bool)


_CHECKS = {
    "int": (_int, "an integer"),
    "number": (_num, "a number"),
    "string": (lambda x: isinstance(x, str), "a string"),
    "string_list": (lambda x: isinstance(x, list) and all(isinstance(v, str) for v in x), "a list of strings"),
    "number_list": (lambda x: isinstance(x, list) and all(_num(v) for v in x), "a list of numbers"),
    "int_list": (lambda x: isinstance(x, list) and all(_int(v) for v in x), "a list of integers"),
}

# (default, type) leaves; nested dicts are sections.
SCHEMA = {
    "seed": (1234, "int"),
    "corpus": {
        "manifest": ("", "string"),
        "seg_len": (20.0, "number"),
        "overlap": (0.5, "number"),
        "min_words": (3, "int"),
        "rep_threshold": (0.3, "number"),
        "conf_threshold": (0.5, "number"),
        "split_ratios": ([0.8, 0.1, 0.1], "number_list"),
    },
    "scenario": {
        "kind": ("closed", "string"),
        "target_languages": ([], "string_list"),
        "others_languages": ([], "string_list"),
        "ood_languages": ([], "string_list"),
        "others_label": ("others", "string"),
    },
    "synth": {
        "target_languages": (3, "int"),
        "others_languages": (0, "int"),
        "ood_languages": (0, "int"),
        "songs_per_language": (30, "int"),
        "ood_songs_per_language": (10, "int"),
        "song_duration": (30.0, "number"),
        "noise_level": (0.05, "number"),
        "block_size": (5, "int"),
        "artists_per_language": (10, "int"),
    },
    "features": {
        "sample_rate": (16000, "int"),
        "window": (512, "int"),
        "hop": (256, "int"),
        "n_mels": (40, "int"),
        "fmin": (0.0, "number"),
        "fmax": (8000.0, "number"),
        "log_floor": (1e-10, "number"),
        "delta_window": (2, "int"),
    },
    "acoustic_model": {
        "conv_filters": ([32, 32], "int_list"),
        "kernel": ([3, 3], "int_list"),
        "pool": ([2, 3], "int_list"),
        "lstm_layers": (3, "int"),
        "lstm_hidden": (256, "int"),
        "dropout": (0.1, "number"),
        "recurrent_dropout": (0.1, "number"),
    },
    "classifier": {
        "lstm_layers": (2, "int"),
        "lstm_hidden": (64, "int"),
        "dropout": (0.2, "number"),
        "recurrent_dropout": (0.1, "number"),
        "clean_threshold": (0.95, "number"),
    },
    "training": {
        "mode": ("two_step", "string"),
        "lr": (1e-3, "number"),
        "batch_size": (32, "int"),
        "lambda_phase1": (0.1, "number"),
        "lambda_phase2": (100.0, "number"),
        "patience": (5, "int"),
        "max_epochs": (100, "int"),
        "compute_dtype": ("float32", "string"),
    },
    "evaluation": {
        "bootstrap_resamples": (1000, "int"),
        "min_decoded_words": (3, "int"),
    },
}


def default_config() -> dict:
    def build(node):
        if isinstance(node, dict):
            return {k: build(v) for k, v in node.items()}
        return copy.deepcopy(node[0])

    return build(SCHEMA)


def validate_config(user: dict) -> dict:
    """Merge a user config over the defaults, rejecting unknown keys."""
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ValueError("config: top level must be a mapping")

    def merge(schema, value, path):
        merged = {}
        for key, sub in schema.items():
            here = f"{path}.{key}" if path else key
            if isinstance(sub, dict):
                child = value.get(key, {})
                if not isinstance(child, dict):
                    raise ValueError(f"config: {here} must be a mapping")
                merged[key] = merge(sub, child, here)
            else:
                default, kind = sub
                if key in value:
                    got = value[key]
                    check, what = _CHECKS[kind]
                    if not check(got):
                        raise ValueError(f"config: {here} must be {what}, got {got!r}")
                    merged[key] = copy.deepcopy(got)
                else:
                    merged[key] = copy.deepcopy(default)
        for key in value:
            if key not in schema:
                here = f"{path}.{key}" if path else key
                raise ValueError(f"config: unknown key {here}")
        return merged

    return merge(SCHEMA, user, "")


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        user = yaml.safe_load(fh)
    return validate_config(user)


def save_config(cfg: dict, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")


def config_fingerprint(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# typed views
# ---------------------------------------------------------------------------


def feature_config(cfg: dict) -> FeatureConfig:
    f = cfg["features"]
    return FeatureConfig(
        sample_rate=f["sample_rate"],
        window=f["window"],
        hop=f["hop"],
        n_mels=f["n_mels"],
        fmin=f["fmin"],
        fmax=f["fmax"],
        log_floor=f["log_floor"],
        delta_window=f["delta_window"],
    )


def acoustic_config(cfg: dict) -> AcousticConfig:
    a = cfg["acoustic_model"]
    f = cfg["features"]
    return AcousticConfig(
        conv_filters=tuple(a["conv_filters"]),
        kernel=tuple(a["kernel"]),
        pool=tuple(a["pool"]),
        lstm_layers=a["lstm_layers"],
        lstm_hidden=a["lstm_hidden"],
        dropout=a["dropout"],
        recurrent_dropout=a["recurrent_dropout"],
        feature_bins=f["n_mels"] + 1,
    )


def classifier_config(cfg: dict) -> ClassifierConfig:
    c = cfg["classifier"]
    return ClassifierConfig(
        lstm_layers=c["lstm_layers"],
        lstm_hidden=c["lstm_hidden"],
        dropout=c["dropout"],
        recurrent_dropout=c["recurrent_dropout"],
        clean_threshold=c["clean_threshold"],
    )


def train_config(cfg: dict, mode: str | None = None) -> TrainConfig:
    t = cfg["training"]
    return TrainConfig(
        lr=t["lr"],
        batch_size=t["batch_size"],
        lambda_phase1=t["lambda_phase1"],
        lambda_phase2=t["lambda_phase2"],
        patience=t["patience"],
        max_epochs=t["max_epochs"],
        seed=cfg["seed"],
        mode=mode or t["mode"],
        clean_threshold=cfg["classifier"]["clean_threshold"],
        compute_dtype=t["compute_dtype"],
    )
