"""Declarative run configuration: a single JSON document with defaults,
scalar overrides, and content digests stamped into every output artifact."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

#: Default montage matching the Sleep-EDF channel names.
DEFAULT_MONTAGE = [
    {"name": "EEG1", "kind": "EEG", "pick": "EEG Fpz-Cz"},
    {"name": "EEG2", "kind": "EEG", "pick": "EEG Pz-Oz"},
    {"name": "EOG", "kind": "EOG", "pick": "EOG horizontal"},
    {"name": "EMG", "kind": "EMG", "pick": "EMG submental"},
]

DEFAULTS: dict[str, Any] = {
    "dataset": {
        "name": "dataset",
        "recordings": "",  # glob over EDF files
        "hypnograms": "csv",  # "csv" sidecars or "edfplus" annotations
        "hypnogram_suffix": ".hypnogram.csv",
        "montage": DEFAULT_MONTAGE,
        "trim_wake": False,
        "subject_regex": None,  # regex with one capture group, applied to the file stem
        "exclude_subjects": [],
    },
    "preprocessing": {
        "eeg_band": [0.4, 30.0],
        "eog_band": [0.4, 30.0],
        "emg_band": [0.5, 10.0],
        "filter_order": 4,
        "target_rate_hz": 100.0,
    },
    "features": {
        "welch_segment_s": 5.0,
        "higuchi_kmax": 10,
        "permutation_order": 3,
        "permutation_delay": 1,
    },
    "model": {
        "l2_strength": 1.0,
        "n_quantiles": 100,
        "grad_tol": 1e-4,
        "max_iter": 1000,
    },
    "evaluation": {
        "protocol": "LFS",  # "LFS" | "DT"
        "k": 5,
        "train_features_dir": None,  # DT only: features extracted from the training dataset
        "exclude_train_subjects": [],
        "allow_subject_overlap": False,
    },
    "output_dir": "out",
    "parallelism": 1,
    "seed": 0,
}


class ConfigError(ValueError):
    pass


def _merge(defaults: Any, override: Any, path: str) -> Any:
    if isinstance(defaults, dict):
        if not isinstance(override, dict):
            raise ConfigError(f"config field {path!r} must be an object")
        unknown = set(override) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config field(s) {sorted(unknown)} under {path!r}")
        merged = {}
        for key, default_value in defaults.items():
            if key in override:
                if key == "montage":
                    merged[key] = copy.deepcopy(override[key])
                else:
                    merged[key] = _merge(default_value, override[key], f"{path}.{key}".lstrip("."))
            else:
                merged[key] = copy.deepcopy(default_value)
        return merged
    return copy.deepcopy(override)


@dataclass
class RunConfig:
    data: dict[str, Any]

    @classmethod
    def from_dict(cls, raw: dict) -> RunConfig:
        return cls(_merge(DEFAULTS, raw, ""))

    @classmethod
    def load(cls, path: str | Path, overrides: list[str] | None = None) -> RunConfig:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        cfg = cls.from_dict(raw)
        for item in overrides or []:
            cfg = cfg.with_override(item)
        return cfg

    def with_override(self, item: str) -> RunConfig:
        """Apply one ``dotted.path=value`` override; values parse as JSON."""
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        key_path, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        data = copy.deepcopy(self.data)
        node = data
        parts = key_path.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config path {key_path!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config path {key_path!r}")
        node[parts[-1]] = value
        return RunConfig(data)

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    @property
    def dataset(self) -> dict:
        return self.data["dataset"]

    @property
    def preprocessing(self) -> dict:
        return self.data["preprocessing"]

    @property
    def features(self) -> dict:
        return self.data["features"]

    @property
    def model(self) -> dict:
        return self.data["model"]

    @property
    def evaluation(self) -> dict:
        return self.data["evaluation"]

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output_dir"])

    def digest(self) -> str:
        """Content hash of the whole configuration."""
        return _hash_dict(self.data)

    def extraction_digest(self) -> str:
        """Content hash of the sections that determine feature values; feature
        matrices from runs that agree here are interchangeable."""
        return _hash_dict(
            {k: self.data[k] for k in ("dataset", "preprocessing", "features")}
        )

    def fit_options(self) -> dict:
        m = self.model
        return {
            "l2_strength": float(m["l2_strength"]),
            "n_quantiles": int(m["n_quantiles"]),
            "grad_tol": float(m["grad_tol"]),
            "max_iter": int(m["max_iter"]),
        }


def _hash_dict(data: dict) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
