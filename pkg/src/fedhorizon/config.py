"""Experiment configuration: defaults, config-file parsing, CLI overrides
and deterministic hashing of the fully resolved configuration.

Config files are flat ``key = value`` text with ``[section]`` headers.
Recognized sections: [synth], [data], [train], [run].
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os
from dataclasses import dataclass, field, asdict

from .schema import ICU_NAMES
from .synthgen import DEFAULT_COUNTS, DEFAULT_SHIFTS, SynthConfig


class ConfigError(ValueError):
    pass


VALID_SETTINGS = ("local", "federated", "central")


@dataclass
class ExperimentConfig:
    # data source: a dataset directory produced by `synth` or `ingest`-able CSVs
    data_dir: str = "data"
    settings: tuple = ("local", "federated", "central")
    rounds: int = 50
    local_epochs: int = 3
    folds: int = 5
    batch_size: int = 64
    learning_rate: float = 1e-3
    pos_weight: str = "1.0"  # numeric literal or "auto" (N_neg / N_pos)
    threshold: float = 0.5
    time_channel: bool = True
    fixed_horizons: tuple = (25, 15, 5)
    seed: int = 42
    out_dir: str = "out"
    patience: int = 3
    min_delta: float = 1e-4
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    parallel_folds: int = 1
    lstm_units: int = 16
    lstm_layers: int = 3
    dense_units: int = 8
    dropout: float = 0.2
    dtype: str = "float64"
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        for s in self.settings:
            if s not in VALID_SETTINGS:
                raise ConfigError(f"unknown setting {s!r}")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not (0.0 < self.threshold < 1.0):
            raise ConfigError("threshold must lie in (0, 1)")
        for h in self.fixed_horizons:
            if not (1 <= h <= 25):
                raise ConfigError(f"fixed horizon {h} outside [1, 25]")
        if self.pos_weight != "auto":
            try:
                if float(self.pos_weight) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError(
                    f"pos_weight must be 'auto' or a positive number, "
                    f"got {self.pos_weight!r}") from None
        self.synth.validate()

    def pos_weight_value(self, n_pos: int, n_neg: int) -> float:
        if self.pos_weight == "auto":
            return n_neg / max(n_pos, 1)
        return float(self.pos_weight)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def load_config_file(path: str) -> dict:
    """Read a config file into a {section: {key: str}} dict."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # ICU names are case sensitive
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return {section: dict(parser[section]) for section in parser.sections()}


def resolve_config(file_path: str | None = None, overrides: dict | None = None
                   ) -> ExperimentConfig:
    """Defaults, then config file values, then CLI overrides."""
    cfg = ExperimentConfig()
    counts = dict(DEFAULT_COUNTS)
    shifts = dict(DEFAULT_SHIFTS)
    synth_kwargs = {}

    if file_path:
        data = load_config_file(file_path)
        synth_section = data.pop("synth", {})
        for key, raw in synth_section.items():
            if key.startswith("counts."):
                counts[key.split(".", 1)[1]] = int(raw)
            elif key.startswith("shift."):
                shifts[key.split(".", 1)[1]] = float(raw)
            elif key in ("prevalence", "missingness", "signal_amp",
                         "signal_lead", "signal_base", "onset_bias",
                         "amp_jitter", "slow_frac", "slow_level",
                         "sign_flip_p", "noise_scale", "ar_rho"):
                synth_kwargs[key] = float(raw)
            elif key == "seed":
                synth_kwargs["seed"] = int(raw)
            else:
                raise ConfigError(f"unknown [synth] key {key!r}")
        flat = {}
        for section, pairs in data.items():
            if section not in ("data", "train", "run"):
                raise ConfigError(f"unknown config section [{section}]")
            flat.update(pairs)
        _apply_overrides(cfg, flat)

    if overrides:
        overrides = {k: v for k, v in overrides.items() if v is not None}
        for key in ("prevalence", "missingness", "signal_amp", "signal_lead",
                    "signal_base", "onset_bias", "amp_jitter", "slow_frac",
                    "slow_level", "sign_flip_p", "noise_scale", "ar_rho"):
            if key in overrides:
                synth_kwargs[key] = float(overrides.pop(key))
        _apply_overrides(cfg, overrides)

    synth_kwargs.setdefault("seed", cfg.seed)
    cfg.synth = SynthConfig(counts=counts, shifts=shifts, **synth_kwargs)
    cfg.validate()
    return cfg


_INT_KEYS = {"rounds", "local_epochs", "folds", "batch_size", "seed", "patience",
             "parallel_folds", "lstm_units", "lstm_layers", "dense_units"}
_FLOAT_KEYS = {"learning_rate", "threshold", "min_delta", "val_fraction",
               "test_fraction", "dropout"}
_BOOL_KEYS = {"time_channel"}
_STR_KEYS = {"data_dir", "out_dir", "pos_weight", "dtype"}


def _apply_overrides(cfg: ExperimentConfig, values: dict) -> None:
    for key, raw in values.items():
        if key in _INT_KEYS:
            setattr(cfg, key, int(raw))
        elif key in _FLOAT_KEYS:
            setattr(cfg, key, float(raw))
        elif key in _BOOL_KEYS:
            setattr(cfg, key, raw if isinstance(raw, bool) else _parse_bool(raw))
        elif key in _STR_KEYS:
            setattr(cfg, key, str(raw))
        elif key == "settings":
            if isinstance(raw, str):
                raw = tuple(s.strip() for s in raw.split(",") if s.strip())
            cfg.settings = tuple(raw)
        elif key == "fixed_horizons":
            if isinstance(raw, str):
                raw = tuple(int(s) for s in raw.split(",") if s.strip())
            cfg.fixed_horizons = tuple(int(h) for h in raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text of the fully resolved config (reproducible)."""
    out = io.StringIO()
    d = asdict(cfg)
    synth = d.pop("synth")
    # execution machinery, not experiment identity: a parallel run must
    # reproduce a sequential run byte for byte, including this file
    d.pop("parallel_folds")
    out.write("[run]\n")
    for key in sorted(d):
        value = d[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        out.write(f"{key} = {value}\n")
    out.write("\n[synth]\n")
    counts = synth.pop("counts")
    shifts = synth.pop("shifts")
    for key in sorted(synth):
        out.write(f"{key} = {synth[key]}\n")
    for icu in ICU_NAMES:
        if icu in counts:
            out.write(f"counts.{icu} = {counts[icu]}\n")
    for icu in ICU_NAMES:
        if icu in shifts:
            out.write(f"shift.{icu} = {shifts[icu]}\n")
    return out.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]


def persist_config(cfg: ExperimentConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "resolved_config.ini")
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))
    return path
