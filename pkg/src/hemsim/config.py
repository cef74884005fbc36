"""Experiment configuration from INI files.

Everything has a default, so a missing or empty config file yields a
runnable setup. The HEMSIM_OUT environment variable overrides the output
directory and nothing else.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dataio import SplitConfig
from .domain import TARIFF_PRESETS, TRAIN_PRESETS, Tariff, TrainConfig

DEFAULT_BESS_CAPACITY_KWH = 6.75
DEFAULT_BESS_POWER_KW = 3.3


@dataclass
class ExperimentConfig:
    measurements_file: str = "measurements.csv"
    transactions_file: str = "transactions.csv"
    spec_defaults: dict[str, float] = field(
        default_factory=lambda: {
            "bess_capacity_kwh": DEFAULT_BESS_CAPACITY_KWH,
            "bess_power_kw": DEFAULT_BESS_POWER_KW,
        }
    )
    spec_overrides: dict[str, dict[str, float]] = field(default_factory=dict)
    tariff: Tariff = field(default_factory=lambda: TARIFF_PRESETS["table"])
    split: SplitConfig = field(default_factory=SplitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    base_seed: int = 0
    out_dir: str = "out"

    def spec_kwargs(self, household_id: str) -> dict[str, float]:
        merged = dict(self.spec_defaults)
        merged.update(self.spec_overrides.get(household_id, {}))
        return merged


_SPEC_KEYS = {
    "bess_capacity_kwh",
    "bess_power_kw",
    "ev_capacity_kwh",
    "ev_charger_power_kw",
    "pv_peak_kw",
    "bess_efficiency",
    "bess_standing_loss",
}

_TRAIN_FLOAT_KEYS = {
    "lr_actor",
    "lr_critic",
    "soft_update_tau",
    "discount",
    "noise_scale",
    "discomfort_weight",
    "penalty_weight",
}
_TRAIN_INT_KEYS = {
    "episodes",
    "episode_len_h",
    "batch_size",
    "buffer_size",
    "layer1",
    "layer2",
    "seed_count",
}
_TRAIN_STR_KEYS = {"noise_kind", "discomfort_kind"}


def _parse_pairs(text: str) -> tuple[tuple[str, int], ...]:
    # "train:15,eval:5,test:10" -> (("train", 15), ...)
    out = []
    for chunk in text.split(","):
        role, _, count = chunk.strip().partition(":")
        out.append((role.strip(), int(count)))
    return tuple(out)


def load_config(path: str | Path | None = None, preset: str | None = None) -> ExperimentConfig:
    """Read an INI config; later sections override preset and defaults."""
    cfg = ExperimentConfig()
    if preset is not None:
        cfg.train = TRAIN_PRESETS[preset]()

    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(str(path))
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")

    if parser.has_section("data"):
        cfg.measurements_file = parser.get("data", "measurements", fallback=cfg.measurements_file)
        cfg.transactions_file = parser.get("data", "transactions", fallback=cfg.transactions_file)

    if parser.has_section("tariff"):
        name = parser.get("tariff", "preset", fallback=None)
        if name is not None:
            cfg.tariff = TARIFF_PRESETS[name]
        buy = parser.getfloat("tariff", "price_buy", fallback=None)
        sell = parser.getfloat("tariff", "price_sell", fallback=None)
        if buy is not None or sell is not None:
            cfg.tariff = Tariff(
                buy if buy is not None else cfg.tariff.price_buy_eur_per_kwh,
                sell if sell is not None else cfg.tariff.price_sell_eur_per_kwh,
            )

    if parser.has_section("split"):
        pattern = parser.get("split", "pattern", fallback=None)
        totals = parser.get("split", "totals", fallback=None)
        cfg.split = SplitConfig(
            pattern=_parse_pairs(pattern) if pattern else cfg.split.pattern,
            totals=_parse_pairs(totals) if totals else cfg.split.totals,
        )

    if parser.has_section("spec"):
        for key, value in parser.items("spec"):
            if key not in _SPEC_KEYS:
                raise ValueError(f"unknown spec key: {key}")
            cfg.spec_defaults[key] = float(value)
    for section in parser.sections():
        if section.startswith("spec:"):
            household_id = section.split(":", 1)[1]
            overrides = {}
            for key, value in parser.items(section):
                if key not in _SPEC_KEYS:
                    raise ValueError(f"unknown spec key in [{section}]: {key}")
                overrides[key] = float(value)
            cfg.spec_overrides[household_id] = overrides

    if parser.has_section("train"):
        name = parser.get("train", "preset", fallback=None)
        if name is not None:
            cfg.train = TRAIN_PRESETS[name]()
        updates: dict[str, object] = {}
        for key, value in parser.items("train"):
            if key == "preset":
                continue
            if key in _TRAIN_FLOAT_KEYS:
                updates[key] = float(value)
            elif key in _TRAIN_INT_KEYS:
                updates[key] = int(value)
            elif key in _TRAIN_STR_KEYS:
                updates[key] = value
            else:
                raise ValueError(f"unknown train key: {key}")
        cfg.train = replace(cfg.train, **updates)

    if parser.has_section("run"):
        cfg.out_dir = parser.get("run", "out", fallback=cfg.out_dir)
        cfg.base_seed = parser.getint("run", "base_seed", fallback=cfg.base_seed)

    env_out = os.environ.get("HEMSIM_OUT")
    if env_out:
        cfg.out_dir = env_out
    return cfg


def train_config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
