"""Run configuration: INI-style file with typed defaults and overrides.

Every key belongs to a section; unknown sections or keys are rejected
with the full list of offenders so typos surface immediately. Values on
the command line (--set section.key=value) win over the file.
"""

from __future__ import annotations

import configparser
import copy
from typing import Any, Callable

from .errors import ConfigError
from .training import TrainConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.replace(",", " ").split()]


def _opt_int(text: str) -> int | None:
    return None if not text.strip() else int(text)


def _str(text: str) -> str:
    return text.strip()


# (section, key) -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "data": {
        "dataset": (_str, "mnist"),
        "path": (_str, ""),
        "val_size": (int, 5000),
        "synth_kind": (_str, "parity-of-subset"),
        "synth_features": (int, 16),
        "synth_samples": (int, 2000),
        "limit_train": (_opt_int, None),
        "limit_test": (_opt_int, None),
    },
    "encoding": {
        "mode": (_str, "thermometer"),
        "thresholds": (int, 10),
    },
    "model": {
        "layer_widths": (_int_list, [1000, 1000, 1000]),
        "logit_scale": (float, 0.1),
    },
    "train": {
        "total_epochs": (int, 100),
        "finetune_epochs": (int, 0),
        "layers_to_learn": (int, 1),
        "c": (int, 8),
        "r": (_opt_int, None),
        "beta": (int, 20),
        "tau": (float, 30.0),
        "batch_size": (int, 100),
        "lr_init": (float, 1e-2),
        "lr_final": (float, 1e-5),
        "sampling_mode": (_str, "random"),
        "interconnect_mode": (_str, "learnable"),
        "seed": (int, 0),
    },
}


def default_config() -> dict[str, dict[str, Any]]:
    return {
        sec: {key: copy.deepcopy(dv) for key, (_, dv) in keys.items()}
        for sec, keys in SCHEMA.items()
    }


def load_config(path: str | None) -> dict[str, dict[str, Any]]:
    """Parse an INI file onto the schema defaults."""
    cfg = default_config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    bad = []
    for section in parser.sections():
        if section not in SCHEMA:
            bad.append(section)
            continue
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                bad.append(f"{section}.{key}")
                continue
            parse = SCHEMA[section][key][0]
            try:
                cfg[section][key] = parse(value)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {exc}"
                ) from exc
    if bad:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(bad)))
    return cfg


def apply_overrides(
    cfg: dict[str, dict[str, Any]], overrides: list[str]
) -> None:
    """Apply repeatable --set section.key=value flags in place."""
    bad = []
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(
                f"override must look like section.key=value: {item!r}"
            )
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            bad.append(dotted)
            continue
        parse = SCHEMA[section][key][0]
        try:
            cfg[section][key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {dotted}: {exc}") from exc
    if bad:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(bad)))


def train_config_from(cfg: dict[str, dict[str, Any]]) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        total_epochs=t["total_epochs"],
        finetune_epochs=t["finetune_epochs"],
        layers_to_learn=t["layers_to_learn"],
        C=t["c"],
        R=t["r"],
        beta=t["beta"],
        tau=t["tau"],
        batch_size=t["batch_size"],
        lr_init=t["lr_init"],
        lr_final=t["lr_final"],
        sampling_mode=t["sampling_mode"],
        interconnect_mode=t["interconnect_mode"],
        seed=t["seed"],
    )
