"""Run configuration: one JSON file, dotted-key overrides, strict validation.

The resolved configuration (defaults <- file <- overrides) is hashed and the
hash is embedded in every artifact a command writes, so any two artifacts
can be checked for protocol compatibility after the fact.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .data import TOY_PRESET_V1, SplitSpec, validate_toy_preset
from .autoencoder import VaeTrainConfig
from .diffusion import DiffusionTrainConfig
from .downstream import ClassifierConfig
from .errors import ConfigError
from .evaluation import EvalProtocol
from .pipeline import GeneratorConfig
from .serialize import config_hash, read_json

TASKS = ("mortality", "los_binary")

DEFAULT_CONFIG: dict = {
    "task": "mortality",
    "model": {
        "latent_dim": 8,
        "vae_hidden": 64,
        "denoiser_hidden": 64,
        "classifier_hidden": 64,
        "t_embed_dim": 16,
        "cond_embed_dim": 16,
    },
    "schedule": {"steps": 100, "beta_min": 1e-3, "beta_max": 0.2},
    "weights": {
        "beta_vae": 0.1,
        "vae_mmd": 0.1,
        "vae_consistency": 0.1,
        "diff_mmd": 0.1,
        "diff_consistency": 0.1,
        "guidance": 1.0,
        "p_uncond": 0.1,
    },
    "training": {
        "vae_lr": 1e-3,
        "vae_epochs": 60,
        "vae_batch": 64,
        "diff_lr": 1e-3,
        "diff_epochs": 60,
        "diff_batch": 64,
    },
    "classifier": {"lr": 5e-4, "batch_size": 64, "max_epochs": 50, "patience": None},
    "protocol": {
        "n_synth_sets": 5,
        "n_model_seeds": 5,
        "n_split_seeds": 5,
        "split_fractions": [0.45, 0.45, 0.10],
    },
    "toy": {"preset": "icu-toy-v1", "n_records": 4000},
    "sweep": {"grid": "default"},
}

BUILTIN_PRESETS = {"icu-toy-v1": TOY_PRESET_V1}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """Parse one dotted-key override, e.g. weights.vae_mmd=0.5."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, _, raw = text.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings allowed
    return key.strip().split("."), value


def apply_override(config: dict, path: list[str], value) -> dict:
    update: dict = {}
    cursor = update
    for part in path[:-1]:
        cursor[part] = {}
        cursor = cursor[part]
    cursor[path[-1]] = value
    return _merge(config, update)


class RunConfig:
    """Resolved, validated configuration with typed component accessors."""

    def __init__(self, raw: dict):
        self.raw = raw
        self._validate()
        self.hash = config_hash(raw)

    def _validate(self) -> None:
        if self.raw["task"] not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.raw['task']!r}")
        fr = self.raw["protocol"]["split_fractions"]
        if len(fr) != 3 or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split_fractions must be 3 values summing to 1, got {fr}")
        sched = self.raw["schedule"]
        if not (0 < sched["beta_min"] <= sched["beta_max"] < 1):
            raise ConfigError("schedule betas must satisfy 0 < beta_min <= beta_max < 1")
        self.toy_preset()  # validates the referenced preset

    @classmethod
    def load(cls, path: Path | None, overrides: list[str] | None = None) -> "RunConfig":
        raw = copy.deepcopy(DEFAULT_CONFIG)
        if path is not None:
            doc = read_json(Path(path))
            if not isinstance(doc, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
            raw = _merge(raw, doc)
        for text in overrides or []:
            key_path, value = parse_override(text)
            raw = apply_override(raw, key_path, value)
        return cls(raw)

    # -- component views -----------------------------------------------------

    def toy_preset(self) -> dict:
        ref = self.raw["toy"]["preset"]
        if isinstance(ref, dict):
            preset = dict(ref)
        elif ref in BUILTIN_PRESETS:
            preset = dict(BUILTIN_PRESETS[ref])
        else:
            path = Path(ref)
            if not path.is_file():
                raise ConfigError(f"toy preset {ref!r} is neither builtin nor a file")
            preset = read_json(path)
        preset["n_records"] = int(self.raw["toy"]["n_records"])
        preset["task_name"] = self.raw["task"]
        return validate_toy_preset(preset)

    def vae_config(self) -> VaeTrainConfig:
        m, w, t = self.raw["model"], self.raw["weights"], self.raw["training"]
        return VaeTrainConfig(
            latent_dim=m["latent_dim"],
            hidden_dim=m["vae_hidden"],
            beta=w["beta_vae"],
            mmd_weight=w["vae_mmd"],
            consistency_weight=w["vae_consistency"],
            lr=t["vae_lr"],
            epochs=t["vae_epochs"],
            batch_size=t["vae_batch"],
        )

    def diffusion_config(self) -> DiffusionTrainConfig:
        m, w, t = self.raw["model"], self.raw["weights"], self.raw["training"]
        return DiffusionTrainConfig(
            hidden_dim=m["denoiser_hidden"],
            t_embed_dim=m["t_embed_dim"],
            cond_embed_dim=m["cond_embed_dim"],
            mmd_weight=w["diff_mmd"],
            consistency_weight=w["diff_consistency"],
            p_uncond=w["p_uncond"],
            lr=t["diff_lr"],
            epochs=t["diff_epochs"],
            batch_size=t["diff_batch"],
        )

    def generator_config(self) -> GeneratorConfig:
        sched = self.raw["schedule"]
        return GeneratorConfig(
            vae=self.vae_config(),
            diffusion=self.diffusion_config(),
            schedule_steps=sched["steps"],
            beta_min=sched["beta_min"],
            beta_max=sched["beta_max"],
            guidance_weight=self.raw["weights"]["guidance"],
        )

    def classifier_config(self) -> ClassifierConfig:
        c = self.raw["classifier"]
        return ClassifierConfig(
            hidden_dim=self.raw["model"]["classifier_hidden"],
            lr=c["lr"],
            batch_size=c["batch_size"],
            max_epochs=c["max_epochs"],
            patience=c["patience"],
        )

    def protocol(self) -> EvalProtocol:
        p = self.raw["protocol"]
        return EvalProtocol(
            n_synth_sets=p["n_synth_sets"],
            n_model_seeds=p["n_model_seeds"],
            n_split_seeds=p["n_split_seeds"],
            classifier=self.classifier_config(),
        )

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(fractions=tuple(self.raw["protocol"]["split_fractions"]), seed=seed)
