"""Two-phase generator training: VAE first, then diffusion on its latents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autoencoder import VaeTrainConfig, encode_cohort, train_vae
from .data import Cohort, normalize, observed_medians
from .diffusion import (
    DiffusionTrainConfig,
    GeneratorBundle,
    make_schedule,
    train_diffusion,
)
from .numerics import RngStream


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything that defines one generator variant (one sweep point)."""

    vae: VaeTrainConfig = field(default_factory=VaeTrainConfig)
    diffusion: DiffusionTrainConfig = field(default_factory=DiffusionTrainConfig)
    schedule_steps: int = 100
    beta_min: float = 1e-3
    beta_max: float = 0.2
    guidance_weight: float = 1.0

    def with_weights(
        self,
        vae_mmd: float,
        vae_consistency: float,
        diff_mmd: float,
        diff_consistency: float,
    ) -> "GeneratorConfig":
        import dataclasses

        return dataclasses.replace(
            self,
            vae=dataclasses.replace(
                self.vae, mmd_weight=vae_mmd, consistency_weight=vae_consistency
            ),
            diffusion=dataclasses.replace(
                self.diffusion, mmd_weight=diff_mmd, consistency_weight=diff_consistency
            ),
        )


def train_generator(
    train_cohort: Cohort,
    config: GeneratorConfig,
    rng: RngStream,
    config_hash: str = "",
) -> tuple[GeneratorBundle, dict[str, list[dict[str, float]]]]:
    """Train both phases on a raw training cohort and assemble the bundle.

    Normalization stats come from this cohort alone; the bundle keeps them
    (plus raw-unit fill medians) so generated cohorts land back in raw units.
    """
    normed = normalize(train_cohort)
    vae_params, vae_log = train_vae(normed, config.vae, rng.child("vae"))
    latents = encode_cohort(normed, vae_params)
    schedule = make_schedule(
        config.schedule_steps, beta_min=config.beta_min, beta_max=config.beta_max
    )
    denoiser, diff_log = train_diffusion(
        latents,
        normed.conditions_with_outcomes(),
        schedule,
        config.diffusion,
        rng.child("diffusion"),
    )
    medians = train_cohort.meta.fill_medians
    if medians is None:
        raws = [np.where(r.mask == 1, r.values, np.nan) for r in train_cohort.records]
        medians = observed_medians(raws, train_cohort.meta.n_features)
    bundle = GeneratorBundle(
        vae=vae_params,
        denoiser=denoiser,
        schedule=schedule,
        guidance_weight=config.guidance_weight,
        norm_mean=normed.meta.norm_mean,
        norm_sd=normed.meta.norm_sd,
        fill_medians=medians,
        feature_names=train_cohort.meta.feature_names,
        n_timesteps=train_cohort.meta.n_timesteps,
        task_name=train_cohort.meta.task_name,
        config_hash=config_hash,
    )
    return bundle, {"vae": vae_log, "diffusion": diff_log}
