"""Conditional DDPM in the VAE latent space (generation phase 2).

The forward process corrupts a latent sequence z0 over ``steps`` discrete
levels, z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps; a bidirectional GRU
over the sequence axis predicts the injected noise from (z_t, t, condition).
Conditions are (demographics one-hot, outcome) vectors with a reserved
null token, trained with classifier-free dropout and sampled with

    eps = (1 + w) eps(z_t, t, cond) - w eps(z_t, t, null).

Ancestral sampling uses the standard posterior step with variance
beta_tilde_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t and no noise at the
final step. The optional alignment penalties mirror phase 1: MMD between
one-step denoised estimates and the batch's true z0, and output consistency
under small Gaussian perturbations of z_t.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Tensor, concat
from .autoencoder import VaeParams, decode_seq, mmd_penalty, _seq_tensors
from .data import Cohort, CohortMeta, Condition, PatientRecord, forward_fill
from .errors import InputError, NumericError, RareConditionError
from .nn import Adam, affine, gru_sequence, init_gru, init_linear
from .numerics import RngStream, median_heuristic_bandwidth
from .serialize import (
    arrays_to_tensors,
    load_checkpoint,
    save_checkpoint,
    tensors_to_arrays,
)

COND_DIM = 12  # age(4) | sex(2) | ethnicity(4) | outcome(1) | null token(1)


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def steps(self) -> int:
        return self.beta.shape[0]

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"beta": self.beta, "alpha": self.alpha, "alpha_bar": self.alpha_bar}


def make_schedule(
    steps: int, kind: str = "linear", beta_min: float = 1e-3, beta_max: float = 0.2
) -> NoiseSchedule:
    """Linear beta schedule; alpha_bar is the exact running product of (1 - beta).

    The desk-scale default (100 steps over [1e-3, 0.2]) is the classic
    1000-step [1e-4, 0.02] range rescaled by 1000/steps, which keeps the
    terminal alpha_bar below 1e-2.
    """
    if kind != "linear":
        raise InputError(f"unknown schedule kind {kind!r}")
    if steps < 1:
        raise InputError("steps must be positive")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise InputError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
    beta = np.linspace(beta_min, beta_max, steps)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def q_sample(z0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward corruption z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise InputError("z0 and eps must share one shape")
    if not 0 <= t < schedule.steps:
        raise InputError(f"t={t} outside [0, {schedule.steps})")
    abar = schedule.alpha_bar[t]
    return np.sqrt(abar) * z0 + np.sqrt(1.0 - abar) * eps


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Fixed sin/cos features of integer timesteps, (len(t), dim)."""
    if dim % 2 != 0:
        raise InputError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def cond_vector(condition: Condition | None, outcome: int | None = None) -> np.ndarray:
    """Conditioning input; ``condition=None`` selects the reserved null token."""
    v = np.zeros(COND_DIM)
    if condition is None:
        v[11] = 1.0
        return v
    if outcome not in (0, 1):
        raise InputError(f"outcome must be 0/1 when conditioning, got {outcome!r}")
    v[:10] = condition.one_hot()
    v[10] = float(outcome)
    return v


@dataclass
class DenoiserParams:
    latent_dim: int
    hidden_dim: int
    t_embed_dim: int
    cond_embed_dim: int
    tensors: dict[str, Tensor]

    def save(self, path: Path) -> None:
        meta = {
            "latent_dim": self.latent_dim,
            "hidden_dim": self.hidden_dim,
            "t_embed_dim": self.t_embed_dim,
            "cond_embed_dim": self.cond_embed_dim,
        }
        save_checkpoint(path, "denoiser", meta, tensors_to_arrays(self.tensors))

    @classmethod
    def load(cls, path: Path) -> "DenoiserParams":
        meta, arrays = load_checkpoint(path, "denoiser")
        return cls(
            latent_dim=int(meta["latent_dim"]),
            hidden_dim=int(meta["hidden_dim"]),
            t_embed_dim=int(meta["t_embed_dim"]),
            cond_embed_dim=int(meta["cond_embed_dim"]),
            tensors=arrays_to_tensors(arrays),
        )


@dataclass(frozen=True)
class DiffusionTrainConfig:
    hidden_dim: int = 64
    t_embed_dim: int = 16
    cond_embed_dim: int = 16
    mmd_weight: float = 0.0
    consistency_weight: float = 0.0
    consistency_sigma_scale: float = 0.1
    mmd_bandwidth: float | None = None
    p_uncond: float = 0.1
    lr: float = 1e-3
    epochs: int = 60
    batch_size: int = 64


def init_denoiser_params(
    rng: RngStream,
    latent_dim: int,
    hidden_dim: int,
    t_embed_dim: int = 16,
    cond_embed_dim: int = 16,
) -> DenoiserParams:
    t: dict[str, Tensor] = {}
    d_in = latent_dim + t_embed_dim + cond_embed_dim
    init_linear(t, "cond_proj", rng.child("cond_proj"), d_in=COND_DIM, d_out=cond_embed_dim)
    init_gru(t, "fwd", rng.child("fwd"), d_in=d_in, hidden=hidden_dim)
    init_gru(t, "bwd", rng.child("bwd"), d_in=d_in, hidden=hidden_dim)
    init_linear(t, "head", rng.child("head"), d_in=2 * hidden_dim, d_out=latent_dim)
    return DenoiserParams(
        latent_dim=latent_dim,
        hidden_dim=hidden_dim,
        t_embed_dim=t_embed_dim,
        cond_embed_dim=cond_embed_dim,
        tensors=t,
    )


def _denoise_graph(
    params: DenoiserParams, z_t: np.ndarray, t_idx: np.ndarray, cond: np.ndarray
) -> list[Tensor]:
    """Batched bidirectional denoiser pass; returns per-position (B, d) tensors.

    z_t (B, T, d) and t_idx (B,) are constants; gradients flow through the
    learned condition projection and the recurrent weights.
    """
    B, T, d = z_t.shape
    if d != params.latent_dim:
        raise InputError(f"latent width {d} does not match params ({params.latent_dim})")
    if cond.shape != (B, COND_DIM):
        raise InputError(f"conditioning must be (B, {COND_DIM}), got {cond.shape}")
    t_emb = sinusoidal_embedding(t_idx, params.t_embed_dim)
    c_emb = affine(Tensor(cond), params.tensors["cond_proj.w"], params.tensors["cond_proj.b"])
    xs = [
        concat([Tensor(np.concatenate([z_t[:, s, :], t_emb], axis=1)), c_emb], axis=1)
        for s in range(T)
    ]
    h_fwd = gru_sequence(params.tensors, "fwd", params.hidden_dim, xs)
    h_bwd = gru_sequence(params.tensors, "bwd", params.hidden_dim, xs, reverse=True)
    return [
        affine(
            concat([h_fwd[s], h_bwd[s]], axis=1),
            params.tensors["head.w"],
            params.tensors["head.b"],
        )
        for s in range(T)
    ]


def _denoise_array(
    params: DenoiserParams, z_t: np.ndarray, t_idx: np.ndarray, cond: np.ndarray
) -> np.ndarray:
    out = _denoise_graph(params, z_t, t_idx, cond)
    return np.stack([o.data for o in out], axis=1)


def denoiser_forward(
    z_t: np.ndarray, t: int, cond: tuple[Condition, int] | None, params: DenoiserParams
) -> np.ndarray:
    """Noise prediction for one latent sequence (T, d); ``cond=None`` is the null token."""
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.ndim != 2:
        raise InputError(f"expected (T, d) latents, got shape {z_t.shape}")
    vec = cond_vector(None) if cond is None else cond_vector(cond[0], cond[1])
    return _denoise_array(params, z_t[None], np.array([t]), vec[None])[0]


def cfg_eps(
    z_t: np.ndarray, t: int, cond: tuple[Condition, int], w: float, params: DenoiserParams
) -> np.ndarray:
    """Classifier-free guided prediction (1 + w) eps_cond - w eps_null.

    w = 0 returns the conditional prediction bit-for-bit (the null branch is
    not evaluated).
    """
    eps_cond = denoiser_forward(z_t, t, cond, params)
    if w == 0.0:
        return eps_cond
    eps_null = denoiser_forward(z_t, t, None, params)
    return (1.0 + w) * eps_cond - w * eps_null


def _cfg_eps_batch(
    params: DenoiserParams,
    z_t: np.ndarray,
    t: int,
    cond: np.ndarray,
    w: float,
) -> np.ndarray:
    B = z_t.shape[0]
    t_idx = np.full(B, t)
    eps_cond = _denoise_array(params, z_t, t_idx, cond)
    if w == 0.0:
        return eps_cond
    null = np.tile(cond_vector(None), (B, 1))
    eps_null = _denoise_array(params, z_t, t_idx, null)
    return (1.0 + w) * eps_cond - w * eps_null


# ---------------------------------------------------------------------------
# training objective
# ---------------------------------------------------------------------------


def diffusion_loss_enhanced(
    latents: np.ndarray,
    cond_vecs: np.ndarray,
    params: DenoiserParams,
    schedule: NoiseSchedule,
    config: DiffusionTrainConfig,
    rng: RngStream,
) -> tuple[Tensor, dict[str, float]]:
    """Noise-prediction objective on one batch of clean latents (B, T, d).

    Per sample: uniform step t, fresh Gaussian eps, condition dropped to the
    null token with probability p_uncond. Optional penalties: MMD between
    one-step denoised estimates zhat0 = (z_t - sqrt(1-abar) eps_hat)/sqrt(abar)
    and the true z0, and consistency of the prediction under z_t perturbation.
    With both weights zero this is exactly the base DDPM loss.
    """
    B, T, d = latents.shape
    if config.mmd_weight > 0 and B < 2:
        raise InputError("MMD penalty needs a batch of at least 2 samples")
    t_idx = rng.child("t").integers(0, schedule.steps, (B,))
    eps = rng.child("eps").normal((B, T, d))
    abar = schedule.alpha_bar[t_idx][:, None, None]
    z_t = np.sqrt(abar) * latents + np.sqrt(1.0 - abar) * eps

    cond = cond_vecs.copy()
    n_null = 0
    if config.p_uncond > 0:
        drop = rng.child("p-uncond").uniform((B,)) < config.p_uncond
        n_null = int(drop.sum())
        if n_null:
            cond[drop] = cond_vector(None)

    eps_hat = _denoise_graph(params, z_t, t_idx, cond)
    sq_terms = []
    for s in range(T):
        diff = eps_hat[s] - Tensor(eps[:, s, :])
        sq_terms.append((diff * diff).mean())
    base = sq_terms[0]
    for term in sq_terms[1:]:
        base = base + term
    base = base * (1.0 / T)

    loss = base
    diag = {"base": float(base.data), "mmd": 0.0, "consistency": 0.0, "n_null": float(n_null)}

    if config.mmd_weight > 0:
        scale = np.sqrt(1.0 - abar) / np.sqrt(abar)  # (B,1,1)
        inv_sqrt = 1.0 / np.sqrt(abar)
        zhat0_steps = [
            Tensor(z_t[:, s, :] * inv_sqrt[:, 0, :]) - eps_hat[s] * scale[:, 0, :]
            for s in range(T)
        ]
        zhat0 = concat(zhat0_steps, axis=1)
        z0_flat = latents.reshape(B, T * d)
        bandwidth = (
            config.mmd_bandwidth
            if config.mmd_bandwidth is not None
            else median_heuristic_bandwidth(zhat0.data, z0_flat)
        )
        mmd = mmd_penalty(zhat0, Tensor(z0_flat), bandwidth)
        diag["mmd"] = float(mmd.data)
        loss = loss + mmd * config.mmd_weight

    if config.consistency_weight > 0:
        sigma = config.consistency_sigma_scale * float(z_t.std())
        delta = rng.child("consistency").normal(z_t.shape) * sigma
        eps_pert = _denoise_graph(params, z_t + delta, t_idx, cond)
        cons_terms = []
        for s in range(T):
            diff = eps_hat[s] - eps_pert[s]
            cons_terms.append((diff * diff).mean())
        cons = cons_terms[0]
        for term in cons_terms[1:]:
            cons = cons + term
        cons = cons * (1.0 / T)
        diag["consistency"] = float(cons.data)
        loss = loss + cons * config.consistency_weight

    diag["total"] = float(loss.data)
    return loss, diag


def train_diffusion(
    latents: np.ndarray,
    cond_pairs: list[tuple[Condition, int]],
    schedule: NoiseSchedule,
    config: DiffusionTrainConfig,
    rng: RngStream,
) -> tuple[DenoiserParams, list[dict[str, float]]]:
    """Adam loop over the (enhanced) diffusion objective; deterministic given the stream."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 3:
        raise InputError(f"latents must be (N, T, d), got {latents.shape}")
    if len(cond_pairs) != latents.shape[0]:
        raise InputError("one condition per latent sequence required")
    cond_vecs = np.stack([cond_vector(c, y) for c, y in cond_pairs])
    n = latents.shape[0]
    params = init_denoiser_params(
        rng.child("init"),
        latent_dim=latents.shape[2],
        hidden_dim=config.hidden_dim,
        t_embed_dim=config.t_embed_dim,
        cond_embed_dim=config.cond_embed_dim,
    )
    opt = Adam(params.tensors, lr=config.lr)
    log_rows: list[dict[str, float]] = []
    for epoch in range(config.epochs):
        erng = rng.child(f"epoch-{epoch}")
        perm = erng.child("shuffle").permutation(n)
        sums: dict[str, float] = {}
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            if idx.size < 2 and config.mmd_weight > 0:
                continue
            loss, diag = diffusion_loss_enhanced(
                latents[idx], cond_vecs[idx], params, schedule, config, erng.child(f"batch-{start}")
            )
            if not np.isfinite(diag["total"]):
                bad = [k for k, v in diag.items() if not np.isfinite(v)]
                raise NumericError(f"non-finite diffusion loss at epoch {epoch}: terms {bad}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            for k, v in diag.items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1
        if n_batches == 0:
            raise InputError("latent dataset too small to form a single batch")
        log_rows.append({k: v / n_batches for k, v in sums.items()} | {"epoch": float(epoch)})
    return params, log_rows


# ---------------------------------------------------------------------------
# sampling and generation
# ---------------------------------------------------------------------------


def _sample_latent_batch(
    params: DenoiserParams,
    schedule: NoiseSchedule,
    cond: np.ndarray,
    guidance_weight: float,
    noise_init: np.ndarray,
    step_noise: Callable[[int], np.ndarray],
) -> np.ndarray:
    """Ancestral reverse process from supplied noise arrays (B, T, d)."""
    z = noise_init.copy()
    for t in range(schedule.steps - 1, -1, -1):
        eps_hat = _cfg_eps_batch(params, z, t, cond, guidance_weight)
        beta_t = schedule.beta[t]
        abar_t = schedule.alpha_bar[t]
        mean = (z - beta_t / np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(schedule.alpha[t])
        if not np.all(np.isfinite(mean)):
            raise NumericError(f"non-finite latent during reverse step t={t}")
        if t > 0:
            beta_tilde = (1.0 - schedule.alpha_bar[t - 1]) / (1.0 - abar_t) * beta_t
            z = mean + np.sqrt(beta_tilde) * step_noise(t)
        else:
            z = mean
    return z


def sample_latent(
    cond: tuple[Condition, int], bundle: "GeneratorBundle", rng: RngStream
) -> np.ndarray:
    """Draw one latent sequence (T, d) for a (condition, outcome) target."""
    vec = cond_vector(cond[0], cond[1])[None]
    T, d = bundle.n_timesteps, bundle.denoiser.latent_dim
    init = rng.child("init").normal((1, T, d))
    return _sample_latent_batch(
        bundle.denoiser,
        bundle.schedule,
        vec,
        bundle.guidance_weight,
        init,
        lambda t: rng.child(f"step-{t}").normal((1, T, d)),
    )[0]


def rejection_sample_conditional(
    sampler: Callable[[], PatientRecord],
    target_condition: Condition,
    target_outcome: int,
    max_tries: int = 1000,
) -> tuple[PatientRecord, int]:
    """Draw from an unconditional sampler until (condition, outcome) match.

    Returns (record, tries). Exhausting the budget raises a rare-condition
    error carrying the observed acceptance-rate estimate (0 successes in
    max_tries is reported as a rate below 1/max_tries).
    """
    if max_tries < 1:
        raise InputError("max_tries must be positive")
    for tries in range(1, max_tries + 1):
        rec = sampler()
        if rec.condition == target_condition and rec.outcome == target_outcome:
            return rec, tries
    raise RareConditionError(
        f"no sample matched {target_condition.key()} / outcome={target_outcome} "
        f"in {max_tries} tries (acceptance rate < {1.0 / max_tries:.2e})",
        tries=max_tries,
        acceptance_rate=1.0 / (max_tries + 1),
    )


@dataclass
class GeneratorBundle:
    """Everything needed to sample conditionally: both phases' parameters,
    the schedule, the guidance weight, and the training cohort's statistics."""

    vae: VaeParams
    denoiser: DenoiserParams
    schedule: NoiseSchedule
    guidance_weight: float
    norm_mean: np.ndarray
    norm_sd: np.ndarray
    fill_medians: np.ndarray
    feature_names: tuple[str, ...]
    n_timesteps: int
    task_name: str
    config_hash: str

    def __post_init__(self):
        if self.guidance_weight < 0:
            raise InputError("guidance weight must be nonnegative")
        if self.vae.latent_dim != self.denoiser.latent_dim:
            raise InputError("VAE and denoiser latent widths differ")

    def sample_cohort(
        self, cond_pairs: list[tuple[Condition, int]], rng: RngStream
    ) -> Cohort:
        return generate(self, cond_pairs, rng)

    def save(self, path: Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        arrays.update({f"vae.{k}": v for k, v in tensors_to_arrays(self.vae.tensors).items()})
        arrays.update(
            {f"denoiser.{k}": v for k, v in tensors_to_arrays(self.denoiser.tensors).items()}
        )
        arrays.update({f"schedule.{k}": v for k, v in self.schedule.to_arrays().items()})
        arrays["norm_mean"] = self.norm_mean
        arrays["norm_sd"] = self.norm_sd
        arrays["fill_medians"] = self.fill_medians
        meta = {
            "vae": {
                "n_features": self.vae.n_features,
                "latent_dim": self.vae.latent_dim,
                "hidden_dim": self.vae.hidden_dim,
            },
            "denoiser": {
                "latent_dim": self.denoiser.latent_dim,
                "hidden_dim": self.denoiser.hidden_dim,
                "t_embed_dim": self.denoiser.t_embed_dim,
                "cond_embed_dim": self.denoiser.cond_embed_dim,
            },
            "guidance_weight": self.guidance_weight,
            "feature_names": list(self.feature_names),
            "n_timesteps": self.n_timesteps,
            "task_name": self.task_name,
            "config_hash": self.config_hash,
        }
        save_checkpoint(path, "generator-bundle", meta, arrays)

    @classmethod
    def load(cls, path: Path) -> "GeneratorBundle":
        meta, arrays = load_checkpoint(path, "generator-bundle")

        def group(prefix: str) -> dict[str, np.ndarray]:
            return {
                k[len(prefix) + 1 :]: v for k, v in arrays.items() if k.startswith(prefix + ".")
            }

        vae = VaeParams(tensors=arrays_to_tensors(group("vae")), **meta["vae"])
        denoiser = DenoiserParams(tensors=arrays_to_tensors(group("denoiser")), **meta["denoiser"])
        sched_arrays = group("schedule")
        schedule = NoiseSchedule(
            beta=sched_arrays["beta"],
            alpha=sched_arrays["alpha"],
            alpha_bar=sched_arrays["alpha_bar"],
        )
        return cls(
            vae=vae,
            denoiser=denoiser,
            schedule=schedule,
            guidance_weight=float(meta["guidance_weight"]),
            norm_mean=arrays["norm_mean"],
            norm_sd=arrays["norm_sd"],
            fill_medians=arrays["fill_medians"],
            feature_names=tuple(meta["feature_names"]),
            n_timesteps=int(meta["n_timesteps"]),
            task_name=meta["task_name"],
            config_hash=meta["config_hash"],
        )


def generate(
    bundle: GeneratorBundle,
    cond_pairs: list[tuple[Condition, int]],
    rng: RngStream,
    batch_size: int = 256,
) -> Cohort:
    """Sample one synthetic cohort with the requested (condition, outcome) list.

    Latent noise comes from one child stream per record, so draws do not
    depend on batching; reruns with the same (seed, batch_size) are
    bit-identical. Decoded mask probabilities are thresholded at 0.5; values
    are denormalized and re-filled so the synthetic records satisfy the same
    mask/fill invariant as loaded real cohorts.
    """
    if not cond_pairs:
        raise InputError("cond_pairs must be non-empty")
    n = len(cond_pairs)
    T, d = bundle.n_timesteps, bundle.denoiser.latent_dim
    cond_vecs = np.stack([cond_vector(c, y) for c, y in cond_pairs])

    records: list[PatientRecord] = []
    for start in range(0, n, batch_size):
        idx = range(start, min(start + batch_size, n))
        streams = [rng.child(f"sample-{i}") for i in idx]
        init = np.stack([s.child("init").normal((T, d)) for s in streams])

        def step_noise(t: int, streams=streams) -> np.ndarray:
            return np.stack([s.child(f"step-{t}").normal((T, d)) for s in streams])

        z0 = _sample_latent_batch(
            bundle.denoiser,
            bundle.schedule,
            cond_vecs[list(idx)],
            bundle.guidance_weight,
            init,
            step_noise,
        )
        cont_t, mask_logit_t = decode_seq(bundle.vae, _seq_tensors(z0))
        cont = np.stack([c.data for c in cont_t], axis=1)
        mask_prob = np.stack([1.0 / (1.0 + np.exp(-m.data)) for m in mask_logit_t], axis=1)
        mask = (mask_prob > 0.5).astype(np.int8)
        values_raw = cont * bundle.norm_sd + bundle.norm_mean
        for j, i in enumerate(idx):
            raw = np.where(mask[j] == 1, values_raw[j], np.nan)
            filled, _ = forward_fill(raw, bundle.fill_medians)
            condition, outcome = cond_pairs[i]
            records.append(
                PatientRecord(
                    record_id=i,
                    values=filled,
                    mask=mask[j],
                    condition=condition,
                    outcome=outcome,
                )
            )
    meta = CohortMeta(
        feature_names=bundle.feature_names,
        n_timesteps=T,
        n_features=len(bundle.feature_names),
        task_name=bundle.task_name,
        fill_medians=bundle.fill_medians.copy(),
    )
    return Cohort(records=tuple(records), meta=meta)
