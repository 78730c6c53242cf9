"""Recurrent beta-VAE over mixed-type sequences (generation phase 1).

A single-layer GRU encoder maps each timestep's concat(values, mask) input
to a per-timestep Gaussian posterior (mu, logvar) of width ``latent_dim``;
a GRU decoder maps latents back to continuous values and mask logits. The
training objective is

    recon + beta * kld  [+ mmd_weight * mmd  + consistency_weight * cons]

where the optional penalties align posterior latents with standard-normal
prior draws (RBF-kernel MMD, biased V-statistic) and penalize encoder output
drift under small Gaussian input perturbations.

This module also hosts the graph-level penalty builders shared with the
diffusion phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Tensor, clip, concat, exp, log, sigmoid
from .data import Cohort, PatientRecord
from .errors import InputError, NumericError
from .nn import Adam, gru_sequence, init_gru, init_linear, linear
from .numerics import RngStream, median_heuristic_bandwidth
from .serialize import arrays_to_tensors, load_checkpoint, save_checkpoint, tensors_to_arrays

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
PROB_EPS = 1e-6


@dataclass
class VaeParams:
    """Encoder/decoder weights plus the sizes needed to rebuild the graph."""

    n_features: int
    latent_dim: int
    hidden_dim: int
    tensors: dict[str, Tensor]

    def save(self, path: Path) -> None:
        meta = {
            "n_features": self.n_features,
            "latent_dim": self.latent_dim,
            "hidden_dim": self.hidden_dim,
        }
        save_checkpoint(path, "vae", meta, tensors_to_arrays(self.tensors))

    @classmethod
    def load(cls, path: Path) -> "VaeParams":
        meta, arrays = load_checkpoint(path, "vae")
        return cls(
            n_features=int(meta["n_features"]),
            latent_dim=int(meta["latent_dim"]),
            hidden_dim=int(meta["hidden_dim"]),
            tensors=arrays_to_tensors(arrays),
        )


@dataclass(frozen=True)
class VaeTrainConfig:
    latent_dim: int = 8
    hidden_dim: int = 64
    beta: float = 0.1
    mmd_weight: float = 0.0
    consistency_weight: float = 0.0
    consistency_sigma_scale: float = 0.1
    # None -> median heuristic per batch, treated as a stop-gradient constant
    mmd_bandwidth: float | None = None
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 64


def init_vae_params(rng: RngStream, n_features: int, latent_dim: int, hidden_dim: int) -> VaeParams:
    t: dict[str, Tensor] = {}
    init_gru(t, "enc", rng.child("enc"), d_in=2 * n_features, hidden=hidden_dim)
    init_linear(t, "enc_head", rng.child("enc_head"), d_in=hidden_dim, d_out=2 * latent_dim)
    init_gru(t, "dec", rng.child("dec"), d_in=latent_dim, hidden=hidden_dim)
    init_linear(t, "dec_cont", rng.child("dec_cont"), d_in=hidden_dim, d_out=n_features)
    init_linear(t, "dec_mask", rng.child("dec_mask"), d_in=hidden_dim, d_out=n_features)
    return VaeParams(
        n_features=n_features, latent_dim=latent_dim, hidden_dim=hidden_dim, tensors=t
    )


# ---------------------------------------------------------------------------
# graph builders (batched; every tensor is (B, .) per timestep)
# ---------------------------------------------------------------------------


def record_inputs(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Model input: concat(values[t], mask[t]) per timestep -> (T, 2F) or (B, T, 2F)."""
    return np.concatenate([values, mask], axis=-1)


def encode_seq(params: VaeParams, xs: list[Tensor]) -> tuple[list[Tensor], list[Tensor]]:
    d = params.latent_dim
    hs = gru_sequence(params.tensors, "enc", params.hidden_dim, xs)
    mus, logvars = [], []
    for h in hs:
        head = linear(params.tensors, "enc_head", h)
        mus.append(head[:, :d])
        logvars.append(clip(head[:, d:], LOGVAR_MIN, LOGVAR_MAX))
    return mus, logvars


def decode_seq(params: VaeParams, zs: list[Tensor]) -> tuple[list[Tensor], list[Tensor]]:
    hs = gru_sequence(params.tensors, "dec", params.hidden_dim, zs)
    cont = [linear(params.tensors, "dec_cont", h) for h in hs]
    mask_logits = [linear(params.tensors, "dec_mask", h) for h in hs]
    return cont, mask_logits


def _seq_tensors(batch: np.ndarray) -> list[Tensor]:
    """(B, T, D) constant array -> per-timestep (B, D) Tensors."""
    return [Tensor(batch[:, t, :]) for t in range(batch.shape[1])]


def _seq_mean(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def mmd_penalty(x: Tensor, y: Tensor, bandwidth: float) -> Tensor:
    """Biased RBF-kernel MMD between two (B, D) tensor batches, differentiable."""
    inv = -1.0 / (2.0 * bandwidth**2)

    def gram(a: Tensor, b: Tensor) -> Tensor:
        a_sq = (a * a).sum(axis=1, keepdims=True)
        b_sq = (b * b).sum(axis=1, keepdims=True)
        d2 = a_sq + b_sq.T - (a @ b.T) * 2.0
        return exp(d2 * inv)

    return gram(x, x).mean() + gram(y, y).mean() - gram(x, y).mean() * 2.0


def reparameterize(mu: np.ndarray, logvar: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """z = mu + exp(logvar / 2) * noise."""
    mu, logvar, noise = (np.asarray(a, dtype=np.float64) for a in (mu, logvar, noise))
    if not (mu.shape == logvar.shape == noise.shape):
        raise InputError("mu, logvar and noise must share one shape")
    return mu + np.exp(0.5 * logvar) * noise


def encode(record: PatientRecord, params: VaeParams) -> tuple[np.ndarray, np.ndarray]:
    """Posterior parameters for one record: (mu, logvar), each (T, latent_dim)."""
    x = record_inputs(record.values, record.mask.astype(np.float64))
    if x.shape[1] != 2 * params.n_features:
        raise InputError(f"record has {x.shape[1] // 2} features, params expect {params.n_features}")
    mus, logvars = encode_seq(params, _seq_tensors(x[None]))
    return (
        np.stack([m.data[0] for m in mus]),
        np.stack([lv.data[0] for lv in logvars]),
    )


def decode(z: np.ndarray, params: VaeParams) -> tuple[np.ndarray, np.ndarray]:
    """Decode one latent sequence (T, latent_dim) -> (cont_hat, mask_logits)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != params.latent_dim:
        raise InputError(f"latent shape {z.shape} does not match latent_dim {params.latent_dim}")
    cont, mask_logits = decode_seq(params, _seq_tensors(z[None]))
    return (
        np.stack([c.data[0] for c in cont]),
        np.stack([m.data[0] for m in mask_logits]),
    )


def encode_cohort(cohort: Cohort, params: VaeParams) -> np.ndarray:
    """Deterministic latent dataset for phase 2: posterior means, (N, T, d)."""
    x = record_inputs(cohort.values_array(), cohort.mask_array())
    mus, _ = encode_seq(params, _seq_tensors(x))
    return np.stack([m.data for m in mus], axis=1)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _recon_terms(
    cont: list[Tensor], mask_logits: list[Tensor], values: np.ndarray, mask: np.ndarray
) -> tuple[Tensor, Tensor]:
    mse_t, bce_t = [], []
    for t in range(values.shape[1]):
        diff = cont[t] - Tensor(values[:, t, :])
        mse_t.append((diff * diff).mean())
        p = clip(sigmoid(mask_logits[t]), PROB_EPS, 1.0 - PROB_EPS)
        m = Tensor(mask[:, t, :])
        bce_t.append(-(m * log(p) + (1.0 - m) * log(1.0 - p)).mean())
    return _seq_mean(mse_t), _seq_mean(bce_t)


def recon_loss(record: PatientRecord, cont_hat: np.ndarray, mask_logits: np.ndarray) -> float:
    """MSE over continuous cells + mean binary cross-entropy over mask cells."""
    if cont_hat.shape != record.values.shape or mask_logits.shape != record.mask.shape:
        raise InputError("reconstruction shapes must match the record")
    mse, bce = _recon_terms(
        [Tensor(cont_hat[None, t]) for t in range(cont_hat.shape[0])],
        [Tensor(mask_logits[None, t]) for t in range(mask_logits.shape[0])],
        record.values[None],
        record.mask.astype(np.float64)[None],
    )
    return float(mse.data + bce.data)


def _kld_terms(mus: list[Tensor], logvars: list[Tensor]) -> Tensor:
    terms = []
    for mu, lv in zip(mus, logvars):
        terms.append(((exp(lv) + mu * mu - 1.0 - lv) * 0.5).mean())
    return _seq_mean(terms)


def kld_loss(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Mean over cells of 0.5 (exp(logvar) + mu^2 - 1 - logvar); zero iff N(0, I)."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise InputError("mu and logvar must share one shape")
    return float(np.mean(0.5 * (np.exp(logvar) + mu**2 - 1.0 - logvar)))


def consistency_loss(
    model_fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    sigma: float,
    rng: RngStream,
) -> float:
    """MSE(model_fn(x), model_fn(x + delta)) for one draw delta ~ N(0, sigma^2 I)."""
    if sigma < 0:
        raise InputError("sigma must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    delta = rng.normal(x.shape) * sigma
    a = np.asarray(model_fn(x), dtype=np.float64)
    b = np.asarray(model_fn(x + delta), dtype=np.float64)
    return float(np.mean((a - b) ** 2))


def _flatten_seq(ts: list[Tensor]) -> Tensor:
    return concat(ts, axis=1)


def vae_loss_enhanced(
    values: np.ndarray,
    mask: np.ndarray,
    params: VaeParams,
    config: VaeTrainConfig,
    rng: RngStream,
) -> tuple[Tensor, dict[str, float]]:
    """Full phase-1 objective on one batch; returns (scalar graph, diagnostics).

    ``values``/``mask`` are (B, T, F). With both alignment weights zero the
    result is bit-identical to recon + beta * kld (the penalty subgraphs are
    never built, so no spurious rng draws occur either).
    """
    B, T, F = values.shape
    if config.mmd_weight > 0 and B < 2:
        raise InputError("MMD penalty needs a batch of at least 2 records")
    x = record_inputs(values, mask)
    xs = _seq_tensors(x)
    mus, logvars = encode_seq(params, xs)

    noise = rng.child("reparam").normal((B, T, params.latent_dim))
    zs = [
        mus[t] + exp(logvars[t] * 0.5) * Tensor(noise[:, t, :]) for t in range(T)
    ]
    cont, mask_logits = decode_seq(params, zs)

    mse, bce = _recon_terms(cont, mask_logits, values, mask)
    recon = mse + bce
    kld = _kld_terms(mus, logvars)
    loss = recon + kld * config.beta
    diag = {
        "recon": float(recon.data),
        "mse": float(mse.data),
        "mask_bce": float(bce.data),
        "kld": float(kld.data),
        "mmd": 0.0,
        "consistency": 0.0,
    }

    if config.mmd_weight > 0:
        z_flat = _flatten_seq(zs)
        prior = rng.child("mmd-prior").normal((B, T * params.latent_dim))
        bandwidth = (
            config.mmd_bandwidth
            if config.mmd_bandwidth is not None
            else median_heuristic_bandwidth(z_flat.data, prior)
        )
        mmd = mmd_penalty(z_flat, Tensor(prior), bandwidth)
        diag["mmd"] = float(mmd.data)
        loss = loss + mmd * config.mmd_weight

    if config.consistency_weight > 0:
        sigma = config.consistency_sigma_scale * float(x.std())
        delta = rng.child("consistency").normal(x.shape) * sigma
        mus_pert, _ = encode_seq(params, _seq_tensors(x + delta))
        diff = _flatten_seq(mus) - _flatten_seq(mus_pert)
        cons = (diff * diff).mean()
        diag["consistency"] = float(cons.data)
        loss = loss + cons * config.consistency_weight

    diag["total"] = float(loss.data)
    return loss, diag


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def train_vae(
    cohort: Cohort, config: VaeTrainConfig, rng: RngStream
) -> tuple[VaeParams, list[dict[str, float]]]:
    """Adam-train the VAE on a normalized cohort; deterministic given the stream.

    Returns the trained parameters and one averaged diagnostics dict per epoch.
    """
    if not cohort.meta.normalized:
        raise InputError("train_vae expects a normalized cohort")
    values = cohort.values_array()
    mask = cohort.mask_array()
    n = len(cohort)
    params = init_vae_params(
        rng.child("init"), cohort.meta.n_features, config.latent_dim, config.hidden_dim
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
                continue  # degenerate tail batch cannot carry an MMD term
            loss, diag = vae_loss_enhanced(
                values[idx], mask[idx], params, config, erng.child(f"batch-{start}")
            )
            if not np.isfinite(diag["total"]):
                bad = [k for k, v in diag.items() if not np.isfinite(v)]
                raise NumericError(f"non-finite VAE loss at epoch {epoch}: terms {bad}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            for k, v in diag.items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1
        if n_batches == 0:
            raise InputError("cohort too small to form a single training batch")
        log_rows.append({k: v / n_batches for k, v in sums.items()} | {"epoch": float(epoch)})
    return params, log_rows
