"""The fixed downstream predictor: one-layer GRU + sigmoid head.

One architecture serves every experiment: outcome prediction (mortality or
binary length-of-stay) and, relabeled, the real-vs-synthetic discriminator
behind the fidelity score. Training follows a fixed protocol: binary
cross-entropy, Adam at lr 5e-4, batch size 64, up to 50 epochs, returning
the checkpoint with the best validation AUROC (ties -> earliest epoch).

Continuous channels are z-scored with per-feature stats of the classifier's
own training cohort; the stats live in the checkpoint and are re-applied at
evaluation time, so cohorts are always passed around in raw units.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, clip, log, sigmoid
from .autoencoder import record_inputs
from .data import Cohort, PatientRecord
from .errors import InputError, NumericError, UndefinedMetricError
from .nn import Adam, affine, gru_sequence, init_gru, init_linear
from .numerics import RngStream, auroc
from .serialize import arrays_to_tensors, load_checkpoint, save_checkpoint, tensors_to_arrays

PROB_EPS = 1e-6


@dataclass(frozen=True)
class ClassifierConfig:
    """Protocol constants; fixed across all experiments in a report."""

    hidden_dim: int = 64
    lr: float = 5e-4
    batch_size: int = 64
    max_epochs: int = 50
    patience: int | None = None  # epochs without val improvement before stopping

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
        }


@dataclass
class GruClassifierParams:
    n_features: int
    hidden_dim: int
    norm_mean: np.ndarray
    norm_sd: np.ndarray
    tensors: dict[str, Tensor]

    def save(self, path: Path) -> None:
        meta = {"n_features": self.n_features, "hidden_dim": self.hidden_dim}
        arrays = dict(tensors_to_arrays(self.tensors))
        arrays["norm_mean"] = self.norm_mean
        arrays["norm_sd"] = self.norm_sd
        save_checkpoint(path, "gru-classifier", meta, arrays)

    @classmethod
    def load(cls, path: Path) -> "GruClassifierParams":
        meta, arrays = load_checkpoint(path, "gru-classifier")
        norm_mean = arrays.pop("norm_mean")
        norm_sd = arrays.pop("norm_sd")
        return cls(
            n_features=int(meta["n_features"]),
            hidden_dim=int(meta["hidden_dim"]),
            norm_mean=norm_mean,
            norm_sd=norm_sd,
            tensors=arrays_to_tensors(arrays),
        )

    def clone(self) -> "GruClassifierParams":
        return GruClassifierParams(
            n_features=self.n_features,
            hidden_dim=self.hidden_dim,
            norm_mean=self.norm_mean.copy(),
            norm_sd=self.norm_sd.copy(),
            tensors={k: Tensor(t.data.copy()) for k, t in self.tensors.items()},
        )


def init_classifier_params(
    rng: RngStream, n_features: int, hidden_dim: int, norm_mean: np.ndarray, norm_sd: np.ndarray
) -> GruClassifierParams:
    t: dict[str, Tensor] = {}
    init_gru(t, "gru", rng.child("gru"), d_in=2 * n_features, hidden=hidden_dim)
    init_linear(t, "head", rng.child("head"), d_in=hidden_dim, d_out=1)
    return GruClassifierParams(
        n_features=n_features,
        hidden_dim=hidden_dim,
        norm_mean=np.asarray(norm_mean, dtype=np.float64),
        norm_sd=np.asarray(norm_sd, dtype=np.float64),
        tensors=t,
    )


def _input_batch(params: GruClassifierParams, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    sd = np.where(params.norm_sd > 0, params.norm_sd, 1.0)
    return record_inputs((values - params.norm_mean) / sd, mask)


def _logit_graph(params: GruClassifierParams, x: np.ndarray) -> Tensor:
    """x (B, T, 2F) -> final-timestep logit tensor (B, 1)."""
    xs = [Tensor(x[:, t, :]) for t in range(x.shape[1])]
    hs = gru_sequence(params.tensors, "gru", params.hidden_dim, xs)
    return affine(hs[-1], params.tensors["head.w"], params.tensors["head.b"])


def classifier_scores(params: GruClassifierParams, cohort: Cohort) -> np.ndarray:
    """Predicted probabilities for every record, in cohort order."""
    x = _input_batch(params, cohort.values_array(), cohort.mask_array())
    logits = _logit_graph(params, x).data[:, 0]
    return 1.0 / (1.0 + np.exp(-logits))


def classifier_forward(record: PatientRecord, params: GruClassifierParams) -> float:
    """Probability in (0, 1) for one record; deterministic."""
    if record.values.shape[1] != params.n_features:
        raise InputError(
            f"record has {record.values.shape[1]} features, params expect {params.n_features}"
        )
    x = _input_batch(params, record.values[None], record.mask.astype(np.float64)[None])
    logit = float(_logit_graph(params, x).data[0, 0])
    return float(1.0 / (1.0 + np.exp(-logit)))


def bce_loss_graph(params: GruClassifierParams, x: np.ndarray, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy with clamped probabilities."""
    logits = _logit_graph(params, x)
    p = clip(sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS)
    y = Tensor(labels.reshape(-1, 1).astype(np.float64))
    return -(y * log(p) + (1.0 - y) * log(1.0 - p)).mean()


def train_classifier(
    train_cohort: Cohort,
    val_cohort: Cohort,
    config: ClassifierConfig,
    rng: RngStream,
    train_labels: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> tuple[GruClassifierParams, list[dict[str, float]]]:
    """Fixed-protocol training; returns the best-validation checkpoint.

    Labels default to record outcomes; the discriminator path passes explicit
    real/synthetic labels instead. Deterministic given the stream.
    """
    y_train = train_cohort.outcomes() if train_labels is None else np.asarray(train_labels)
    y_val = val_cohort.outcomes() if val_labels is None else np.asarray(val_labels)
    if y_train.size != len(train_cohort) or y_val.size != len(val_cohort):
        raise InputError("label arrays must match cohort sizes")
    if y_val.min() == y_val.max():
        raise UndefinedMetricError("validation set contains a single class")

    values = train_cohort.values_array()
    stats_sd = values.std(axis=(0, 1))
    params = init_classifier_params(
        rng.child("init"),
        train_cohort.meta.n_features,
        config.hidden_dim,
        norm_mean=values.mean(axis=(0, 1)),
        norm_sd=stats_sd,
    )
    x_train = _input_batch(params, values, train_cohort.mask_array())
    x_val = _input_batch(params, val_cohort.values_array(), val_cohort.mask_array())

    opt = Adam(params.tensors, lr=config.lr)
    n = len(train_cohort)
    best = params.clone()
    best_auc = -np.inf
    best_epoch = -1
    log_rows: list[dict[str, float]] = []
    for epoch in range(config.max_epochs):
        perm = rng.child(f"epoch-{epoch}").permutation(n)
        bce_sum = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss = bce_loss_graph(params, x_train[idx], y_train[idx])
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite classifier loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            bce_sum += loss.item()
            n_batches += 1
        val_logits = _logit_graph(params, x_val).data[:, 0]
        val_auc = auroc(val_logits, y_val)
        log_rows.append(
            {"epoch": float(epoch), "train_bce": bce_sum / n_batches, "val_auroc": val_auc}
        )
        if val_auc > best_auc:  # strict: ties keep the earliest epoch
            best_auc = val_auc
            best_epoch = epoch
            best = params.clone()
        if config.patience is not None and epoch - best_epoch >= config.patience:
            break
    return best, log_rows


def evaluate_classifier(params: GruClassifierParams, cohort: Cohort) -> float:
    """AUROC of the classifier's scores against the cohort's outcomes."""
    outcomes = cohort.outcomes()
    if outcomes.min() == outcomes.max():
        raise UndefinedMetricError("evaluation cohort contains a single class")
    return auroc(classifier_scores(params, cohort), outcomes)


def _half_split(records: list[PatientRecord], rng: RngStream) -> tuple[list, list]:
    members = sorted(records, key=lambda r: r.record_id)
    perm = rng.permutation(len(members))
    shuffled = [members[i] for i in perm]
    cut = len(members) // 2
    return shuffled[:cut], shuffled[cut:]


def train_discriminator(
    real: Cohort,
    synthetic: Cohort,
    config: ClassifierConfig,
    rng: RngStream,
) -> tuple[GruClassifierParams, float, dict]:
    """Real-vs-synthetic discriminator and its test AUC (the fidelity score).

    Labels: real = 0, synthetic = 1. Each side is split 50/50 into train and
    test halves (seeded, per side); a stratified 20% of the train halves is
    carved off as the validation slice for best-checkpoint selection, so the
    test halves never influence checkpoint choice. DiscAUC is the AUC of
    p(synthetic) over the combined test halves; 0.5 means indistinguishable.
    """
    if len(real) < 4 or len(synthetic) < 4:
        raise InputError("need at least 4 records per side to split train/val/test")

    def split_side(cohort: Cohort, label: str):
        train_half, test_half = _half_split(list(cohort.records), rng.child(f"half-{label}"))
        val_cut = max(1, int(round(0.2 * len(train_half))))
        perm = rng.child(f"val-{label}").permutation(len(train_half))
        shuffled = [train_half[i] for i in perm]
        return shuffled[val_cut:], shuffled[:val_cut], test_half

    real_train, real_val, real_test = split_side(real, "real")
    syn_train, syn_val, syn_test = split_side(synthetic, "synthetic")

    def combine(real_part, syn_part):
        records = []
        for i, rec in enumerate(list(real_part) + list(syn_part)):
            records.append(
                PatientRecord(
                    record_id=i,
                    values=rec.values,
                    mask=rec.mask,
                    condition=rec.condition,
                    outcome=rec.outcome,
                )
            )
        labels = np.array([0] * len(real_part) + [1] * len(syn_part))
        return Cohort(records=tuple(records), meta=real.meta), labels

    train_c, train_y = combine(real_train, syn_train)
    val_c, val_y = combine(real_val, syn_val)
    test_c, test_y = combine(real_test, syn_test)

    params, _ = train_classifier(
        train_c, val_c, config, rng.child("train"), train_labels=train_y, val_labels=val_y
    )
    test_scores = classifier_scores(params, test_c)
    disc_auc = auroc(test_scores, test_y)
    details = {"test_scores": test_scores, "test_labels": test_y}
    return params, disc_auc, details
