"""Cohort schema, ingestion, preprocessing, splitting, and the toy cohort.

A cohort is an ordered collection of patient records, each an hourly T x F
matrix of continuous features plus a same-shaped observation mask, a static
demographic condition, and a binary outcome. On disk a cohort is a directory
holding ``meta.json`` and ``records.ndjson`` (one JSON object per patient,
raw values with nulls at unobserved cells); ``load_cohort(save_cohort(c))``
round-trips bit-exactly because the fill medians travel in the metadata.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, SchemaError
from .numerics import RngStream
from .serialize import canonical_dumps, read_json, write_json

DATASET_FORMAT_VERSION = 1

AGE_BRACKETS = ("<30", "31-50", "51-70", ">70")
SEXES = ("M", "F")
ETHNICITIES = ("White", "Black", "Asian", "Other")

#: All 32 intersectional (age, sex, ethnicity) subgroup keys, in a fixed order.
SUBGROUP_KEYS = tuple(
    (a, s, e) for a in AGE_BRACKETS for s in SEXES for e in ETHNICITIES
)


@dataclass(frozen=True)
class Condition:
    """Static demographic attributes of one patient."""

    age_bracket: str
    sex: str
    ethnicity: str

    def __post_init__(self):
        if self.age_bracket not in AGE_BRACKETS:
            raise SchemaError(f"unknown age bracket {self.age_bracket!r}")
        if self.sex not in SEXES:
            raise SchemaError(f"unknown sex {self.sex!r}")
        if self.ethnicity not in ETHNICITIES:
            raise SchemaError(f"unknown ethnicity {self.ethnicity!r}")

    def key(self) -> tuple[str, str, str]:
        return (self.age_bracket, self.sex, self.ethnicity)

    def one_hot(self) -> np.ndarray:
        """Fixed-order one-hot encoding: age(4) | sex(2) | ethnicity(4)."""
        vec = np.zeros(10)
        vec[AGE_BRACKETS.index(self.age_bracket)] = 1.0
        vec[4 + SEXES.index(self.sex)] = 1.0
        vec[6 + ETHNICITIES.index(self.ethnicity)] = 1.0
        return vec


@dataclass(frozen=True)
class PatientRecord:
    """One ICU stay: T x F values (filled), T x F observation mask, condition, outcome."""

    record_id: int
    values: np.ndarray
    mask: np.ndarray
    condition: Condition
    outcome: int

    def __post_init__(self):
        if self.values.shape != self.mask.shape or self.values.ndim != 2:
            raise SchemaError(
                f"record {self.record_id}: values {self.values.shape} and mask "
                f"{self.mask.shape} must be equal T x F matrices"
            )
        if not np.all(np.isfinite(self.values)):
            raise SchemaError(f"record {self.record_id}: non-finite values")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise SchemaError(f"record {self.record_id}: mask must be binary")
        if self.outcome not in (0, 1):
            raise SchemaError(f"record {self.record_id}: outcome must be 0 or 1")


@dataclass
class CohortMeta:
    feature_names: tuple[str, ...]
    n_timesteps: int
    n_features: int
    task_name: str
    fill_medians: np.ndarray | None = None
    norm_mean: np.ndarray | None = None
    norm_sd: np.ndarray | None = None
    provenance: dict | None = None  # config hash + seed of the producing command

    @property
    def normalized(self) -> bool:
        return self.norm_mean is not None

    def to_json(self) -> dict:
        def arr(x):
            return None if x is None else [float(v) for v in x]

        return {
            "format_version": DATASET_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "n_timesteps": self.n_timesteps,
            "n_features": self.n_features,
            "task_name": self.task_name,
            "vocabularies": {
                "age_bracket": list(AGE_BRACKETS),
                "sex": list(SEXES),
                "ethnicity": list(ETHNICITIES),
            },
            "fill_medians": arr(self.fill_medians),
            "norm_mean": arr(self.norm_mean),
            "norm_sd": arr(self.norm_sd),
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CohortMeta":
        if doc.get("format_version") != DATASET_FORMAT_VERSION:
            raise SchemaError(f"unsupported dataset format_version {doc.get('format_version')}")
        vocab = doc.get("vocabularies", {})
        expected = {
            "age_bracket": list(AGE_BRACKETS),
            "sex": list(SEXES),
            "ethnicity": list(ETHNICITIES),
        }
        if vocab != expected:
            raise SchemaError(f"vocabulary mismatch: {vocab} != {expected}")

        def arr(x):
            return None if x is None else np.asarray(x, dtype=np.float64)

        return cls(
            feature_names=tuple(doc["feature_names"]),
            n_timesteps=int(doc["n_timesteps"]),
            n_features=int(doc["n_features"]),
            task_name=doc["task_name"],
            fill_medians=arr(doc.get("fill_medians")),
            norm_mean=arr(doc.get("norm_mean")),
            norm_sd=arr(doc.get("norm_sd")),
            provenance=doc.get("provenance"),
        )


@dataclass
class Cohort:
    records: tuple[PatientRecord, ...]
    meta: CohortMeta

    def __post_init__(self):
        self.records = tuple(self.records)
        if not self.records:
            raise InputError("cohort must be non-empty")
        T, F = self.meta.n_timesteps, self.meta.n_features
        for rec in self.records:
            if rec.values.shape != (T, F):
                raise SchemaError(
                    f"record {rec.record_id}: shape {rec.values.shape} does not match "
                    f"cohort metadata ({T}, {F})"
                )

    def __len__(self) -> int:
        return len(self.records)

    def values_array(self) -> np.ndarray:
        """All records stacked to (N, T, F)."""
        return np.stack([r.values for r in self.records])

    def mask_array(self) -> np.ndarray:
        return np.stack([r.mask.astype(np.float64) for r in self.records])

    def outcomes(self) -> np.ndarray:
        return np.array([r.outcome for r in self.records], dtype=np.int64)

    def conditions_with_outcomes(self) -> list[tuple[Condition, int]]:
        """The empirical conditioning list a generator should replicate."""
        return [(r.condition, r.outcome) for r in self.records]

    def subset(self, records) -> "Cohort":
        return Cohort(records=tuple(records), meta=self.meta)


@dataclass(frozen=True)
class SplitSpec:
    """Three-way split with strata = outcome x age x sex x ethnicity."""

    fractions: tuple[float, float, float] = (0.45, 0.45, 0.10)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise InputError(f"split fractions must sum to 1, got {self.fractions}")
        if any(f < 0 for f in self.fractions):
            raise InputError("split fractions must be nonnegative")


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def forward_fill(raw: np.ndarray, medians: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Impute missing cells (NaN) by carrying the last observation forward.

    Cells missing before the first observation in their column take the
    per-feature population median supplied by the caller; a fully missing
    column becomes all-median. Returns (filled values, observation mask).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise InputError(f"expected a T x F matrix, got shape {raw.shape}")
    medians = np.asarray(medians, dtype=np.float64)
    if medians.shape != (raw.shape[1],):
        raise InputError(f"medians must have one entry per feature, got {medians.shape}")
    mask = (~np.isnan(raw)).astype(np.int8)
    values = raw.copy()
    for f in range(raw.shape[1]):
        last = medians[f]
        col = values[:, f]
        for t in range(raw.shape[0]):
            if mask[t, f]:
                last = col[t]
            else:
                col[t] = last
    return values, mask


def observed_medians(raws: list[np.ndarray], n_features: int) -> np.ndarray:
    """Per-feature median over all observed (non-NaN) cells of a population."""
    medians = np.empty(n_features)
    for f in range(n_features):
        cells = np.concatenate([r[:, f][~np.isnan(r[:, f])] for r in raws])
        medians[f] = np.median(cells) if cells.size else 0.0
    return medians


def normalize(cohort: Cohort, stats: tuple[np.ndarray, np.ndarray] | None = None) -> Cohort:
    """Z-score continuous features; masks are untouched.

    When ``stats`` is omitted they are computed from this cohort, which is
    only legitimate on the training split (stats then travel in the metadata
    so holdout splits can reuse them).
    """
    if cohort.meta.normalized:
        raise InputError("cohort is already normalized")
    if stats is None:
        values = cohort.values_array()
        mean = values.mean(axis=(0, 1))
        sd = values.std(axis=(0, 1))
    else:
        mean, sd = (np.asarray(s, dtype=np.float64) for s in stats)
    for f, s in enumerate(sd):
        if not s > 0:
            raise InputError(f"feature {cohort.meta.feature_names[f]!r} has zero variance")
    records = tuple(
        dataclasses.replace(r, values=(r.values - mean) / sd) for r in cohort.records
    )
    meta = dataclasses.replace(
        cohort.meta,
        norm_mean=mean.copy(),
        norm_sd=sd.copy(),
        fill_medians=None
        if cohort.meta.fill_medians is None
        else (cohort.meta.fill_medians - mean) / sd,
    )
    return Cohort(records=records, meta=meta)


def denormalize_values(values: np.ndarray, mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    return values * sd + mean


# ---------------------------------------------------------------------------
# splitting and partitioning
# ---------------------------------------------------------------------------


def largest_remainder_quotas(n: int, fractions) -> list[int]:
    """Apportion n items to len(fractions) buckets with |error| <= 1 each."""
    exact = [n * f for f in fractions]
    quotas = [int(np.floor(e)) for e in exact]
    remainders = [e - q for e, q in zip(exact, quotas)]
    leftover = n - sum(quotas)
    # ties broken by bucket order for determinism
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        quotas[i] += 1
    return quotas


def _seeded_shuffle(items: list, rng: RngStream) -> list:
    perm = rng.permutation(len(items))
    return [items[i] for i in perm]


def stratified_split(cohort: Cohort, spec: SplitSpec) -> tuple[Cohort, Cohort, Cohort]:
    """Split into (train, holdout, holdout_val), stratified by outcome and
    demographics with largest-remainder quotas inside every stratum.

    Membership depends only on (record ids, spec) -- records are canonically
    pre-sorted by id before the seeded shuffle, so permuting the input cohort
    does not change the assignment.
    """
    strata: dict[tuple, list[PatientRecord]] = {}
    for rec in cohort.records:
        key = (rec.outcome,) + rec.condition.key()
        strata.setdefault(key, []).append(rec)

    root = RngStream(spec.seed).child("stratified-split")
    buckets: tuple[list[PatientRecord], ...] = ([], [], [])
    for key in sorted(strata):
        members = sorted(strata[key], key=lambda r: r.record_id)
        members = _seeded_shuffle(members, root.child("/".join(str(k) for k in key)))
        quotas = largest_remainder_quotas(len(members), spec.fractions)
        start = 0
        for bucket, quota in zip(buckets, quotas):
            bucket.extend(members[start : start + quota])
            start += quota
    splits = tuple(
        cohort.subset(sorted(b, key=lambda r: r.record_id)) for b in buckets
    )
    return splits  # type: ignore[return-value]


def subgroup_partition(cohort: Cohort) -> dict[tuple[str, str, str], list[PatientRecord]]:
    """Partition records over all 32 intersectional subgroups (empty lists kept)."""
    groups: dict[tuple[str, str, str], list[PatientRecord]] = {k: [] for k in SUBGROUP_KEYS}
    for rec in cohort.records:
        groups[rec.condition.key()].append(rec)
    return groups


def subgroup_80_20_split(
    records: list[PatientRecord], seed: int
) -> tuple[list[PatientRecord], list[PatientRecord]]:
    """Split one subgroup into (large 80%, small 20%), stratified by outcome.

    Different seeds give different splits; the same seed reproduces the same
    membership regardless of input order.
    """
    if not records:
        raise InputError("subgroup must be non-empty")
    rng = RngStream(seed).child("subgroup-80-20")
    large: list[PatientRecord] = []
    small: list[PatientRecord] = []
    for outcome in (0, 1):
        members = sorted(
            (r for r in records if r.outcome == outcome), key=lambda r: r.record_id
        )
        if not members:
            continue
        members = _seeded_shuffle(members, rng.child(f"outcome-{outcome}"))
        n_large, _ = largest_remainder_quotas(len(members), (0.8, 0.2))
        large.extend(members[:n_large])
        small.extend(members[n_large:])
    large.sort(key=lambda r: r.record_id)
    small.sort(key=lambda r: r.record_id)
    return large, small


# ---------------------------------------------------------------------------
# dataset directory format
# ---------------------------------------------------------------------------


def save_cohort(cohort: Cohort, path: Path) -> None:
    """Write meta.json + records.ndjson; unobserved cells stored as nulls."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_json(path / "meta.json", cohort.meta.to_json())
    lines = []
    for rec in cohort.records:
        rows = [
            [
                float(v) if m else None
                for v, m in zip(value_row, mask_row)
            ]
            for value_row, mask_row in zip(rec.values, rec.mask)
        ]
        lines.append(
            canonical_dumps(
                {
                    "id": rec.record_id,
                    "values": rows,
                    "age_bracket": rec.condition.age_bracket,
                    "sex": rec.condition.sex,
                    "ethnicity": rec.condition.ethnicity,
                    "outcome": rec.outcome,
                }
            )
        )
    (path / "records.ndjson").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cohort(path: Path) -> Cohort:
    """Load and validate a dataset directory; malformed rows name their line."""
    path = Path(path)
    meta_path = path / "meta.json"
    records_path = path / "records.ndjson"
    if not meta_path.is_file():
        raise SchemaError(f"missing {meta_path}")
    if not records_path.is_file():
        raise SchemaError(f"missing {records_path}")
    meta = CohortMeta.from_json(read_json(meta_path))
    T, F = meta.n_timesteps, meta.n_features
    if len(meta.feature_names) != F:
        raise SchemaError(f"meta.json: {len(meta.feature_names)} feature names for F={F}")

    raws: list[np.ndarray] = []
    rows: list[dict] = []
    seen_ids: set[int] = set()
    with records_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise SchemaError(f"records.ndjson line {lineno}: invalid JSON ({err})") from err
            try:
                raw = np.array(
                    [[np.nan if v is None else float(v) for v in row] for row in obj["values"]],
                    dtype=np.float64,
                )
            except (TypeError, KeyError) as err:
                raise SchemaError(f"records.ndjson line {lineno}: malformed values ({err})") from err
            if raw.shape != (T, F):
                raise SchemaError(
                    f"records.ndjson line {lineno} (id {obj.get('id')}): values shape "
                    f"{raw.shape} does not match meta ({T}, {F})"
                )
            if np.any(np.isinf(raw)):
                raise SchemaError(f"records.ndjson line {lineno}: non-finite observed value")
            rec_id = obj.get("id")
            if not isinstance(rec_id, int) or rec_id in seen_ids:
                raise SchemaError(f"records.ndjson line {lineno}: missing or duplicate id {rec_id!r}")
            seen_ids.add(rec_id)
            raws.append(raw)
            rows.append({"lineno": lineno, "obj": obj})

    if not rows:
        raise SchemaError(f"{records_path}: no records")

    medians = meta.fill_medians
    if medians is None:
        medians = observed_medians(raws, F)
        meta = dataclasses.replace(meta, fill_medians=medians)

    records = []
    for raw, row in zip(raws, rows):
        obj, lineno = row["obj"], row["lineno"]
        values, mask = forward_fill(raw, medians)
        try:
            cond = Condition(
                age_bracket=obj["age_bracket"], sex=obj["sex"], ethnicity=obj["ethnicity"]
            )
        except (SchemaError, KeyError) as err:
            raise SchemaError(f"records.ndjson line {lineno}: {err}") from err
        outcome = obj.get("outcome")
        if outcome not in (0, 1):
            raise SchemaError(f"records.ndjson line {lineno}: outcome must be 0/1, got {outcome!r}")
        records.append(
            PatientRecord(
                record_id=obj["id"], values=values, mask=mask, condition=cond, outcome=outcome
            )
        )
    return Cohort(records=tuple(records), meta=meta)


# ---------------------------------------------------------------------------
# toy ground-truth cohort
# ---------------------------------------------------------------------------

#: Default toy process. Subgroup mean offsets are expressed in units of the
#: per-feature noise sd so one scalar shifts every feature by a comparable
#: amount; outcome log-odds combine a feature summary with subgroup biases.
#: Marginals are mildly non-uniform but keep all 32 subgroups populated at
#: the n=4000 desk scale.
TOY_PRESET_V1 = {
    "name": "icu-toy-v1",
    "n_records": 4000,
    "n_timesteps": 8,
    "feature_names": ["heart_rate", "resp_rate", "spo2", "mean_bp"],
    "task_name": "mortality",
    "base_mean": [82.0, 18.0, 96.5, 84.0],
    "noise_sd": [6.0, 2.5, 1.4, 7.0],
    "ar_coeff": 0.7,
    "age_marginals": [0.25, 0.25, 0.25, 0.25],
    "sex_marginals": [0.5, 0.5],
    "eth_marginals": [0.3, 0.28, 0.22, 0.2],
    "age_mean_offsets": [-0.6, -0.2, 0.2, 0.7],
    "sex_mean_offsets": [0.15, -0.15],
    "eth_mean_offsets": [0.0, 0.3, -0.25, 0.1],
    "outcome_weights": [1.3, -0.9, -1.1, 0.7],
    "outcome_bias": -0.8,
    "age_outcome_bias": [-0.5, -0.15, 0.2, 0.55],
    "sex_outcome_bias": [-0.1, 0.1],
    "eth_outcome_bias": [0.0, 0.2, -0.15, 0.05],
    "missing_rate": [0.1, 0.15, 0.2, 0.12],
}

_TOY_REQUIRED_KEYS = set(TOY_PRESET_V1)


def validate_toy_preset(preset: dict) -> dict:
    missing = _TOY_REQUIRED_KEYS - set(preset)
    extra = set(preset) - _TOY_REQUIRED_KEYS
    if missing or extra:
        raise InputError(f"toy preset keys: missing {sorted(missing)}, unknown {sorted(extra)}")
    if preset["n_records"] < 1:
        raise InputError("n_records must be positive")
    F = len(preset["feature_names"])
    for key in ("base_mean", "noise_sd", "outcome_weights", "missing_rate"):
        if len(preset[key]) != F:
            raise InputError(f"{key} must have {F} entries")
    for key, size in (
        ("age_marginals", 4),
        ("sex_marginals", 2),
        ("eth_marginals", 4),
        ("age_mean_offsets", 4),
        ("sex_mean_offsets", 2),
        ("eth_mean_offsets", 4),
        ("age_outcome_bias", 4),
        ("sex_outcome_bias", 2),
        ("eth_outcome_bias", 4),
    ):
        if len(preset[key]) != size:
            raise InputError(f"{key} must have {size} entries")
    for key in ("age_marginals", "sex_marginals", "eth_marginals"):
        if abs(sum(preset[key]) - 1.0) > 1e-9 or min(preset[key]) < 0:
            raise InputError(f"{key} must be a probability vector")
    if not 0 <= preset["ar_coeff"] < 1:
        raise InputError("ar_coeff must lie in [0, 1)")
    if min(preset["noise_sd"]) < 0:
        raise InputError("noise_sd must be nonnegative")
    return preset


def _categorical(probs, rng: RngStream) -> int:
    u = float(rng.uniform(()))
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(probs) - 1))


def sample_toy_condition(preset: dict, rng: RngStream) -> Condition:
    return Condition(
        age_bracket=AGE_BRACKETS[_categorical(preset["age_marginals"], rng)],
        sex=SEXES[_categorical(preset["sex_marginals"], rng)],
        ethnicity=ETHNICITIES[_categorical(preset["eth_marginals"], rng)],
    )


def toy_subgroup_means(preset: dict, condition: Condition) -> np.ndarray:
    """Per-feature stationary mean for one subgroup (offsets in sd units)."""
    shift = (
        preset["age_mean_offsets"][AGE_BRACKETS.index(condition.age_bracket)]
        + preset["sex_mean_offsets"][SEXES.index(condition.sex)]
        + preset["eth_mean_offsets"][ETHNICITIES.index(condition.ethnicity)]
    )
    return np.asarray(preset["base_mean"]) + shift * np.asarray(preset["noise_sd"])


def sample_toy_trajectory(preset: dict, condition: Condition, rng: RngStream) -> np.ndarray:
    """Draw the stationary AR(1) trajectory v[t] = mu + rho (v[t-1] - mu) + eta_t."""
    T = preset["n_timesteps"]
    F = len(preset["feature_names"])
    mu = toy_subgroup_means(preset, condition)
    sd = np.asarray(preset["noise_sd"], dtype=np.float64)
    rho = float(preset["ar_coeff"])
    eta = rng.normal((T, F)) * sd
    v = np.empty((T, F))
    v[0] = mu + eta[0] / np.sqrt(1.0 - rho**2)
    for t in range(1, T):
        v[t] = mu + rho * (v[t - 1] - mu) + eta[t]
    return v


def toy_outcome_prob(preset: dict, condition: Condition, values: np.ndarray) -> float:
    """Outcome probability sigmoid(w . summary(v) + b_g); the summary is the
    per-feature time-mean standardized by the global base mean and sd."""
    summary = (values.mean(axis=0) - np.asarray(preset["base_mean"])) / np.asarray(
        preset["noise_sd"]
    )
    logit = (
        float(np.dot(preset["outcome_weights"], summary))
        + preset["outcome_bias"]
        + preset["age_outcome_bias"][AGE_BRACKETS.index(condition.age_bracket)]
        + preset["sex_outcome_bias"][SEXES.index(condition.sex)]
        + preset["eth_outcome_bias"][ETHNICITIES.index(condition.ethnicity)]
    )
    return float(1.0 / (1.0 + np.exp(-logit)))


def sample_toy_missingness(preset: dict, rng: RngStream) -> np.ndarray:
    """Observation mask: cell (t, f) observed with prob 1 - missing_rate[f]."""
    T = preset["n_timesteps"]
    F = len(preset["feature_names"])
    rate = np.asarray(preset["missing_rate"])
    return (rng.uniform((T, F)) >= rate).astype(np.int8)


def synth_toy_cohort(preset: dict, seed: int, n_records: int | None = None) -> Cohort:
    """Generate the documented toy ground-truth cohort.

    Per record: (1) condition from the configured marginals, (2) AR(1)
    trajectory with subgroup-dependent means, (3) Bernoulli outcome from the
    trajectory summary, (4) Bernoulli missingness then forward-fill. The fill
    medians are the cohort's own observed-cell medians and are recorded in
    the metadata. Fixed seed => bit-identical cohort.
    """
    preset = validate_toy_preset(dict(preset))
    n = preset["n_records"] if n_records is None else int(n_records)
    if n < 1:
        raise InputError("n_records must be positive")
    F = len(preset["feature_names"])
    root = RngStream(seed).child("toy-cohort").child(preset["name"])

    drawn = []
    raws = []
    for i in range(n):
        rec_rng = root.child(f"record-{i}")
        cond = sample_toy_condition(preset, rec_rng)
        true_values = sample_toy_trajectory(preset, cond, rec_rng)
        p = toy_outcome_prob(preset, cond, true_values)
        outcome = int(rec_rng.uniform(()) < p)
        mask = sample_toy_missingness(preset, rec_rng)
        raw = np.where(mask == 1, true_values, np.nan)
        drawn.append((cond, outcome, mask))
        raws.append(raw)

    medians = observed_medians(raws, F)
    records = []
    for i, ((cond, outcome, _), raw) in enumerate(zip(drawn, raws)):
        values, mask = forward_fill(raw, medians)
        records.append(
            PatientRecord(
                record_id=i, values=values, mask=mask, condition=cond, outcome=outcome
            )
        )
    meta = CohortMeta(
        feature_names=tuple(preset["feature_names"]),
        n_timesteps=preset["n_timesteps"],
        n_features=F,
        task_name=preset["task_name"],
        fill_medians=medians,
    )
    return Cohort(records=tuple(records), meta=meta)
