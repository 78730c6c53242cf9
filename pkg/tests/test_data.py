import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icusynth import data
from icusynth.data import (
    SUBGROUP_KEYS,
    Cohort,
    CohortMeta,
    Condition,
    PatientRecord,
    SplitSpec,
    forward_fill,
    largest_remainder_quotas,
    load_cohort,
    normalize,
    observed_medians,
    save_cohort,
    stratified_split,
    subgroup_80_20_split,
    subgroup_partition,
    synth_toy_cohort,
    toy_outcome_prob,
    sample_toy_condition,
    sample_toy_trajectory,
    validate_toy_preset,
)
from icusynth.errors import InputError, SchemaError
from icusynth.numerics import RngStream


@pytest.fixture(scope="module")
def toy_cohort():
    return synth_toy_cohort(data.TOY_PRESET_V1, seed=11, n_records=600)


class TestForwardFill:
    def test_carry_forward(self):
        raw = np.array([[5.0], [np.nan], [np.nan], [7.0]])
        values, mask = forward_fill(raw, medians=np.array([0.0]))
        assert values[:, 0].tolist() == [5.0, 5.0, 5.0, 7.0]
        assert mask[:, 0].tolist() == [1, 0, 0, 1]

    def test_fully_observed_unchanged(self):
        raw = np.arange(8.0).reshape(4, 2)
        values, mask = forward_fill(raw, medians=np.zeros(2))
        assert np.array_equal(values, raw)
        assert mask.all()

    def test_cold_start_takes_median(self):
        raw = np.array([[np.nan], [3.0]])
        values, mask = forward_fill(raw, medians=np.array([2.0]))
        assert values[:, 0].tolist() == [2.0, 3.0]
        assert mask[:, 0].tolist() == [0, 1]

    def test_fully_missing_column_all_median(self):
        raw = np.full((3, 1), np.nan)
        values, mask = forward_fill(raw, medians=np.array([4.5]))
        assert np.all(values == 4.5)
        assert not mask.any()

    @given(
        st.lists(
            st.one_of(st.none(), st.floats(-50, 50, allow_nan=False)),
            min_size=1,
            max_size=12,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_idempotent(self, column):
        raw = np.array([[np.nan if v is None else v] for v in column])
        values, mask = forward_fill(raw, medians=np.array([1.5]))
        refilled = np.where(mask == 1, values, np.nan)
        values2, mask2 = forward_fill(refilled, medians=np.array([1.5]))
        assert np.array_equal(values, values2)
        assert np.array_equal(mask, mask2)


class TestNormalize:
    def test_zscore(self, toy_cohort):
        normed = normalize(toy_cohort)
        values = normed.values_array()
        assert np.allclose(values.mean(axis=(0, 1)), 0.0, atol=1e-10)
        assert np.allclose(values.std(axis=(0, 1)), 1.0, atol=1e-10)

    def test_round_trip(self, toy_cohort):
        normed = normalize(toy_cohort)
        back = data.denormalize_values(
            normed.values_array(), normed.meta.norm_mean, normed.meta.norm_sd
        )
        assert np.allclose(back, toy_cohort.values_array(), atol=1e-10)

    def test_external_stats_leave_mean_nonzero(self, toy_cohort):
        stats = (toy_cohort.values_array().mean(axis=(0, 1)) + 5.0, np.ones(4))
        normed = normalize(toy_cohort, stats=stats)
        assert abs(normed.values_array().mean()) > 0.5

    def test_zero_sd_feature_named(self, toy_cohort):
        stats = (np.zeros(4), np.array([1.0, 0.0, 1.0, 1.0]))
        with pytest.raises(InputError, match="resp_rate"):
            normalize(toy_cohort, stats=stats)

    def test_double_normalize_rejected(self, toy_cohort):
        with pytest.raises(InputError):
            normalize(normalize(toy_cohort))


class TestLargestRemainder:
    def test_exact_fractions(self):
        assert largest_remainder_quotas(1000, (0.45, 0.45, 0.10)) == [450, 450, 100]

    def test_sums_to_n(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(0, 200))
            assert sum(largest_remainder_quotas(n, (0.45, 0.45, 0.10))) == n

    def test_single_record(self):
        assert largest_remainder_quotas(1, (0.45, 0.45, 0.10)) == [1, 0, 0]


class TestStratifiedSplit:
    def test_disjoint_exhaustive(self, toy_cohort):
        tr, ho, hv = stratified_split(toy_cohort, SplitSpec(seed=3))
        ids = [r.record_id for c in (tr, ho, hv) for r in c.records]
        assert sorted(ids) == [r.record_id for r in toy_cohort.records]

    def test_per_stratum_quota_error_at_most_one(self, toy_cohort):
        spec = SplitSpec(seed=3)
        splits = stratified_split(toy_cohort, spec)
        strata = {}
        for rec in toy_cohort.records:
            key = (rec.outcome,) + rec.condition.key()
            strata.setdefault(key, []).append(rec)
        for key, members in strata.items():
            counts = [
                sum(1 for r in c.records if (r.outcome,) + r.condition.key() == key)
                for c in splits
            ]
            for count, frac in zip(counts, spec.fractions):
                assert abs(count - len(members) * frac) <= 1

    def test_permutation_invariant_membership(self, toy_cohort):
        spec = SplitSpec(seed=9)
        shuffled = toy_cohort.subset(
            [toy_cohort.records[i] for i in np.random.default_rng(4).permutation(len(toy_cohort))]
        )
        a = stratified_split(toy_cohort, spec)
        b = stratified_split(shuffled, spec)
        for ca, cb in zip(a, b):
            assert {r.record_id for r in ca.records} == {r.record_id for r in cb.records}

    def test_seed_changes_membership(self, toy_cohort):
        a = stratified_split(toy_cohort, SplitSpec(seed=1))[0]
        b = stratified_split(toy_cohort, SplitSpec(seed=2))[0]
        assert {r.record_id for r in a.records} != {r.record_id for r in b.records}

    def test_bad_fractions_rejected(self):
        with pytest.raises(InputError):
            SplitSpec(fractions=(0.5, 0.5, 0.5))


class TestSubgroups:
    def test_partition_covers_32_keys(self, toy_cohort):
        groups = subgroup_partition(toy_cohort)
        assert set(groups) == set(SUBGROUP_KEYS)
        assert len(SUBGROUP_KEYS) == 32
        assert sum(len(v) for v in groups.values()) == len(toy_cohort)

    def test_single_patient_one_group(self, toy_cohort):
        single = toy_cohort.subset(toy_cohort.records[:1])
        groups = subgroup_partition(single)
        assert sum(bool(v) for v in groups.values()) == 1

    def test_80_20_sizes(self):
        recs = _make_records(100, outcome_rate=0.5)
        large, small = subgroup_80_20_split(recs, seed=0)
        assert (len(large), len(small)) == (80, 20)

    def test_80_20_five_records(self):
        recs = _make_records(5, outcome_rate=0.0)
        large, small = subgroup_80_20_split(recs, seed=0)
        assert (len(large), len(small)) == (4, 1)

    def test_80_20_deterministic_and_seed_sensitive(self):
        recs = _make_records(40, outcome_rate=0.3)
        a1 = {r.record_id for r in subgroup_80_20_split(recs, seed=5)[0]}
        a2 = {r.record_id for r in subgroup_80_20_split(recs, seed=5)[0]}
        b = {r.record_id for r in subgroup_80_20_split(recs, seed=6)[0]}
        assert a1 == a2
        assert a1 != b

    def test_80_20_stratified_by_outcome(self):
        recs = _make_records(50, outcome_rate=0.2)
        large, small = subgroup_80_20_split(recs, seed=1)
        assert sum(r.outcome for r in large) == 8
        assert sum(r.outcome for r in small) == 2


def _make_records(n, outcome_rate):
    cond = Condition(age_bracket="<30", sex="M", ethnicity="White")
    n_pos = int(round(n * outcome_rate))
    return [
        PatientRecord(
            record_id=i,
            values=np.zeros((2, 1)),
            mask=np.ones((2, 1), dtype=np.int8),
            condition=cond,
            outcome=1 if i < n_pos else 0,
        )
        for i in range(n)
    ]


class TestToyCohort:
    def test_degenerate_ar_is_constant(self):
        preset = dict(data.TOY_PRESET_V1, ar_coeff=0.0, noise_sd=[0.0, 0.0, 0.0, 0.0])
        rng = RngStream(0).child("t")
        cond = Condition(age_bracket=">70", sex="F", ethnicity="Black")
        v = sample_toy_trajectory(preset, cond, rng)
        mu = data.toy_subgroup_means(preset, cond)
        assert np.allclose(v, np.broadcast_to(mu, v.shape))

    def test_lag1_autocorrelation_matches_rho(self):
        # Monte-Carlo oracle: pooled lag-1 autocorrelation of the AR(1) draws
        preset = dict(data.TOY_PRESET_V1, n_timesteps=32)
        rng = RngStream(123).child("ac")
        cond = Condition(age_bracket="31-50", sex="M", ethnicity="White")
        mu = data.toy_subgroup_means(preset, cond)
        sd = np.asarray(preset["noise_sd"])
        num = den = 0.0
        for _ in range(120):  # 120 x 32 x 4 > 1e4 cell pairs
            v = (sample_toy_trajectory(preset, cond, rng) - mu) / sd
            num += float((v[1:] * v[:-1]).sum())
            den += float((v**2).sum())
        assert abs(num / den - preset["ar_coeff"]) < 0.05

    def test_outcome_rate_matches_model_average(self):
        preset = dict(data.TOY_PRESET_V1)
        cohort = synth_toy_cohort(preset, seed=21, n_records=10_000)
        rng = RngStream(22).child("probe")
        probs = []
        for i in range(10_000):
            rec_rng = rng.child(f"r{i}")
            cond = sample_toy_condition(preset, rec_rng)
            v = sample_toy_trajectory(preset, cond, rec_rng)
            probs.append(toy_outcome_prob(preset, cond, v))
        assert abs(cohort.outcomes().mean() - np.mean(probs)) < 0.02

    def test_bit_identical_across_runs(self):
        a = synth_toy_cohort(data.TOY_PRESET_V1, seed=33, n_records=50)
        b = synth_toy_cohort(data.TOY_PRESET_V1, seed=33, n_records=50)
        for ra, rb in zip(a.records, b.records):
            assert np.array_equal(ra.values, rb.values)
            assert np.array_equal(ra.mask, rb.mask)
            assert ra.condition == rb.condition and ra.outcome == rb.outcome

    def test_invalid_config_rejected(self):
        with pytest.raises(InputError):
            validate_toy_preset({"name": "broken"})
        with pytest.raises(InputError):
            synth_toy_cohort(data.TOY_PRESET_V1, seed=0, n_records=0)
        with pytest.raises(InputError):
            validate_toy_preset(dict(data.TOY_PRESET_V1, age_marginals=[1, 0, 0, 1]))

    def test_record_invariant_fill_values(self, toy_cohort):
        # mask==0 cells must equal what forward_fill would produce
        med = toy_cohort.meta.fill_medians
        for rec in toy_cohort.records[:50]:
            raw = np.where(rec.mask == 1, rec.values, np.nan)
            refilled, _ = forward_fill(raw, med)
            assert np.array_equal(refilled, rec.values)


class TestDatasetDirectory:
    def test_round_trip_bit_exact(self, toy_cohort, tmp_path):
        save_cohort(toy_cohort, tmp_path / "d")
        loaded = load_cohort(tmp_path / "d")
        assert len(loaded) == len(toy_cohort)
        assert loaded.meta.feature_names == toy_cohort.meta.feature_names
        for a, b in zip(toy_cohort.records, loaded.records):
            assert a.record_id == b.record_id
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.mask, b.mask)
            assert a.condition == b.condition and a.outcome == b.outcome

    def test_save_is_byte_stable(self, toy_cohort, tmp_path):
        save_cohort(toy_cohort, tmp_path / "a")
        save_cohort(toy_cohort, tmp_path / "b")
        for name in ("meta.json", "records.ndjson"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_files_reported(self, tmp_path):
        with pytest.raises(SchemaError, match="meta.json"):
            load_cohort(tmp_path)

    def test_wrong_shape_names_line(self, toy_cohort, tmp_path):
        save_cohort(toy_cohort.subset(toy_cohort.records[:3]), tmp_path / "d")
        path = tmp_path / "d" / "records.ndjson"
        lines = path.read_text().splitlines()
        obj = json.loads(lines[1])
        obj["values"] = obj["values"][:-1]  # drop a row: T-1 instead of T
        lines[1] = json.dumps(obj)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match="line 2"):
            load_cohort(tmp_path / "d")

    def test_unknown_vocabulary_rejected(self, toy_cohort, tmp_path):
        save_cohort(toy_cohort.subset(toy_cohort.records[:2]), tmp_path / "d")
        path = tmp_path / "d" / "records.ndjson"
        lines = path.read_text().splitlines()
        obj = json.loads(lines[0])
        obj["ethnicity"] = "Hispanic"
        lines[0] = json.dumps(obj)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match="Hispanic"):
            load_cohort(tmp_path / "d")

    def test_duplicate_id_rejected(self, toy_cohort, tmp_path):
        save_cohort(toy_cohort.subset(toy_cohort.records[:2]), tmp_path / "d")
        path = tmp_path / "d" / "records.ndjson"
        lines = path.read_text().splitlines()
        path.write_text("\n".join([lines[0], lines[0]]) + "\n")
        with pytest.raises(SchemaError, match="duplicate"):
            load_cohort(tmp_path / "d")

    def test_load_without_medians_computes_them(self, toy_cohort, tmp_path):
        save_cohort(toy_cohort, tmp_path / "d")
        meta_path = tmp_path / "d" / "meta.json"
        doc = json.loads(meta_path.read_text())
        doc["fill_medians"] = None
        meta_path.write_text(json.dumps(doc))
        loaded = load_cohort(tmp_path / "d")
        assert loaded.meta.fill_medians is not None
        # identical medians because they came from the same observed cells
        assert np.allclose(loaded.meta.fill_medians, toy_cohort.meta.fill_medians)


class TestConditionEncoding:
    def test_one_hot_layout(self):
        c = Condition(age_bracket="51-70", sex="F", ethnicity="Asian")
        vec = c.one_hot()
        assert vec.shape == (10,)
        assert vec.sum() == 3.0
        assert vec[2] == 1.0 and vec[5] == 1.0 and vec[8] == 1.0

    def test_unknown_values_rejected(self):
        with pytest.raises(SchemaError):
            Condition(age_bracket="18-25", sex="M", ethnicity="White")
