import numpy as np
import pytest

from icusynth.data import Cohort, CohortMeta, Condition, PatientRecord
from icusynth.downstream import (
    ClassifierConfig,
    GruClassifierParams,
    bce_loss_graph,
    classifier_forward,
    classifier_scores,
    evaluate_classifier,
    init_classifier_params,
    train_classifier,
    train_discriminator,
    _input_batch,
)
from icusynth.errors import InputError, UndefinedMetricError
from icusynth.numerics import RngStream

from helpers import check_gradients

COND = Condition(age_bracket="<30", sex="M", ethnicity="White")


def separable_cohort(seed, n=120, T=4, F=2, shift=2.0, outcome_rate=0.5, feature_shift=None):
    """Outcome +1 records live at +shift, others at -shift: linearly separable."""
    rng = RngStream(seed).child("sep")
    records = []
    n_pos = int(round(n * outcome_rate))
    for i in range(n):
        outcome = 1 if i < n_pos else 0
        base = shift if outcome else -shift
        values = rng.child(f"v{i}").normal((T, F)) * 0.5 + base
        if feature_shift is not None:
            values = values + feature_shift
        records.append(
            PatientRecord(
                record_id=i,
                values=values,
                mask=np.ones((T, F), dtype=np.int8),
                condition=COND,
                outcome=outcome,
            )
        )
    meta = CohortMeta(
        feature_names=tuple(f"f{j}" for j in range(F)),
        n_timesteps=T,
        n_features=F,
        task_name="mortality",
    )
    return Cohort(records=tuple(records), meta=meta)


def noise_cohort(seed, n=200, T=4, F=2, outcome_rate=0.5, shift=0.0):
    """Labels independent of features: AUROC should hover near chance."""
    rng = RngStream(seed).child("noise")
    records = []
    n_pos = int(round(n * outcome_rate))
    for i in range(n):
        records.append(
            PatientRecord(
                record_id=i,
                values=rng.child(f"v{i}").normal((T, F)) + shift,
                mask=np.ones((T, F), dtype=np.int8),
                condition=COND,
                outcome=1 if i < n_pos else 0,
            )
        )
    meta = CohortMeta(
        feature_names=tuple(f"f{j}" for j in range(F)),
        n_timesteps=T,
        n_features=F,
        task_name="mortality",
    )
    return Cohort(records=tuple(records), meta=meta)


def fresh_params(seed=0, F=2, H=8):
    return init_classifier_params(RngStream(seed), F, H, np.zeros(F), np.ones(F))


class TestForward:
    def test_zero_weights_give_half(self):
        params = fresh_params()
        for t in params.tensors.values():
            t.data = np.zeros_like(t.data)
        rec = separable_cohort(1, n=2).records[0]
        assert classifier_forward(rec, params) == 0.5

    def test_deterministic_and_in_open_interval(self):
        params = fresh_params(2)
        rec = separable_cohort(3, n=2).records[1]
        a = classifier_forward(rec, params)
        assert a == classifier_forward(rec, params)
        assert 0.0 < a < 1.0

    def test_shape_mismatch(self):
        params = fresh_params(4, F=3)
        rec = separable_cohort(5, n=2).records[0]
        with pytest.raises(InputError):
            classifier_forward(rec, params)

    def test_scores_match_forward(self):
        params = fresh_params(6)
        cohort = separable_cohort(7, n=5)
        scores = classifier_scores(params, cohort)
        assert np.allclose(scores, [classifier_forward(r, params) for r in cohort.records])


class TestTrainClassifier:
    def test_separable_reaches_high_auroc(self):
        train = separable_cohort(10, n=160)
        val = separable_cohort(11, n=60)
        cfg = ClassifierConfig(hidden_dim=8, max_epochs=50, patience=10)
        params, log = train_classifier(train, val, cfg, RngStream(12).child("t"))
        assert max(row["val_auroc"] for row in log) >= 0.95

    def test_seed_repeat_identical_checkpoint(self):
        train = separable_cohort(13, n=80)
        val = separable_cohort(14, n=40)
        cfg = ClassifierConfig(hidden_dim=8, max_epochs=3)
        p1, _ = train_classifier(train, val, cfg, RngStream(15).child("t"))
        p2, _ = train_classifier(train, val, cfg, RngStream(15).child("t"))
        for k in p1.tensors:
            assert np.array_equal(p1.tensors[k].data, p2.tensors[k].data)

    def test_best_checkpoint_matches_max_logged_val(self):
        train = separable_cohort(16, n=80, shift=0.6)
        val = separable_cohort(17, n=50, shift=0.6)
        cfg = ClassifierConfig(hidden_dim=8, max_epochs=8)
        params, log = train_classifier(train, val, cfg, RngStream(18).child("t"))
        best_logged = max(row["val_auroc"] for row in log)
        achieved = evaluate_classifier(params, val)
        assert achieved == pytest.approx(best_logged, abs=1e-12)

    def test_single_class_val_rejected(self):
        train = separable_cohort(19, n=40)
        val = separable_cohort(20, n=20, outcome_rate=1.0)
        with pytest.raises(UndefinedMetricError):
            train_classifier(train, val, ClassifierConfig(max_epochs=1), RngStream(0))

    def test_gradient_oracle_bce(self):
        cohort = separable_cohort(21, n=6, T=3, F=2)
        params = fresh_params(22, F=2, H=4)
        x = _input_batch(params, cohort.values_array(), cohort.mask_array())
        y = cohort.outcomes()

        def build(p):
            return bce_loss_graph(params, x, y)

        check_gradients(build, params.tensors, rtol=1e-4)

    def test_patience_stops_early(self):
        train = separable_cohort(23, n=80)
        val = separable_cohort(24, n=40)
        cfg = ClassifierConfig(hidden_dim=8, max_epochs=50, patience=3)
        _, log = train_classifier(train, val, cfg, RngStream(25).child("t"))
        assert len(log) < 50


class TestEvaluate:
    def test_perfect_fit_on_training_data(self):
        train = separable_cohort(30, n=100, shift=3.0)
        val = separable_cohort(31, n=40, shift=3.0)
        cfg = ClassifierConfig(hidden_dim=8, max_epochs=30, patience=5)
        params, _ = train_classifier(train, val, cfg, RngStream(32).child("t"))
        assert evaluate_classifier(params, train) == 1.0

    def test_random_model_near_chance(self):
        cohort = noise_cohort(33, n=2000)
        params = fresh_params(34)
        assert 0.45 <= evaluate_classifier(params, cohort) <= 0.55

    def test_single_class_rejected(self):
        cohort = separable_cohort(35, n=20, outcome_rate=1.0)
        with pytest.raises(UndefinedMetricError):
            evaluate_classifier(fresh_params(36), cohort)

    def test_same_inputs_same_value(self):
        cohort = noise_cohort(37, n=50)
        params = fresh_params(38)
        assert evaluate_classifier(params, cohort) == evaluate_classifier(params, cohort)


class TestDiscriminator:
    def test_indistinguishable_sides_near_chance(self):
        real = noise_cohort(40, n=400)
        synth = noise_cohort(41, n=400)
        cfg = ClassifierConfig(hidden_dim=16, max_epochs=10, patience=4)
        _, auc, _ = train_discriminator(real, synth, cfg, RngStream(42).child("d"))
        assert 0.35 <= auc <= 0.65

    def test_shifted_side_detected(self):
        real = noise_cohort(43, n=300)
        synth = noise_cohort(44, n=300, shift=5.0)
        cfg = ClassifierConfig(hidden_dim=16, max_epochs=15, patience=5)
        _, auc, details = train_discriminator(real, synth, cfg, RngStream(45).child("d"))
        assert auc > 0.95
        # mirrored labels on the same scores map DiscAUC -> 1 - DiscAUC exactly
        from icusynth.numerics import auroc as _auroc

        flipped = _auroc(details["test_scores"], 1 - details["test_labels"])
        assert flipped == pytest.approx(1.0 - auc, abs=1e-12)

    def test_too_small_sides_rejected(self):
        real = noise_cohort(46, n=3)
        with pytest.raises(InputError):
            train_discriminator(real, real, ClassifierConfig(), RngStream(0))


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        params = fresh_params(50, F=3, H=8)
        params.save(tmp_path / "clf.json")
        loaded = GruClassifierParams.load(tmp_path / "clf.json")
        assert loaded.n_features == 3 and loaded.hidden_dim == 8
        assert np.array_equal(loaded.norm_mean, params.norm_mean)
        for k in params.tensors:
            assert np.array_equal(loaded.tensors[k].data, params.tensors[k].data)
        rec = separable_cohort(51, n=2, F=3).records[0]
        assert classifier_forward(rec, loaded) == classifier_forward(rec, params)
