import math

import numpy as np
import pytest

from dialog_hmm.models.dialog import BeliefState, ConfusionChannel, DialogDomain, DialogRecord
from dialog_hmm.models.hmm import HmmModel, ObservationSequence, StatePath, StateSpace, uniform_model
from dialog_hmm.services.belief_tracker import BeliefTracker, track_beliefs
from dialog_hmm.services.dialog_simulator import (
    Condition,
    ConditionTrainer,
    DialogSimulator,
    default_domain,
    empirical_error_rate,
    evaluate_model,
    generate_corpus,
    supervised_counts,
    train_condition,
)
from dialog_hmm.services.inference_service import forward, posteriors
from dialog_hmm.services.training_service import TrainingConfig
from dialog_hmm.utils.errors import DimensionMismatch, ZeroProbabilitySequence
from dialog_hmm.utils.validators import validate_model


@pytest.fixture
def noisy_domain():
    return default_domain()


@pytest.fixture
def clean_domain():
    return default_domain(error_rate=0.0)


class TestDomain:

    def test_default_domain_is_valid(self, noisy_domain):
        assert validate_model(noisy_domain.generating_model)[0]
        assert noisy_domain.channel.error_rate == pytest.approx(0.2, abs=1e-12)
        assert noisy_domain.emission_matches_channel()

    def test_channel_shape_must_match_space(self):
        space = StateSpace(2, 2)
        with pytest.raises(DimensionMismatch):
            DialogDomain(space, uniform_model(space), ConfusionChannel.identity(3))

    def test_channel_overrides_model_emission(self):
        space = StateSpace(2, 2)
        domain = DialogDomain(space, uniform_model(space), ConfusionChannel.identity(2))
        assert not domain.emission_matches_channel()
        np.testing.assert_array_equal(domain.generating_model.emission, np.eye(2))

    def test_record_lengths_must_match(self):
        with pytest.raises(DimensionMismatch):
            DialogRecord(StatePath([0, 1]), ObservationSequence([0]))


class TestGenerateCorpus:

    def test_identity_channel_copies_states(self, clean_domain):
        corpus = generate_corpus(clean_domain, 50, 5, 20, seed=1)
        for record in corpus:
            assert record.observed.tolist() == record.true_states.tolist()
        assert empirical_error_rate(corpus) == 0.0

    def test_same_seed_same_corpus(self, noisy_domain):
        first = generate_corpus(noisy_domain, 30, 5, 20, seed=42)
        second = generate_corpus(noisy_domain, 30, 5, 20, seed=42)
        assert [(r.true_states, r.observed) for r in first] == [(r.true_states, r.observed) for r in second]

    def test_different_seed_different_corpus(self, noisy_domain):
        first = generate_corpus(noisy_domain, 30, 5, 20, seed=1)
        second = generate_corpus(noisy_domain, 30, 5, 20, seed=2)
        assert [r.observed for r in first] != [r.observed for r in second]

    def test_lengths_within_bounds(self, noisy_domain):
        corpus = generate_corpus(noisy_domain, 200, 5, 20, seed=3)
        lengths = {len(record) for record in corpus}
        assert min(lengths) >= 5 and max(lengths) <= 20
        assert len(lengths) > 10

    def test_symmetric_error_rate(self, noisy_domain):
        corpus = generate_corpus(noisy_domain, 800, 5, 20, seed=2020)
        assert sum(len(record) for record in corpus) >= 9_000
        assert empirical_error_rate(corpus) == pytest.approx(0.2, abs=0.02)


class TestBeliefTracker:

    def test_golden_first_belief(self, golden_model):
        beliefs = track_beliefs(golden_model, ObservationSequence([0, 1]))
        np.testing.assert_allclose(beliefs[0].distribution, [0.45 / 0.55, 0.1 / 0.55], rtol=1e-12)
        assert beliefs[0].best_state == 0
        assert [b.turn_index for b in beliefs] == [0, 1]

    def test_last_belief_equals_smoothed_marginal(self, noisy_domain):
        record = generate_corpus(noisy_domain, 1, 15, 15, seed=9)[0]
        model = noisy_domain.generating_model
        beliefs = track_beliefs(model, record.observed)
        np.testing.assert_allclose(
            beliefs[-1].distribution, posteriors(model, record.observed).gamma[-1], rtol=1e-10
        )

    def test_beliefs_are_forward_rows(self, noisy_domain):
        record = generate_corpus(noisy_domain, 1, 20, 20, seed=10)[0]
        model = noisy_domain.generating_model
        rows = forward(model, record.observed).scaled_alpha
        for belief, row in zip(track_beliefs(model, record.observed), rows):
            np.testing.assert_allclose(belief.distribution, row, rtol=0, atol=1e-12)

    def test_identity_channel_point_mass(self, clean_domain):
        record = generate_corpus(clean_domain, 1, 12, 12, seed=4)[0]
        tracker = BeliefTracker(clean_domain.generating_model)
        for belief, state in zip(tracker.track(record.observed), record.observed):
            expected = np.zeros(4)
            expected[state] = 1.0
            np.testing.assert_array_equal(belief.distribution, expected)
        assert tracker.best_states(record.observed) == record.true_states.tolist()

    def test_impossible_observation(self):
        model = HmmModel(StateSpace(2, 2), [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ZeroProbabilitySequence):
            track_beliefs(model, ObservationSequence([0, 1]))

    def test_hypotheses_ranking(self):
        belief = BeliefState(np.array([0.1, 0.6, 0.05, 0.25]), turn_index=3)
        assert [state for state, _ in belief.hypotheses()] == [1, 3, 0, 2]
        assert belief.hypotheses(top_k=2) == [(1, 0.6), (3, 0.25)]
        assert [state for state, _ in belief.hypotheses(min_probability=0.1)] == [1, 3, 0]


class TestTrainCondition:

    def test_noiseless_manual_equals_automatic(self, clean_domain):
        corpus = generate_corpus(clean_domain, 100, 5, 20, seed=6)
        training = TrainingConfig()
        manual = train_condition(Condition.MANUAL, corpus, clean_domain.space, training)
        automatic = train_condition(Condition.AUTOMATIC, corpus, clean_domain.space, training)
        assert manual == automatic

    def test_manual_recovers_generator(self, noisy_domain):
        corpus = generate_corpus(noisy_domain, 4000, 5, 20, seed=77)
        assert sum(len(record) for record in corpus) >= 45_000
        model = train_condition("manual", corpus, noisy_domain.space, TrainingConfig())
        generator = noisy_domain.generating_model
        assert np.max(np.abs(model.transition - generator.transition)) <= 0.02
        assert np.max(np.abs(model.emission - generator.emission)) <= 0.02

    def test_all_conditions_validate(self, noisy_domain):
        corpus = generate_corpus(noisy_domain, 30, 5, 20, seed=8)
        trainer = ConditionTrainer(noisy_domain.space, TrainingConfig(max_iterations=20, seed=8), em_restarts=2)
        for condition in Condition:
            result = trainer.train(condition, corpus)
            assert validate_model(result.model)[0]
            assert (result.report is not None) == (condition is Condition.EM)

    def test_em_report_is_monotone(self, noisy_domain):
        corpus = generate_corpus(noisy_domain, 40, 5, 20, seed=12)
        result = ConditionTrainer(noisy_domain.space, TrainingConfig(seed=3)).train("em", corpus)
        assert result.report.is_monotone()
        assert result.model is result.report.final_model

    def test_automatic_requires_square_space(self, noisy_domain):
        corpus = generate_corpus(noisy_domain, 5, 5, 10, seed=1)
        with pytest.raises(DimensionMismatch):
            supervised_counts(corpus, StateSpace(4, 5), Condition.AUTOMATIC)

    def test_supervised_counts(self):
        record = DialogRecord(StatePath([0, 0, 1]), ObservationSequence([0, 1, 1]))
        counts = supervised_counts([record], StateSpace(2, 2), Condition.MANUAL)
        np.testing.assert_array_equal(counts.initial, [1, 0])
        np.testing.assert_array_equal(counts.transition, [[1, 1], [0, 0]])
        np.testing.assert_array_equal(counts.emission, [[1, 1], [0, 1]])

        automatic = supervised_counts([record], StateSpace(2, 2), Condition.AUTOMATIC)
        np.testing.assert_array_equal(automatic.transition, [[0, 1], [0, 1]])
        np.testing.assert_array_equal(automatic.emission, [[1, 0], [0, 2]])


class TestEvaluateModel:

    def test_uniform_baseline(self, noisy_domain):
        heldout = generate_corpus(noisy_domain, 50, 5, 20, seed=5)
        result = evaluate_model(uniform_model(noisy_domain.space), heldout)
        assert result.normalized_log_likelihood == pytest.approx(-math.log(4), abs=1e-12)
        assert result.infinite_dialogs == 0
        assert result.dialogs == 50

    def test_identity_channel_tracks_perfectly(self, clean_domain):
        heldout = generate_corpus(clean_domain, 50, 5, 20, seed=5)
        result = evaluate_model(clean_domain.generating_model, heldout)
        assert result.tracking_accuracy == 1.0

    def test_generator_matches_entropy_rate(self, noisy_domain):
        simulator = DialogSimulator(noisy_domain)
        entropy_rate = simulator.estimate_entropy_rate(3000, 5, 20, seed=100)
        heldout = simulator.generate_corpus(3000, 5, 20, seed=200)
        result = evaluate_model(noisy_domain.generating_model, heldout)
        assert result.normalized_log_likelihood == pytest.approx(-entropy_rate, abs=0.02)
        assert 0.0 < result.tracking_accuracy <= 1.0

    def test_zero_probability_dialog(self, noisy_domain, caplog):
        space = noisy_domain.space
        emission = np.zeros((4, 4))
        emission[:, 0] = 1.0
        blind = uniform_model(space).replace(emission=emission)
        heldout = [
            DialogRecord(StatePath([0, 0]), ObservationSequence([0, 0])),
            DialogRecord(StatePath([1, 1]), ObservationSequence([1, 1])),
        ]
        result = evaluate_model(blind, heldout)
        assert result.normalized_log_likelihood == float("-inf")
        assert result.infinite_dialogs == 1
        assert result.tracking_accuracy == 0.5
        assert "probabilidade zero" in caplog.text


@pytest.mark.slow
class TestConditionOrdering:

    def test_manual_em_automatic_ordering(self, noisy_domain):
        simulator = DialogSimulator(noisy_domain)
        held = 0
        for seed in range(10):
            corpus = simulator.generate_corpus(500, 5, 20, seed=1000 + seed)
            heldout = simulator.generate_corpus(200, 5, 20, seed=2000 + seed)
            trainer = ConditionTrainer(noisy_domain.space, TrainingConfig(seed=seed), em_restarts=10)
            scores = {
                condition: evaluate_model(trainer.train(condition, corpus).model, heldout).normalized_log_likelihood
                for condition in Condition
            }
            if (
                scores[Condition.MANUAL] >= scores[Condition.EM] - 0.005
                and scores[Condition.EM] >= scores[Condition.AUTOMATIC] - 0.005
            ):
                held += 1
        assert held >= 9

    def test_identity_channel_conditions_agree(self, clean_domain):
        simulator = DialogSimulator(clean_domain)
        corpus = simulator.generate_corpus(500, 5, 20, seed=31)
        heldout = simulator.generate_corpus(200, 5, 20, seed=32)
        trainer = ConditionTrainer(clean_domain.space, TrainingConfig(seed=1), em_restarts=10)
        scores = [
            evaluate_model(trainer.train(condition, corpus).model, heldout).normalized_log_likelihood
            for condition in Condition
        ]
        assert max(scores) - min(scores) <= 0.005
