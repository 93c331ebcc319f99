import numpy as np
import pytest

from drgrade.classifiers import ALL_KINDS, GaussianNbClassifier, Hyperparams, train
from drgrade.ensemble import (
    OVERALL,
    PER_CLASS,
    WeightedVoteEnsemble,
    fit_weights,
    load_ensemble,
    save_ensemble,
)
from drgrade.features import ClassLabel, FeatureDataset, FeatureVector, fit_scaler
from drgrade.synthgen import gen_features


def three_cluster_members(seed=3):
    """Six members trained on well separated clusters, plus scaled splits."""
    ds = gen_features(seed, 60, 8, 7.0)
    split = int(len(ds) * 0.7)
    tr = FeatureDataset(ds.features[:split], ds.labels[:split], ds.ids[:split])
    scaler = fit_scaler(tr)
    train_ds = FeatureDataset(scaler.transform(tr.features), tr.labels, tr.ids)
    val_ds = FeatureDataset(
        scaler.transform(ds.features[split:]), ds.labels[split:], ds.ids[split:]
    )
    hp = Hyperparams(n_trees=10, epochs=10)
    members = [train(kind, train_ds, hp, seed=5) for kind in ALL_KINDS]
    return members, train_ds, val_ds


class FixedPredictor:
    """Stub member that always votes one class."""

    def __init__(self, label):
        self.label = label

    def predict(self, X):
        return np.full(len(X), self.label, dtype=np.int64)


def test_single_member_ensemble_equals_member():
    members, _, val_ds = three_cluster_members()
    member = members[0]
    ens = fit_weights([member], val_ds, basis=OVERALL)
    for i in range(len(val_ds)):
        label, _ = ens.vote(val_ds.features[i])
        assert int(label) == int(member.predict(val_ds.features[i].reshape(1, -1))[0])


def test_dominant_weight_always_wins():
    ens = WeightedVoteEnsemble(
        [FixedPredictor(0), FixedPredictor(1)], np.array([0.9, 0.1]), OVERALL
    )
    for _ in range(5):
        label, scores = ens.vote(np.zeros(4))
        assert label == ClassLabel.NO_DR
        assert scores.tolist() == [0.9, 0.1, 0.0]


def test_unanimity_wins_regardless_of_weights():
    ens = WeightedVoteEnsemble(
        [FixedPredictor(2)] * 3, np.array([0.01, 0.5, 0.99]), OVERALL
    )
    label, _ = ens.vote(np.zeros(2))
    assert label == ClassLabel.SEVERE_DR


def test_hand_summed_vote():
    # weights (0.5, 0.3, 0.3): one vote NoDR vs two votes MildDR -> 0.6 > 0.5
    ens = WeightedVoteEnsemble(
        [FixedPredictor(0), FixedPredictor(1), FixedPredictor(1)],
        np.array([0.5, 0.3, 0.3]),
        OVERALL,
    )
    label, scores = ens.vote(np.zeros(3))
    assert label == ClassLabel.MILD_DR
    assert scores.tolist() == [0.5, 0.6, 0.0]


def test_exact_tie_goes_to_higher_severity():
    ens = WeightedVoteEnsemble(
        [FixedPredictor(0), FixedPredictor(2)], np.array([0.4, 0.4]), OVERALL
    )
    label, _ = ens.vote(np.zeros(2))
    assert label == ClassLabel.SEVERE_DR


def test_per_class_weight_contribution_from_reported_accuracies():
    # a member with per-class accuracies (95.34, 89.01, 75.95)% voting
    # severe contributes exactly 0.7595 to the severe score
    member = FixedPredictor(2)
    ens = WeightedVoteEnsemble(
        [member], np.array([[0.9534, 0.8901, 0.7595]]), PER_CLASS
    )
    label, scores = ens.vote(np.zeros(2))
    assert label == ClassLabel.SEVERE_DR
    assert scores[2] == 0.7595


def test_argmax_invariant_under_positive_rescaling():
    members = [FixedPredictor(0), FixedPredictor(1), FixedPredictor(2)]
    base = np.array([[0.7, 0.6, 0.5], [0.4, 0.8, 0.3], [0.2, 0.3, 0.9]])
    for lam in (0.001, 1.0, 14.0):
        ens = WeightedVoteEnsemble(members, base * lam, PER_CLASS)
        label, _ = ens.vote(np.zeros(2))
        assert label == ClassLabel.SEVERE_DR


def test_weight_increase_cannot_flip_away_from_that_member():
    rng = np.random.default_rng(7)
    for _ in range(30):
        votes = rng.integers(0, 3, size=4)
        weights = rng.uniform(0.1, 1.0, size=4)
        members = [FixedPredictor(int(v)) for v in votes]
        before, _ = WeightedVoteEnsemble(members, weights, OVERALL).vote(np.zeros(2))
        bumped = weights.copy()
        bumped[0] += rng.uniform(0.1, 2.0)
        after, _ = WeightedVoteEnsemble(members, bumped, OVERALL).vote(np.zeros(2))
        if int(before) == int(votes[0]):
            assert int(after) == int(votes[0])


def test_fit_weights_per_class_basis_uses_class_accuracies():
    members, _, val_ds = three_cluster_members(seed=11)
    ens = fit_weights(members, val_ds, basis=PER_CLASS)
    assert ens.weights.shape == (len(members), 3)
    assert (ens.weights >= 0).all() and (ens.weights <= 1).all()


def test_ensemble_beats_or_matches_best_member():
    members, _, val_ds = three_cluster_members(seed=19)
    ens = fit_weights(members, val_ds, basis=PER_CLASS)
    member_accs = [
        (m.predict(val_ds.features) == val_ds.labels).mean() for m in members
    ]
    ens_acc = (ens.predict(val_ds.features) == val_ds.labels).mean()
    assert ens_acc >= max(member_accs) - 0.02


def test_empty_member_list_rejected():
    with pytest.raises(ValueError):
        WeightedVoteEnsemble([], np.zeros((0,)), OVERALL)


def test_all_zero_weights_rejected():
    with pytest.raises(ValueError):
        WeightedVoteEnsemble([FixedPredictor(0)], np.array([0.0]), OVERALL)


def test_save_load_round_trip(tmp_path):
    members, train_ds, val_ds = three_cluster_members(seed=23)
    scaler = fit_scaler(train_ds)  # identity-ish; exercises the field
    ens = fit_weights(members[:3], val_ds, basis=PER_CLASS, scaler=scaler)
    path = tmp_path / "ensemble.json"
    save_ensemble(ens, path)
    back = load_ensemble(path)
    assert back.weight_basis == ens.weight_basis
    assert np.array_equal(back.weights, ens.weights)
    probes = val_ds.features[:20]
    for i in range(len(probes)):
        assert back.vote(probes[i])[0] == ens.vote(probes[i])[0]
