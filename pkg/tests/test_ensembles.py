import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ganens.ensembles import (EnsembleModel, Member, apply_gate, cascade_shares, ensemble_generate,
                              gate_threshold, member_counts, quota_counts, train_cascade,
                              train_self_ensemble, train_standard_ensemble)
from ganens.gan import TrainConfig, discriminator_score, generate, init_gan
from ganens.synthdata import PointSet, imbalanced_bimodal, ring_mixture, sample_mixture

FAST = TrainConfig(epochs=3, batch_size=16, gen_hidden=(8,), disc_hidden=(8,), lr=1e-3)


@pytest.fixture(scope="module")
def ring_data():
    return sample_mixture(ring_mixture(), 256, 0)


def gen_member(seed, epoch=0, stage=0, noise=2):
    model = init_gan(2, replace(FAST, noise_dim=noise, init_std=0.5), seed=seed)
    return Member(model.generator, noise, seed, epoch, stage)


def sort_oracle_count(scores, r):
    """Largest count c with c/N <= r, realized by strict '>' on sorted scores (fewer on ties)."""
    s = sorted(scores)
    n = len(s)
    best = 0
    for t in [s[0] - 1.0] + s:
        c = sum(1 for v in s if v > t)
        if c / n <= r:
            best = max(best, c)
    return best


def test_gate_threshold_example():
    scores = [round(0.1 * i, 1) for i in range(1, 11)]
    t = gate_threshold(scores, 0.3)
    assert t == 0.7
    assert [s for s in scores if s > t] == [0.8, 0.9, 1.0]


def test_gate_threshold_extremes():
    scores = np.random.default_rng(0).uniform(size=50)
    assert gate_threshold(scores, 0.0) == scores.max()
    assert not np.any(scores > gate_threshold(scores, 0.0))
    t1 = gate_threshold(scores, 1.0)
    assert t1 < scores.min() and np.all(scores > t1)


def test_gate_threshold_ties_admit_fewer():
    scores = [0.1, 0.5, 0.5, 0.5, 0.9]
    t = gate_threshold(scores, 0.6)  # 3 of 5 would need splitting the tie
    assert sum(s > t for s in scores) == 1


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0, 1))
def test_gate_threshold_matches_sort_oracle(scores, r):
    t = gate_threshold(scores, r)
    assert sum(1 for s in scores if s > t) == sort_oracle_count(scores, r)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 300), st.floats(0, 1), st.integers(0, 10**6))
def test_quantile_accuracy_on_distinct_scores(n, r, seed):
    scores = np.random.default_rng(seed).permutation(n) / n
    frac = np.count_nonzero(scores > gate_threshold(scores, r)) / n
    assert r - 1 / n <= frac <= r


def test_apply_gate_matches_elementwise_filter():
    rng = np.random.default_rng(1)
    model = init_gan(2, replace(FAST, init_std=0.8), seed=3)
    data = PointSet(rng.normal(size=(100, 2)))
    scores = discriminator_score(model, data)
    t = float(np.median(scores))
    passed, decisions = apply_gate(model, data, t)
    expected = [p for p, s in zip(data.points.tolist(), scores) if s > t]
    assert passed.points.tolist() == expected
    assert [d.passed for d in decisions] == [int(s > t) for s in scores]
    assert all(d.threshold == t for d in decisions)
    below, _ = apply_gate(model, data, float(scores.min()) - 1.0)
    assert below.points.tobytes() == data.points.tobytes()
    above, _ = apply_gate(model, data, float(scores.max()))
    assert len(above) == 0
    with pytest.raises(ValueError):
        apply_gate(model, data, float("nan"))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(-0.5, 1.5))
def test_gate_partitions_data(seed, t):
    rng = np.random.default_rng(seed)
    model = init_gan(2, replace(FAST, init_std=0.8), seed=seed % 100)
    data = PointSet(rng.normal(size=(30, 2)))
    _, decisions = apply_gate(model, data, t)
    passed = {i for i, d in enumerate(decisions) if d.passed}
    rejected = {i for i, d in enumerate(decisions) if not d.passed}
    assert passed | rejected == set(range(30)) and not passed & rejected
    assert all((d.score > d.threshold) == bool(d.passed) for d in decisions)


def test_cascade_shares_formula():
    assert cascade_shares(0.8, 2) == pytest.approx((0.2, 0.8), abs=1e-15)
    shares = cascade_shares(0.5, 4)
    assert shares == pytest.approx((0.5, 0.25, 0.125, 0.125), abs=1e-15)
    assert abs(sum(cascade_shares(0.7, 5)) - 1) < 1e-12


def test_equal_split_quota():
    ens = EnsembleModel("standard", tuple(gen_member(s) for s in range(8)))
    counts, _ = member_counts(ens, 10000, "equal_split")
    assert counts.tolist() == [1250] * 8
    counts, _ = member_counts(ens, 10003, "equal_split")
    assert counts.tolist() == [1251] * 3 + [1250] * 5


def test_stage_share_quota():
    ens = EnsembleModel("cascade", (gen_member(1, stage=1), gen_member(2, stage=2)), cascade_shares(0.8, 2))
    counts, _ = member_counts(ens, 10000, "stage_shares")
    assert counts.tolist() == [2000, 8000]
    assert len(ensemble_generate(ens, 10000, "stage_shares", 0)) == 10000


def test_quota_counts_total():
    assert quota_counts(7, [1 / 3, 1 / 3, 1 / 3]).tolist() == [3, 2, 2]
    assert quota_counts(10, [0.0, 1.0]).tolist() == [0, 10]


def test_single_member_matches_generate():
    model = init_gan(2, replace(FAST, init_std=0.5), seed=4)
    ens = EnsembleModel("self", (Member(model.generator, 2, 4, 3),))
    for policy in ("equal_split", "uniform_random"):
        assert ensemble_generate(ens, 300, policy, 9).points.tobytes() == generate(model, 300, 9).points.tobytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 500), st.integers(1, 6), st.sampled_from(["equal_split", "uniform_random"]),
       st.integers(0, 10**6))
def test_generate_totals(n, m, policy, seed):
    ens = EnsembleModel("standard", tuple(gen_member(s) for s in range(m))) if m > 1 else \
        EnsembleModel("self", (gen_member(0),))
    if policy == "equal_split" and n < m:
        with pytest.raises(ValueError):
            ensemble_generate(ens, n, policy, seed)
        return
    out = ensemble_generate(ens, n, policy, seed)
    assert out.points.shape == (n, 2)


def test_stage_shares_requires_cascade():
    ens = EnsembleModel("standard", (gen_member(1), gen_member(2)))
    with pytest.raises(ValueError):
        ensemble_generate(ens, 10, "stage_shares", 0)


def test_ensemble_invariants():
    with pytest.raises(ValueError):
        EnsembleModel("standard", (gen_member(1), gen_member(1)))
    with pytest.raises(ValueError):
        EnsembleModel("self", (gen_member(1, epoch=3), gen_member(2, epoch=4)))
    with pytest.raises(ValueError):
        EnsembleModel("self", (Member(gen_member(1).generator, 2, 1, 4), Member(gen_member(1).generator, 2, 1, 3)))
    with pytest.raises(ValueError):
        EnsembleModel("cascade", (gen_member(1), gen_member(2)), (0.5, 0.6))
    with pytest.raises(ValueError):
        EnsembleModel("standard", (gen_member(1), gen_member(2, noise=3)))
    with pytest.raises(ValueError):
        EnsembleModel("standard", ())


def test_standard_ensemble(ring_data):
    ens = train_standard_ensemble(ring_data, 2, FAST, [11, 12])
    assert ens.kind == "standard" and len(ens) == 2
    assert [m.init_seed for m in ens.members] == [11, 12]
    assert all(m.epoch == FAST.epochs for m in ens.members)
    assert not ens.members[0].generator.equal(ens.members[1].generator)
    with pytest.raises(ValueError):
        train_standard_ensemble(ring_data, 2, FAST, [5, 5])
    with pytest.raises(ValueError):
        train_standard_ensemble(ring_data, 1, FAST, [5])


def test_self_ensemble_window(ring_data):
    cfg = replace(FAST, epochs=8, snapshot_window=(3, 8), seed=7)
    ens = train_self_ensemble(ring_data, 4, cfg)
    epochs = [m.epoch for m in ens.members]
    assert ens.kind == "self" and len(set(epochs)) == 4
    assert epochs == sorted(epochs) and all(3 <= e <= 8 for e in epochs)
    assert {m.init_seed for m in ens.members} == {7}
    full = train_self_ensemble(ring_data, 6, cfg)
    assert [m.epoch for m in full.members] == [3, 4, 5, 6, 7, 8]
    with pytest.raises(ValueError):
        train_self_ensemble(ring_data, 7, cfg)


def test_cascade_structure_and_stage_sizes():
    data = sample_mixture(imbalanced_bimodal(), 500, 1)
    cfg = replace(FAST, epochs=2)
    ens = train_cascade(data, 2, 0.8, cfg)
    assert ens.kind == "cascade" and len(ens) == 2
    assert [m.stage for m in ens.members] == [1, 2]
    assert len(ens.gate_thresholds) == 1
    assert ens.stage_shares == pytest.approx((0.2, 0.8), abs=1e-15)
    # rebuild stage 1 to check the stage-2 training-set size
    from ganens.gan import train_gan
    stage1 = train_gan(data, cfg)
    assert stage1.generator.equal(ens.members[0].generator)
    passed, _ = apply_gate(stage1, data, ens.gate_thresholds[0])
    assert abs(len(passed) / len(data) - 0.8) <= 1 / len(data)


def test_cascade_truncates_with_warning():
    data = sample_mixture(imbalanced_bimodal(), 100, 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ens = train_cascade(data, 3, 0.5, replace(FAST, epochs=1, batch_size=32))
    assert any("truncated" in str(w.message) for w in caught)
    assert len(ens) == 1 and ens.stage_shares == (1.0,)


def test_cascade_argument_checks(ring_data):
    with pytest.raises(ValueError):
        train_cascade(ring_data, 1, 0.8, FAST)
    with pytest.raises(ValueError):
        train_cascade(ring_data, 2, 1.0, FAST)
