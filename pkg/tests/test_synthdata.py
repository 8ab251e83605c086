import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ganens.errors import DegenerateBlockError, ShapeError
from ganens.synthdata import (Component, MixtureSpec, PointSet, SplitSpec, block_normalize,
                              imbalanced_bimodal, isotropic_mixture, mean_pairwise_distance,
                              nearest_component, read_pointset, ring_mixture, sample_mixture,
                              train_test_split, write_pointset)


def brute_mean_pairwise(x):
    dists = [math.dist(a, b) for a, b in itertools.combinations(x.tolist(), 2)]
    return sum(dists) / len(dists)


def test_pointset_layout_must_tile():
    with pytest.raises(ShapeError):
        PointSet(np.zeros((3, 4)), ((0, 2), (3, 1)))
    ps = PointSet(np.zeros((3, 4)), ((0, 2), (2, 2)))
    assert ps.block_layout == ((0, 2), (2, 2))
    assert PointSet(np.zeros((3, 4))).block_layout == ((0, 4),)


def test_mixture_validation():
    with pytest.raises(ValueError):
        MixtureSpec((Component([0, 0], [[1, 2], [2, 1]], 1.0),))  # indefinite
    with pytest.raises(ValueError):
        isotropic_mixture([[0, 0], [1, 1]], 1.0, [0.5, 0.6])
    assert ring_mixture().dim == 2
    assert np.allclose(imbalanced_bimodal().weights, [0.9, 0.1])


def test_single_component_mean_within_law_of_large_numbers_bound():
    mu, sigma, n = np.array([1.5, -2.0]), 0.7, 5000
    ps = sample_mixture(isotropic_mixture([mu], sigma), n, seed=11)
    assert np.all(np.abs(ps.points.mean(axis=0) - mu) < 4 * sigma / math.sqrt(n))


def test_balanced_bimodal_split_within_binomial_bound():
    n = 4000
    spec = isotropic_mixture([[-5, 0], [5, 0]], 1.0)
    ps = sample_mixture(spec, n, seed=12)
    k = np.count_nonzero(nearest_component(spec, ps.points) == 0)
    assert abs(k - n / 2) <= 3 * math.sqrt(n * 0.25)


def test_sampling_is_seeded():
    spec = ring_mixture()
    a, b = sample_mixture(spec, 100, 3), sample_mixture(spec, 100, 3)
    assert a.points.tobytes() == b.points.tobytes()
    assert sample_mixture(spec, 100, 4).points.tobytes() != a.points.tobytes()


def test_split_sizes_and_disjointness():
    data = PointSet(np.arange(2000.0).reshape(1000, 2))
    tr, te, itr, ite = train_test_split(data, SplitSpec(0.8, 0.2, seed=5), return_indices=True)
    assert (len(tr), len(te)) == (800, 200)
    assert set(itr).isdisjoint(ite)
    assert set(itr) | set(ite) == set(range(1000))
    tr2, te2 = train_test_split(data, SplitSpec(0.8, 0.2, seed=5))
    assert tr2.points.tobytes() == tr.points.tobytes()


def test_split_rejects_empty_side():
    with pytest.raises(ValueError):
        train_test_split(PointSet(np.zeros((2, 1))), SplitSpec(0.9, 0.1))
    with pytest.raises(ValueError):
        SplitSpec(0.8, 0.3)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 500), st.floats(0.1, 0.8), st.integers(0, 10**6))
def test_split_property(n, frac, seed):
    data = PointSet(np.random.default_rng(seed).normal(size=(n, 2)))
    split = SplitSpec(frac, round(1 - frac, 6) * 0.999, seed)
    try:
        tr, te, itr, ite = train_test_split(data, split, return_indices=True)
    except ValueError:
        return
    assert set(itr).isdisjoint(ite)
    assert len(itr) + len(ite) <= n
    tr2, te2, _, _ = train_test_split(data, split, return_indices=True)
    assert tr2.points.tobytes() == tr.points.tobytes() and te2.points.tobytes() == te.points.tobytes()


def test_block_normalize_two_points():
    ref = PointSet(np.array([[0.0], [2.0]]))
    scales, (out,) = block_normalize(ref, [ref])
    assert scales.tolist() == [2.0]
    assert out.points[:, 0].tolist() == [0.0, 1.0]


def test_block_normalize_idempotent_at_unit_scale():
    ref = PointSet(np.array([[0.0], [1.0]]))
    tgt = PointSet(np.array([[3.0], [-4.5]]))
    scales, (out,) = block_normalize(ref, [tgt])
    assert scales.tolist() == [1.0]
    assert np.array_equal(out.points, tgt.points)


def test_block_normalize_per_block_and_exact():
    rng = np.random.default_rng(7)
    pts = np.hstack([rng.normal(size=(150, 2)) * 3, rng.normal(size=(150, 3)) * 0.1])
    ref = PointSet(pts, ((0, 2), (2, 3)))
    scales, (out,) = block_normalize(ref, [ref])
    assert scales[0] == pytest.approx(brute_mean_pairwise(pts[:, :2]), rel=1e-12)
    assert scales[1] == pytest.approx(brute_mean_pairwise(pts[:, 2:]), rel=1e-12)
    for off, w in out.block_layout:
        assert abs(brute_mean_pairwise(out.points[:, off:off + w]) - 1.0) < 1e-9
    assert out.block_scales == tuple(scales)


def test_sampled_estimate_matches_exact_all_pairs():
    x = np.random.default_rng(8).normal(size=(100, 2))
    exact = brute_mean_pairwise(x)
    sampled = mean_pairwise_distance(x, exact_limit=10, n_pairs=200_000, seed=1)
    assert abs(sampled - exact) / exact < 0.01


def test_degenerate_block_is_named():
    pts = np.hstack([np.random.default_rng(0).normal(size=(5, 1)), np.ones((5, 1))])
    with pytest.raises(DegenerateBlockError) as info:
        block_normalize(PointSet(pts, ((0, 1), (1, 1))), [])
    assert info.value.block == 1


def test_block_normalize_requires_shared_layout():
    ref = PointSet(np.random.default_rng(0).normal(size=(5, 2)))
    with pytest.raises(ShapeError):
        block_normalize(ref, [PointSet(np.zeros((2, 2)), ((0, 1), (1, 1)))])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100.0))
def test_scale_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    ref = PointSet(rng.normal(size=(40, 3)), ((0, 1), (1, 2)))
    tgt = PointSet(rng.normal(size=(10, 3)), ((0, 1), (1, 2)))
    _, (a,) = block_normalize(ref, [tgt])
    scaled_ref = PointSet(ref.points * np.array([c, 1, 1]), ref.block_layout)
    scaled_tgt = PointSet(tgt.points * np.array([c, 1, 1]), tgt.block_layout)
    _, (b,) = block_normalize(scaled_ref, [scaled_tgt])
    assert np.allclose(a.points, b.points, rtol=1e-12, atol=1e-12)


def test_pointset_csv_roundtrip(tmp_path):
    ps = PointSet(np.random.default_rng(0).normal(size=(7, 3)), ((0, 1), (1, 2)), (0.5, 2.0))
    path = tmp_path / "pts.csv"
    write_pointset(path, ps)
    assert path.read_text().splitlines()[0] == "x0,x1,x2"
    back = read_pointset(path)
    assert back.points.tobytes() == ps.points.tobytes()
    assert back.block_layout == ps.block_layout and back.block_scales == ps.block_scales


def test_plain_csv_without_sidecar(tmp_path):
    path = tmp_path / "ext.csv"
    path.write_text("x0,x1\n1.0,2.0\n3.5,-1\n")
    ps = read_pointset(path)
    assert ps.points.tolist() == [[1.0, 2.0], [3.5, -1.0]]
    assert ps.block_layout == ((0, 2),)
