import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from wick_forge.ensemble import PathEnsemble, mean_stderr, merge_moments


def test_bulk_equals_per_sample():
    ens = PathEnsemble(37, 7, seed=11, chunk=8)
    bulk = ens.all()
    assert bulk.shape == (37, 7)
    for i in (0, 5, 17, 36):
        assert np.array_equal(ens.sample(i), bulk[i])


def test_same_seed_same_draws_other_seed_differs():
    a = PathEnsemble(100, 5, seed=3).all()
    assert np.array_equal(a, PathEnsemble(100, 5, seed=3).all())
    assert not np.array_equal(a, PathEnsemble(100, 5, seed=4).all())


def test_prefix_stable_under_resize():
    small = PathEnsemble(50, 6, seed=1).all()
    big = PathEnsemble(50, 6, seed=1).with_size(500).all()
    assert np.array_equal(small, big[:50])


def test_marginals_standard_normal():
    z = PathEnsemble(40_000, 4, seed=0).all()
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.02
    assert stats.kstest(z[:, 2], "norm").pvalue > 1e-3
    assert abs(np.corrcoef(z[:, 0], z[:, 1])[0, 1]) < 0.02


@pytest.mark.parametrize("threads,chunk", [(1, 1000), (4, 1000), (3, 257)])
def test_mean_independent_of_threads(threads, chunk):
    ref = PathEnsemble(5000, 3, seed=8, chunk=1000).mean(lambda z: z**2, 3)
    got = PathEnsemble(5000, 3, seed=8, chunk=chunk, threads=threads).mean(lambda z: z**2, 3)
    if chunk == 1000:
        assert np.array_equal(ref[0], got[0]) and np.array_equal(ref[1], got[1])
    else:
        assert np.allclose(ref[0], got[0], rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 40), min_size=1, max_size=6), st.integers(0, 1000))
def test_merge_moments_matches_numpy(sizes, seed):
    rng = np.random.default_rng(seed)
    xs = [rng.normal(3.0, 2.0, size=n) for n in sizes]
    parts = [(x.size, x.mean(), ((x - x.mean()) ** 2).sum()) for x in xs]
    mean, se = merge_moments(parts)
    allx = np.concatenate(xs)
    assert mean == pytest.approx(allx.mean(), rel=1e-12)
    ref = mean_stderr(allx)
    assert se == pytest.approx(ref[1], rel=1e-10)


def test_invalid_sizes():
    with pytest.raises(ValueError):
        PathEnsemble(0, 3)
    with pytest.raises(IndexError):
        PathEnsemble(3, 3).sample(3)
