import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from copulapid.pseudoobs import Dataset, pseudo_observations, ranks_to_unit


def test_rank_examples():
    assert_allclose(ranks_to_unit([3.2, -1.0, 0.5]), [0.75, 0.25, 0.5])
    assert_allclose(ranks_to_unit([5, 5, 1]), [0.625, 0.625, 0.25])


def test_sorted_column_is_rank_grid():
    x = np.random.default_rng(0).normal(size=200)
    u = np.sort(ranks_to_unit(x))
    assert_allclose(u, np.arange(1, 201) / 201.0)


@given(arrays(float, st.integers(5, 60), elements=st.floats(-1e3, 1e3)))
def test_invariant_under_increasing_transform(x):
    g = np.arctan(x / 7.0) * 3.0 + 1.0
    # strictly increasing maps preserve strict order; ties map to ties
    if len(np.unique(g)) == len(np.unique(x)):
        assert_allclose(ranks_to_unit(g), ranks_to_unit(x))


def test_dataset_invariance_and_permutation():
    rng = np.random.default_rng(1)
    y, x1, x2 = rng.normal(size=(3, 300))
    base = pseudo_observations(Dataset(y, x1, x2))
    mapped = pseudo_observations(Dataset(np.exp(y), x1 ** 3, 2 * x2 + 5))
    assert_array_equal(base.uy, mapped.uy)
    assert_array_equal(base.u1, mapped.u1)
    assert_array_equal(base.u2, mapped.u2)
    perm = rng.permutation(300)
    shuffled = pseudo_observations(Dataset(y[perm], x1[perm], x2[perm]))
    assert_array_equal(shuffled.u1, base.u1[perm])


def test_uniformity_ks():
    rng = np.random.default_rng(2)
    data = Dataset(rng.standard_t(3, 1000), rng.exponential(size=1000), rng.normal(size=1000))
    ps = pseudo_observations(data)
    for col in (ps.uy, ps.u1, ps.u2):
        assert stats.kstest(col, "uniform").pvalue > 0.01


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset([1, 2], [1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        Dataset([1, np.nan], [1, 2], [1, 2])
    with pytest.raises(ValueError):
        Dataset(np.zeros(10), np.zeros(10), np.zeros(10)).check_size()


def test_swap_sources():
    d = Dataset([1.0, 2.0], [3.0, 4.0], [5.0, 6.0])
    s = d.swap_sources()
    assert_array_equal(s.x1, d.x2)
    assert_array_equal(s.x2, d.x1)
