import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from copulapid.oracle import (DiscreteJoint, max_entropy_bins, binary_grid_report, discrete_broja, gaussian_cell_masses,
                              gaussian_unique_exact, quantize_model, solve_broja)

LN2 = math.log(2.0)
# AND gate, 2x2x2 grid oracle over the feasible polytope (frozen): R and S in bits
AND_R_BITS = 0.3112781244591328
AND_S_BITS = 0.5


def gate(fn):
    p = np.zeros((2, 2, 2))
    for a in (0, 1):
        for b in (0, 1):
            p[fn(a, b), a, b] = 0.25
    return p


def test_gaussian_exact_examples():
    assert gaussian_unique_exact(0.5, 0.5) == 0.0
    assert_allclose(gaussian_unique_exact(0.8, 0.0), 0.5 * math.log(1 / 0.36), rtol=1e-15)
    assert_allclose(gaussian_unique_exact(0.8, 0.0), 0.51083, atol=1e-5)
    assert gaussian_unique_exact(0.0, 0.8) == 0.0
    # literal indicator: rho2 < rho1 holds but the log ratio is negative and clamps to 0
    assert gaussian_unique_exact(-0.2, -0.8) == 0.0
    assert gaussian_unique_exact(-0.8, -0.2, absolute=True) > 0.0
    with pytest.raises(ValueError):
        gaussian_unique_exact(1.0, 0.2)


def test_gaussian_exact_one_nonzero():
    rng = np.random.default_rng(0)
    # non-negative correlations with the literal indicator, any sign with |rho| comparison
    for (r1, r2), absolute in zip(rng.uniform(0, 0.95, size=(200, 2)), [False] * 200):
        vals = [gaussian_unique_exact(r1, r2, absolute), gaussian_unique_exact(r2, r1, absolute)]
        assert sum(v > 0 for v in vals) == 1
    for r1, r2 in rng.uniform(-0.95, 0.95, size=(200, 2)):
        vals = [gaussian_unique_exact(r1, r2, True), gaussian_unique_exact(r2, r1, True)]
        assert sum(v > 0 for v in vals) == 1
        assert min(gaussian_unique_exact(r1, r2), gaussian_unique_exact(r2, r1)) >= 0


def test_xor():
    r = discrete_broja(gate(lambda a, b: a ^ b)).in_units("bits")
    assert_allclose([r.U1, r.U2, r.R], 0.0, atol=1e-6)
    assert_allclose(r.S, 1.0, atol=1e-6)


def test_and_matches_grid_oracle():
    p = gate(lambda a, b: a & b)
    r = discrete_broja(p).in_units("bits")
    g = binary_grid_report(p).in_units("bits")
    assert_allclose(g.R, AND_R_BITS, atol=1e-12)
    assert_allclose(g.S, AND_S_BITS, atol=1e-12)
    assert abs(r.R - AND_R_BITS) <= 1e-3 and abs(r.S - AND_S_BITS) <= 1e-3
    assert r.U1 <= 1e-3 and r.U2 <= 1e-3


def test_copy():
    p = np.zeros((2, 2, 2))
    for a in (0, 1):
        for b in (0, 1):
            p[a, a, b] = 0.25
    r = discrete_broja(p)
    assert_allclose(r.U1, LN2, atol=1e-6)
    assert_allclose([r.U2, r.R, r.S], 0.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(25))
def test_random_binary_tables_match_grid(seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(8, 0.7)).reshape(2, 2, 2)
    a = discrete_broja(p).in_units("bits")
    b = binary_grid_report(p).in_units("bits")
    for k in ("U1", "U2", "R", "S"):
        assert abs(getattr(a, k) - getattr(b, k)) <= 1e-3, k


@pytest.mark.parametrize("shape", [(3, 3, 3), (2, 4, 3), (4, 5, 5)])
def test_solver_monotone_and_feasible(shape):
    rng = np.random.default_rng(sum(shape))
    p = rng.dirichlet(np.full(np.prod(shape), 0.5)).reshape(shape)
    sol = solve_broja(p)
    hist = np.asarray(sol.objective_history)
    assert np.all(np.diff(hist) <= 1e-15)
    q = sol.q
    tv = 0.5 * (np.abs(q.sum(axis=2) - p.sum(axis=2)).sum() + np.abs(q.sum(axis=1) - p.sum(axis=1)).sum())
    assert tv <= 1e-10
    assert np.all(q >= 0)
    assert sol.converged


def test_solver_beats_random_feasible_points():
    # any point on the segment from the optimum to the product start is feasible
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.full(27, 0.8)).reshape(3, 3, 3)
    sol = solve_broja(p)
    from copulapid.oracle import conditional_mi_y_x1_given_x2
    py = p.sum(axis=(1, 2))
    q0 = p.sum(axis=2)[:, :, None] * p.sum(axis=1)[:, None, :] / py[:, None, None]
    for t in np.linspace(0.0, 1.0, 11):
        assert sol.unique_x1 <= conditional_mi_y_x1_given_x2((1 - t) * sol.q + t * q0) + 1e-9


def test_discrete_joint_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        DiscreteJoint(np.full((2, 2, 2), 0.2))
    with pytest.raises(ValueError):
        DiscreteJoint(np.ones((2, 2)) / 4)
    with pytest.raises(ValueError):
        discrete_broja(np.ones((17, 2, 2)) / 68)
    rows = [(a ^ b, a, b, 0.25) for a in (0, 1) for b in (0, 1)]
    j = DiscreteJoint.from_rows(rows)
    path = tmp_path / "xor.csv"
    j.to_csv(path)
    back = DiscreteJoint.from_csv(path)
    assert_allclose(back.p, j.p)
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x1,x2,probability\n0,0,0,abc\n")
    with pytest.raises(ValueError, match="line 2"):
        DiscreteJoint.from_csv(bad)


def test_cell_masses():
    m = gaussian_cell_masses(0.0, 16)
    edges = np.linspace(-8, 8, 17)
    p1 = np.diff(stats.norm.cdf(edges))
    p1 /= p1.sum()
    assert_allclose(m, np.outer(p1, p1), atol=1e-12)
    raw_total = (stats.norm.cdf(8) - stats.norm.cdf(-8)) ** 2
    assert abs(raw_total - 1.0) <= 1e-6
    assert_allclose(gaussian_cell_masses(0.3, 16).sum(), 1.0, rtol=1e-14)


def test_quantize_model_structure():
    j = quantize_model("M1", 0.5, 0.5, 0.3, n_x=16, n_y=3)
    assert j.p.shape == (3, 16, 16)
    assert_allclose(j.p.sum(), 1.0, rtol=1e-12)
    assert_allclose(j.p.sum(axis=0), gaussian_cell_masses(0.3, 16), atol=1e-15)
    # as close to equal-mass as the tie groups (anti-diagonals here) allow
    assert np.max(np.abs(j.p.sum(axis=(1, 2)) - 1 / 3)) < 0.1
    # Y deterministic on the cells
    assert np.all((j.p > 0).sum(axis=0) <= 1)
    with pytest.raises(ValueError):
        quantize_model("M3", 0.5, 0.5, 0.3)
    with pytest.raises(ValueError):
        quantize_model("M1", 0.0, 0.0, 0.3)


def test_max_entropy_bins_examples():
    assert max_entropy_bins([1, 2, 3, 4], [1, 1, 1, 1], 2).tolist() == [0, 0, 1, 1]
    assert max_entropy_bins([4, 3, 2, 1], [1, 1, 1, 1], 2).tolist() == [1, 1, 0, 0]
    # ties share a bin: three equal values cannot be split
    assert max_entropy_bins([1, 2, 2, 2, 3], [1, 1, 1, 1, 1], 2).tolist() in ([0, 1, 1, 1, 1], [0, 0, 0, 0, 1])
    with pytest.raises(ValueError):
        max_entropy_bins([1, 1, 1], [1, 1, 1], 2)


def test_max_entropy_bins_brute_force():
    import itertools
    rng = np.random.default_rng(9)
    for _ in range(30):
        vals = rng.integers(0, 7, size=12).astype(float)
        m = rng.uniform(0.1, 1.0, size=12)
        k = 3
        if len(np.unique(vals)) < k:
            continue
        bins = max_entropy_bins(vals, m, k)
        mass = np.bincount(bins, weights=m, minlength=k) / m.sum()
        ent = -np.sum(mass * np.log(mass))
        uniq = np.unique(vals)
        gm = np.array([m[vals == u].sum() for u in uniq]) / m.sum()
        best = -np.inf
        for cuts in itertools.combinations(range(1, len(uniq)), k - 1):
            parts = np.split(gm, cuts)
            pm = np.array([p.sum() for p in parts])
            best = max(best, -np.sum(pm * np.log(pm)))
        assert ent == pytest.approx(best, abs=1e-12)
        order = np.argsort(vals, kind="stable")
        assert np.all(np.diff(bins[order]) >= 0)


@pytest.mark.slow
def test_quantized_m1_peaks_at_equal_weights():
    grid = np.round(np.linspace(0, 1, 11), 10)
    S, R = [], []
    for w2 in grid:
        r = discrete_broja(quantize_model("M1", 0.5, w2, 0.3, 16, 3))
        S.append(r.S / r.I_y_x12)
        R.append(r.R / r.I_y_x12)
    assert grid[int(np.argmax(S))] == 0.5
    assert grid[int(np.argmax(R))] == 0.5
