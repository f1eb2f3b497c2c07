import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from copulapid.copula import CopulaFamily
from copulapid.estimator import EstimatorConfig, FittedPair, train_unique
from copulapid.pseudoobs import pseudo_observations
from copulapid.simgen import (MIN_TE_POINTS, ModelSpec, NetworkBlowUp, NetworkSpec, gaussian_correlation,
                              gen_gaussian_triple, gen_model, integrate, model_target, network_weights,
                              rossler_rhs, simulate_network, te_matrix, triplet_dataset)


def corr(data):
    return np.corrcoef(np.vstack([data.y, data.x1, data.x2]))


def test_gaussian_triple_identity():
    c = corr(gen_gaussian_triple(0.0, 0.0, 0.0, 3000, seed=0))
    assert np.max(np.abs(c - np.eye(3))) <= 0.05


def test_gaussian_triple_correlations():
    c = corr(gen_gaussian_triple(0.8, 0.4, 0.3, 10**5, seed=1))
    assert abs(c[0, 1] - 0.8) <= 0.01 and abs(c[0, 2] - 0.4) <= 0.01 and abs(c[1, 2] - 0.3) <= 0.01


def test_cholesky_round_trip_and_non_pd():
    S = gaussian_correlation(0.5, 0.5, 0.25)
    L = np.linalg.cholesky(S)
    assert_allclose(L @ L.T, S, atol=1e-12)
    with pytest.raises(ValueError):
        gen_gaussian_triple(0.8, 0.6, 0.0, 100)  # det < 0
    with pytest.raises(ValueError):
        gen_gaussian_triple(0.99, -0.99, 0.5, 100)


def test_generators_deterministic():
    a = gen_gaussian_triple(0.5, 0.2, 0.1, 500, seed=7)
    b = gen_gaussian_triple(0.5, 0.2, 0.1, 500, seed=7)
    assert_array_equal(a.y, b.y)
    spec = ModelSpec("M2", w1=0.5, w2=0.7, rho12=0.3, D=400, seed=3)
    assert_array_equal(gen_model(spec).y, gen_model(spec).y)


def test_model_targets():
    x1, x2 = np.array([0.3, -1.2]), np.array([2.0, 0.5])
    assert_allclose(model_target("M1", 0.5, 0.25, x1, x2), np.tanh(0.5 * x1 + 0.25 * x2))
    assert_allclose(model_target("M2", 0.5, 0.25, x1, x2), x1 ** 2 / (0.1 + 0.5 * x1 ** 2 + 0.25 * x2 ** 2))
    with pytest.raises(ValueError):
        ModelSpec("M3")


def test_model_source_correlation():
    d = gen_model(ModelSpec("M1", rho12=0.3, D=20000, seed=2))
    assert abs(np.corrcoef(d.x1, d.x2)[0, 1] - 0.3) <= 0.02


def test_m1_without_second_source_is_comonotone():
    d = gen_model(ModelSpec("M1", w1=0.5, w2=0.0, rho12=0.3, D=3000, seed=4))
    pair = FittedPair.fit(pseudo_observations(d))
    assert pair.c_y1.kendall_tau() >= 0.99


@pytest.mark.slow
def test_m1_symmetric_sources_give_equal_unique_terms():
    d = gen_model(ModelSpec("M1", w1=0.5, w2=0.5, rho12=0.0, D=3000, seed=5))
    ps = pseudo_observations(d)
    u1 = train_unique(ps).estimate
    u2 = train_unique(ps.swap_sources()).estimate
    assert abs(u1 - u2) <= 0.05


# --- network -------------------------------------------------------------------

def test_rossler_step_halving():
    x0 = np.array([1.0, 1.0, 1.0])
    a = integrate(rossler_rhs, x0, 0.01, 5000, record_every=2)
    b = integrate(rossler_rhs, x0, 0.005, 10000, record_every=4)
    assert np.max(np.abs(a - b)) <= 1e-3


def test_network_weights_scale():
    J = network_weights(NetworkSpec(n_y=400, g=4.0, seed=3))
    assert abs(J.std() - 4.0 / 20.0) <= 0.01
    assert_array_equal(J, network_weights(NetworkSpec(n_y=400, g=4.0, seed=3)))


def test_decoupled_network_decays():
    spec = NetworkSpec(g=0.0, j_yx=0.0, n_y=10, t_burn=100.0, n_record=200, stride=5)
    s = simulate_network(spec, standardize=False)
    assert np.max(np.abs(s.data[:, 3:])) <= 1e-6
    assert np.all(s.quiescent[3:]) and not np.any(s.quiescent[:3])
    z = simulate_network(spec)
    assert_array_equal(z.data[:, 3:], 0.0)


def test_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        NetworkSpec(dt=0.1)
    with pytest.raises(ValueError):
        NetworkSpec(n_y=2, n_observed=3)
    spec = NetworkSpec(g=2.5, seed=9)
    assert NetworkSpec.from_dict(spec.to_dict()) == spec


def test_blow_up_detected():
    with pytest.raises(NetworkBlowUp):
        simulate_network(NetworkSpec(gamma=-50.0, beta=50.0, n_y=2, n_observed=1, t_burn=100.0, n_record=100))


@pytest.fixture(scope="module")
def default_network():
    return simulate_network(NetworkSpec(), standardize=False)


@pytest.mark.slow
def test_default_network_bounded_and_chaotic(default_network):
    s = default_network
    assert s.data.shape == (6000, 6)
    assert np.max(np.abs(s.data[:, :3])) <= 30.0
    assert not np.any(s.quiescent)
    y = s.data[:, 3:]
    k = int(np.argmax(y.std(axis=0)))
    ch = (y[:, k] - y[:, k].mean()) / y[:, k].std()
    acf = np.array([np.mean(ch[:-lag] * ch[lag:]) for lag in (1, 50, 200, 1000)])
    assert acf[0] > 0.5
    assert np.max(np.abs(acf[2:])) < 0.5  # decorrelates: no fixed point or short period locking
    # not periodic: the activity never returns close to an earlier state at a fixed lag
    assert ch.std() > 0.5


@pytest.mark.slow
def test_network_deterministic():
    spec = NetworkSpec(n_y=20, t_burn=20.0, n_record=300, seed=4)
    assert_array_equal(simulate_network(spec).data, simulate_network(spec).data)


def test_te_matrix_needs_enough_points():
    with pytest.raises(ValueError, match="at least"):
        te_matrix(np.zeros((MIN_TE_POINTS, 2)))


def test_triplets():
    z = np.arange(12.0).reshape(6, 2)
    d = triplet_dataset(z, 0, 1)
    assert_array_equal(d.y, z[1:, 1])
    assert_array_equal(d.x1, z[:-1, 0])
    assert_array_equal(d.x2, z[:-1, 1])


def test_te_matrix_quiescent_channels():
    rng = np.random.default_rng(5)
    series = np.column_stack([rng.normal(size=3001), np.zeros(3001)])
    cfg = EstimatorConfig(A=5, M=32, iterations=20, window=5)
    rep = te_matrix(series, cfg)
    # everything into the constant channel is zero; the constant source leaves only storage
    assert rep.S[0, 1] == rep.U1[0, 1] == rep.TE[0, 1] == rep.U2[0, 1] == 0.0
    assert rep.U1[1, 0] == rep.S[1, 0] == rep.R[1, 0] == rep.TE[1, 0] == 0.0
    assert rep.diagnostics["degenerate_pairs"]["Z2->Z1"] == "constant source"
    assert rep.TE[0, 0] == 0.0 and rep.U1[0, 0] == 0.0
    assert set(next(rep.csv_rows())) == {"source", "target", "S", "U1", "R", "U2", "TE", "residual"}


@pytest.mark.slow
def test_te_white_noise_surrogate():
    rng = np.random.default_rng(6)
    rep = te_matrix(rng.normal(size=(3001, 2)))
    for k in ("S", "U1", "R", "U2", "TE"):
        assert np.max(np.abs(getattr(rep, k))) <= 0.03, k


@pytest.mark.slow
def test_te_direction_flips_under_time_reversal():
    rng = np.random.default_rng(7)
    T = 3002
    x = np.zeros(T)
    y = np.zeros(T)
    for t in range(T - 1):
        x[t + 1] = 0.6 * x[t] + rng.normal()
        y[t + 1] = 0.3 * y[t] + 0.8 * x[t] + 0.5 * rng.normal()
    series = np.column_stack([x, y])[1:]
    fwd = te_matrix(series)
    rev = te_matrix(series[::-1].copy())
    assert fwd.TE[0, 1] > fwd.TE[1, 0]
    assert rev.TE[1, 0] > rev.TE[0, 1]
