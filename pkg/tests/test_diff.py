import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import ndtri

from copulapid import diff as d
from copulapid.copula import CopulaFamily, CopulaModel
from copulapid.estimator import FittedPair, b1_integrand, rosenblatt_sample
from copulapid.nets import ThetaNet
from copulapid.numerics import RngStream


def grad_of(fn, x0):
    tape = d.Tape()
    x = tape.var(np.asarray(x0, dtype=float))
    out = fn(x)
    return out, tape.backward(out)[x]


def test_identity_and_tanh():
    _, g = grad_of(lambda x: x, 1.7)
    assert g == 1.0
    out, g = grad_of(d.tanh, 0.3)
    assert_allclose(g, 1 - math.tanh(0.3) ** 2, rtol=1e-15)
    assert float(out.value) == math.tanh(0.3)


def test_constant_expression_has_zero_gradient():
    tape = d.Tape()
    x = tape.var(2.0)
    y = d.exp(x) * 0.0 + 3.0
    c = d.add(d.stop_gradient(x), 1.0)
    g = tape.backward(y + c)
    assert g[x] == 0.0


def test_linearity():
    tape = d.Tape()
    x = tape.var(np.array([0.2, -0.7, 1.1]))
    f1 = d.sum(d.sin(x)) if hasattr(d, "sin") else d.sum(d.tanh(x))
    f2 = d.sum(x * x * 3.0)
    g1, g2 = tape.backward(f1)[x], tape.backward(f2)[x]
    assert_allclose(tape.backward(f1 + f2)[x], g1 + g2, rtol=1e-15)


def test_stop_gradient_is_exactly_zero():
    tape = d.Tape()
    x = tape.var(np.array([0.4, 0.9]))
    y = d.sum(d.stop_gradient(d.exp(x)) * 5.0)
    assert_array_equal(tape.backward(y)[x], [0.0, 0.0])
    z = d.sum(d.stop_gradient(x) * x)
    assert_allclose(tape.backward(z)[x], x.value)


def test_forward_values_match_direct_evaluation():
    v = np.linspace(0.05, 0.95, 11)
    tape = d.Tape()
    x = tape.var(v)
    expr = d.log(d.sigmoid(x * 2.0) + 1.0) / d.sqrt(x) - d.std_normal_quantile(x)
    direct = np.log(1.0 / (1.0 + np.exp(-v * 2.0)) + 1.0) / np.sqrt(v) - ndtri(v)
    assert_allclose(expr.value, direct, rtol=1e-15, atol=1e-15)


@pytest.mark.parametrize("name", ["exp", "log", "sqrt", "tanh", "sigmoid", "logit", "softplus",
                                  "std_normal_cdf", "std_normal_quantile", "std_normal_logpdf"])
def test_unary_primitives_match_fd(name):
    f = getattr(d, name)
    x0 = np.array([0.15, 0.4, 0.8])
    _, g = grad_of(lambda x: d.sum(f(x)), x0)
    h = 1e-6
    fd = (np.asarray(f(x0 + h)) - np.asarray(f(x0 - h))) / (2 * h)
    assert_allclose(g, fd, rtol=1e-6)


def test_matmul_logsumexp_and_broadcasting():
    rng = np.random.default_rng(0)
    A0, B0 = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    bias0 = rng.normal(size=5)
    tape = d.Tape()
    A, B, bias = tape.var(A0), tape.var(B0), tape.var(bias0)
    out = d.sum(d.logsumexp(d.matmul(A, B) + bias, axis=1))
    g = tape.backward(out)

    def f(a, b, c):
        from scipy.special import logsumexp
        return logsumexp(a @ b + c, axis=1).sum()

    h = 1e-6
    for var, x0, k in ((A, A0, 0), (B, B0, 1), (bias, bias0, 2)):
        fd = np.zeros_like(x0)
        for idx in np.ndindex(x0.shape):
            args_p = [A0.copy(), B0.copy(), bias0.copy()]
            args_m = [A0.copy(), B0.copy(), bias0.copy()]
            args_p[k][idx] += h
            args_m[k][idx] -= h
            fd[idx] = (f(*args_p) - f(*args_m)) / (2 * h)
        assert_allclose(g[var], fd, rtol=1e-6, atol=1e-9)


def test_gaussian_log_density_theta_derivative_closed_form():
    # log c = -1/2 log(1 - t^2) - (t^2 (a^2 + b^2) - 2 t a b) / (2 (1 - t^2)),  a, b normal scores;
    # d/dt = t/(1-t^2) - [(2t(a^2+b^2) - 2ab)(1-t^2) + 2t(t^2(a^2+b^2) - 2tab)] / (2(1-t^2)^2)
    for t0, u, v in [(0.3, 0.2, 0.7), (-0.75, 0.05, 0.5), (0.9, 0.8, 0.85)]:
        a, b = ndtri(u), ndtri(v)
        s = a * a + b * b
        expect = t0 / (1 - t0 ** 2) - (
            (2 * t0 * s - 2 * a * b) * (1 - t0 ** 2) + 2 * t0 * (t0 ** 2 * s - 2 * t0 * a * b)
        ) / (2 * (1 - t0 ** 2) ** 2)
        _, g = grad_of(lambda t: d.copula_logpdf(CopulaFamily.GAUSSIAN, t, u, v), t0)
        assert_allclose(g, expect, rtol=1e-8)


def test_non_gaussian_theta_gradient_refused():
    tape = d.Tape()
    t = tape.var(2.0)
    with pytest.raises(NotImplementedError):
        d.copula_logpdf(CopulaFamily.CLAYTON, t, 0.3, 0.4)


def _flat_b1(pair, shapes, flat, v):
    params, k = [], 0
    for shp in shapes:
        n = int(np.prod(shp))
        params.append(flat[k:k + n].reshape(shp))
        k += n
    u1, uy, u2 = rosenblatt_sample(pair, params, v[:, 0], v[:, 1], v[:, 2])
    return b1_integrand(pair, params, uy, u1, u2)


@pytest.mark.parametrize("seed", range(5))
def test_b1_summand_gradient_matches_central_differences(seed):
    rng = RngStream(seed)
    pair = FittedPair(CopulaModel(CopulaFamily.CLAYTON, 1.5 + seed * 0.3),
                      CopulaModel(CopulaFamily.GAUSSIAN, -0.4 + 0.15 * seed))
    net = ThetaNet.init(rng, scale=0.8)
    shapes = [p.shape for p in net.params]
    flat0 = np.concatenate([p.ravel() for p in net.params])
    v = rng.uniform((1, 3)) * 0.9 + 0.05

    tape = d.Tape()
    pv = [tape.var(p) for p in net.params]
    u1, uy, u2 = rosenblatt_sample(pair, pv, v[:, 0], v[:, 1], v[:, 2])
    g = tape.backward(d.sum(b1_integrand(pair, pv, uy, u1, u2)))
    grad = np.concatenate([np.ravel(g[p]) for p in pv])

    h = 1e-5
    fd = np.empty_like(flat0)
    for i in range(flat0.size):
        e = np.zeros_like(flat0)
        e[i] = h
        fd[i] = (np.sum(_flat_b1(pair, shapes, flat0 + e, v)) - np.sum(_flat_b1(pair, shapes, flat0 - e, v))) / (2 * h)
    big = np.abs(grad) > 1e-6
    assert_allclose(grad[big], fd[big], rtol=1e-4)
    assert_allclose(grad[~big], fd[~big], atol=1e-7)


def test_backward_linear_in_tape_length():
    tape = d.Tape()
    x = tape.var(np.ones(3))
    y = x
    for _ in range(2000):
        y = d.tanh(y) * 1.0001
    g = tape.backward(d.sum(y))
    assert np.all(np.isfinite(g[x]))
    assert len(tape) >= 4000
