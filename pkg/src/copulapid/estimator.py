"""Variational upper bound on the unique information and its minimization.

For fixed pair copulas ``c(u_y, u_1)`` and ``c(u_y, u_2)`` every joint
copula of the form

    c_theta(u_y, u_1, u_2) = c(u_y, u_1) c(u_y, u_2) c_G(u_{1|y}, u_{2|y}; theta(u_y)),

with ``u_{i|y} = F(u_i | u_y)`` and ``c_G`` a Gaussian copula, preserves both
source-target marginals.  The unique information of ``X_1`` is the minimum
over ``theta`` of the conditional mutual information ``I(Y : X_1 | X_2)``
under ``c_theta``, which is bounded above by ``B1 + B2``:

* ``B1 = E log[c(u_y, u_1) c_G(u_{1|y}, u_{2|y}; theta(u_y))]`` over samples
  of ``c_theta``;
* ``B2 = -E log[(1/A) sum_a w_a]`` with importance weights
  ``w_a = c_theta(û_a, u_1, u_2) / r(û_a | u_1, u_2)`` and ``û_a ~ r``.

The bound is minimized over the parameters of ``theta`` (a
:class:`~copulapid.nets.ThetaNet`) and of ``r`` (an
:class:`~copulapid.nets.InferenceNet`) with Adam.  Gradients for ``theta``
are total pathwise derivatives; gradients for the inference network use the
doubly-reparameterized (DReG) estimator.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from . import diff as d
from .copula import CopulaFamily, CopulaModel, kernels, select
from .nets import InferenceNet, ThetaNet, log_r, sample_logit
from .numerics import RngStream, clamp_unit
from .pseudoobs import PseudoDataset

logger = logging.getLogger(__name__)

GAUSSIAN = CopulaFamily.GAUSSIAN


class EstimatorError(RuntimeError):
    """Training produced a non-finite bound; ``trace`` holds the values so far."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class EstimatorConfig:
    """Optimization hyperparameters.

    Attributes
    ----------
    A : int
        Number of importance samples per data point in ``B2``.
    M : int
        Batch size (fresh samples of ``c_theta`` per iteration).
    iterations : int
        Adam steps.
    lr : float
        Adam learning rate.
    window : int
        The estimate is the mean bound over the last ``window`` iterations.
    seed : int
        Master seed; initialization and sampling use derived streams.
    """

    A: int = 50
    M: int = 128
    iterations: int = 1200
    lr: float = 1e-2
    window: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self):
        if self.A < 1 or self.M < 1:
            raise ValueError("A and M must be at least 1")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 1 <= self.window <= self.iterations:
            raise ValueError("window must be between 1 and iterations")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d_: dict) -> "EstimatorConfig":
        return cls(**d_)

    def replace(self, **kw) -> "EstimatorConfig":
        return type(self)(**{**asdict(self), **kw})


@dataclass(frozen=True)
class FittedPair:
    """The two source-target copulas, fitted on the same pseudo-observations."""

    c_y1: CopulaModel
    c_y2: CopulaModel

    @classmethod
    def fit(cls, pseudo: PseudoDataset, families=None) -> "FittedPair":
        kw = {} if families is None else {"families": families}
        return cls(select(pseudo.uy, pseudo.u1, **kw), select(pseudo.uy, pseudo.u2, **kw))

    def swapped(self) -> "FittedPair":
        return FittedPair(self.c_y2, self.c_y1)

    def to_dict(self) -> dict:
        return {"c_y1": self.c_y1.to_dict(), "c_y2": self.c_y2.to_dict()}

    @classmethod
    def from_dict(cls, d_: dict) -> "FittedPair":
        return cls(CopulaModel.from_dict(d_["c_y1"]), CopulaModel.from_dict(d_["c_y2"]))


@dataclass
class TrainingTrace:
    """Per-iteration bound values in nats."""

    bound: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    window: int

    @property
    def raw_estimate(self) -> float:
        return float(np.mean(self.bound[-self.window:]))

    @property
    def estimate(self) -> float:
        return max(0.0, self.raw_estimate)

    def to_dict(self) -> dict:
        return {
            "bound": self.bound.tolist(),
            "b1": self.b1.tolist(),
            "b2": self.b2.tolist(),
            "window": self.window,
        }

    @classmethod
    def from_dict(cls, d_: dict) -> "TrainingTrace":
        return cls(np.asarray(d_["bound"]), np.asarray(d_["b1"]), np.asarray(d_["b2"]), int(d_["window"]))


class UniqueFit(NamedTuple):
    estimate: float
    trace: TrainingTrace
    pair: FittedPair
    theta_net: ThetaNet
    inference_net: InferenceNet


# --- building blocks ---------------------------------------------------------

def _params(net):
    return net.params if hasattr(net, "params") else net


def rosenblatt_sample(pair: FittedPair, theta_net, v1, vy, v2):
    """Map independent uniforms to a sample ``(u_1, u_y, u_2)`` of ``c_theta``.

    ``u_1 = v_1``; ``u_y = F_{y|1}^{-1}(v_y | u_1)``;
    ``u_2 = F_{2|y}^{-1}(F_G^{-1}(v_2 | u_{1|y}; theta(u_y)) | u_y)``, where
    ``u_{1|y} = F(u_1 | u_y)``.  Only ``u_2`` depends on ``theta``; it is a
    :class:`~copulapid.diff.Var` when the network parameters are.
    """
    c1, c2 = pair.c_y1, pair.c_y2
    u1 = clamp_unit(np.asarray(v1, dtype=float))
    uy = kernels.hinv(c1.family, c1.theta, vy, u1)
    u1_y = kernels.h(c1.family, c1.theta, u1, uy)
    th = ThetaNet.forward(_params(theta_net), uy)
    u2_y = d.copula_hinv(GAUSSIAN, th, v2, u1_y)
    u2 = d.copula_hinv(c2.family, c2.theta, u2_y, uy)
    return u1, uy, u2


def conditional_log_density(pair: FittedPair, theta_net, uy, u1, u2):
    """``log c_G(F(u_1|u_y), F(u_2|u_y); theta(u_y))``."""
    c1, c2 = pair.c_y1, pair.c_y2
    u1_y = d.copula_h(c1.family, c1.theta, u1, uy)
    u2_y = d.copula_h(c2.family, c2.theta, u2, uy)
    th = ThetaNet.forward(_params(theta_net), uy)
    return d.copula_logpdf(GAUSSIAN, th, u1_y, u2_y)


def log_c_theta(pair: FittedPair, theta_net, uy, u1, u2):
    """Log of the trivariate copula density ``c_theta(u_y, u_1, u_2)``."""
    c1, c2 = pair.c_y1, pair.c_y2
    return (
        d.copula_logpdf(c1.family, c1.theta, uy, u1)
        + d.copula_logpdf(c2.family, c2.theta, uy, u2)
        + conditional_log_density(pair, theta_net, uy, u1, u2)
    )


def b1_integrand(pair: FittedPair, theta_net, uy, u1, u2):
    """Per-sample ``log[c(u_y, u_1) c_G(u_{1|y}, u_{2|y}; theta(u_y))]``."""
    c1 = pair.c_y1
    return d.copula_logpdf(c1.family, c1.theta, uy, u1) + conditional_log_density(pair, theta_net, uy, u1, u2)


def log_weights(pair: FittedPair, theta_net, inference_net, u1, u2, eps):
    """Log importance weights ``log c_theta(û, u_1, u_2) - log r(û | u_1, u_2)``.

    ``eps`` has shape ``(M, A)``.  Returns ``(log_w, z)`` where
    ``û = sigmoid(z)`` are the inner samples; ``z`` is the reparameterized
    sample node through which the DReG gradient flows.
    """
    a, b = InferenceNet.forward(_params(inference_net), u1, u2)
    a = d.reshape(a, (-1, 1))
    b = d.reshape(b, (-1, 1))
    z = sample_logit(eps, a, b)
    uhat = d.sigmoid(z)
    log_c = log_c_theta(pair, theta_net, uhat, d.reshape(u1, (-1, 1)), d.reshape(u2, (-1, 1)))
    return log_c - log_r(z, a, b), z


def _b2_from_log_w(log_w, A):
    return -d.mean(d.logsumexp(log_w, axis=1) - math.log(A))


def bound_B1(pair: FittedPair, theta_net, v) -> float:
    """Monte Carlo ``B1`` on Rosenblatt samples built from uniforms ``v`` of shape ``(M, 3)``."""
    v = np.asarray(v, dtype=float)
    u1, uy, u2 = rosenblatt_sample(pair, theta_net, v[:, 0], v[:, 1], v[:, 2])
    return float(np.mean(b1_integrand(pair, theta_net, uy, u1, u2)))


def bound_B2(pair: FittedPair, theta_net, inference_net, u1, u2, eps) -> float:
    """``B2 = -(1/M) sum_m log((1/A) sum_a w_{a,m})`` for inner uniforms ``eps`` of shape ``(M, A)``."""
    eps = np.asarray(eps, dtype=float)
    log_w, _ = log_weights(pair, theta_net, inference_net, u1, u2, eps)
    return float(_b2_from_log_w(log_w, eps.shape[1]))


@dataclass
class BoundEvaluation:
    """Bound value and gradients on one batch.

    ``grad_theta`` is the total pathwise gradient of ``B1 + B2``;
    ``grad_phi`` is the DReG estimate and ``grad_phi_naive`` the plain
    pathwise gradient of the ``B2`` estimator with respect to the inference
    network.
    """

    bound: float
    b1: float
    b2: float
    grad_theta: List[np.ndarray]
    grad_phi: List[np.ndarray]
    grad_phi_naive: List[np.ndarray]
    log_w: np.ndarray


def bound_and_gradients(pair: FittedPair, theta_net, inference_net, v, eps) -> BoundEvaluation:
    """Evaluate ``B1 + B2`` on one batch and differentiate it.

    Parameters
    ----------
    v : ndarray, shape (M, 3)
        Uniforms ``(v_1, v_y, v_2)`` for the Rosenblatt samples.
    eps : ndarray, shape (M, A)
        Uniforms for the inner samples of the inference distribution.
    """
    v = np.asarray(v, dtype=float)
    eps = np.asarray(eps, dtype=float)
    M, A = eps.shape
    tape = d.Tape()
    tp = [tape.var(p) for p in _params(theta_net)]
    ip = [tape.var(p) for p in _params(inference_net)]

    u1, uy, u2 = rosenblatt_sample(pair, tp, v[:, 0], v[:, 1], v[:, 2])
    B1 = d.mean(b1_integrand(pair, tp, uy, u1, u2))
    log_w, z = log_weights(pair, tp, ip, u1, u2, eps)
    B2 = _b2_from_log_w(log_w, A)
    loss = B1 + B2

    g_loss = tape.backward(loss)
    # DReG: -(1/M) sum (w / sum w)^2 * dlog w/dz * dz/dphi, with the weights held fixed
    g_z = tape.backward(log_w)[z]
    lw = log_w.value
    w_norm = np.exp(lw - np.max(lw, axis=1, keepdims=True))
    w_norm /= np.sum(w_norm, axis=1, keepdims=True)
    g_dreg = tape.backward(z, seed=-(w_norm ** 2) * g_z / M)

    return BoundEvaluation(
        bound=float(loss.value),
        b1=float(B1.value),
        b2=float(B2.value),
        grad_theta=[g_loss[p] for p in tp],
        grad_phi=[g_dreg[p] for p in ip],
        grad_phi_naive=[g_loss[p] for p in ip],
        log_w=lw,
    )


def dreg_phi_gradient(pair: FittedPair, theta_net, inference_net, v, eps) -> List[np.ndarray]:
    """DReG estimate of the inference-network gradient of ``B2`` on one batch."""
    return bound_and_gradients(pair, theta_net, inference_net, v, eps).grad_phi


# --- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    t = state.t + 1
    m = [beta1 * mi + (1.0 - beta1) * g for mi, g in zip(state.m, grads)]
    v = [beta2 * vi + (1.0 - beta2) * g * g for vi, g in zip(state.v, grads)]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new = [p - lr * (mi / c1) / (np.sqrt(vi / c2) + eps) for p, mi, vi in zip(params, m, v)]
    return new, AdamState(m, v, t)


# --- training ----------------------------------------------------------------

def init_nets(seed: int):
    rng = RngStream.derived(seed, 0)
    return ThetaNet.init(rng), InferenceNet.init(rng)


def train_unique(pseudo: Optional[PseudoDataset], config: EstimatorConfig = EstimatorConfig(),
                 pair: Optional[FittedPair] = None) -> UniqueFit:
    """Minimize ``B1 + B2`` and return the unique information of ``X_1`` in nats.

    The pair copulas are selected by AIC on ``pseudo`` unless ``pair`` is
    given.  Each iteration draws fresh uniforms, evaluates the bound and its
    gradients and takes one Adam step on both networks.  The estimate is the
    mean bound over the last ``config.window`` iterations, clamped at zero.
    """
    if pair is None:
        if pseudo is None:
            raise ValueError("need pseudo-observations or a fitted pair")
        pair = FittedPair.fit(pseudo)
    theta_net, inf_net = init_nets(config.seed)
    n_theta = len(theta_net.params)
    params = theta_net.params + inf_net.params
    state = AdamState.zeros_like(params)
    rng = RngStream.derived(config.seed, 1)

    n = config.iterations
    bound, b1, b2 = np.empty(n), np.empty(n), np.empty(n)
    for it in range(n):
        v = rng.uniform((config.M, 3))
        eps = rng.uniform((config.M, config.A))
        ev = bound_and_gradients(pair, params[:n_theta], params[n_theta:], v, eps)
        bound[it], b1[it], b2[it] = ev.bound, ev.b1, ev.b2
        grads = ev.grad_theta + ev.grad_phi
        if not (np.isfinite(ev.bound) and all(np.all(np.isfinite(g)) for g in grads)):
            trace = TrainingTrace(bound[: it + 1], b1[: it + 1], b2[: it + 1], config.window)
            raise EstimatorError(f"non-finite bound or gradient at iteration {it}", trace)
        params, state = adam_step(params, grads, state, config.lr, config.beta1, config.beta2, config.eps_adam)
        if logger.isEnabledFor(logging.DEBUG) and (it + 1) % 100 == 0:
            logger.debug("iter %d bound %.5f (B1 %.5f, B2 %.5f)", it + 1, ev.bound, ev.b1, ev.b2)

    trace = TrainingTrace(bound, b1, b2, config.window)
    return UniqueFit(trace.estimate, trace, pair, ThetaNet(params[:n_theta]), InferenceNet(params[n_theta:]))


# --- checkpoints ---------------------------------------------------------------

def checkpoint_dict(fit: UniqueFit, config: EstimatorConfig) -> dict:
    return {
        "config": config.to_dict(),
        "pair": fit.pair.to_dict(),
        "theta_net": fit.theta_net.to_dict(),
        "inference_net": fit.inference_net.to_dict(),
        "trace": fit.trace.to_dict(),
        "estimate": fit.estimate,
    }


def save_checkpoint(path, fit: UniqueFit, config: EstimatorConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(fit, config), fh)


def load_checkpoint(path):
    """Return ``(UniqueFit, EstimatorConfig)`` from a JSON checkpoint."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    trace = TrainingTrace.from_dict(raw["trace"])
    fit = UniqueFit(
        trace.estimate,
        trace,
        FittedPair.from_dict(raw["pair"]),
        ThetaNet.from_dict(raw["theta_net"]),
        InferenceNet.from_dict(raw["inference_net"]),
    )
    return fit, EstimatorConfig.from_dict(raw["config"])
