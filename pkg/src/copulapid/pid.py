"""Full partial information decomposition from the unique-information estimate.

Given ``U1`` from :func:`~copulapid.estimator.train_unique` and copula
estimates of the three mutual informations, the remaining terms follow from

    U1 + U2 + R + S = I(Y:(X1,X2)),   R = I(Y:X1) - U1,   U2 = I(Y:X2) - R.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize

from . import diff as d
from .copula import CopulaFamily, CopulaModel, kernels, select
from .estimator import AdamState, EstimatorConfig, FittedPair, adam_step, train_unique
from .nets import ThetaNet
from .numerics import RngStream
from .pseudoobs import Dataset, PseudoDataset, pseudo_observations

LN2 = math.log(2.0)
INFO_FIELDS = ("U1", "U2", "R", "S", "I_y_x1", "I_y_x2", "I_y_x12", "delta")
MLE_BATCH = 4096
MLE_FULL_BATCH = 20000   # data sizes fitted with full-batch Adam gradients
MLE_POLISH_ITER = 500    # L-BFGS iterations after the Adam phase

CSV_FIELDS = list(INFO_FIELDS) + [
    "U1_raw", "U2_raw", "R_raw", "S_raw", "units", "family_y1", "family_y2", "family_12",
]


@dataclass
class PidReport:
    """The decomposition of ``I(Y:(X1,X2))``.

    The four PID terms are clamped at zero; their unclamped values are kept in
    ``raw``.  The identities hold exactly for the raw values.  ``delta`` is
    ``S - R`` of the reported terms.
    """

    U1: float
    U2: float
    R: float
    S: float
    I_y_x1: float
    I_y_x2: float
    I_y_x12: float
    delta: float
    units: str = "nats"
    raw: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_terms(cls, U1_raw, I1, I2, I12, diagnostics=None) -> "PidReport":
        """Assemble a report (in nats) from ``U1`` and the three mutual informations."""
        R_raw = I1 - U1_raw
        U2_raw = I2 - R_raw
        S_raw = I12 - U1_raw - U2_raw - R_raw
        U1, U2, R, S = (max(0.0, x) for x in (U1_raw, U2_raw, R_raw, S_raw))
        return cls(
            U1=U1, U2=U2, R=R, S=S, I_y_x1=I1, I_y_x2=I2, I_y_x12=I12, delta=S - R,
            raw={"U1": U1_raw, "U2": U2_raw, "R": R_raw, "S": S_raw, "delta": S_raw - R_raw},
            diagnostics=dict(diagnostics or {}),
        )

    def in_units(self, units: str) -> "PidReport":
        """Return a copy expressed in ``"nats"`` or ``"bits"``."""
        if units not in ("nats", "bits"):
            raise ValueError(f"unknown units {units!r}")
        if units == self.units:
            return replace(self)
        f = 1.0 / LN2 if units == "bits" else LN2
        vals = {k: getattr(self, k) * f for k in INFO_FIELDS}
        return replace(self, units=units, raw={k: v * f for k, v in self.raw.items()}, **vals)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in INFO_FIELDS}
        out.update(units=self.units, raw=dict(self.raw), diagnostics=self.diagnostics)
        return out

    def csv_row(self) -> dict:
        fam = self.diagnostics.get("families", {})
        row = {k: getattr(self, k) for k in INFO_FIELDS}
        row.update({f"{k}_raw": self.raw.get(k, float("nan")) for k in ("U1", "U2", "R", "S")})
        row.update(
            units=self.units,
            family_y1=fam.get("y1", ""),
            family_y2=fam.get("y2", ""),
            family_12=fam.get("12", ""),
        )
        return row


def mi_pair(u, v, model: CopulaModel) -> float:
    """Plug-in mutual information ``mean log c(u, v)`` in nats (not clamped)."""
    return float(np.mean(model.logpdf(u, v)))


class JointMiFit(NamedTuple):
    value: float
    c12: CopulaModel
    theta_net: ThetaNet
    nll: np.ndarray


def _conditional_nll(params, uy, a, b):
    """Mean negative conditional log-likelihood and its gradient (tape)."""
    tape = d.Tape()
    pv = [tape.var(p) for p in params]
    th = ThetaNet.forward(pv, uy)
    loss = -d.mean(d.copula_logpdf(CopulaFamily.GAUSSIAN, th, a, b))
    g = tape.backward(loss)
    return float(loss.value), [g[p] for p in pv]


def fit_conditional_theta(pseudo: PseudoDataset, pair: FittedPair, config: EstimatorConfig):
    """Maximum-likelihood ``theta(u_y)`` network for the conditional Gaussian copula.

    Maximizes ``sum_i log c_G(F(u_1^i|u_y^i), F(u_2^i|u_y^i); theta(u_y^i))``
    with ``config.iterations`` Adam steps (full batch up to ``MLE_FULL_BATCH``
    points, random minibatches of ``MLE_BATCH`` beyond), then polishes the
    full-data likelihood with L-BFGS.  Adam alone stalls in the narrow valleys
    of strongly dependent data, leaving a seed-dependent result.  Returns
    ``(net, nll_trace)``: the Adam losses followed by the polished
    full-data loss.
    """
    c1, c2 = pair.c_y1, pair.c_y2
    uy = pseudo.uy
    a = kernels.h(c1.family, c1.theta, pseudo.u1, uy)
    b = kernels.h(c2.family, c2.theta, pseudo.u2, uy)
    net = ThetaNet.init(RngStream.derived(config.seed, 2))
    batch_rng = RngStream.derived(config.seed, 3)
    params = net.params
    state = AdamState.zeros_like(params)
    n = uy.size
    nll = []
    for _ in range(config.iterations):
        if n > MLE_FULL_BATCH:
            idx = batch_rng.generator.choice(n, MLE_BATCH, replace=False)
            loss, g = _conditional_nll(params, uy[idx], a[idx], b[idx])
        else:
            loss, g = _conditional_nll(params, uy, a, b)
        nll.append(loss)
        params, state = adam_step(params, g, state, config.lr,
                                  config.beta1, config.beta2, config.eps_adam)

    shapes = [np.shape(p) for p in params]
    sizes = [int(np.size(p)) for p in params]

    def unflatten(x):
        return [c.reshape(s) for c, s in zip(np.split(x, np.cumsum(sizes)[:-1]), shapes)]

    def objective(x):
        loss, g = _conditional_nll(unflatten(x), uy, a, b)
        return loss, np.concatenate([np.ravel(gi) for gi in g])

    x0 = np.concatenate([np.ravel(p) for p in params])
    f0 = objective(x0)[0]
    res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": MLE_POLISH_ITER, "ftol": 1e-13, "gtol": 1e-9})
    if np.isfinite(res.fun) and res.fun <= f0:
        params = unflatten(res.x)
        nll.append(float(res.fun))
    return ThetaNet(params), np.asarray(nll)


def joint_mi_fit(pseudo: PseudoDataset, pair: FittedPair, config: EstimatorConfig) -> JointMiFit:
    """``I(Y:(X1,X2))`` through the pair-copula construction.

    Returns ``(1/D) sum log[c(u_y,u_1) c(u_y,u_2) c_G(u_{1|y},u_{2|y}; theta(u_y)) / c(u_1,u_2)]``
    with ``c(u_1, u_2)`` selected by AIC and ``theta`` fitted by maximum likelihood.
    """
    c12 = select(pseudo.u1, pseudo.u2)
    net, nll = fit_conditional_theta(pseudo, pair, config)
    c1, c2 = pair.c_y1, pair.c_y2
    uy, u1, u2 = pseudo.uy, pseudo.u1, pseudo.u2
    th = net(uy)
    a = kernels.h(c1.family, c1.theta, u1, uy)
    b = kernels.h(c2.family, c2.theta, u2, uy)
    terms = (
        c1.logpdf(uy, u1) + c2.logpdf(uy, u2)
        + kernels.logpdf(CopulaFamily.GAUSSIAN, th, a, b)
        - c12.logpdf(u1, u2)
    )
    return JointMiFit(float(np.mean(terms)), c12, net, nll)


def mi_joint(pseudo: PseudoDataset, pair: FittedPair, config: EstimatorConfig = EstimatorConfig()) -> float:
    return joint_mi_fit(pseudo, pair, config).value


def _identical_sources(data: Dataset) -> bool:
    return np.array_equal(data.x1, data.x2)


def decompose(data: Dataset, config: EstimatorConfig = EstimatorConfig(), units: str = "nats") -> PidReport:
    """Estimate the four PID terms of ``data`` (``Y`` against sources ``X1``, ``X2``).

    Mutual informations are clamped at zero before the identities are
    applied.  When the two source columns are identical the decomposition is
    exact: no unique or synergistic information, ``R = I(Y:X1)``.
    """
    data.check_size()
    pseudo = pseudo_observations(data)
    pair = FittedPair.fit(pseudo)
    I1 = max(0.0, mi_pair(pseudo.uy, pseudo.u1, pair.c_y1))
    I2 = max(0.0, mi_pair(pseudo.uy, pseudo.u2, pair.c_y2))
    diag = {
        "n_samples": data.n,
        "families": {"y1": pair.c_y1.family.name, "y2": pair.c_y2.family.name},
        "copulas": pair.to_dict(),
        "config": config.to_dict(),
    }
    if _identical_sources(data):
        diag["families"]["12"] = "COMONOTONE"
        diag["identical_sources"] = True
        report = PidReport.from_terms(0.0, I1, I1, I1, diag)
        return report.in_units(units)

    fit = train_unique(pseudo, config, pair=pair)
    jm = joint_mi_fit(pseudo, pair, config)
    I12 = max(0.0, jm.value)
    tail = fit.trace.bound[-config.window:]
    diag["families"]["12"] = jm.c12.family.name
    diag["copulas"]["c_12"] = jm.c12.to_dict()
    diag["trace"] = {
        "first_bound": float(fit.trace.bound[0]),
        "window_mean": float(np.mean(tail)),
        "window_std": float(np.std(tail)),
        "window_b1_mean": float(np.mean(fit.trace.b1[-config.window:])),
        "window_b2_mean": float(np.mean(fit.trace.b2[-config.window:])),
    }
    diag["mi_joint_raw"] = jm.value
    diag["mi_pair_raw"] = {
        "y1": mi_pair(pseudo.uy, pseudo.u1, pair.c_y1),
        "y2": mi_pair(pseudo.uy, pseudo.u2, pair.c_y2),
    }
    return PidReport.from_terms(fit.trace.raw_estimate, I1, I2, I12, diag).in_units(units)


class ConsistencyResult(NamedTuple):
    U2_direct: float
    U2_indirect: float
    gap: float
    report: PidReport


def consistency_check(data: Dataset, config: EstimatorConfig = EstimatorConfig(),
                      report: Optional[PidReport] = None) -> ConsistencyResult:
    """Compare ``U2`` estimated directly (sources swapped) with ``U2`` from the identities.

    Results are in nats.  A precomputed ``report`` for ``data`` may be passed
    to avoid recomputing the decomposition.
    """
    if report is None:
        report = decompose(data, config)
    report = report.in_units("nats")
    if _identical_sources(data):
        direct = 0.0
    else:
        pseudo = pseudo_observations(data).swap_sources()
        direct = train_unique(pseudo, config).estimate
    return ConsistencyResult(direct, report.U2, direct - report.U2, report)
