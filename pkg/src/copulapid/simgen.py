"""Synthetic data for the experiments.

* Gaussian triples with a prescribed correlation matrix;
* the deterministic-target models ``M1`` (``tanh``) and ``M2`` (normalized
  square) with correlated Gaussian inputs;
* a chaotic rate network: a three-neuron Rössler system driving 100
  recurrently coupled rate neurons, integrated with fixed-step RK4;
* the pairwise storage/transfer decomposition of recorded network activity.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .estimator import EstimatorConfig, FittedPair
from .numerics import RngStream
from .pid import decompose, joint_mi_fit, mi_pair
from .pseudoobs import Dataset, MIN_SAMPLES, pseudo_observations
from .copula import select

log = logging.getLogger(__name__)

BLOWUP = 1e6
# a recorded channel whose raw standard deviation is below this is treated as constant
QUIESCENT_STD = 1e-10
MIN_TE_POINTS = 3000


# --- Gaussian triples ---------------------------------------------------------

def gaussian_correlation(rho_y1: float, rho_y2: float, rho_12: float) -> np.ndarray:
    """Correlation matrix of ``(Y, X1, X2)``."""
    return np.array([
        [1.0, rho_y1, rho_y2],
        [rho_y1, 1.0, rho_12],
        [rho_y2, rho_12, 1.0],
    ])


def gen_gaussian_triple(rho_y1: float, rho_y2: float, rho_12: float, D: int, seed: int = 0) -> Dataset:
    """``D`` iid draws of a standard trivariate normal ``(Y, X1, X2)``.

    Raises
    ------
    ValueError
        If the correlation matrix is not positive definite.
    """
    C = gaussian_correlation(rho_y1, rho_y2, rho_12)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        raise ValueError(
            f"correlation matrix for (rho_y1, rho_y2, rho_12) = ({rho_y1}, {rho_y2}, {rho_12}) "
            "is not positive definite"
        ) from None
    z = RngStream(seed).normal((int(D), 3)) @ L.T
    return Dataset(z[:, 0], z[:, 1], z[:, 2])


# --- Models M1 / M2 -----------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Deterministic target driven by two correlated standard normal inputs.

    ``M1``: ``Y = tanh(w1 X1 + w2 X2)``;
    ``M2``: ``Y = X1² / (0.1 + w1 X1² + w2 X2²)``.
    """

    kind: str = "M1"
    w1: float = 0.5
    w2: float = 0.5
    rho12: float = 0.3
    D: int = 3000
    seed: int = 0

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in ("M1", "M2"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not abs(self.rho12) < 1.0:
            raise ValueError("|rho12| must be < 1")
        if self.D < MIN_SAMPLES:
            raise ValueError(f"D must be at least {MIN_SAMPLES}")
        if kind == "M2" and (self.w1 < 0 or self.w2 < 0):
            raise ValueError("M2 needs non-negative weights")


def model_target(kind: str, w1: float, w2: float, x1, x2) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if kind == "M1":
        return np.tanh(w1 * x1 + w2 * x2)
    return x1 ** 2 / (0.1 + w1 * x1 ** 2 + w2 * x2 ** 2)


def gen_model(spec: ModelSpec) -> Dataset:
    rng = RngStream(spec.seed)
    z = rng.normal((spec.D, 2))
    x1 = z[:, 0]
    x2 = spec.rho12 * z[:, 0] + math.sqrt(1.0 - spec.rho12 ** 2) * z[:, 1]
    return Dataset(model_target(spec.kind, spec.w1, spec.w2, x1, x2), x1, x2)


# --- chaotic rate network -----------------------------------------------------

class NetworkBlowUp(RuntimeError):
    """The integration left the region ``|state| <= 1e6``."""


@dataclass(frozen=True)
class NetworkSpec:
    """Rössler-driven rate network.

    ``dX1 = -X2 - X3``, ``dX2 = X1 + alpha X2``, ``dX3 = beta + X3 (X1 - gamma)``
    and ``dY = -lam Y + 10 tanh(J_YX X + J_YY Y)`` with ``J_YX`` constant
    ``j_yx`` and ``J_YY`` iid ``Normal(0, (g / sqrt(n_y))²)``.  The recorded
    series starts after ``t_burn`` time units and keeps every ``stride``-th
    RK4 step.
    """

    alpha: float = 0.2
    beta: float = 0.2
    gamma: float = 5.7
    n_y: int = 100
    lam: float = 1.0
    g: float = 4.0
    j_yx: float = 0.1
    dt: float = 0.02
    t_burn: float = 500.0
    n_record: int = 6000
    stride: int = 5
    n_observed: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.dt <= 0.05):
            raise ValueError("dt must be in (0, 0.05]; larger steps are not resolved by RK4 here")
        if self.n_y < 1 or self.n_observed < 1 or self.n_observed > self.n_y:
            raise ValueError("need 1 <= n_observed <= n_y")
        if self.stride < 1 or self.n_record < 2:
            raise ValueError("stride must be >= 1 and n_record >= 2")
        if self.t_burn < 0 or self.lam < 0 or self.g < 0:
            raise ValueError("t_burn, lam and g must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**d)


@dataclass
class NetworkSeries:
    """Recorded activity, one column per observed neuron."""

    data: np.ndarray
    names: List[str]
    dt_sample: float
    raw_mean: np.ndarray
    raw_std: np.ndarray
    spec: Optional[NetworkSpec] = None

    @property
    def quiescent(self) -> np.ndarray:
        """Channels that are numerically constant over the recording."""
        return self.raw_std < QUIESCENT_STD

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.names)
            for row in self.data:
                w.writerow([repr(float(v)) for v in row])


def rossler_rhs(x, alpha=0.2, beta=0.2, gamma=5.7):
    return np.array([-x[1] - x[2], x[0] + alpha * x[1], beta + x[2] * (x[0] - gamma)])


def rk4_step(f, state, dt):
    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(f, state, dt: float, n_steps: int, record_every: int = 1):
    """Fixed-step RK4; returns the states after every ``record_every`` steps."""
    out = []
    state = np.array(state, dtype=float)
    for k in range(1, n_steps + 1):
        state = rk4_step(f, state, dt)
        if k % record_every == 0:
            out.append(state.copy())
    return np.array(out)


def network_rhs(spec: NetworkSpec, J_yy: np.ndarray):
    J_yx = np.full((spec.n_y, 3), spec.j_yx)

    def f(s):
        x, y = s[:3], s[3:]
        dx = rossler_rhs(x, spec.alpha, spec.beta, spec.gamma)
        dy = -spec.lam * y + 10.0 * np.tanh(J_yx @ x + J_yy @ y)
        return np.concatenate([dx, dy])

    return f


def network_weights(spec: NetworkSpec) -> np.ndarray:
    """The recurrent matrix ``J_YY`` drawn from the spec's seed."""
    return RngStream.derived(spec.seed, 0).normal((spec.n_y, spec.n_y), spec.g / math.sqrt(spec.n_y))


def _run_network(f, state, spec, n_burn, n_total, n_obs, rec):
    """RK4 loop filling ``rec`` with the observed channels after burn-in."""
    r = 0
    for k in range(1, n_total + 1):
        state = rk4_step(f, state, spec.dt)
        if k % 1000 == 0 or k == n_total:
            if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > BLOWUP:
                raise NetworkBlowUp(f"network state exceeded {BLOWUP:g} at t = {k * spec.dt:.2f}")
        if k > n_burn and (k - n_burn) % spec.stride == 0:
            rec[r] = state[:n_obs]
            r += 1


def simulate_network(spec: NetworkSpec = NetworkSpec(), standardize: bool = True) -> NetworkSeries:
    """Integrate the network and record ``X1..X3`` and the first ``n_observed`` Y neurons.

    Raises :class:`NetworkBlowUp` if any state component exceeds ``1e6`` in
    magnitude.  With ``standardize`` each recorded channel is shifted and
    scaled to zero mean and unit variance (numerically constant channels
    are set to zero instead).
    """
    J_yy = network_weights(spec)
    rng = RngStream.derived(spec.seed, 1)
    state = np.concatenate([np.array([1.0, 1.0, 1.0]) + rng.normal(3, 0.1), rng.normal(spec.n_y, 0.1)])
    f = network_rhs(spec, J_yy)
    n_burn = int(round(spec.t_burn / spec.dt))
    n_total = n_burn + spec.n_record * spec.stride
    n_obs = 3 + spec.n_observed
    rec = np.empty((spec.n_record, n_obs))
    with np.errstate(over="ignore", invalid="ignore"):  # blow-up is detected explicitly
        _run_network(f, state, spec, n_burn, n_total, n_obs, rec)
    if np.max(np.abs(rec)) > BLOWUP:
        raise NetworkBlowUp("recorded activity exceeded the blow-up threshold")
    mean = rec.mean(axis=0)
    std = rec.std(axis=0)
    data = rec.copy()
    if standardize:
        quiet = std < QUIESCENT_STD
        data = np.where(quiet, 0.0, (rec - mean) / np.where(quiet, 1.0, std))
    names = ["X1", "X2", "X3"] + [f"Y{i + 1}" for i in range(spec.n_observed)]
    return NetworkSeries(data, names, spec.dt * spec.stride, mean, std, spec)


# --- storage / transfer decomposition -----------------------------------------

TE_FIELDS = ("S", "U1", "R", "U2", "TE", "residual")


@dataclass
class TEReport:
    """Pairwise decompositions of ``Z_j^{t+1}`` by ``(Z_i^t, Z_j^t)`` (row ``i``, column ``j``).

    ``S`` is modified transfer, ``U1`` unique transfer, ``R`` redundant
    storage and ``U2`` unique storage.  ``TE`` is estimated separately and
    ``residual = TE - (S + U1)``.  Values are in nats.
    """

    names: List[str]
    S: np.ndarray
    U1: np.ndarray
    R: np.ndarray
    U2: np.ndarray
    TE: np.ndarray
    residual: np.ndarray
    units: str = "nats"
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"names": list(self.names), "units": self.units}
        out.update({k: np.asarray(getattr(self, k)).tolist() for k in TE_FIELDS})
        out["diagnostics"] = self.diagnostics
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def csv_rows(self):
        """One row per ordered pair ``(source, target)``."""
        n = len(self.names)
        for i in range(n):
            for j in range(n):
                row = {"source": self.names[i], "target": self.names[j]}
                row.update({k: float(getattr(self, k)[i, j]) for k in TE_FIELDS})
                yield row

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["source", "target", *TE_FIELDS])
            w.writeheader()
            for row in self.csv_rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

    def block_mean(self, matrix: str, sources: Sequence[int], targets: Sequence[int]) -> float:
        m = np.asarray(getattr(self, matrix))
        return float(np.mean(m[np.ix_(list(sources), list(targets))]))


def triplet_dataset(series: np.ndarray, i: int, j: int) -> Dataset:
    """``(Z_j^{t+1}; Z_i^t, Z_j^t)`` for all consecutive time points."""
    return Dataset(series[1:, j], series[:-1, i], series[:-1, j])


def _pair_job(args):
    data, i, j, quiet_i, quiet_j, config_dict, te_seed = args
    config = EstimatorConfig.from_dict(config_dict)
    zero = {"S": 0.0, "U1": 0.0, "R": 0.0, "U2": 0.0, "TE": 0.0, "note": ""}
    if quiet_j:
        # constant target: nothing to decompose
        return i, j, dict(zero, note="constant target")
    if quiet_i:
        # constant source carries no information; only storage remains
        ps = pseudo_observations(data)
        I2 = max(0.0, mi_pair(ps.uy, ps.u2, select(ps.uy, ps.u2)))
        return i, j, dict(zero, U2=I2, note="constant source")
    rep = decompose(data, config)
    if i == j:
        te = 0.0
    else:
        ps = pseudo_observations(data)
        pair = FittedPair.fit(ps)
        jm = joint_mi_fit(ps, pair, config.replace(seed=te_seed))
        te = max(0.0, jm.value) - max(0.0, mi_pair(ps.uy, ps.u2, pair.c_y2))
    return i, j, {"S": rep.S, "U1": rep.U1, "R": rep.R, "U2": rep.U2, "TE": te,
                  "note": "", "families": rep.diagnostics.get("families", {})}


def te_matrix(series, config: EstimatorConfig = EstimatorConfig(), names: Optional[Sequence[str]] = None,
              jobs: int = 1, quiescent: Optional[Sequence[bool]] = None) -> TEReport:
    """Decompose every ordered pair of channels of ``series`` (array ``(T, n)`` or :class:`NetworkSeries`).

    Each pair gets its own estimator seed derived from ``config.seed`` and
    the pair index, so results do not depend on ``jobs``.  Transfer entropy
    is estimated as ``I(Z_j^{t+1} : (Z_i^t, Z_j^t)) - I(Z_j^{t+1} : Z_j^t)``
    with an independently seeded joint fit.  Pairs with identical sources
    (the diagonal) have no transfer.
    """
    if isinstance(series, NetworkSeries):
        names = series.names if names is None else names
        quiescent = series.quiescent if quiescent is None else quiescent
        series = series.data
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ValueError("series must be a (time, channel) array")
    T, n = series.shape
    if T - 1 < MIN_TE_POINTS:
        raise ValueError(f"need at least {MIN_TE_POINTS} usable time points, got {T - 1}")
    names = [f"Z{k + 1}" for k in range(n)] if names is None else list(names)
    if quiescent is None:
        quiescent = series.std(axis=0) < QUIESCENT_STD
    quiescent = np.asarray(quiescent, dtype=bool)

    jobs_args = []
    for i in range(n):
        for j in range(n):
            idx = i * n + j
            cfg = config.replace(seed=RngStream.derived(config.seed, idx).seed)
            te_seed = RngStream.derived(config.seed, idx, 1).seed
            jobs_args.append((triplet_dataset(series, i, j), i, j, bool(quiescent[i]), bool(quiescent[j]),
                              cfg.to_dict(), te_seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_pair_job, jobs_args))
    else:
        results = []
        for a in jobs_args:
            results.append(_pair_job(a))
            log.debug("pair (%d, %d) done", a[1], a[2])

    mats = {k: np.zeros((n, n)) for k in ("S", "U1", "R", "U2", "TE")}
    notes = {}
    for i, j, res in results:
        for k in mats:
            mats[k][i, j] = res[k]
        if res["note"]:
            notes[f"{names[i]}->{names[j]}"] = res["note"]
    residual = mats["TE"] - (mats["S"] + mats["U1"])
    diag = {"config": config.to_dict(), "n_points": T - 1, "degenerate_pairs": notes}
    return TEReport(names, mats["S"], mats["U1"], mats["R"], mats["U2"], mats["TE"], residual,
                    diagnostics=diag)


__all__ = [
    "gaussian_correlation", "gen_gaussian_triple", "ModelSpec", "gen_model", "model_target",
    "NetworkSpec", "NetworkSeries", "NetworkBlowUp", "simulate_network", "rossler_rhs", "rk4_step",
    "integrate", "network_weights", "TEReport", "te_matrix", "triplet_dataset", "TE_FIELDS",
]
