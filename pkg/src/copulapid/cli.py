"""Command-line front end.

Subcommands::

    copulapid estimate       --input data.csv --cols y,x1,x2
    copulapid sweep-gaussian --rho1-grid 0.2,0.4 --rho2-grid 0,0.2 --samples 3000
    copulapid model-sweep    --model m1 --runs 3
    copulapid network        [--spec spec.json] [--g 4] [--jyx 0.1]
    copulapid discrete       --input joint.csv | --model m1 --w2-grid ...

JSON reports go to ``--output`` (or stdout) and always contain a ``config``
block that is sufficient to re-run the job, plus ``wall_time_s``.  CSV
reports are accompanied by a ``<output>.meta.json`` file holding the same
echo (printed to stderr when the CSV goes to stdout).  The exit status is 0
exactly when the report was written; otherwise a one-line diagnostic is
printed to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .estimator import EstimatorConfig, train_unique
from .numerics import RngStream
from .oracle import DiscreteJoint, discrete_broja, gaussian_unique_exact, quantize_model
from .pid import INFO_FIELDS, PidReport, consistency_check, decompose
from .pseudoobs import MIN_SAMPLES, Dataset, pseudo_observations
from .simgen import ModelSpec, NetworkSpec, gen_gaussian_triple, gen_model, simulate_network, te_matrix

log = logging.getLogger("copulapid")

PID_TERMS = ("U1", "U2", "R", "S")
MI_TERMS = ("I_y_x1", "I_y_x2", "I_y_x12")


class CliError(Exception):
    """A user-facing failure; reported as a single line."""


@dataclass
class RunConfig:
    """Everything needed to re-run a command."""

    subcommand: str
    units: str = "nats"
    seed: int = 0
    jobs: int = 1
    estimator: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


# --- helpers -------------------------------------------------------------------

def derived_seed(master: int, *keys: int) -> int:
    """Seed for job ``keys``, independent of scheduling."""
    return RngStream.derived(master, *keys).seed


def parse_grid(text: str) -> List[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"malformed grid {text!r}; expected comma-separated numbers") from None
    if not vals:
        raise CliError("empty grid")
    return vals


def read_columns(path: str, cols: Sequence[str]) -> Dataset:
    """Read three named numeric columns from a headed CSV file."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in cols if c not in header]
        if missing:
            raise CliError(f"{path}: missing columns {', '.join(missing)} (have {', '.join(header)})")
        idx = [header.index(c) for c in cols]
        out = [[], [], []]
        for line, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise CliError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            for k, i in enumerate(idx):
                try:
                    v = float(row[i])
                except ValueError:
                    raise CliError(f"{path}: line {line}: column {cols[k]!r} is not a number: {row[i]!r}") from None
                if not math.isfinite(v):
                    raise CliError(f"{path}: line {line}: column {cols[k]!r} is not finite")
                out[k].append(v)
    if len(out[0]) < MIN_SAMPLES:
        raise CliError(f"{path}: need at least {MIN_SAMPLES} rows, got {len(out[0])}")
    return Dataset(*(np.array(c) for c in out))


def estimator_config(args) -> EstimatorConfig:
    try:
        return EstimatorConfig(A=args.A, M=args.M, iterations=args.iterations, lr=args.lr,
                               window=min(args.window, args.iterations), seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _unit_factor(units: str) -> float:
    return 1.0 / math.log(2.0) if units == "bits" else 1.0


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True)


def emit_json(payload: dict, output: Optional[str]):
    text = dumps(payload) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def emit_csv(rows: List[dict], fields: Sequence[str], output: Optional[str], meta: dict):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        with open(output + ".meta.json", "w", encoding="utf-8") as fh:
            fh.write(dumps(meta) + "\n")
    else:
        sys.stdout.write(buf.getvalue())
        sys.stderr.write(json.dumps(meta, sort_keys=True) + "\n")


def run_jobs(fn, jobs_args, n_workers: int):
    if n_workers > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            return list(ex.map(fn, jobs_args))
    return [fn(a) for a in jobs_args]


# --- estimate --------------------------------------------------------------------

def cmd_estimate(args, rc: RunConfig) -> dict:
    cols = [c.strip() for c in args.cols.split(",")]
    if len(cols) != 3:
        raise CliError("--cols needs exactly three names: target,source1,source2")
    data = read_columns(args.input, cols)
    config = estimator_config(args)
    rc.estimator = config.to_dict()
    rc.options.update(input=args.input, cols=cols)
    report = decompose(data, config, units=args.units)
    return {"report": report.to_dict()}


# --- Gaussian sweep --------------------------------------------------------------

def _gaussian_job(a):
    rho1, rho2, rho12, D, data_seed, config_dict = a
    data = gen_gaussian_triple(rho1, rho2, rho12, D, data_seed)
    config = EstimatorConfig.from_dict(config_dict)
    est = train_unique(pseudo_observations(data), config).estimate
    return est


def cmd_sweep_gaussian(args, rc: RunConfig) -> List[dict]:
    r1s, r2s = parse_grid(args.rho1_grid), parse_grid(args.rho2_grid)
    base = estimator_config(args)
    rc.estimator = base.to_dict()
    rc.options.update(rho1_grid=r1s, rho2_grid=r2s, samples=args.samples, rho12=args.rho12)
    points, jobs_args = [], []
    for k, (r1, r2) in enumerate((a, b) for a in r1s for b in r2s):
        rho12 = r1 * r2 if args.rho12 == "product" else float(args.rho12)
        points.append((r1, r2, rho12))
        cfg = base.replace(seed=derived_seed(args.seed, k, 1))
        jobs_args.append((r1, r2, rho12, args.samples, derived_seed(args.seed, k, 0), cfg.to_dict()))
    estimates = run_jobs(_gaussian_job, jobs_args, args.jobs)
    f = _unit_factor(args.units)
    rows = []
    for (r1, r2, rho12), est in zip(points, estimates):
        exact = gaussian_unique_exact(r1, r2)
        rows.append({"rho1": r1, "rho2": r2, "rho12": rho12, "U1_hat": est * f, "U1_exact": exact * f,
                     "error": (est - exact) * f})
    return rows


# --- model sweep -----------------------------------------------------------------

def _model_job(a):
    kind, w1, w2, rho12, D, data_seed, config_dict, consistency = a
    data = gen_model(ModelSpec(kind, w1, w2, rho12, D, data_seed))
    config = EstimatorConfig.from_dict(config_dict)
    if consistency:
        res = consistency_check(data, config)
        out = res.report.to_dict()
        out["U2_direct"] = res.U2_direct
        return out
    return decompose(data, config).to_dict()


def cmd_model_sweep(args, rc: RunConfig) -> List[dict]:
    kind = args.model.upper()
    grid = parse_grid(args.w2_grid)
    base = estimator_config(args)
    rc.estimator = base.to_dict()
    rc.options.update(model=kind, w1=args.w1, rho12=args.rho12, w2_grid=grid, runs=args.runs,
                      samples=args.samples, consistency=args.consistency)
    try:
        ModelSpec(kind, args.w1, grid[0], args.rho12, args.samples, 0)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    jobs_args = []
    for k, w2 in enumerate(grid):
        for r in range(args.runs):
            cfg = base.replace(seed=derived_seed(args.seed, k, r, 1))
            jobs_args.append((kind, args.w1, w2, args.rho12, args.samples, derived_seed(args.seed, k, r, 0),
                              cfg.to_dict(), args.consistency))
    results = run_jobs(_model_job, jobs_args, args.jobs)
    f = _unit_factor(args.units)
    rows = []
    for k, w2 in enumerate(grid):
        reps = results[k * args.runs:(k + 1) * args.runs]
        row = {"w2": w2}
        for name in PID_TERMS + MI_TERMS:
            vals = np.array([rep[name] for rep in reps]) * f
            row[f"{name}_mean"] = float(vals.mean())
            row[f"{name}_std"] = float(vals.std())
        i12 = np.array([rep["I_y_x12"] for rep in reps])
        for name in PID_TERMS:
            vals = np.array([rep[name] for rep in reps])
            row[f"{name}_frac_mean"] = float(np.mean(np.where(i12 > 0, vals / np.where(i12 > 0, i12, 1.0), 0.0)))
        if args.consistency:
            direct = np.array([rep["U2_direct"] for rep in reps]) * f
            indirect = np.array([rep["U2"] for rep in reps]) * f
            row["U2_direct_mean"] = float(direct.mean())
            row["U2_direct_std"] = float(direct.std())
            row["consistency_gap_max"] = float(np.max(np.abs(direct - indirect)))
        rows.append(row)
    return rows


def model_sweep_fields(consistency: bool) -> List[str]:
    fields = ["w2"]
    for name in PID_TERMS + MI_TERMS:
        fields += [f"{name}_mean", f"{name}_std"]
    fields += [f"{name}_frac_mean" for name in PID_TERMS]
    if consistency:
        fields += ["U2_direct_mean", "U2_direct_std", "consistency_gap_max"]
    return fields


# --- network ---------------------------------------------------------------------

def cmd_network(args, rc: RunConfig) -> dict:
    spec_dict = {}
    if args.spec:
        try:
            with open(args.spec, encoding="utf-8") as fh:
                spec_dict = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read network spec {args.spec}: {exc}") from None
    for key, val in (("g", args.g), ("j_yx", args.jyx), ("n_record", args.n_record)):
        if val is not None:
            spec_dict[key] = val
    spec_dict.setdefault("seed", args.seed)
    try:
        spec = NetworkSpec.from_dict(spec_dict)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid network spec: {exc}") from None
    config = estimator_config(args)
    rc.estimator = config.to_dict()
    rc.options.update(spec=spec.to_dict())
    series = simulate_network(spec)
    if args.series_csv:
        series.write_csv(args.series_csv)
    try:
        rep = te_matrix(series, config, jobs=args.jobs)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.csv:
        rep.write_csv(args.csv)
    out = rep.to_dict()
    if args.units == "bits":
        f = _unit_factor("bits")
        for k in ("S", "U1", "R", "U2", "TE", "residual"):
            out[k] = (np.asarray(out[k]) * f).tolist()
        out["units"] = "bits"
    return {"report": out}


# --- discrete --------------------------------------------------------------------

def cmd_discrete(args, rc: RunConfig):
    if bool(args.input) == bool(args.model):
        raise CliError("discrete needs exactly one of --input or --model")
    if args.input:
        rc.options.update(input=args.input)
        try:
            joint = DiscreteJoint.from_csv(args.input)
        except (OSError, ValueError) as exc:
            raise CliError(f"{args.input}: {exc}") from None
        return {"report": discrete_broja(joint).in_units(args.units).to_dict()}
    grid = parse_grid(args.w2_grid)
    rc.options.update(model=args.model.upper(), w1=args.w1, rho12=args.rho12, w2_grid=grid,
                      n_x=args.n_x, n_y=args.n_y)
    rows = []
    for w2 in grid:
        rep = discrete_broja(quantize_model(args.model, args.w1, w2, args.rho12, args.n_x, args.n_y))
        rep = rep.in_units(args.units)
        row = {"w2": w2}
        row.update({k: getattr(rep, k) for k in INFO_FIELDS})
        row["duality_gap"] = rep.diagnostics["duality_gap"]
        row["solver_iterations"] = rep.diagnostics["solver_iterations"]
        rows.append(row)
    return rows


DISCRETE_SWEEP_FIELDS = ["w2", *INFO_FIELDS, "duality_gap", "solver_iterations"]


# --- parser ----------------------------------------------------------------------

def _add_common(p, estimator=True):
    p.add_argument("--units", choices=("nats", "bits"), default="nats")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--output", "-o", help="output file (default stdout)")
    if estimator:
        d = EstimatorConfig()
        g = p.add_argument_group("estimator")
        g.add_argument("--A", type=int, default=d.A, help="importance samples per point")
        g.add_argument("--M", type=int, default=d.M, help="batch size")
        g.add_argument("--iterations", type=int, default=d.iterations)
        g.add_argument("--lr", type=float, default=d.lr)
        g.add_argument("--window", type=int, default=d.window, help="iterations averaged for the estimate")


DEFAULT_W2_GRID = ",".join(f"{0.1 * k:.1f}" for k in range(11))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copulapid", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("estimate", help="decompose three columns of a CSV file")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--cols", default="y,x1,x2", help="target,source1,source2 column names")
    _add_common(p)

    p = sub.add_parser("sweep-gaussian", help="unique information on a grid of Gaussian triples")
    p.add_argument("--rho1-grid", default="0.2,0.4,0.6,0.8")
    p.add_argument("--rho2-grid", default="0.0,0.2,0.4,0.6")
    p.add_argument("--rho12", default="product",
                   help="source correlation: a number, or 'product' for rho1*rho2 (default)")
    p.add_argument("--samples", type=int, default=3000)
    _add_common(p)

    p = sub.add_parser("model-sweep", help="PID of model M1/M2 over a grid of w2")
    p.add_argument("--model", choices=("m1", "m2", "M1", "M2"), required=True)
    p.add_argument("--w1", type=float, default=0.5)
    p.add_argument("--rho12", type=float, default=0.3)
    p.add_argument("--w2-grid", default=DEFAULT_W2_GRID)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--samples", type=int, default=3000)
    p.add_argument("--consistency", action="store_true",
                   help="also estimate U2 directly (sources swapped)")
    _add_common(p)

    p = sub.add_parser("network", help="simulate the chaotic rate network and decompose transfer/storage")
    p.add_argument("--spec", help="JSON file with NetworkSpec fields")
    p.add_argument("--g", type=float, default=None, help="recurrent coupling scale")
    p.add_argument("--jyx", type=float, default=None, help="X -> Y coupling")
    p.add_argument("--n-record", type=int, default=None, help="recorded time points")
    p.add_argument("--csv", help="also write the matrices as CSV (one row per pair)")
    p.add_argument("--series-csv", help="also write the recorded series")
    _add_common(p)

    p = sub.add_parser("discrete", help="discrete decomposition of a table or of a quantized model")
    p.add_argument("--input", "-i", help="CSV with columns y,x1,x2,probability")
    p.add_argument("--model", choices=("m1", "m2", "M1", "M2"))
    p.add_argument("--w1", type=float, default=0.5)
    p.add_argument("--rho12", type=float, default=0.3)
    p.add_argument("--w2-grid", default=DEFAULT_W2_GRID)
    p.add_argument("--n-x", type=int, default=16)
    p.add_argument("--n-y", type=int, default=3)
    _add_common(p, estimator=False)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    rc = RunConfig(args.subcommand, units=args.units, seed=args.seed, jobs=args.jobs)
    if args.jobs < 1:
        print("copulapid: error: --jobs must be at least 1", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        if args.subcommand == "estimate":
            out, fields = cmd_estimate(args, rc), None
        elif args.subcommand == "sweep-gaussian":
            out, fields = cmd_sweep_gaussian(args, rc), ["rho1", "rho2", "rho12", "U1_hat", "U1_exact", "error"]
        elif args.subcommand == "model-sweep":
            out, fields = cmd_model_sweep(args, rc), model_sweep_fields(args.consistency)
        elif args.subcommand == "network":
            out, fields = cmd_network(args, rc), None
        else:
            out = cmd_discrete(args, rc)
            fields = DISCRETE_SWEEP_FIELDS if isinstance(out, list) else None
        meta = {"config": rc.to_dict(), "wall_time_s": time.perf_counter() - t0}
        if fields is None:
            out.update(meta)
            emit_json(out, args.output)
        else:
            emit_csv(out, fields, args.output, meta)
    except CliError as exc:
        print(f"copulapid: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"copulapid: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
