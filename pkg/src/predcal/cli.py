"""Command-line front end: ``predcal <subcommand> [options]``.

Exit status: 0 on success, 1 when a model cannot be fitted, 2 on invalid
input, 3 when ``--strict`` is set and the bisection did not converge.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys

import numpy as np
import pandas as pd

from . import calibration
from .core import (
    CalibrationSettings,
    ClusteredBinomial,
    ClusteredCounts,
    MixedModelData,
    PredcalError,
    RandomStream,
    ValidationError,
)
from .coverage_lab import ScenarioSpec, Truth, simulate_coverage, write_summary_csv
from .datasets import write_fixtures
from .design import (
    ClusterSizes,
    CountRepeats,
    ExplicitMatrices,
    RowSubset,
    Unstructured,
    build_design_matrices,
    load_futmat,
    parse_formula,
)
from .fitting import fit_random_intercepts
from .pipeline import TaskKind, TaskSpec, run_task
from .sampling import (
    sample_beta_binomial,
    sample_lmm,
    sample_quasi_binomial,
    sample_quasi_poisson,
)

TASKS = {
    "quasi-bin": TaskKind.QUASI_BIN,
    "beta-bin": TaskKind.BETA_BIN,
    "quasi-pois": TaskKind.QUASI_POIS,
    "lmm-unstruc": TaskKind.LMM_UNSTRUC,
    "lmm-futvec": TaskKind.LMM_FUTVEC,
    "lmm-futmat": TaskKind.LMM_FUTMAT,
}


class UsageError(ValidationError):
    pass


def _int_list(flag):
    def parse(text):
        try:
            return tuple(int(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: expected comma-separated integers") from None
    return parse


def _float_list(flag):
    def parse(text):
        try:
            return tuple(float(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: expected comma-separated numbers") from None
    return parse


def _add_settings(p, nboot=10000):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--nboot", type=int, default=nboot)
    p.add_argument("--delta-min", type=float, default=0.01)
    p.add_argument("--delta-max", type=float, default=10.0)
    p.add_argument("--tolerance", type=float, default=0.003)
    p.add_argument("--n-bisec", type=int, default=30)
    p.add_argument("--alternative", choices=["both", "lower", "upper"], default="both")
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the PREDCAL_SEED environment variable")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predcal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in TASKS:
        p = sub.add_parser(name, help=f"prediction interval task {name}")
        p.add_argument("--hist", required=True, help="historical data CSV")
        p.add_argument("--newdat", help="future data CSV")
        p.add_argument("--newsize", type=_int_list("--newsize"))
        p.add_argument("--m", type=int)
        p.add_argument("--futvec", type=_int_list("--futvec"))
        p.add_argument("--futmat-list", help="JSON file with future design matrices")
        p.add_argument("--formula")
        _add_settings(p)
        p.add_argument("--trace-csv")
        p.add_argument("--trace-svg")
        p.add_argument("--out", help="result CSV (default: stdout)")
        p.add_argument("--strict", action="store_true",
                       help="exit with status 3 if the bisection does not converge")

    p = sub.add_parser("sample", help="draw data from one of the generators")
    p.add_argument("kind", choices=["beta-binomial", "quasi-binomial", "quasi-poisson", "lmm"])
    p.add_argument("--n", type=int, default=10, help="number of clusters")
    p.add_argument("--size", type=_int_list("--size"), help="cluster size(s)")
    p.add_argument("--prob", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--hist")
    p.add_argument("--formula")
    p.add_argument("--newdat")
    p.add_argument("--futmat-list")
    p.add_argument("--nboot", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")

    p = sub.add_parser("coverage-sim", help="Monte Carlo coverage of a task under a known truth")
    p.add_argument("--family", required=True, choices=["quasi-pois", "quasi-bin", "beta-bin", "lmm"])
    p.add_argument("--scenario", default=None)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--prob", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--size", type=_int_list("--size"), help="historical cluster size(s)")
    p.add_argument("--newsize", type=_int_list("--newsize"))
    p.add_argument("--m", type=int)
    p.add_argument("--hist", help="layout CSV with the factor columns (lmm)")
    p.add_argument("--formula")
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma2", type=_float_list("--sigma2"))
    p.add_argument("--futvec", type=_int_list("--futvec"))
    p.add_argument("--futmat-list")
    p.add_argument("--task", choices=["lmm-unstruc", "lmm-futvec", "lmm-futmat"])
    p.add_argument("--n-sim", type=int, default=500)
    p.add_argument("--mode", choices=["calibrated", "naive", "fixed"], default="calibrated")
    p.add_argument("--delta", type=float, default=0.0, help="coefficient for --mode fixed")
    _add_settings(p, nboot=2000)
    p.add_argument("--out", help="summary CSV (default: stdout)")
    p.add_argument("--per-sim", help="per-simulation CSV")

    p = sub.add_parser("fixtures", help="write the reference data sets as CSV/JSON")
    p.add_argument("--dir", required=True)
    return parser


# io helpers -----------------------------------------------------------------


def read_csv(path, flag) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"{flag}: file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise UsageError(f"{flag}: cannot parse {path}: {exc}") from None
    bad = frame.isna().any(axis=1)
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise UsageError(f"{flag}: {path}:{line}: missing value")
    return frame


def _binomial_frame(frame, path, flag):
    if list(frame.columns[:2]) != ["succ", "fail"] or frame.shape[1] != 2:
        raise UsageError(f"{flag}: {path}: expected header 'succ,fail'")
    return frame


def _counts_frame(frame, path, flag):
    if frame.shape[1] != 1:
        raise UsageError(f"{flag}: {path}: expected a single count column")
    return frame


def format_table(table: pd.DataFrame) -> str:
    """CSV text; floats with 6 significant digits, ``quant_calib`` in full."""
    out = table.copy()
    for col in out.columns:
        if out[col].dtype == bool:
            continue
        if col == "quant_calib":
            out[col] = [repr(float(v)) for v in out[col]]
        elif pd.api.types.is_float_dtype(out[col]):
            out[col] = [f"{v:.6g}" for v in out[col]]
    buf = io.StringIO()
    out.to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PREDCAL_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PREDCAL_SEED: not an integer: {env!r}") from None


def _settings(args) -> CalibrationSettings:
    try:
        return CalibrationSettings(
            alpha=args.alpha, nboot=args.nboot, delta_min=args.delta_min,
            delta_max=args.delta_max, tolerance=args.tolerance,
            max_bisection_steps=args.n_bisec, alternative=args.alternative,
            seed=_seed(args), threads=args.threads,
        )
    except ValidationError as exc:
        raise UsageError(f"invalid setting: {exc}") from None


# subcommands ----------------------------------------------------------------


def _task_from_args(args) -> TaskSpec:
    kind = TASKS[args.command]
    settings = _settings(args)
    hist = read_csv(args.hist, "--hist")
    newdat = read_csv(args.newdat, "--newdat") if args.newdat else None
    model, future = None, None
    if kind.is_binomial:
        _binomial_frame(hist, args.hist, "--hist")
        if newdat is not None:
            _binomial_frame(newdat, args.newdat, "--newdat")
        histdat = ClusteredBinomial(hist["succ"], hist["fail"])
        if args.newsize:
            future = ClusterSizes(args.newsize)
    elif kind is TaskKind.QUASI_POIS:
        _counts_frame(hist, args.hist, "--hist")
        if newdat is not None:
            _counts_frame(newdat, args.newdat, "--newdat")
        histdat = ClusteredCounts(hist.iloc[:, 0])
        if args.m is not None:
            future = CountRepeats(args.m)
    else:
        if not args.formula:
            raise UsageError("--formula is required for mixed-model tasks")
        model = parse_formula(args.formula)
        histdat = MixedModelData.from_frame(hist, model.response_name)
        if kind is TaskKind.LMM_UNSTRUC and args.m is not None:
            future = Unstructured(args.m)
        elif kind is TaskKind.LMM_FUTVEC:
            if not args.futvec:
                raise UsageError("--futvec is required for lmm-futvec")
            future = RowSubset(args.futvec)
        elif kind is TaskKind.LMM_FUTMAT and args.futmat_list:
            future = ExplicitMatrices(load_futmat(args.futmat_list))
    return TaskSpec(kind, histdat, future, newdat, model, settings)


def _run_task_cmd(args) -> int:
    task = _task_from_args(args)
    result = run_task(task)
    cal = result.calibration
    _emit(format_table(result.table), args.out)
    if args.trace_csv:
        calibration.write_trace_csv(cal, args.trace_csv)
    if args.trace_svg:
        calibration.write_trace_svg(cal, args.trace_svg, task.settings.alpha, task.settings.tolerance)
    if not cal.converged:
        for msg in cal.warnings:
            print(f"predcal: warning: {msg}", file=sys.stderr)
        if args.strict:
            return 3
    return 0


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            flag = "--lambda" if n == "lam" else "--" + n.replace("_", "-")
            raise UsageError(f"{flag} is required for {args.command} {getattr(args, 'kind', '')}".strip())


def _sample_cmd(args) -> int:
    seed = _seed(args)
    stream = RandomStream(seed)
    rows = []
    if args.kind in ("beta-binomial", "quasi-binomial"):
        _need(args, "size", "prob", "rho" if args.kind == "beta-binomial" else "phi")
        sizes = args.size * args.n if len(args.size) == 1 else args.size
        if len(sizes) != args.n:
            raise UsageError("--size: give one size or exactly --n sizes")
        rng = stream.generator()
        if args.kind == "beta-binomial":
            y = sample_beta_binomial(sizes, args.prob, args.rho, rng)
        else:
            y = sample_quasi_binomial(sizes, args.prob, args.phi, rng)
        frame = pd.DataFrame({"succ": y, "fail": np.asarray(sizes) - y})
    elif args.kind == "quasi-poisson":
        _need(args, "lam", "phi")
        frame = pd.DataFrame({"y": sample_quasi_poisson(args.n, args.lam, args.phi, stream.generator())})
    else:
        _need(args, "hist", "formula")
        model = parse_formula(args.formula)
        data = MixedModelData.from_frame(read_csv(args.hist, "--hist"), model.response_name)
        fit = fit_random_intercepts(data, model)
        if args.futmat_list:
            dm = load_futmat(args.futmat_list).aligned(model.terms)
        elif args.newdat:
            new = read_csv(args.newdat, "--newdat")
            cols = {c: tuple(new[c]) for c in new.columns if c != model.response_name}
            dm = build_design_matrices(MixedModelData(np.zeros(len(new)), cols), model)
        else:
            dm = fit.design
        for b in range(args.nboot):
            y = sample_lmm(fit.mu_hat, fit.sigma2, dm, stream.derive(b).generator())
            rows.append(pd.DataFrame({"replicate": b + 1, "row": np.arange(1, y.size + 1), "y": y}))
        frame = pd.concat(rows, ignore_index=True)
    _emit(format_table(frame), args.out)
    return 0


def _coverage_cmd(args) -> int:
    settings = _settings(args)
    fam = args.family
    if fam == "quasi-pois":
        _need(args, "lam", "phi", "m")
        truth = Truth("quasi_pois", {"lam": args.lam, "phi": args.phi}, n_clusters=args.clusters)
        kind, future = TaskKind.QUASI_POIS, CountRepeats(args.m)
    elif fam in ("quasi-bin", "beta-bin"):
        key = "phi" if fam == "quasi-bin" else "rho"
        _need(args, "prob", key, "size", "newsize")
        sizes = args.size * args.clusters if len(args.size) == 1 else args.size
        truth = Truth(fam.replace("-", "_"), {"prob": args.prob, key: getattr(args, key)},
                      sizes=tuple(sizes))
        kind, future = TASKS[fam], ClusterSizes(args.newsize)
    else:
        _need(args, "hist", "formula", "mu", "sigma2", "task")
        layout = read_csv(args.hist, "--hist")
        model = parse_formula(args.formula)
        layout = layout.drop(columns=[model.response_name], errors="ignore")
        truth = Truth("lmm", {"mu": args.mu, "sigma2": args.sigma2}, layout=layout,
                      formula=args.formula)
        kind = TASKS[args.task]
        if kind is TaskKind.LMM_UNSTRUC:
            _need(args, "m")
            future = Unstructured(args.m)
        elif kind is TaskKind.LMM_FUTVEC:
            _need(args, "futvec")
            future = RowSubset(args.futvec)
        else:
            _need(args, "futmat_list")
            future = ExplicitMatrices(load_futmat(args.futmat_list).aligned(model.terms))
    spec = ScenarioSpec(
        name=args.scenario or f"{fam}-{args.mode}", truth=truth, kind=kind, future=future,
        n_sim=args.n_sim, settings=settings, seed=settings.seed, mode=args.mode,
        fixed_delta=args.delta,
    )
    report = simulate_coverage(spec, threads=settings.threads)
    if args.out:
        write_summary_csv([report], args.out)
    else:
        buf = io.StringIO()
        pd.DataFrame([report.summary_row()]).to_csv(buf, index=False, lineterminator="\n")
        sys.stdout.write(buf.getvalue())
    if args.per_sim:
        report.log.to_csv(args.per_sim, index=False, lineterminator="\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR, format="predcal: %(levelname)s: %(message)s")
    try:
        if args.command in TASKS:
            return _run_task_cmd(args)
        if args.command == "sample":
            return _sample_cmd(args)
        if args.command == "fixtures":
            for path in write_fixtures(args.dir).values():
                print(path)
            return 0
        return _coverage_cmd(args)
    except ValidationError as exc:
        print(f"predcal: error: {exc}", file=sys.stderr)
        return 2
    except PredcalError as exc:
        print(f"predcal: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
