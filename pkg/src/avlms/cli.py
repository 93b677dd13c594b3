"""Command-line surface: step-size tables, runs, predictions, sampling reports.

Commands
--------
gamma-max   step-size thresholds, per sampling scheme
run         Monte Carlo trajectories as CSV
predict     closed-form risk curves as CSV
sampling    scheme comparison (gains, thresholds, measured risks)
plot        render a run/predict CSV as a log-log SVG
ingest      parse a data file and print its summary report

Configuration comes from flags plus an optional ``key = value`` manifest
file (flags override the file).  Outputs are deterministic for a given
manifest and master seed.  Exit status: 0 success, 1 usage error, 2 data
error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import asymptotics, engine, sampling, stepsize
from .dataio import export_csv, ingest
from .errors import (
    DataFormatError,
    DimensionError,
    SchemeError,
    SingularOperatorError,
    SpecError,
)
from .moments import ProblemSpec, compute_moments, reweighted_moments
from .svg import Series, render_loglog_svg

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SCHEME_NAMES = ("uniform", "bias-opt", "variance-opt", "class-weighted")


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def parse_spec_descriptor(text: str, seed: int = 0) -> ProblemSpec:
    """Build a synthetic spec from a compact descriptor.

    Grammar: ``gaussian:key=value,...`` with keys d (required), spectrum
    (``uniform`` | ``1/i`` | colon-separated eigenvalues), sigma, wstar and
    w0 (``zeros`` | ``ones`` | ``random``), seed (for the random vectors).
    Example: ``gaussian:d=25,spectrum=1/i,sigma=1``.
    """
    name, _, rest = text.partition(":")
    if name != "gaussian":
        raise UsageError(f"unknown spec family {name!r} (only 'gaussian' is built in)")
    opts = {}
    if rest:
        for item in rest.split(","):
            if "=" not in item:
                raise UsageError(f"bad spec option {item!r}, expected key=value")
            k, v = item.split("=", 1)
            opts[k.strip()] = v.strip()
    if "d" not in opts:
        raise UsageError("gaussian spec needs d=<dim>")
    d = int(opts["d"])
    spectrum = opts.get("spectrum", "uniform")
    if spectrum == "uniform":
        eig = np.ones(d)
    elif spectrum == "1/i":
        eig = 1.0 / np.arange(1, d + 1)
    else:
        eig = np.array([float(v) for v in spectrum.split(":")])
        if len(eig) != d:
            raise UsageError(f"spectrum lists {len(eig)} values for d={d}")
    rng = np.random.default_rng(int(opts.get("seed", seed)))

    def vec(kind: str) -> np.ndarray:
        if kind == "zeros":
            return np.zeros(d)
        if kind == "ones":
            return np.ones(d)
        if kind == "random":
            return rng.standard_normal(d)
        raise UsageError(f"vector spec must be zeros|ones|random, got {kind!r}")

    w_star = vec(opts.get("wstar", "random"))
    w0 = vec(opts.get("w0", "zeros"))
    return ProblemSpec.gaussian(np.diag(eig), w_star=w_star, w0=w0,
                                sigma=float(opts.get("sigma", 1.0)))


def _load_manifest(path: str) -> dict:
    if not os.path.exists(path):
        raise UsageError(f"manifest file {path!r} does not exist")
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"manifest line {lineno}: expected key = value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


_LIST_KEYS = {"gamma", "scheme"}
_INT_KEYS = {"n_max", "points", "replicates", "seed", "dim"}
_FLOAT_KEYS = set()


def _merge_manifest(args: argparse.Namespace) -> None:
    if not getattr(args, "manifest", None):
        return
    values = _load_manifest(args.manifest)
    for key, raw in values.items():
        if not hasattr(args, key):
            raise UsageError(f"manifest key {key!r} is not a recognized option")
        if getattr(args, key) is not None:
            continue  # flags override the manifest
        if key in _LIST_KEYS:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            setattr(args, key, [float(p) for p in parts] if key == "gamma" else parts)
        elif key in _INT_KEYS:
            setattr(args, key, int(raw))
        else:
            setattr(args, key, raw)


def _resolve_spec(args) -> ProblemSpec:
    if getattr(args, "data", None):
        if not os.path.exists(args.data):
            raise DataFormatError(f"data file {args.data!r} does not exist")
        spec, _ = ingest(args.data, args.format or "csv-dense", dim=getattr(args, "dim", None))
        return spec
    if getattr(args, "spec", None):
        return parse_spec_descriptor(args.spec, seed=args.seed or 0)
    raise UsageError("one of --spec or --data is required")


def _n_schedule(args) -> list[int]:
    n_max = args.n_max or 1000
    points = args.points or 20
    if n_max < 1:
        raise UsageError("--n-max must be positive")
    lo = min(10, n_max)
    grid = np.unique(np.round(np.logspace(np.log10(lo), np.log10(n_max), points)).astype(int))
    sched = [int(v) for v in grid if v >= 1]
    if not sched or sched[-1] != n_max:
        sched.append(n_max)
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise UsageError("n schedule must be strictly increasing")
    return sched


def _scheme_cells(spec: ProblemSpec, names: list[str]):
    """Resolve scheme names into (name, spec_for_runs, scheme_or_None)."""
    cells = []
    for name in names:
        if name == "uniform":
            cells.append((name, spec, None))
        elif name == "bias-opt":
            cells.append((name, spec, sampling.optimal_bias_scheme(spec)))
        elif name == "variance-opt":
            cells.append((name, spec, sampling.optimal_variance_scheme(spec)))
        elif name == "class-weighted":
            cells.append((name, engine.class_weighted_spec(spec), None))
        else:
            raise UsageError(f"unknown scheme {name!r} (choose from {', '.join(SCHEME_NAMES)})")
    return cells


def _cell_moments(spec: ProblemSpec, name: str, run_spec: ProblemSpec, scheme, seed: int):
    if scheme is None:
        return compute_moments(run_spec)
    return reweighted_moments(spec, scheme.c_inverse, seed=seed)


def cmd_gamma_max(args) -> int:
    spec = _resolve_spec(args)
    names = args.scheme or ["uniform"]
    rows = []
    for name, run_spec, scheme in _scheme_cells(spec, names):
        m = _cell_moments(spec, name, run_spec, scheme, args.seed or 0)
        g_max = stepsize.gamma_max(m)
        rows.append([
            name,
            g_max,
            stepsize.gamma_max_det(m),
            stepsize.trace_step_bound(m),
            m.mu,
            stepsize.smallest_t_eigenvalue(m, g_max / 2.0) if np.isfinite(g_max) else None,
        ])
    header = ["scheme", "gamma_max", "gamma_max_det", "trace_bound", "mu",
              "mu_T_at_half_gamma_max"]
    for row in rows:
        print("  ".join(f"{h}={_fmt(v)}" for h, v in zip(header, row)))
    if args.out:
        _write_csv(args.out, header, rows)
    return EXIT_OK


def cmd_run(args) -> int:
    spec = _resolve_spec(args)
    gammas = args.gamma
    if not gammas:
        raise UsageError("--gamma is required for run")
    schedule = _n_schedule(args)
    names = args.scheme or ["uniform"]
    modes = [args.mode] if args.mode else ["total"]
    if modes == ["all"]:
        modes = ["bias", "variance", "total"]
    rows = []
    for name, run_spec, scheme in _scheme_cells(spec, names):
        for gamma in gammas:
            if gamma <= 0:
                raise UsageError("gamma values must be positive")
            for mode in modes:
                config = engine.RunConfig(
                    gamma=gamma, n=schedule[-1], replicates=args.replicates or 100,
                    mode=mode, seed=args.seed or 0, record_at=tuple(schedule),
                )
                traj = engine.run_averaged_lms(run_spec, config, scheme=scheme)
                for i, n in enumerate(traj.iterations):
                    rows.append([int(n), gamma, name, mode, traj.risk[i],
                                 traj.standard_error[i], ""])
                if traj.diverged:
                    rows.append([traj.diverged_at, gamma, name, mode, "", "", "diverged"])
    header = ["n", "gamma", "scheme", "mode", "risk", "stderr", "flag"]
    _write_csv(args.out or "-", header, rows)
    return EXIT_OK


def cmd_predict(args) -> int:
    spec = _resolve_spec(args)
    gammas = args.gamma
    if not gammas:
        raise UsageError("--gamma is required for predict")
    schedule = _n_schedule(args)
    moments = compute_moments(spec)
    header = ["n", "bias_exact", "bias_leading", "bias_bound", "variance_exact",
              "variance_leading", "variance_bound", "small_gamma_bias",
              "small_gamma_variance"]
    out_paths = []
    for gi, gamma in enumerate(gammas):
        if gamma <= 0:
            raise UsageError("gamma values must be positive")
        model = asymptotics.CovarianceModel(moments, gamma)
        stable = model.t_positive and model.rho < 1.0
        if not stable:
            print(
                f"warning: gamma={gamma:g} is at or beyond the stability threshold; "
                "leading-term columns are left empty",
                file=sys.stderr,
            )
        rows = []
        overflowed = False
        for n in schedule:
            sg_bias, sg_var = asymptotics.small_gamma_equivalents(moments, gamma, n)
            bias_ex = asymptotics.excess_risk(moments, model.bias_exact(n))
            var_ex = (
                asymptotics.excess_risk(moments, model.variance_exact(n))
                if model.t_invertible
                else None
            )
            if not np.isfinite(bias_ex):
                bias_ex, overflowed = None, True
            if var_ex is not None and not np.isfinite(var_ex):
                var_ex, overflowed = None, True
            rows.append([
                n,
                bias_ex,
                asymptotics.excess_risk(moments, model.bias_leading(n)) if stable else None,
                model.bias_remainder_bound(n) if stable else None,
                var_ex,
                asymptotics.excess_risk(moments, model.variance_leading(n)) if stable else None,
                model.variance_remainder_bound(n) if stable else None,
                sg_bias,
                sg_var,
            ])
        if overflowed:
            print(
                f"warning: gamma={gamma:g} exact values overflowed at large n; "
                "those cells are left empty",
                file=sys.stderr,
            )
        if args.out and args.out != "-":
            path = args.out
            if len(gammas) > 1:
                root, ext = os.path.splitext(args.out)
                path = f"{root}_g{gi}{ext or '.csv'}"
            out_paths.append(path)
            _write_csv(path, header, rows)
        else:
            _write_csv("-", header, rows)
    for path in out_paths:
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_sampling(args) -> int:
    spec = _resolve_spec(args)
    names = args.scheme or ["uniform", "bias-opt", "variance-opt"]
    schedule = _n_schedule(args)
    measure_at = sorted({schedule[len(schedule) // 2], schedule[-1]})
    base_moments = compute_moments(spec)
    _, base_var_limit = asymptotics.small_gamma_equivalents(base_moments, 1.0, 1)
    base_gamma_max = stepsize.gamma_max(base_moments)
    header = (["scheme", "variance_gain", "gamma_max", "predicted_bias_gain"]
              + [f"measured_risk_n{n}" for n in measure_at]
              + [f"measured_stderr_n{n}" for n in measure_at])
    rows = []
    for name in names:
        try:
            cells = _scheme_cells(spec, [name])
        except SchemeError as exc:
            print(f"warning: scheme {name!r} skipped: {exc}", file=sys.stderr)
            continue
        name, run_spec, scheme = cells[0]
        m = _cell_moments(spec, name, run_spec, scheme, args.seed or 0)
        g_max = stepsize.gamma_max(m)
        _, var_limit = asymptotics.small_gamma_equivalents(m, 1.0, 1)
        gain = var_limit / base_var_limit if base_var_limit > 0 else 1.0
        pred_bias_gain = sampling.bias_gain(base_gamma_max, g_max)
        gamma_run = (args.gamma[0] if args.gamma else 0.5 * g_max)
        config = engine.RunConfig(
            gamma=gamma_run, n=measure_at[-1], replicates=args.replicates or 200,
            mode=args.mode or "total", seed=args.seed or 0,
            record_at=tuple(measure_at),
        )
        traj = engine.run_averaged_lms(run_spec, config, scheme=scheme)
        risk_by_n = dict(zip((int(v) for v in traj.iterations), traj.risk))
        err_by_n = dict(zip((int(v) for v in traj.iterations), traj.standard_error))
        rows.append([name, gain, g_max, pred_bias_gain]
                    + [risk_by_n.get(n) for n in measure_at]
                    + [err_by_n.get(n) for n in measure_at])
    _write_csv(args.out or "-", header, rows)
    return EXIT_OK


def cmd_plot(args) -> int:
    if not args.csv or not os.path.exists(args.csv):
        raise DataFormatError(f"csv file {args.csv!r} does not exist")
    with open(args.csv, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataFormatError("csv file is empty")
    header = lines[0].split(",")
    if "n" not in header:
        raise DataFormatError("csv needs an 'n' column")
    cols = {name: i for i, name in enumerate(header)}
    records = [ln.split(",") for ln in lines[1:]]
    series: list[Series] = []
    if {"gamma", "scheme", "mode", "risk"} <= set(cols):
        keyed: dict[tuple, Series] = {}
        for rec in records:
            risk = rec[cols["risk"]]
            if risk == "":
                continue
            key = (rec[cols["gamma"]], rec[cols["scheme"]], rec[cols["mode"]])
            if key not in keyed:
                label = f"gamma={key[0]} {key[1]} {key[2]}"
                keyed[key] = Series(label=label, xs=[], ys=[])
                series.append(keyed[key])
            keyed[key].xs.append(float(rec[cols["n"]]))
            keyed[key].ys.append(float(risk))
    else:
        for name, idx in cols.items():
            if name == "n":
                continue
            xs = [float(r[cols["n"]]) for r in records if idx < len(r) and r[idx] != ""]
            ys = [float(r[idx]) for r in records if idx < len(r) and r[idx] != ""]
            if xs:
                series.append(Series(label=name, xs=xs, ys=ys))
    render_loglog_svg(series, args.out or "plot.svg",
                      title=os.path.basename(args.csv))
    return EXIT_OK


def cmd_ingest(args) -> int:
    if not args.data:
        raise UsageError("--data is required for ingest")
    if not os.path.exists(args.data):
        raise DataFormatError(f"data file {args.data!r} does not exist")
    spec, report = ingest(args.data, args.format or "csv-dense", dim=args.dim)
    for line in report.lines():
        print(line)
    if args.out:
        export_csv(spec, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avlms",
        description="Averaged constant-step-size LMS analysis and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, gamma=True):
        p.add_argument("--spec", help="synthetic spec descriptor, e.g. gaussian:d=25,spectrum=1/i,sigma=1")
        p.add_argument("--data", help="path to a data file")
        p.add_argument("--format", choices=["csv-dense", "csv", "libsvm-sparse", "libsvm"],
                       help="data file format (default csv-dense)")
        p.add_argument("--dim", type=int, help="declared dimension for sparse files")
        if gamma:
            p.add_argument("--gamma", type=float, action="append", help="step-size (repeatable)")
        p.add_argument("--n-max", type=int, dest="n_max", help="largest iterate count")
        p.add_argument("--points", type=int, help="points in the log-spaced n schedule")
        p.add_argument("--replicates", type=int, help="Monte Carlo replicates")
        p.add_argument("--mode", choices=["bias", "variance", "total", "all"])
        p.add_argument("--scheme", action="append", choices=list(SCHEME_NAMES),
                       help="sampling scheme (repeatable)")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--out", help="output path ('-' for stdout)")
        p.add_argument("--manifest", help="key = value manifest file; flags override it")

    common(sub.add_parser("gamma-max", help="step-size thresholds per scheme"), gamma=False)
    common(sub.add_parser("run", help="Monte Carlo trajectories to CSV"))
    common(sub.add_parser("predict", help="closed-form risk curves to CSV"))
    common(sub.add_parser("sampling", help="sampling-scheme comparison CSV"))
    p_plot = sub.add_parser("plot", help="render a CSV as a log-log SVG")
    p_plot.add_argument("csv", help="CSV produced by run or predict")
    p_plot.add_argument("--out", help="output SVG path (default plot.svg)")
    common(sub.add_parser("ingest", help="parse a data file and print its report"), gamma=False)
    return parser


_COMMANDS = {
    "gamma-max": cmd_gamma_max,
    "run": cmd_run,
    "predict": cmd_predict,
    "sampling": cmd_sampling,
    "plot": cmd_plot,
    "ingest": cmd_ingest,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        _merge_manifest(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularOperatorError, SchemeError, SpecError, DimensionError,
            np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
