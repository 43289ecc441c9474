"""Command-line interface: ``gausspre <subcommand> ...``.

Every subcommand writes its data files plus ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 usage error, 3 numeric failure (a
``diagnostic.json`` is written next to the outputs).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .activation_fit import (
    TABLE_VERSION,
    ActivationTable,
    FitConfig,
    FitDivergedError,
    build_activation,
    fit,
    load_shipped,
    shipped_table_name,
)
from .eoc import (
    ELEMENTARY,
    EocSetting,
    NoFixedPointError,
    PhiDeltaOmega,
    eoc_curve,
    find_fixed_points,
    sigma_omega,
    variance_map,
)
from .mellin import DEFAULT_BLOWUP, laguerre_coefficients
from .propagation import (
    Init,
    NetworkConfig,
    correlation_experiment,
    default_threads,
    independence_experiment,
    layer_distribution_experiment,
    load_dataset_csv,
    normalize_individual,
    normalize_whole_dataset,
    product_test,
    synthetic_classes,
    synthetic_input,
)

log = logging.getLogger("gausspre")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
CSV_VERSION = 1

PROPAGATION_PRESETS = {
    "weibull-2.05": {"width": 100, "depth": 50, "activation": "phi-theta:2.05", "init": "weibull"},
    "relu-narrow": {"width": 10, "depth": 50, "activation": "relu", "init": "gaussian:1.41421356237,0"},
    "tanh-wide": {"width": 1000, "depth": 20, "activation": "tanh", "init": "gaussian:1.2083045974,0.1140175425"},
}


class UsageError(Exception):
    pass


# -- argument types -------------------------------------------------------------


def theta_type(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value > 2 or not math.isfinite(value):
        raise argparse.ArgumentTypeError("theta must be a finite number > 2")
    return value


def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def resolve_activation(spec: str):
    """tanh | relu | identity | phi-theta:<theta> (shipped) | path to a table CSV."""
    if spec in ELEMENTARY:
        return ELEMENTARY[spec]
    if spec.startswith("phi-theta:"):
        try:
            return load_shipped(float(spec.split(":", 1)[1]))
        except ValueError as err:
            raise UsageError(str(err))
    path = Path(spec)
    if path.is_file():
        try:
            return ActivationTable.load(path)
        except ValueError as err:
            raise UsageError(f"bad activation table: {err}")
    raise UsageError(f"unknown activation {spec!r}")


def resolve_init(spec: str, activation) -> Init:
    """weibull | rademacher | gaussian:<sigma_w>,<sigma_b> | auto."""
    if spec == "auto":
        if isinstance(activation, ActivationTable):
            return Init.weibull(activation.theta)
        return Init.gaussian(1.0, 0.0)
    if spec == "weibull":
        if not isinstance(activation, ActivationTable):
            raise UsageError("weibull init needs a phi-theta activation (theta is taken from the table)")
        return Init.weibull(activation.theta)
    if spec.startswith("weibull:"):
        return Init.weibull(float(spec.split(":", 1)[1]))
    if spec == "rademacher":
        return Init.rademacher()
    if spec.startswith("gaussian"):
        parts = spec.split(":", 1)[1].split(",") if ":" in spec else ["1", "0"]
        try:
            sw = float(parts[0])
            sb = float(parts[1]) if len(parts) > 1 else 0.0
            return Init.gaussian(sw, sb)
        except (ValueError, IndexError):
            raise UsageError(f"bad gaussian init {spec!r}; use gaussian:<sigma_w>,<sigma_b>")
    raise UsageError(f"unknown init {spec!r}")


# -- output helpers -------------------------------------------------------------


def write_csv(path: Path, header: list[str], rows, seed) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# gausspre version={CSV_VERSION} seed={'' if seed is None else seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_manifest(out: Path, args: argparse.Namespace, outputs: list[Path], extra: dict | None = None):
    config = {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)}
    manifest = {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "versions": {
            "gausspre": __version__,
            "csv": CSV_VERSION,
            "activation_table": TABLE_VERSION,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": [p.name for p in outputs],
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


# -- subcommands ------------------------------------------------------------------


def cmd_fit(args) -> dict:
    config = FitConfig(epochs=args.epochs, steps_per_epoch=args.steps_per_epoch)
    result = fit(args.theta, config, seed=args.seed)
    table = build_activation(args.theta, result.model, result.loss)
    table_path = table.save(args.out / shipped_table_name(args.theta), seed=args.seed)
    trace_path = write_csv(
        args.out / "fit_trace.csv",
        ["epoch", "loss", "lr", "theta_prime"],
        ([t["epoch"], t["loss"], t["lr"], t["theta_prime"]] for t in result.trace),
        args.seed,
    )
    m = result.model
    params = {"alpha": m.alpha, "gamma": m.gamma, "lambda1": m.lambda1, "lambda2": m.lambda2}
    print(f"theta={args.theta:g} fit_loss={result.loss:.3e} -> {table_path}")
    return {"outputs": [table_path, trace_path], "extra": {"fit_loss": result.loss, "params": params}}


def cmd_eoc(args) -> dict:
    activation = resolve_activation(args.activation)
    if args.sigma_b2_grid is not None:
        grid = [math.sqrt(v) for v in args.sigma_b2_grid]
    else:
        grid = args.sigma_b_grid
    if any(v < 0 for v in grid):
        raise UsageError("sigma_b grid values must be non-negative")
    points, warnings = eoc_curve(activation, grid, bracket=(args.sw_min, args.sw_max))
    path = write_csv(
        args.out / "eoc_curve.csv",
        ["sigma_b", "sigma_w", "v_star", "chi1"],
        ([p.sigma_b, p.sigma_w, p.v_star, p.chi1] for p in points),
        None,
    )
    outputs = [path]
    if warnings:
        wpath = args.out / "eoc_warnings.json"
        wpath.write_text(json.dumps(warnings, indent=2) + "\n")
        outputs.append(wpath)
    for p in points:
        print(f"sigma_b={p.sigma_b:.6g} sigma_w={p.sigma_w:.6g} (sigma_w^2={p.sigma_w ** 2:.6g}) chi1={p.chi1:.6f}")
    return {"outputs": outputs, "extra": {"omitted": len(warnings)}}


def cmd_propagate(args) -> dict:
    preset = PROPAGATION_PRESETS.get(args.preset, {}) if args.preset else {}
    width = args.width or preset.get("width", 100)
    depth = args.depth or preset.get("depth", 50)
    act_spec = args.activation or preset.get("activation", "tanh")
    init_spec = args.init or preset.get("init", "auto")
    activation = resolve_activation(act_spec)
    init = resolve_init(init_spec, activation)

    if args.input == "synthetic":
        x = synthetic_input(width, args.seed)
    else:
        try:
            data, _, channels = load_dataset_csv(args.input, args.channels)
        except (OSError, ValueError, KeyError) as err:
            raise UsageError(f"cannot read dataset: {err}")
        if not 0 <= args.row < data.shape[0]:
            raise UsageError(f"--row {args.row} out of range for {data.shape[0]} rows")
        if args.normalization == "dataset":
            x = normalize_whole_dataset(data, channels)[args.row]
        else:
            x = normalize_individual(data[args.row])
    config = NetworkConfig((x.size,) + (width,) * depth, activation, init)
    report = layer_distribution_experiment(config, x, args.samples, args.seed, args.alpha, args.threads)
    rows = report.rows()
    path = write_csv(
        args.out / "propagation.csv",
        list(rows[0].keys()),
        ([r[k] for k in rows[0]] for r in rows),
        args.seed,
    )
    last = report.layers[-1]
    print(f"layer {last.layer}: ks_std={last.ks_standardized:.4g} threshold={report.threshold:.4g}")
    extra = {"init": init.as_dict(), "activation": act_spec, "widths": list(config.widths)}
    return {"outputs": [path], "extra": extra}


def cmd_correlations(args) -> dict:
    activation = resolve_activation(args.activation)
    init = resolve_init(args.init, activation)
    if args.input == "synthetic":
        inputs, labels = synthetic_classes(args.classes, args.per_class, args.width, args.seed)
    else:
        try:
            data, labels, channels = load_dataset_csv(args.input, args.channels)
        except (OSError, ValueError, KeyError) as err:
            raise UsageError(f"cannot read dataset: {err}")
        inputs = normalize_whole_dataset(data, channels) if args.normalization == "dataset" else np.stack(
            [normalize_individual(r) for r in data]
        )
    config = NetworkConfig((inputs.shape[1],) + (args.width,) * args.depth, activation, init)
    report = correlation_experiment(inputs, labels, config, args.n_init, args.seed, args.threads)
    rows = []
    for layer, mat in enumerate(report.matrices, 1):
        for i, p in enumerate(report.classes):
            for j, q in enumerate(report.classes):
                rows.append([layer, p, q, mat[i, j]])
    path = write_csv(args.out / "correlations.csv", ["layer", "class_p", "class_q", "c_pq"], rows, args.seed)
    return {"outputs": [path], "extra": report.metadata}


def cmd_counterexample(args) -> dict:
    if not 0 <= args.delta <= 1:
        raise UsageError("delta must lie in [0, 1]")
    if not args.omega > 0:
        raise UsageError("omega must be positive")
    sigma = sigma_omega(args.delta, args.omega)
    setting = EocSetting(sigma, 0.0, PhiDeltaOmega(args.delta, args.omega))
    vs = np.geomspace(args.v_min, args.v_max, args.points)
    curve = [[v, variance_map(v, setting), sigma] for v in vs]
    curve_path = write_csv(args.out / "variance_curve.csv", ["v", "V", "sigma_w"], curve, None)
    report = find_fixed_points(setting, args.v_min, args.v_max, args.resolution)
    fp_path = write_csv(
        args.out / "fixed_points.csv",
        ["v_star", "stable", "slope", "sigma_w", "degenerate"],
        ([p.v, p.stable, p.slope, sigma, report.degenerate] for p in report.points),
        None,
    )
    print(f"sigma_omega={sigma:.6f}; stable={[round(p.v, 4) for p in report.stable]} "
          f"unstable={[round(p.v, 4) for p in report.unstable]} degenerate={report.degenerate}")
    return {"outputs": [curve_path, fp_path], "extra": {"sigma_w": sigma, "degenerate": report.degenerate}}


def cmd_mellin(args) -> dict:
    f64 = laguerre_coefficients(args.theta, args.K, "float64", args.blowup)
    ext = laguerre_coefficients(args.theta, args.K, "extended", args.blowup) if not args.skip_extended else None
    rows = []
    for k in range(1, args.K + 1):
        row = [k, f64.coefficients[k - 1], f64.divergence_index is not None and k >= f64.divergence_index]
        if ext is not None:
            row[2:2] = [ext.coefficients[k - 1]]
            row.append(ext.divergence_index is not None and k >= ext.divergence_index)
        rows.append(row)
    header = ["k", "c_k_float64", "diverged_float64"]
    if ext is not None:
        header = ["k", "c_k_float64", "c_k_extended", "diverged_float64", "diverged_extended"]
    path = write_csv(args.out / "laguerre.csv", header, rows, None)
    extra = {
        "divergence_index_float64": f64.divergence_index,
        "divergence_index_extended": None if ext is None else ext.divergence_index,
        "blowup_bound": args.blowup,
        "divergence_rule": "first k with |c_k| > blowup_bound (a chosen criterion)",
    }
    print(f"divergence_index float64={f64.divergence_index} extended={extra['divergence_index_extended']}")
    return {"outputs": [path], "extra": extra}


def _activation_and_init(args):
    if args.theta is not None:
        activation = load_shipped(args.theta) if args.table is None else ActivationTable.load(args.table)
    else:
        activation = resolve_activation(args.activation)
    return activation, resolve_init(args.init, activation)


def cmd_ks_product(args) -> dict:
    activation, init = _activation_and_init(args)
    rows = []
    for n in args.n_grid:
        res = product_test(n, activation, init, args.samples, args.seed, args.alpha, args.threads)
        rows.append([n, res.raw.statistic, res.standardized.statistic, res.mean, res.std, res.raw.threshold,
                     res.raw.reject, res.standardized.reject])
        print(f"n={n}: ks_raw={res.raw.statistic:.4g} ks_std={res.standardized.statistic:.4g} std={res.std:.4f}")
    header = ["n", "ks_raw", "ks_standardized", "mean", "std", "threshold", "reject_raw", "reject_standardized"]
    path = write_csv(args.out / "ks_product.csv", header, rows, args.seed)
    return {"outputs": [path], "extra": {"init": init.as_dict()}}


def cmd_independence(args) -> dict:
    activation, init = _activation_and_init(args)
    if args.n0_grid is not None:
        pairs = [(n0, args.n1) for n0 in args.n0_grid]
    elif args.n1_grid is not None:
        pairs = [(args.n0, n1) for n1 in args.n1_grid]
    else:
        pairs = [(args.n0, args.n1)]
    rows = []
    for n0, n1 in pairs:
        res = independence_experiment(n0, n1, activation, init, args.samples, args.seed, args.alpha, args.threads)
        rows.append([n0, n1, res.statistic, res.threshold, res.reject])
    path = write_csv(args.out / "independence.csv", ["n0", "n1", "ks_standardized", "threshold", "reject"], rows,
                     args.seed)
    return {"outputs": [path], "extra": {"init": init.as_dict()}}


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gausspre", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gausspre {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, threads=False):
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--config", type=Path, help="JSON file of option values (flags override it)")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if threads:
            p.add_argument("--threads", type=int, default=default_threads(),
                           help="worker threads (default: $GAUSSPRE_THREADS or 1)")
        return p

    p = common(sub.add_parser("fit", help="fit the density model and build an activation table"))
    p.add_argument("--theta", type=theta_type, required=True)
    p.add_argument("--epochs", type=int, default=FitConfig.epochs)
    p.add_argument("--steps-per-epoch", type=int, default=FitConfig.steps_per_epoch)
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("eoc", help="edge-of-chaos curve"), seed=False)
    p.add_argument("--activation", default="tanh")
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--sigma-b-grid", type=float_list, default=[0.0])
    grid.add_argument("--sigma-b2-grid", type=float_list, default=None)
    p.add_argument("--sw-min", type=float, default=0.05)
    p.add_argument("--sw-max", type=float, default=10.0)
    p.set_defaults(func=cmd_eoc)

    p = common(sub.add_parser("propagate", help="per-layer Gaussianity of a deep perceptron"), threads=True)
    p.add_argument("--preset", choices=sorted(PROPAGATION_PRESETS))
    p.add_argument("--input", default="synthetic", help="'synthetic' or a dataset CSV (label, features...)")
    p.add_argument("--channels", type=Path, help="JSON sidecar with channel lengths")
    p.add_argument("--row", type=int, default=0, help="dataset row to propagate")
    p.add_argument("--normalization", choices=["individual", "dataset"], default="individual")
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--activation")
    p.add_argument("--init")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_propagate)

    p = common(sub.add_parser("correlations", help="class-averaged correlation matrices per layer"), threads=True)
    p.add_argument("--input", default="synthetic")
    p.add_argument("--channels", type=Path)
    p.add_argument("--normalization", choices=["individual", "dataset"], default="individual")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--depth", type=int, default=50)
    p.add_argument("--activation", default="tanh")
    p.add_argument("--init", default="gaussian:1.2083045974,0.1140175425")
    p.add_argument("--n-init", type=int, default=100)
    p.set_defaults(func=cmd_correlations)

    p = common(sub.add_parser("counterexample", help="fixed points of the oscillating activation"), seed=False)
    p.add_argument("--delta", type=float, default=0.99)
    p.add_argument("--omega", type=float, default=6.0)
    p.add_argument("--v-min", type=float, default=0.1)
    p.add_argument("--v-max", type=float, default=20.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--resolution", type=int, default=400)
    p.set_defaults(func=cmd_counterexample)

    p = common(sub.add_parser("mellin-diagnose", help="Laguerre coefficients of the Mellin inversion"), seed=False)
    p.add_argument("--theta", type=theta_type, default=2.05)
    p.add_argument("--K", type=int, default=500)
    p.add_argument("--blowup", type=float, default=DEFAULT_BLOWUP)
    p.add_argument("--skip-extended", action="store_true")
    p.set_defaults(func=cmd_mellin)

    for name, func, helptext in (
        ("ks-product", cmd_ks_product, "KS test of one neuron fed by n Gaussian inputs"),
        ("independence", cmd_independence, "KS test of a two-layer scalar output"),
    ):
        p = common(sub.add_parser(name, help=helptext), threads=True)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--theta", type=theta_type, help="use the shipped phi-theta table with Weibull init")
        src.add_argument("--activation", default="tanh")
        p.add_argument("--table", type=Path, help="table file to use with --theta instead of the shipped one")
        p.add_argument("--init", default="auto")
        p.add_argument("--samples", type=int, default=100_000)
        p.add_argument("--alpha", type=float, default=0.05)
        if name == "ks-product":
            p.add_argument("--n-grid", type=int_list, default=[1, 3, 10, 30, 100])
        else:
            grids = p.add_mutually_exclusive_group()
            grids.add_argument("--n0-grid", type=int_list)
            grids.add_argument("--n1-grid", type=int_list)
            p.add_argument("--n0", type=int, default=1)
            p.add_argument("--n1", type=int, default=2)
        p.set_defaults(func=func)
    return parser


def _parse(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    try:
        values = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as err:
        parser.error(f"cannot read config file: {err}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    # re-parse with file values as defaults so explicit flags win
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    if values.get("command", args.command) != args.command:
        parser.error(f"config file is for {values['command']!r}, not {args.command!r}")
    for key, value in values.items():
        dest = key.replace("-", "_")
        # keys a manifest records outside the subcommand's own options
        if dest in ("command", "verbose", "config"):
            continue
        if dest not in known:
            parser.error(f"unknown config key {key!r} for {args.command}")
        action = known[dest]
        if value is None:
            defaults[dest] = None
            continue
        if action.type is not None and not isinstance(value, list):
            try:
                value = action.type(str(value))
            except argparse.ArgumentTypeError as err:
                parser.error(f"config key {key!r}: {err}")
        elif isinstance(value, list):
            value = [v for v in value]
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _parse(parser, argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        result = args.func(args)
    except UsageError as err:
        print(f"gausspre {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (FitDivergedError, NoFixedPointError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as err:
        diagnostic = {"command": args.command, "error": type(err).__name__, "message": str(err)}
        diagnostic.update(getattr(err, "diagnostic", {}) or {})
        (args.out / "diagnostic.json").write_text(json.dumps(diagnostic, indent=2, default=str) + "\n")
        print(f"gausspre {args.command}: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    write_manifest(args.out, args, result["outputs"], result.get("extra"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
