"""Command-line experiment harness.

Subcommands: simulate (draw a missingness mask over complete data), impute
(fill a masked CSV), evaluate (score an imputed CSV against ground truth),
experiment (simulate + impute + evaluate across seeds, with a mean-fill
baseline), and benchmark (phase timings over a synthetic size grid).

Exit codes: 0 success, 1 usage error, 2 runtime/data error. All commands
are deterministic given their full flag set. A JSON config file may supply
any flag value; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics as metrics_mod
from .imputer import ImputationResult, WgfConfig, knewimp, mean_impute
from .kernel import KernelConfig
from .missingness import Mechanism, MissingSpec, simulate
from .score import DsmConfig, load_network, save_network
from .tabular import (
    TabularDataset,
    from_complete,
    load_csv,
    load_mask_csv,
    standardize,
    write_csv,
    write_mask_csv,
)

DEFAULTS = {
    "rate": 0.3,
    "observed_fraction": 0.3,
    "overlay_rate": None,
    "ner_weight": 1.0,
    "step_size": 0.1,
    "steps": 500,
    "loops": 2,
    "epochs": 200,
    "sigma": 0.1,
    "lr": 1e-3,
    "hidden": 256,
    "bandwidth": 0.5,
    "median_bandwidth": False,
    "mask_kernel_gradient": True,
    "record_every": 25,
    "wass_method": "auto",
    "seed": 0,
    "seeds": "0,1,2,3,4",
    "sizes": "250,500",
    "dims": "4",
    "has_header": False,
}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="ner_weight", type=float, help="attraction weight")
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--steps", type=int, help="Euler steps per round")
    p.add_argument("--loops", type=int, help="train/simulate rounds")
    p.add_argument("--epochs", type=int, help="training epochs per round")
    p.add_argument("--sigma", type=float, help="DSM noise scale")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--hidden", type=int, help="score network hidden width")
    p.add_argument("--bandwidth", type=float, help="RBF kernel bandwidth")
    p.add_argument(
        "--median-bandwidth",
        dest="median_bandwidth",
        action="store_const",
        const=True,
        help="recompute the bandwidth from the running point cloud",
    )
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument(
        "--no-kernel-grad-masking",
        dest="mask_kernel_gradient",
        action="store_const",
        const=False,
        help="apply the full kernel gradient instead of the missing-coordinate part",
    )


def _add_mechanism_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mechanism", choices=[m.value for m in Mechanism])
    p.add_argument("--rate", type=float)
    p.add_argument("--observed-fraction", dest="observed_fraction", type=float)
    p.add_argument("--overlay-rate", dest="overlay_rate", type=float)


def build_parser() -> _Parser:
    parser = _Parser(prog="knewimp", description=__doc__)
    parser.add_argument("--config", help="JSON file supplying default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a missingness mask")
    p.add_argument("--input", required=True, help="complete numeric CSV")
    p.add_argument("--has-header", dest="has_header", action="store_const", const=True)
    _add_mechanism_options(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", default=".", help="where mask.csv/masked.csv go")

    p = sub.add_parser("impute", help="fill the missing cells of a CSV")
    p.add_argument("--input", required=True, help="CSV with missing cells")
    p.add_argument("--mask", help="0/1 mask CSV (inferred from empty cells if omitted)")
    p.add_argument("--has-header", dest="has_header", action="store_const", const=True)
    p.add_argument("--output", required=True, help="imputed CSV path")
    p.add_argument("--trajectory", help="per-step metric CSV (needs --truth)")
    p.add_argument("--truth", help="complete CSV for trajectory metrics")
    p.add_argument("--save-net", dest="save_net", help="score network checkpoint out")
    p.add_argument("--load-net", dest="load_net", help="warm-start checkpoint in")
    p.add_argument("--seed", type=int)
    _add_model_options(p)

    p = sub.add_parser("evaluate", help="score an imputed CSV against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--imputed", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--has-header", dest="has_header", action="store_const", const=True)
    p.add_argument("--wass-method", dest="wass_method", choices=["auto", "exact", "sinkhorn"])
    p.add_argument("--output", help="report JSON path (stdout if omitted)")

    p = sub.add_parser("experiment", help="simulate/impute/evaluate across seeds")
    p.add_argument("--input", required=True, help="complete numeric CSV")
    p.add_argument("--has-header", dest="has_header", action="store_const", const=True)
    _add_mechanism_options(p)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--wass-method", dest="wass_method", choices=["auto", "exact", "sinkhorn"])
    _add_model_options(p)

    p = sub.add_parser("benchmark", help="time the two phases over a synthetic grid")
    p.add_argument("--sizes", help="comma-separated row counts")
    p.add_argument("--dims", help="comma-separated column counts")
    p.add_argument("--rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="timing JSON path (stdout if omitted)")
    _add_model_options(p)

    return parser


def _resolve(args: argparse.Namespace, key: str):
    """Flag value, then config-file value, then built-in default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    config = getattr(args, "_config", {})
    if key in config:
        return config[key]
    return DEFAULTS.get(key)


def _build_configs(args: argparse.Namespace):
    dcfg = DsmConfig(
        sigma=_resolve(args, "sigma"),
        epochs=_resolve(args, "epochs"),
        lr=_resolve(args, "lr"),
        seed=_resolve(args, "seed"),
    )
    kcfg = KernelConfig(
        bandwidth=_resolve(args, "bandwidth"),
        use_median_heuristic=bool(_resolve(args, "median_bandwidth")),
    )
    wcfg = WgfConfig(
        ner_weight=_resolve(args, "ner_weight"),
        step_size=_resolve(args, "step_size"),
        num_steps=_resolve(args, "steps"),
        num_loops=_resolve(args, "loops"),
        record_every=_resolve(args, "record_every"),
        mask_kernel_gradient=bool(_resolve(args, "mask_kernel_gradient")),
    )
    return dcfg, kcfg, int(_resolve(args, "hidden")), wcfg


def _missing_spec(args: argparse.Namespace, seed: int) -> MissingSpec:
    return MissingSpec(
        mechanism=Mechanism(_resolve(args, "mechanism") or "mcar"),
        rate=_resolve(args, "rate"),
        observed_fraction=_resolve(args, "observed_fraction"),
        mcar_overlay_rate=_resolve(args, "overlay_rate"),
        seed=seed,
    )


def _standardized(ds: TabularDataset):
    ds_std, stats = standardize(ds)
    return ds_std, stats


def cmd_simulate(args: argparse.Namespace) -> int:
    ds = load_csv(args.input, has_header=bool(_resolve(args, "has_header")))
    if ds.mask.min() < 1.0:
        raise ValueError(f"{args.input}: input must be complete to simulate masks")
    spec = _missing_spec(args, int(_resolve(args, "seed")))
    mask = simulate(ds.values, spec)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mask_csv(out / "mask.csv", mask)
    masked = np.where(mask == 1.0, ds.values, np.nan)
    write_csv(out / "masked.csv", masked, ds.column_names)
    achieved = float(1.0 - mask.mean())
    print(f"wrote {out / 'mask.csv'} and {out / 'masked.csv'}; "
          f"achieved missing rate {achieved:.4f}")
    return 0


def _load_masked_input(args: argparse.Namespace) -> TabularDataset:
    ds = load_csv(args.input, has_header=bool(_resolve(args, "has_header")))
    if args.mask:
        mask = load_mask_csv(args.mask)
        if mask.shape != ds.values.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match data shape {ds.values.shape}"
            )
        values = np.where(mask == 1.0, ds.values, np.nan)
        if np.isnan(values[mask == 1.0]).any():
            raise ValueError("mask marks cells observed that are missing in the data")
        ds = TabularDataset(values=values, mask=mask, column_names=ds.column_names)
    return ds


def cmd_impute(args: argparse.Namespace) -> int:
    dcfg, kcfg, hidden, wcfg = _build_configs(args)
    ds = _load_masked_input(args)
    if args.truth:
        truth = load_csv(args.truth, has_header=bool(_resolve(args, "has_header")))
        ds = TabularDataset(
            values=ds.values, mask=ds.mask, truth=truth.values,
            column_names=ds.column_names,
        )
    ds_std, stats = _standardized(ds)
    seed = int(_resolve(args, "seed"))
    net0 = load_network(args.load_net) if args.load_net else None
    result = _run_knewimp(ds_std, dcfg, kcfg, wcfg, hidden, seed, net0, args.save_net)
    imputed = stats.invert(result.imputed)
    observed = ds.mask == 1.0
    imputed[observed] = ds.values[observed]
    write_csv(args.output, imputed, ds.column_names)
    if args.trajectory:
        _write_trajectory(args.trajectory, result)
    print(
        f"wrote {args.output} "
        f"(estimate {result.estimate_seconds:.2f}s, impute {result.impute_seconds:.2f}s)"
    )
    return 0


def _run_knewimp(
    ds_std: TabularDataset,
    dcfg: DsmConfig,
    kcfg: KernelConfig,
    wcfg: WgfConfig,
    hidden: int,
    seed: int,
    net0=None,
    save_net: Optional[str] = None,
) -> ImputationResult:
    result = knewimp(
        ds_std, dcfg, kcfg, wcfg, hidden=hidden, seed=seed, initial_net=net0
    )
    if save_net:
        save_network(save_net, result.network)
    return result


def _write_trajectory(path: str, result: ImputationResult) -> None:
    import csv as csv_mod

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(["step", "mae", "wass"])
        for point in result.trajectory:
            writer.writerow([
                point.step,
                "" if point.mae is None else repr(point.mae),
                "" if point.wass is None else repr(point.wass),
            ])


def cmd_evaluate(args: argparse.Namespace) -> int:
    has_header = bool(_resolve(args, "has_header"))
    truth = load_csv(args.truth, has_header=has_header)
    imputed = load_csv(args.imputed, has_header=has_header)
    mask = load_mask_csv(args.mask)
    if truth.mask.min() < 1.0:
        raise ValueError(f"{args.truth}: truth CSV must be complete")
    if imputed.mask.min() < 1.0:
        raise ValueError(f"{args.imputed}: imputed CSV must be complete")
    if mask.shape != truth.values.shape or imputed.values.shape != truth.values.shape:
        raise ValueError("truth, imputed, and mask shapes must match")
    ds = from_complete(truth.values, mask, truth.column_names)
    ds_std, stats = _standardized(ds)
    imputed_std = stats.apply(imputed.values)
    report = metrics_mod.evaluate(ds_std, imputed_std, _resolve(args, "wass_method"))
    payload = report.to_json()
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    return 0


def _experiment_seed(truth_ds, args, dcfg, kcfg, wcfg, hidden, seed, wass_method):
    spec = _missing_spec(args, seed)
    mask = simulate(truth_ds.values, spec)
    ds = from_complete(truth_ds.values, mask, truth_ds.column_names)
    ds_std, _ = standardize(ds)
    result = knewimp(ds_std, dcfg, kcfg, wcfg, hidden=hidden, seed=seed)
    report_model = metrics_mod.evaluate(ds_std, result.imputed, wass_method)
    report_mean = metrics_mod.evaluate(ds_std, mean_impute(ds_std), wass_method)
    return {
        "seed": seed,
        "knewimp": report_model.as_dict(),
        "mean_baseline": report_mean.as_dict(),
        "timings": {
            "estimate_seconds": result.estimate_seconds,
            "impute_seconds": result.impute_seconds,
        },
    }


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("KNEWIMP_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_jobs, limit))


def _aggregate(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std}


def cmd_experiment(args: argparse.Namespace) -> int:
    dcfg, kcfg, hidden, wcfg = _build_configs(args)
    seeds = [int(s) for s in str(_resolve(args, "seeds")).split(",") if s.strip()]
    if not seeds:
        raise ValueError("at least one seed is required")
    wass_method = _resolve(args, "wass_method")
    truth_ds = load_csv(args.input, has_header=bool(_resolve(args, "has_header")))
    if truth_ds.mask.min() < 1.0:
        raise ValueError(f"{args.input}: experiment input must be complete")
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def run_one(seed: int):
        try:
            return _experiment_seed(
                truth_ds, args, dcfg, kcfg, wcfg, hidden, seed, wass_method
            )
        except Exception as exc:
            raise RuntimeError(f"seed {seed} failed: {exc}") from exc

    with ThreadPoolExecutor(max_workers=_worker_count(len(seeds))) as pool:
        reports = list(pool.map(run_one, seeds))

    for report in reports:
        path = out / f"seed_{report['seed']}.json"
        path.write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")

    summary = {
        "input": args.input,
        "mechanism": _resolve(args, "mechanism") or "mcar",
        "rate": _resolve(args, "rate"),
        "seeds": seeds,
        "methods": {
            name: {
                metric: _aggregate([r[name][metric] for r in reports])
                for metric in ("mae", "wass")
            }
            for name in ("knewimp", "mean_baseline")
        },
    }
    payload = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    (out / "summary.json").write_text(payload, encoding="utf-8")
    print(payload, end="")
    return 0


def _synthetic_matrix(n: int, d: int, seed: int) -> np.ndarray:
    """Correlated Gaussian benchmark data with an AR(1)-style covariance."""
    rng = np.random.default_rng(seed)
    rho = 0.6
    cov = rho ** np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    chol = np.linalg.cholesky(cov)
    return rng.standard_normal((n, d)) @ chol.T


def cmd_benchmark(args: argparse.Namespace) -> int:
    dcfg, kcfg, hidden, wcfg = _build_configs(args)
    sizes = [int(s) for s in str(_resolve(args, "sizes")).split(",") if s.strip()]
    dims = [int(s) for s in str(_resolve(args, "dims")).split(",") if s.strip()]
    rate = _resolve(args, "rate")
    seed = int(_resolve(args, "seed"))
    records = []
    for n in sizes:
        for d in dims:
            truth = _synthetic_matrix(n, d, seed)
            spec = MissingSpec(mechanism=Mechanism.MCAR, rate=rate, seed=seed)
            mask = simulate(truth, spec)
            ds_std, _ = standardize(from_complete(truth, mask))
            result = knewimp(ds_std, dcfg, kcfg, wcfg, hidden=hidden, seed=seed)
            records.append({
                "n": n,
                "d": d,
                "estimate_seconds": result.estimate_seconds,
                "impute_seconds": result.impute_seconds,
                "estimate_dominates": result.estimate_seconds > result.impute_seconds,
            })
    payload = json.dumps(records, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(payload, encoding="utf-8")
    else:
        print(payload, end="")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "impute": cmd_impute,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "benchmark": cmd_benchmark,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"knewimp: cannot read config: {exc}", file=sys.stderr)
            return 2
        if not isinstance(config, dict):
            print("knewimp: config file must hold a JSON object", file=sys.stderr)
            return 2
    args._config = config
    try:
        _validate_flags(parser, args)
        return _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except (ValueError, RuntimeError, FloatingPointError, OSError) as exc:
        origin = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"knewimp {args.command} ({origin}): {exc}", file=sys.stderr)
        return 2


def _validate_flags(parser: _Parser, args: argparse.Namespace) -> None:
    """Range-check numeric flags so bad values exit as usage errors."""
    try:
        if args.command in ("simulate", "experiment", "benchmark"):
            _missing_spec(args, 0)
        if args.command in ("impute", "experiment", "benchmark"):
            _build_configs(args)
    except ValueError as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
