"""Command-line front end: simulate | fit | predict | evaluate | report.

Every run writes a manifest (config echo, package version, input hashes)
next to its outputs.  Outputs are deterministic functions of the inputs
and the configuration; the worker count only changes wall time.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .analysis import CATEGORY_ORDER, aggregate_table, classify_effects, save_effect_table, save_pair_details
from .design import build_design, effect_counts, load_coefficients, save_coefficients
from .errors import ConfigError, DataError, NumericalError
from .network import (
    NetworkSeries,
    load_dense_slices,
    load_edge_list,
    save_dense_slices,
    save_edge_list,
)
from .optimizer import FitConfig
from .prediction import predict_next, rolling_evaluation, save_auc_csv, save_predictions_csv, save_roc_csv
from .selection import PenaltyGrid, bic_path, default_grid, save_path_report, save_selection_summary
from .simulate import SimDesign, save_ground_truth, simulate


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(outdir: Path, command: str, config: dict, inputs: list[Path]) -> None:
    files: list[Path] = []
    for p in inputs:
        if p.is_dir():
            files.extend(sorted(q for q in p.iterdir() if q.is_file()))
        else:
            files.append(p)
    doc = {
        "command": command,
        "config": config,
        "package_version": __version__,
        "inputs": {str(p): _sha256(p) for p in files},
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def _require_outdir(path_str: str) -> Path:
    out = Path(path_str)
    if not out.is_dir():
        raise DataError(f"output directory {out} does not exist")
    return out


def _write_series_meta(outdir: Path, n: int, num_slices: int, fmt: str, filename: str) -> None:
    with open(outdir / "series.meta.json", "w") as fh:
        json.dump(
            {"n": n, "t": num_slices, "format": fmt, "file": filename},
            fh,
            indent=1,
            sort_keys=True,
        )


def _load_series(args) -> tuple[NetworkSeries, Path]:
    path = Path(args.series)
    if not path.exists():
        raise DataError(f"series file {path} not found")
    if path.is_dir():
        slices = sorted(path.glob("slice_*.csv"))
        if not slices:
            raise DataError(f"{path} contains no slice_*.csv files")
        return load_dense_slices(slices), path
    n, num_slices = args.n, args.t
    if n is None or num_slices is None:
        meta_path = path.parent / "series.meta.json"
        if meta_path.exists():
            with open(meta_path) as fh:
                meta = json.load(fh)
            n = n if n is not None else int(meta["n"])
            num_slices = num_slices if num_slices is not None else int(meta["t"])
        else:
            raise ConfigError("--n and --t are required when no series.meta.json is present")
    return load_edge_list(path, n=n, num_slices=num_slices), path


def _parse_grid(args) -> PenaltyGrid | None:
    given = [bool(args.grid), bool(args.penalties), args.penalty is not None]
    if sum(given) > 1:
        raise ConfigError("give at most one of --grid, --penalties, --penalty")
    if args.grid:
        try:
            low, high, count = args.grid.split(":")
            return PenaltyGrid.log_spaced(float(low), float(high), int(count))
        except ValueError as exc:
            raise ConfigError(f"--grid must be LOW:HIGH:COUNT, got {args.grid!r}") from exc
    if args.penalties:
        values = sorted(float(v) for v in args.penalties.split(","))
        return PenaltyGrid(tuple(values))
    if args.penalty is not None:
        return PenaltyGrid((args.penalty,))
    return None


def _fit_config(args, penalty: float = 1.0) -> FitConfig:
    return FitConfig(
        penalty=penalty,
        max_sweeps=args.max_sweeps,
        objective_tolerance=args.tol,
    )


def _triple(text: str) -> tuple[float, ...] | float:
    parts = [float(v) for v in text.split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def cmd_simulate(args) -> int:
    out = _require_outdir(args.out)
    design = SimDesign(
        n=args.n,
        num_slices=args.t,
        seed=args.seed,
        intercept_mean=_triple(args.intercept_mean),
        intercept_sd=_triple(args.intercept_sd),
        persistence_self_mean=_triple(args.persistence_mean),
        persistence_self_sd=_triple(args.persistence_sd),
        persistence_other_mean=_triple(args.persistence_mean),
        persistence_other_sd=_triple(args.persistence_sd),
        group_count=args.groups,
        disintermediation_scale=args.dis_scale,
        initial=args.initial,
    )
    series, truth = simulate(design)
    if args.format == "edges":
        save_edge_list(series, out / "series.csv")
    else:
        save_dense_slices(series, out)
    _write_series_meta(out, series.n, series.num_slices, args.format, "series.csv")
    save_ground_truth(out / "truth.json", truth, num_slices=series.num_slices)
    _write_manifest(
        out,
        "simulate",
        {
            "n": args.n,
            "t": args.t,
            "seed": args.seed,
            "groups": args.groups,
            "intercept_mean": args.intercept_mean,
            "intercept_sd": args.intercept_sd,
            "persistence_mean": args.persistence_mean,
            "persistence_sd": args.persistence_sd,
            "dis_scale": args.dis_scale,
            "initial": args.initial,
            "format": args.format,
        },
        [],
    )
    print(f"wrote series (n={series.n}, T={series.num_slices}, density {series.density():.1f} links/slice) to {out}")
    return 0


def _write_significance(outdir: Path, series: NetworkSeries, blocks, penalty) -> None:
    reports = []
    for pair, block in sorted(blocks.items()):
        design = build_design(series, *pair)
        reports.append(classify_effects(design, block))
    qualifying = [r for r in reports if r.nonzero_weights > 0]
    if qualifying:
        table = aggregate_table(reports, series.n)
        save_effect_table(outdir / "significance.csv", table)
        qualifying_count = table.pair_count
    else:
        counts = effect_counts(series.n)
        with open(outdir / "significance.csv", "w", newline="") as fh:
            fh.write("category,effects,non_present_pct\n")
            for cat, count in zip(CATEGORY_ORDER, counts.as_tuple()):
                fh.write(f"{cat.value},{count},\n")
        qualifying_count = 0
    save_pair_details(outdir / "pair_details.json", reports)
    with open(outdir / "significance_summary.json", "w") as fh:
        json.dump(
            {"qualifying_pairs": qualifying_count, "penalty": penalty},
            fh,
            indent=1,
            sort_keys=True,
        )


def cmd_fit(args) -> int:
    out = _require_outdir(args.out)
    series, series_path = _load_series(args)
    grid = _parse_grid(args) or default_grid()
    config = _fit_config(args)
    path = bic_path(series, grid, config, workers=args.workers)
    save_path_report(out / "path.csv", path)
    save_selection_summary(out / "selected.json", path)
    fits = path.selected_fits()
    save_coefficients(
        out / "coefficients.json",
        {pair: fit.coef for pair, fit in fits.items()},
        n=series.n,
        num_slices=series.num_slices,
        penalty=path.selected_penalty,
    )
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        fh.write("i,j,penalty,sweeps,converged,objective,loglik,active_size,cap_hits,kkt_violation\n")
        for pair in sorted(fits):
            f = fits[pair]
            fh.write(
                f"{pair[0]},{pair[1]},{f.penalty!r},{f.sweeps},{int(f.converged)},"
                f"{f.objective!r},{f.loglik!r},{f.active_size},{f.cap_hits},{f.kkt_violation!r}\n"
            )
    _write_significance(out, series, {p: f.coef for p, f in fits.items()}, path.selected_penalty)
    _write_manifest(
        out,
        "fit",
        {
            "series": str(series_path),
            "n": series.n,
            "t": series.num_slices,
            "grid": list(grid.values),
            "max_sweeps": args.max_sweeps,
            "tol": args.tol,
        },
        [series_path],
    )
    invalid = [g for g, ok in zip(grid.values, path.valid) if not ok]
    if invalid:
        print(f"warning: grid points invalidated by fit failures: {invalid}", file=sys.stderr)
    print(f"selected penalty {path.selected_penalty!r} (BIC {path.bic[path.selected_index]!r})")
    return 0


def cmd_predict(args) -> int:
    out = _require_outdir(args.out)
    series, series_path = _load_series(args)
    blocks, meta = load_coefficients(args.coefficients)
    if meta["n"] != series.n:
        raise DataError(f"coefficients are for n={meta['n']}, series has n={series.n}")
    pred = predict_next(series, blocks)
    save_predictions_csv(out / "predictions.csv", pred)
    _write_manifest(
        out,
        "predict",
        {"series": str(series_path), "coefficients": args.coefficients,
         "n": series.n, "t": series.num_slices},
        [series_path, Path(args.coefficients)],
    )
    print(f"wrote {series.n * (series.n - 1)} link probabilities for slice {pred.horizon}")
    return 0


def cmd_evaluate(args) -> int:
    out = _require_outdir(args.out)
    series, series_path = _load_series(args)
    if args.holdout < 1:
        raise ConfigError(f"--holdout must be >= 1, got {args.holdout}")
    grid = _parse_grid(args)
    if grid is not None and len(grid) == 1:
        config = _fit_config(args, penalty=grid.values[0])
        grid = None
    elif grid is not None:
        config = _fit_config(args)
    else:
        raise ConfigError("evaluate requires --penalty, --penalties, or --grid")
    result = rolling_evaluation(series, config, holdout=args.holdout, grid=grid, workers=args.workers)
    for origin, curve in zip(result.origins, result.curves):
        if curve is not None:
            save_roc_csv(out / f"roc_{origin:04d}.csv", curve)
    save_auc_csv(out / "auc.csv", result)
    with open(out / "evaluation.json", "w") as fh:
        json.dump(
            {
                "penalty": result.penalty,
                "origins": result.origins,
                "aucs": result.aucs,
                "degenerate_origins": [o for o, a in zip(result.origins, result.aucs) if a is None],
            },
            fh,
            indent=1,
            sort_keys=True,
        )
    _write_manifest(
        out,
        "evaluate",
        {
            "series": str(series_path),
            "n": series.n,
            "t": series.num_slices,
            "holdout": args.holdout,
            "grid": args.grid or args.penalties or args.penalty,
            "max_sweeps": args.max_sweeps,
            "tol": args.tol,
        },
        [series_path],
    )
    shown = ", ".join("NA" if a is None else f"{a:.3f}" for a in result.aucs)
    print(f"penalty {result.penalty!r}; per-origin AUC: {shown}")
    return 0


def cmd_report(args) -> int:
    out = _require_outdir(args.out)
    series, series_path = _load_series(args)
    blocks, meta = load_coefficients(args.coefficients)
    if meta["n"] != series.n:
        raise DataError(f"coefficients are for n={meta['n']}, series has n={series.n}")
    _write_significance(out, series, blocks, meta.get("penalty"))
    _write_manifest(
        out,
        "report",
        {"series": str(series_path), "coefficients": args.coefficients,
         "n": series.n, "t": series.num_slices},
        [series_path, Path(args.coefficients)],
    )
    print(f"wrote significance report to {out}")
    return 0


def _add_series_args(parser) -> None:
    parser.add_argument("--series", required=True, help="edge-list CSV (header t,i,j)")
    parser.add_argument("--n", type=int, help="node count (default: series.meta.json)")
    parser.add_argument("--t", type=int, help="slice count (default: series.meta.json)")


def _add_fit_args(parser, with_grid: bool = True) -> None:
    if with_grid:
        parser.add_argument("--grid", help="log-spaced penalty grid LOW:HIGH:COUNT")
        parser.add_argument("--penalties", help="comma-separated penalty values")
        parser.add_argument("--penalty", type=float, help="single penalty value")
    parser.add_argument("--max-sweeps", type=int, default=500)
    parser.add_argument("--tol", type=float, default=1e-7, help="relative objective tolerance")
    parser.add_argument("--workers", type=int, default=1, help="parallel pair-fitting workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lagnet",
        description="Sparse autologistic models for dynamic directed binary networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic series with ground truth")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--t", type=int, required=True, help="number of slices")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="existing output directory")
    p_sim.add_argument("--groups", type=int, default=4)
    p_sim.add_argument("--intercept-mean", default="0.0")
    p_sim.add_argument("--intercept-sd", default="0.5")
    p_sim.add_argument("--persistence-mean", default="1.0")
    p_sim.add_argument("--persistence-sd", default="0.5")
    p_sim.add_argument("--dis-scale", type=float, default=1.0)
    p_sim.add_argument("--initial", choices=["intercepts", "empty"], default="intercepts")
    p_sim.add_argument("--format", choices=["edges", "dense"], default="edges")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit the penalty path, select by BIC, classify effects")
    _add_series_args(p_fit)
    _add_fit_args(p_fit)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="one-step-ahead link probabilities")
    _add_series_args(p_pred)
    p_pred.add_argument("--coefficients", required=True, help="coefficients.json from fit")
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="rolling one-step-ahead ROC/AUC")
    _add_series_args(p_eval)
    _add_fit_args(p_eval)
    p_eval.add_argument("--holdout", type=int, required=True, help="number of final slices to hold out")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_rep = sub.add_parser("report", help="significance table from saved coefficients")
    _add_series_args(p_rep)
    p_rep.add_argument("--coefficients", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
