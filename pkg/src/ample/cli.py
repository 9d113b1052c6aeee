"""Command-line front end: ``ample {fit,predict,evaluate,synth,heatmap,trace}``.

Every subcommand writes plain-text files into ``--out``. Values from a JSON
``--config`` file replace the matching flags. Exit codes: 0 success, 1 usage
error, 2 data error, 3 fit stopped before converging.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .dataio import FilterSpec, attach_geometry, filter_dataset, load_dataset, merge, save_dataset
from .errors import AmpleError, RegionCountMismatch
from .fitting import FitConfig, features_for, fit_model
from .metrics import ThrRange, evaluate as evaluate_metrics, mean_sim_time, write_abs_error_cdf
from .models import (AmpleParams, Preset, builtin_preset, builtin_presets, collapse_line, load_preset,
                     model_name, predict_abg, predict_ci, save_preset)
from .regionmap import (DEFAULT_D0, GeoPoint, Los, geo_to_grid, link_geometry_xy, load_map, save_map,
                        write_value_grid)
from .synth import (UMA_RECIPE, UMI_RECIPE, MapRecipe, SynthSpec, generate_dataset, generate_map, place_tx, recipe_hash,
                    recipe_to_dict, rx_grid)

log = logging.getLogger("ample")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOT_CONVERGED = 0, 1, 2, 3
NODATA = -9999.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- shared helpers ------------------------------------------------------------

def _params(spec: str) -> Preset:
    """A preset file path or a built-in preset name."""
    if Path(spec).is_file():
        return load_preset(spec)
    if spec in builtin_presets():
        return builtin_preset(spec)
    raise UsageError(f"--params {spec!r} is neither a file nor a built-in preset")


def _filter_spec(args) -> FilterSpec:
    return FilterSpec(max_path_loss=args.max_path_loss, distance_range=(args.min_distance, args.max_distance),
                      distance_bin=args.distance_bin,
                      frequency_whitelist=tuple(args.freqs) if args.freqs else None,
                      bin_mode=args.bin_mode)


def _load_points(args, need_map: bool):
    data = merge(*(load_dataset(p) for p in args.data)) if len(args.data) > 1 else load_dataset(args.data[0])
    data = filter_dataset(data, _filter_spec(args))
    if args.tags:
        data = data.with_points(p for p in data if p.tag in set(args.tags))
    region_map = None
    if args.map:
        region_map = load_map(args.map)
        data = attach_geometry(data, region_map, args.d0, skip_invalid=True)
    elif need_map:
        raise UsageError("the ample model needs --map")
    if len(data) == 0:
        raise AmpleError("no data points left after filtering")
    return data, region_map


def _check_regions(params, region_map) -> None:
    if isinstance(params, AmpleParams) and region_map is not None and params.M != region_map.n_regions:
        raise RegionCountMismatch(f"preset has M = {params.M} region exponents, the map legend has "
                                  f"{region_map.n_regions} codes")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --- subcommands -----------------------------------------------------------------

def cmd_fit(args) -> int:
    data, region_map = _load_points(args, need_map=args.model == "ample")
    init = _params(args.init).params if args.init else None
    if init is not None and model_name(init) != args.model:
        raise UsageError(f"--init is a {model_name(init)} preset, not {args.model}")
    _check_regions(init, region_map)
    cfg = FitConfig(step_size=args.step_size, max_iters=args.max_iters, grad_tol=args.grad_tol,
                    init=init, trace_every=args.trace_every)
    M = region_map.n_regions if region_map is not None else 4
    features = features_for(args.model, list(data), M=M, d0=args.d0)
    res = fit_model(args.model, features, cfg)
    out = _out(args)
    save_preset(Preset(res.params, scenario=args.scenario), out / "params.txt")
    record = {
        "model": args.model, "points": len(features), "backend": kernels.backend_name(),
        "step_size": cfg.step_size, "max_iters": cfg.max_iters, "grad_tol": cfg.grad_tol,
        "iters": res.iters, "converged": res.converged, "final_nll": res.final_nll,
        "grad_norm": res.grad_norm, "rank_deficient": res.rank_deficient,
        "rejected_steps": res.rejected_steps, "final_step": res.final_step,
        "trace": [[int(i), float(v)] for i, v in res.trace],
    }
    (out / "fit_log.json").write_text(_json(record))
    log.info("fit %s: %d points, %d iterations, NLL %.6f", args.model, len(features), res.iters,
             res.final_nll)
    if not res.converged:
        log.error("fit stopped at max_iters = %d before the gradient fell below %g",
                  cfg.max_iters, cfg.grad_tol)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _predict(params, data, d0):
    features = features_for(model_name(params), list(data),
                            M=params.M if isinstance(params, AmpleParams) else 4, d0=d0)
    return features, features.predict(params)


def cmd_predict(args) -> int:
    params = _params(args.params).params
    data, region_map = _load_points(args, need_map=isinstance(params, AmpleParams))
    _check_regions(params, region_map)
    _, pred = _predict(params, data, args.d0)
    out = _out(args)
    with (out / "predictions.csv").open("w") as fh:
        fh.write("index,freq_ghz,distance3d_m,path_loss_db,predicted_db,los\n")
        for i, (p, v) in enumerate(zip(data, pred)):
            los = p.los.value if p.los is not None else ""
            fh.write(f"{i},{p.freq!r},{p.distance3d!r},{p.path_loss!r},{float(v)!r},{los}\n")
    return EXIT_OK


def _thr_range(args, data) -> ThrRange:
    if args.lt_min is not None or args.lt_max is not None:
        if args.lt_min is None or args.lt_max is None:
            raise UsageError("--lt-min and --lt-max go together")
        return ThrRange(args.lt_min, args.lt_max, args.lt_step)
    flags = [p.los for p in data if p.los is not None]
    if not flags:
        log.info("no LOS information; using the NLOS threshold range")
        return ThrRange.for_environment(los=False)
    n_los = sum(f == Los.LOS for f in flags)
    rng = ThrRange.for_environment(los=2 * n_los > len(flags))
    return ThrRange(rng.lt_min, rng.lt_max, args.lt_step)


def cmd_evaluate(args) -> int:
    params = _params(args.params).params
    data, region_map = _load_points(args, need_map=isinstance(params, AmpleParams))
    _check_regions(params, region_map)
    features, pred = _predict(params, data, args.d0)
    ref = features.path_loss
    t_p = None
    if args.time_rounds > 0:
        theta = params.mean_vector()
        t_p = mean_sim_time(lambda f: f.offset + f.design @ theta, features, args.time_rounds)
    report = evaluate_metrics(pred, ref, _thr_range(args, data), model=model_name(params), t_p=t_p)
    out = _out(args)
    (out / "metrics.txt").write_text(report.to_table())
    (out / "metrics.jsonl").write_text(report.to_jsonl())
    write_abs_error_cdf(out / "abs_error_cdf.txt", pred, ref)
    sys.stdout.write(report.to_table())
    return EXIT_OK


def _recipe_params(recipe: dict):
    spec = recipe.get("params", "ample_uma_nlos")
    preset = _params(spec) if isinstance(spec, str) else None
    params = preset.params if preset else None
    if params is None:
        raise UsageError("recipe 'params' must name a preset")
    if "sigma" in recipe:
        params = type(params)(**{**params.__dict__, "sigma": float(recipe["sigma"])})
    return params


def _map_recipe(recipe: dict) -> MapRecipe:
    """``map`` is "uma", "umi" or an object of MapRecipe fields (over the defaults)."""
    spec = recipe.get("map", {})
    if isinstance(spec, str):
        named = {"uma": UMA_RECIPE, "umi": UMI_RECIPE}
        if spec not in named:
            raise UsageError(f"map recipe {spec!r} is not one of {sorted(named)}")
        return named[spec]
    try:
        return MapRecipe(**spec)
    except TypeError as exc:
        raise UsageError(f"bad map recipe: {exc}") from None


_RECIPE_KEYS = {"map", "map_file", "map_seed", "tx", "tx_seed", "params", "sigma", "freqs",
                "rx_resolution", "seed", "d0", "tx_height", "rx_height", "distance_range", "tag",
                "include_indoor"}


def cmd_synth(args) -> int:
    recipe = json.loads(Path(args.recipe).read_text())
    unknown = sorted(set(recipe) - _RECIPE_KEYS)
    if unknown:
        raise UsageError(f"unknown recipe keys {unknown}")
    seed = int(recipe.get("seed", args.seed))
    if "map_file" in recipe:
        region_map = load_map(recipe["map_file"])
    else:
        region_map = generate_map(_map_recipe(recipe), int(recipe.get("map_seed", seed)))
    if "tx" in recipe:
        tx = GeoPoint(*map(float, recipe["tx"]))
    else:
        tx = place_tx(region_map, int(recipe.get("tx_seed", seed)))
    params = _recipe_params(recipe)
    lo, hi = recipe.get("distance_range", [0.0, None])
    spec = SynthSpec(region_map=region_map, tx=tx, true_params=params,
                     freqs=tuple(float(f) for f in recipe.get("freqs", (0.85, 2.1, 5.0))),
                     rx_resolution=float(recipe.get("rx_resolution", 5.0)), seed=seed,
                     d0=float(recipe.get("d0", DEFAULT_D0)),
                     tx_height=float(recipe.get("tx_height", 30.0)),
                     rx_height=float(recipe.get("rx_height", 1.5)),
                     distance_range=(float(lo), math.inf if hi is None else float(hi)),
                     tag=str(recipe.get("tag", "")),
                     include_indoor=bool(recipe.get("include_indoor", False)))
    result = generate_dataset(spec)
    out = _out(args)
    save_map(region_map, out / "map.txt")
    save_dataset(result.dataset, out / "dataset.csv")
    payload = {"recipe": recipe, "seed": seed, "tx": list(tx),
               "map": recipe_to_dict(_map_recipe(recipe)) if "map_file" not in recipe
               else recipe["map_file"]}
    manifest = {"seed": seed, "spec_hash": recipe_hash(payload), "candidates": result.candidates,
                "points": len(result.dataset), "skip_count": result.skip_count,
                "skips": dict(sorted(result.skips.items())), "tx": [tx.lat, tx.lon],
                "true_params": {"model": model_name(params), **params.__dict__}}
    (out / "manifest.json").write_text(_json(manifest))
    return EXIT_OK


def _point_prediction(params, region_map, x0, y0, x1, y1, freq, dh, d0):
    d3 = math.hypot(math.hypot(x1 - x0, y1 - y0), dh)
    if isinstance(params, AmpleParams):
        line, _ = link_geometry_xy(region_map, x0, y0, x1, y1, d0)
        D = collapse_line(line, params.M)
        return params.A + float(D @ np.asarray(params.n)) + line.p * params.X \
            + 10.0 * params.gamma * math.log10(freq)
    if model_name(params) == "ci":
        return predict_ci(params, freq, d3)
    return predict_abg(params, freq, d3)


def cmd_heatmap(args) -> int:
    params = _params(args.params).params
    region_map = load_map(args.map)
    _check_regions(params, region_map)
    tx = GeoPoint(*args.tx)
    x0, y0 = geo_to_grid(region_map, tx)
    ex, ey = region_map.extent
    n_x = max(1, int(round(ex / args.resolution)))
    n_y = max(1, int(round(ey / args.resolution)))
    cw, ch = ex / n_x, ey / n_y
    dh = args.tx_height - args.rx_height
    grid = np.full((n_y, n_x), np.nan)
    for k, (x1, y1) in enumerate(rx_grid(region_map, args.resolution)):
        try:
            grid[k // n_x, k % n_x] = _point_prediction(params, region_map, x0, y0, x1, y1,
                                                        args.freq, dh, args.d0)
        except AmpleError:
            pass  # degenerate link at the transmitter cell
    out = _out(args)
    write_value_grid(out / "heatmap.txt", grid, cw, region_map.origin, NODATA)
    if args.reference:
        sums = np.zeros_like(grid)
        counts = np.zeros_like(grid)
        for p in load_dataset(args.reference):
            if abs(p.freq - args.freq) > 1e-9 or p.tx != tx:
                continue
            x1, y1 = geo_to_grid(region_map, p.rx)
            try:
                pred = _point_prediction(params, region_map, x0, y0, x1, y1, args.freq, dh, args.d0)
            except AmpleError:
                continue
            col = min(int(x1 // cw), n_x - 1)
            row = n_y - 1 - min(int(y1 // ch), n_y - 1)
            sums[row, col] += abs(pred - p.path_loss)
            counts[row, col] += 1
        with np.errstate(invalid="ignore"):
            err = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        write_value_grid(out / "error_grid.txt", err, cw, region_map.origin, NODATA)
    return EXIT_OK


def cmd_trace(args) -> int:
    region_map = load_map(args.map)
    tx, rx = GeoPoint(*args.tx), GeoPoint(*args.rx)
    x0, y0 = geo_to_grid(region_map, tx)
    x1, y1 = geo_to_grid(region_map, rx)
    line, los = link_geometry_xy(region_map, x0, y0, x1, y1, args.d0)
    names = {0: "reference", **region_map.legend}
    rows = [f"# link length {line.total_length!r} m, p = {line.p}, {los.value}"
            + (", receiver indoors" if line.rx_indoor else ""),
            "code region length_m"]
    rows += [f"{c} {names.get(c, '?')} {length!r}" for c, length in line.segments]
    D = collapse_line(line, region_map.n_regions)
    rows.append("# D " + " ".join(f"{v:.6f}" for v in D))
    text = "\n".join(rows) + "\n"
    if args.out:
        _out(args).joinpath("trace.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def _add_data_flags(p, map_required=False):
    p.add_argument("--data", nargs="+", required=True, help="dataset file(s)")
    p.add_argument("--map", required=map_required, help="region map file")
    p.add_argument("--tags", nargs="+", help="keep only points with these city tags")
    p.add_argument("--d0", type=float, default=DEFAULT_D0, help="reference distance [m]")
    p.add_argument("--max-path-loss", type=float, default=150.0, help="drop points above this [dB]")
    p.add_argument("--min-distance", type=float, default=0.0, help="[m]")
    p.add_argument("--max-distance", type=float, default=math.inf, help="[m]")
    p.add_argument("--distance-bin", type=float, default=5.0, help="bin width [m]")
    p.add_argument("--bin-mode", choices=("label", "average"), default="label")
    p.add_argument("--freqs", type=float, nargs="+", help="frequency whitelist [GHz]")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config", help="JSON file; its keys replace the matching flags")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="ample", description="AMPLE path loss modelling toolkit",
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"ample {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("fit", parents=[common], formatter_class=fmt, help="extract model parameters")
    p.add_argument("--model", choices=("ample", "ci", "abg"), required=True)
    _add_data_flags(p)
    p.add_argument("--init", help="starting preset (file or built-in name)")
    p.add_argument("--step-size", type=float, default=FitConfig.step_size)
    p.add_argument("--max-iters", type=int, default=FitConfig.max_iters)
    p.add_argument("--grad-tol", type=float, default=FitConfig.grad_tol)
    p.add_argument("--trace-every", type=int, default=FitConfig.trace_every)
    p.add_argument("--scenario", default="", help="label stored in the preset")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], formatter_class=fmt, help="predict path loss")
    p.add_argument("--params", required=True, help="preset file or built-in name")
    _add_data_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], formatter_class=fmt, help="metrics report")
    p.add_argument("--params", required=True, help="preset file or built-in name")
    _add_data_flags(p)
    p.add_argument("--lt-min", type=float, help="AHRE threshold range start [dB] (auto by LOS share)")
    p.add_argument("--lt-max", type=float, help="AHRE threshold range end [dB]")
    p.add_argument("--lt-step", type=float, default=1.0, help="AHRE threshold step [dB]")
    p.add_argument("--time-rounds", type=int, default=0,
                   help="rounds for the per-point timing; 0 leaves t_p out (deterministic output)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[common], formatter_class=fmt, help="synthetic map and dataset")
    p.add_argument("--recipe", required=True, help="JSON recipe")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("heatmap", parents=[common], formatter_class=fmt, help="prediction grid")
    p.add_argument("--params", required=True, help="preset file or built-in name")
    p.add_argument("--map", required=True)
    p.add_argument("--tx", type=float, nargs=2, required=True, metavar=("LAT", "LON"))
    p.add_argument("--freq", type=float, required=True, help="[GHz]")
    p.add_argument("--resolution", type=float, default=5.0, help="receiver spacing [m]")
    p.add_argument("--tx-height", type=float, default=30.0, help="[m]")
    p.add_argument("--rx-height", type=float, default=1.5, help="[m]")
    p.add_argument("--d0", type=float, default=DEFAULT_D0, help="[m]")
    p.add_argument("--reference", help="dataset for an absolute error grid")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("trace", parents=[common], formatter_class=fmt, help="dump one line matrix")
    p.add_argument("--map", required=True)
    p.add_argument("--tx", type=float, nargs=2, required=True, metavar=("LAT", "LON"))
    p.add_argument("--rx", type=float, nargs=2, required=True, metavar=("LAT", "LON"))
    p.add_argument("--d0", type=float, default=DEFAULT_D0, help="[m]")
    p.set_defaults(func=cmd_trace, out=None)
    return parser


def _apply_config(args) -> None:
    if not args.config:
        return
    config = json.loads(Path(args.config).read_text())
    if not isinstance(config, dict):
        raise UsageError("--config must hold a JSON object")
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest in ("func", "command", "config") or not hasattr(args, dest):
            raise UsageError(f"config key {key!r} is not a {args.command} option")
        setattr(args, dest, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"ample {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AmpleError, ValueError, OSError, KeyError, TypeError) as exc:
        print(f"ample {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
