"""Command-line entry point: ``dta-sa fit|sa|simulate|sroc``."""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import ndtr

from dta_sa.config import load_settings
from dta_sa.errors import DtaSaError, InputError, OptimizationFailed, UnknownScenario
from dta_sa.likelihood import SaConfig, fit_sa, grid_frame, operating_point_trajectory, sa_grid
from dta_sa.outputs import RunManifest, prepare_output_dir, write_csv, write_json
from dta_sa.plots import T_GRID, plot_sauc_over_p, plot_selection_functions, plot_sroc_family
from dta_sa.reitsma import BivariateParams, sauc, sroc_curve
from dta_sa.scenarios import catalog_listing, get_scenario, load_scenario_file
from dta_sa.selection import DOR_CONTRAST, t_scores
from dta_sa.simulation import DEFAULT_REPS, METHODS, run_study, study_frame, track_operating_points
from dta_sa.studies import as_arrays, read_studies, summarize_all

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_OPTIMIZATION = 3
EXIT_NO_CONVERGENCE = 4

DEFAULT_P_GRID = "1,0.8,0.6,0.4"


def parse_p_grid(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"❌ Could not parse p-grid {text!r}")
    if not values:
        raise InputError("❌ p-grid is empty")
    for p in values:
        if not 0 < p <= 1:
            raise InputError(f"❌ p-grid values must lie in (0, 1], got {p}")
    return values


def parse_contrast(text):
    """``estimate``, ``dor``, ``se``, ``sp`` or ``c1=<value>`` -> (contrast_mode, fixed_c1)."""
    text = text.strip().lower()
    named = {"dor": DOR_CONTRAST.c1, "se": 1.0, "sp": 0.0}
    if text == "estimate":
        return "estimate", None
    if text in named:
        return "fixed", named[text]
    if text.startswith("c1="):
        try:
            c1 = float(text[3:])
        except ValueError:
            raise InputError(f"❌ Could not parse contrast {text!r}")
        if not 0 <= c1 <= 1:
            raise InputError(f"❌ c1 must lie in [0, 1], got {c1}")
        return "fixed", c1
    raise InputError(f"❌ Unknown contrast {text!r}; use estimate, dor, se, sp or c1=<value>")


def _load_summaries(csv_path):
    return summarize_all(read_studies(csv_path))


def cmd_fit(args, settings):
    out = prepare_output_dir(args.output or settings.output_dir)
    summaries = _load_summaries(args.input)
    fit = fit_sa(summaries, SaConfig(p=1.0, level=args.level))

    record = fit.to_record()
    record["level"] = args.level
    write_json(record, out / "reitsma.json", args.full_precision)
    write_csv(sroc_curve(fit.biv), out / "sroc.csv", args.full_precision)
    RunManifest("fit", str(args.input), str(out), {"level": args.level}).write(args.full_precision)
    if not fit.converged:
        logging.error(f"❌ Reitsma fit did not converge: {fit.message}")
        return EXIT_OPTIMIZATION
    return EXIT_OK


def _selection_tables(fits, arrays, study_ids):
    curves, scores = [], []
    for fit in fits:
        if not fit.converged or fit.sel is None:
            continue
        sel = fit.sel
        curves.append(pd.DataFrame({"p": fit.p, "t": T_GRID, "a": ndtr(sel.beta * T_GRID + sel.alpha)}))
        t = t_scores(arrays.y1, arrays.y2, arrays.s1_sq, arrays.s2_sq, sel.contrast)
        scores.append(pd.DataFrame({"p": fit.p, "study": list(study_ids), "t": t, "a": ndtr(sel.beta * t + sel.alpha)}))
    empty_curve = pd.DataFrame(columns=["p", "t", "a"])
    empty_scores = pd.DataFrame(columns=["p", "study", "t", "a"])
    return (
        pd.concat(curves, ignore_index=True) if curves else empty_curve,
        pd.concat(scores, ignore_index=True) if scores else empty_scores,
    )


def cmd_sa(args, settings):
    out = prepare_output_dir(args.output or settings.output_dir)
    p_grid = parse_p_grid(args.p_grid)
    contrast_mode, fixed_c1 = parse_contrast(args.contrast)
    config = SaConfig(
        contrast_mode=contrast_mode,
        fixed_c1=fixed_c1,
        beta_bounds=(0.0, args.beta_max),
        level=args.level,
    )
    summaries = _load_summaries(args.input)
    arrays = as_arrays(summaries)
    workers = args.workers or settings.threads
    fits = sa_grid(arrays, p_grid, config, warm_start=not args.cold_start, workers=workers)

    write_json([f.to_record() for f in fits], out / "sa_fits.json", args.full_precision)
    write_csv(grid_frame(fits).drop(columns=["boundary"]), out / "sa_summary.csv", args.full_precision)

    curves = [sroc_curve(f.biv).assign(p=f.p)[["p", "fpr", "tpr"]] for f in fits if f.converged]
    if curves:
        write_csv(pd.concat(curves, ignore_index=True), out / "sroc_by_p.csv", args.full_precision)
    write_csv(operating_point_trajectory(fits), out / "trajectory.csv", args.full_precision)
    curve_table, score_table = _selection_tables(fits, arrays, [s.id for s in summaries])
    write_csv(curve_table, out / "selection_curve.csv", args.full_precision)
    write_csv(score_table, out / "study_t_scores.csv", args.full_precision)

    if args.svg:
        plot_sroc_family(fits, arrays, out / "sroc_by_p.svg")
        plot_selection_functions(fits, arrays, out / "selection_functions.svg")
        plot_sauc_over_p(fits, out / "sauc_over_p.svg")

    options = {
        "p_grid": p_grid,
        "contrast": args.contrast,
        "beta_max": args.beta_max,
        "level": args.level,
        "cold_start": args.cold_start,
        "svg": args.svg,
    }
    RunManifest("sa", str(args.input), str(out), options).write(args.full_precision)

    if not any(f.converged for f in fits):
        logging.error("❌ No p in the grid converged")
        return EXIT_OPTIMIZATION
    return EXIT_OK


def cmd_simulate(args, settings):
    out = prepare_output_dir(args.output or settings.output_dir)
    if args.scenario_file:
        scenario = load_scenario_file(args.scenario_file)
    else:
        scenario = get_scenario(args.scenario, args.variant)
    if args.S is not None:
        scenario = scenario.with_size(args.S)
    seed = settings.seed if args.seed is None else args.seed
    options = {"scenario": scenario.id, "variant": scenario.variant, "S": scenario.S, "seed": seed}

    if args.track:
        p_grid = parse_p_grid(args.p_grid)
        studies, trajectory = track_operating_points(scenario, p_grid, seed=seed, select_p=args.p_select)
        write_csv(studies, out / "tracking_studies.csv", args.full_precision)
        write_csv(trajectory, out / "tracking_trajectory.csv", args.full_precision)
        options = {**options, "track": True, "p_grid": p_grid, "p_select": args.p_select}
        RunManifest("simulate", args.scenario_file or "", str(out), options, seed).write(args.full_precision)
        return EXIT_OK

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    workers = args.workers or settings.threads
    summaries = run_study(scenario, reps=args.reps, methods=methods, base_seed=seed, workers=workers)
    write_csv(study_frame(summaries), out / "simulation.csv", args.full_precision)
    # thread count stays out of the manifest so outputs are identical across settings
    RunManifest("simulate", args.scenario_file or "", str(out), {**options, "reps": args.reps, "methods": methods}, seed).write(args.full_precision)

    if all(s.convergence_rate == 0 for s in summaries):
        logging.error("❌ No replication converged for any method")
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _params_from_json(path):
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"❌ Could not read fit JSON {path}: {e}")
    if isinstance(raw, list):
        converged = [r for r in raw if r.get("converged")]
        if not converged:
            raise InputError(f"❌ {path} holds no converged fit")
        raw = converged[0]
    try:
        return BivariateParams(raw["mu1"], raw["mu2"], raw["tau1"], raw["tau2"], raw["rho"])
    except (KeyError, TypeError) as e:
        raise InputError(f"❌ {path} is missing Reitsma parameters: {e}")


def cmd_sroc(args, settings):
    out = prepare_output_dir(args.output or settings.output_dir)
    if args.from_json:
        params = _params_from_json(args.from_json)
    else:
        missing = [n for n in ("mu1", "mu2", "tau1", "tau2", "rho") if getattr(args, n) is None]
        if missing:
            raise InputError(f"❌ Missing parameters: {', '.join(missing)} (or pass --from-json)")
        params = BivariateParams(args.mu1, args.mu2, args.tau1, args.tau2, args.rho)

    grid = np.linspace(args.fpr_min, args.fpr_max, args.points)
    write_csv(sroc_curve(params, grid), out / "sroc.csv", args.full_precision)
    area = sauc(params)
    print(f"SAUC = {area:.6g}")
    options = {"params": asdict(params), "points": args.points, "fpr_min": args.fpr_min, "fpr_max": args.fpr_max}
    RunManifest("sroc", args.from_json or "", str(out), options).write(args.full_precision)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="dta-sa", description="Diagnostic meta-analysis with selective-publication sensitivity analysis")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-o", "--output", help="output directory (default DTA_SA_OUTPUT_DIR)")
        p.add_argument("--full-precision", action="store_true", help="write 17 significant digits instead of 6")

    fit = sub.add_parser("fit", help="fit the Reitsma model")
    fit.add_argument("input", help="CSV with columns id,tp,fn,tn,fp")
    fit.add_argument("--level", type=float, default=0.95, help="confidence level for SAUC")
    common(fit)
    fit.set_defaults(handler=cmd_fit)

    sa = sub.add_parser("sa", help="sensitivity analysis over a grid of p")
    sa.add_argument("input", help="CSV with columns id,tp,fn,tn,fp")
    sa.add_argument("--p-grid", default=DEFAULT_P_GRID, help="comma separated p values in (0, 1]")
    sa.add_argument("--contrast", default="estimate", help="estimate, dor, se, sp or c1=<value>")
    sa.add_argument("--beta-max", type=float, default=2.0, help="upper bound for beta")
    sa.add_argument("--level", type=float, default=0.95)
    sa.add_argument("--svg", action="store_true", help="also write SVG figures")
    sa.add_argument("--cold-start", action="store_true", help="start every p from the Reitsma fit")
    sa.add_argument("--workers", type=int, help="processes for --cold-start grids (default DTA_SA_THREADS)")
    common(sa)
    sa.set_defaults(handler=cmd_sa)

    sim = sub.add_parser("simulate", help="simulation study for one scenario")
    sim.add_argument("--scenario", type=int, default=3, help="catalog scenario id (1-12)")
    sim.add_argument("--variant", default="dor", choices=["dor", "se", "sp"], help="true contrast of the selection process")
    sim.add_argument("--scenario-file", help="TOML or JSON scenario instead of the catalog")
    sim.add_argument("--S", type=int, help="population size (default 200)")
    sim.add_argument("--reps", type=int, default=DEFAULT_REPS)
    sim.add_argument("--seed", type=int, help="base seed (default DTA_SA_SEED)")
    sim.add_argument("--methods", default=",".join(METHODS), help=f"subset of {','.join(METHODS)}")
    sim.add_argument("--workers", type=int, help="worker processes (default DTA_SA_THREADS)")
    sim.add_argument("--track", action="store_true", help="track summary operating points on one dataset instead")
    sim.add_argument("--p-grid", default="1,0.9,0.7,0.5", help="p grid for --track")
    sim.add_argument("--p-select", type=float, default=None, help="with --track, recalibrate alpha to this marginal selection probability")
    common(sim)
    sim.set_defaults(handler=cmd_simulate)

    sr = sub.add_parser("sroc", help="SROC curve and SAUC for given parameters")
    for name in ("mu1", "mu2", "tau1", "tau2", "rho"):
        sr.add_argument(f"--{name}", type=float)
    sr.add_argument("--from-json", help="reitsma.json or sa_fits.json written by fit/sa")
    sr.add_argument("--points", type=int, default=201)
    sr.add_argument("--fpr-min", type=float, default=0.005)
    sr.add_argument("--fpr-max", type=float, default=0.995)
    common(sr)
    sr.set_defaults(handler=cmd_sroc)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings()
    except ValueError as e:
        print(e, file=sys.stderr)
        return EXIT_INPUT

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )

    try:
        return args.handler(args, settings)
    except UnknownScenario as e:
        logging.error(f"{e}")
        print(f"Available scenarios: {catalog_listing()}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as e:
        logging.error(f"{e}")
        print(str(e), file=sys.stderr)
        return EXIT_INPUT
    except OptimizationFailed as e:
        logging.error(f"{e}")
        return EXIT_OPTIMIZATION
    except DtaSaError as e:
        logging.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_OPTIMIZATION


if __name__ == "__main__":
    sys.exit(main())
