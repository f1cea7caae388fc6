"""Command line driver: ``cutopt run <config>`` and ``cutopt validate <config>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import traceback
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, build_problem, load_config
from .elasticity import von_mises
from .io import IterationLog, write_snapshot_vtk, write_svg
from .shapeopt import Evaluation, OptimizationState, ShapeOptimizer

log = logging.getLogger("cutopt")


def _fine_von_mises(ev: Evaluation, material, refined):
    vm = von_mises(ev.u, material)
    return vm[refined.parent]


def write_snapshot(out: Path, tag: str, ev: Evaluation, cfg: RunConfig, refined):
    fine = refined.fine
    disp = vm = None
    if ev.u is not None:
        disp = ev.u.space.nodal_values(ev.u.coefficients)
        vm = _fine_von_mises(ev, cfg.material, refined)
    write_snapshot_vtk(out / f"snapshot_{tag}.vtk", fine, ev.levelset.values, disp, vm)
    if ev.system is not None:
        write_svg(out / f"boundary_{tag}.svg", ev.system.geometry, refined.coarse)


def run(cfg: RunConfig, out: Path, report: bool = True) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_resolved.json").write_text(json.dumps(cfg.resolved(), indent=2, default=str))
    start = time.perf_counter()
    refined, problem, ls0 = build_problem(cfg)
    optimizer = ShapeOptimizer(problem, cfg.settings())
    logged = 0
    last_snap = [-1]

    with IterationLog(out / "iterations.csv") as csv_log:
        def callback(state: OptimizationState, ev: Evaluation):
            nonlocal logged
            for rec in state.history[logged:]:
                csv_log.write(rec)
            logged = len(state.history)
            every = cfg.snapshot_every
            if every and state.iteration % every == 0 and state.iteration != last_snap[0]:
                write_snapshot(out, f"{state.iteration:04d}", ev, cfg, refined)
                last_snap[0] = state.iteration
            log.info("iteration %d  J = %.6g  |Omega| = %.4f", state.iteration, ev.J, ev.volume)

        try:
            final, state = optimizer.run(ls0, callback)
        except Exception as exc:  # keep partial artifacts and a readable error record
            (out / "error.json").write_text(json.dumps({
                "error": type(exc).__name__, "message": str(exc),
                "traceback": traceback.format_exc()}, indent=2))
            log.error("run failed: %s", exc)
            return 1
        for rec in state.history[logged:]:
            csv_log.write(rec)

    write_snapshot(out, "final", final, cfg, refined)
    summary = {"J": final.J, "compliance": final.compliance, "volume": final.volume,
               "iterations": state.iteration, "status": state.status,
               "pseudo_time": state.t, "wall_time": time.perf_counter() - start}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    if report:
        from .plotting import plot_convergence, plot_design

        plot_design(out / "design_final.png", final.system.geometry,
                    title=f"{cfg.problem}: J = {final.J:.4g}",
                    von_mises=_fine_von_mises(final, cfg.material, refined))
        plot_convergence(out / "convergence.png", state.history)
    print(json.dumps(summary, indent=2))
    return 0


def validate(cfg: RunConfig) -> int:
    print(json.dumps(cfg.resolved(), indent=2, default=str))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutopt",
                                     description="CutFEM level-set compliance optimization")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an optimization")
    p_run.add_argument("config", help="TOML config file")
    p_run.add_argument("--max-iter", type=int, help="override max_iterations")
    p_run.add_argument("--snapshot-every", type=int, help="override snapshot_every")
    p_run.add_argument("--out-dir", help="override output_dir")
    p_run.add_argument("--no-report", action="store_true", help="skip the PNG figures")
    p_val = sub.add_parser("validate", help="check a config and print resolved defaults")
    p_val.add_argument("config", help="TOML config file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            updates = {}
            if args.max_iter is not None:
                updates["max_iterations"] = args.max_iter
            if args.snapshot_every is not None:
                updates["snapshot_every"] = args.snapshot_every
            if args.out_dir is not None:
                updates["output_dir"] = args.out_dir
            cfg = replace(cfg, **updates).validate()
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        return validate(cfg)
    return run(cfg, Path(cfg.output_dir), report=not args.no_report)


if __name__ == "__main__":
    sys.exit(main())
