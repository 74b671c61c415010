"""Command line: simulate, meanfield, estimate, compare, preset."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .casestudies import SimulationPlan, preset
from .config import dumps, parse_config, plan_to_dict
from .io import read_samples, read_table, write_samples, write_table
from .meanfield import ConvergenceError, JointGrid, joint_density
from .model import SampleSet, run
from .specs import ValidationError
from .stats import (
    ConditionalCurve,
    DensityGrid,
    compare_conditional,
    compare_density,
    conditional_mean_running,
    kde2d,
)

log = logging.getLogger("personet")

OUT_ENV = "PERSONET_OUT"
EXIT_OK, EXIT_INVALID, EXIT_THRESHOLD, EXIT_IO = 0, 1, 2, 3


class DigestMismatch(ValidationError):
    pass


@dataclass
class RunArtifacts:
    samples: SampleSet
    summaries: list[dict]
    metadata: dict
    paths: dict = field(default_factory=dict)


def _ext(fmt: str) -> str:
    return "json" if fmt == "json" else "csv"


def _base_metadata(plan: SimulationPlan) -> dict:
    return {
        "config_digest": plan.model.digest(),
        "personality_bounds": list(plan.model.personality.bounds),
        "tool_version": __version__,
        "plan": plan.name,
    }


def _simulate_one(args):
    model, seed = args
    res = run(model, np.random.default_rng(seed))
    return res.personality, res.degree, res.summary


def simulate(plan: SimulationPlan, jobs: int = 1) -> RunArtifacts:
    """Run every seed of the plan; results are ordered by run index regardless of ``jobs``."""
    tasks = [(plan.model, s) for s in plan.seeds()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_simulate_one, tasks))
    else:
        outs = [_simulate_one(t) for t in tasks]
    meta = _base_metadata(plan)
    meta.update(seeds=plan.seeds(), rounds=plan.model.rounds, runs=plan.runs, graph_variant=plan.model.graph_variant)
    samples = SampleSet(
        run_id=np.concatenate([np.full(len(o[0]), i, dtype=np.int64) for i, o in enumerate(outs)]),
        node_id=np.concatenate([np.arange(len(o[0]), dtype=np.int64) for o in outs]),
        personality=np.concatenate([o[0] for o in outs]),
        degree=np.concatenate([o[1] for o in outs]),
        metadata=meta,
    )
    return RunArtifacts(samples, [o[2] for o in outs], meta)


def cmd_simulate(plan: SimulationPlan, out_dir, jobs: int = 1) -> RunArtifacts:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    art = simulate(plan, jobs)
    fmt = plan.output_format
    samples_path = write_samples(out / f"samples.{_ext(fmt)}", art.samples, fmt,
                                 integer_degree=plan.model.graph_variant == "simple")
    meta = dict(art.metadata)
    meta["event_summary"] = art.summaries
    meta["config"] = plan_to_dict(plan)
    meta_path = out / "metadata.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    art.paths = {"samples": samples_path, "metadata": meta_path}
    return art


def analytic_grid(plan: SimulationPlan) -> JointGrid:
    rho = plan.model.personality
    if rho.kind == "discrete":
        p_grid = np.array(sorted(a[0] for a in rho.atoms))
    else:
        g = plan.grid
        p_grid = np.linspace(g.p_min, g.p_max, g.p_points)
    return joint_density(plan.model, p_grid, plan.grid.k_max)


def cmd_meanfield(plan: SimulationPlan, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jg = analytic_grid(plan)
    fmt = plan.output_format
    meta = _base_metadata(plan)
    meta["solver_rates"] = list(plan.model.rates)
    P, K = np.meshgrid(jg.p, jg.k, indexing="ij")
    grid_path = write_table(
        out / f"joint_grid.{_ext(fmt)}",
        {"personality": P.ravel(), "degree": K.ravel().astype(np.int64), "density": jg.values.ravel()},
        meta, fmt,
    )
    curve_path = write_table(
        out / f"expectation.{_ext(fmt)}",
        {"personality": jg.p, "expected_degree": jg.expectation},
        meta, fmt,
    )
    return {"grid": grid_path, "expectation": curve_path, "joint": jg}


def cmd_estimate(samples_path, plan: SimulationPlan, out_dir) -> dict:
    samples = read_samples(samples_path)
    if len(samples) == 0:
        raise ValidationError(f"{samples_path}: no samples")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = plan.grid
    p_grid = np.linspace(g.p_min, g.p_max, g.p_points)
    k_grid = np.arange(g.k_max + 1, dtype=float)
    dens = kde2d(samples, plan.bandwidth, p_grid, k_grid)
    try:
        curve = conditional_mean_running(samples, plan.window, plan.stride)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    meta = {k: samples.metadata[k] for k in ("config_digest", "personality_bounds", "tool_version", "plan")
            if k in samples.metadata}
    meta.update(bandwidth=list(dens.bandwidth), bandwidth_rule="scott" if plan.bandwidth is None else "fixed",
                window=curve.window, stride=curve.stride, tail_aligned=curve.tail_aligned,
                samples=len(samples), flags=dens.flags)
    fmt = plan.output_format
    P, K = np.meshgrid(dens.p, dens.k, indexing="ij")
    dpath = write_table(out / f"density.{_ext(fmt)}",
                        {"personality": P.ravel(), "degree": K.ravel(), "density": dens.values.ravel()}, meta, fmt)
    cpath = write_table(out / f"curve.{_ext(fmt)}",
                        {"personality": curve.p, "mean_degree": curve.mean, "count": curve.counts}, meta, fmt)
    return {"density": dpath, "curve": cpath, "grid": dens, "curve_obj": curve}


def _find(directory: Path, stem: str) -> Path:
    for ext in ("csv", "json"):
        p = directory / f"{stem}.{ext}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no {stem}.csv or {stem}.json in {directory}")


def _grid_from_table(cols: dict, value: str = "density"):
    p = np.unique(cols["personality"])
    k = np.unique(cols["degree"]).astype(float)
    vals = np.zeros((len(p), len(k)))
    ip = np.searchsorted(p, cols["personality"])
    ik = np.searchsorted(k, cols["degree"])
    vals[ip, ik] = cols[value]
    return p, k, vals


def _trap(x):
    if len(x) < 2:
        return np.ones(len(x))
    dx = np.diff(x)
    w = np.zeros(len(x))
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def cmd_compare(empirical_dir, analytic_dir, out_dir=None, margin: float = 0.2,
                thresholds: dict | None = None, force: bool = False) -> tuple[dict, bool]:
    """Compare estimate outputs with meanfield outputs; returns (metrics, within thresholds)."""
    emp, ana = Path(empirical_dir), Path(analytic_dir)
    curve_cols, curve_meta = read_table(_find(emp, "curve"))
    dens_cols, dens_meta = read_table(_find(emp, "density"))
    exp_cols, exp_meta = read_table(_find(ana, "expectation"))
    grid_cols, _ = read_table(_find(ana, "joint_grid"))
    d_emp, d_ana = curve_meta.get("config_digest"), exp_meta.get("config_digest")
    if d_emp != d_ana and not force:
        raise DigestMismatch(f"config digests differ (empirical {d_emp}, analytic {d_ana}); use --force to override")

    lo, hi = exp_meta.get("personality_bounds", [float(exp_cols["personality"].min()), float(exp_cols["personality"].max())])
    p_range = (lo + margin, hi - margin)
    ap, ae = exp_cols["personality"].astype(float), exp_cols["expected_degree"].astype(float)
    curve = ConditionalCurve(curve_cols["personality"].astype(float), curve_cols["mean_degree"].astype(float),
                             curve_cols["count"], int(curve_meta.get("window", 0)), int(curve_meta.get("stride", 0)))
    metrics = compare_conditional(curve, lambda p: np.interp(p, ap, ae), p_range)

    ep, ek, ev = _grid_from_table(dens_cols)
    gp, gk, gv = _grid_from_table(grid_cols)
    empirical = DensityGrid(ep, ek, ev, tuple(dens_meta.get("bandwidth", (0.0, 0.0))), _trap(ep), np.ones(len(ek)))
    analytic = JointGrid(gp, gk, gv, _trap(gp), np.interp(gp, ap, ae))
    try:
        metrics["l1"] = compare_density(empirical, analytic)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    metrics["config_digest"] = d_emp
    metrics["margin"] = margin

    limits = {k: v for k, v in (thresholds or {}).items() if v is not None}
    keymap = {"max_sup_norm": "sup_norm", "max_mad": "mad", "max_l1": "l1"}
    failed = [k for k, v in limits.items() if metrics[keymap[k]] > v]
    metrics["thresholds"] = limits
    metrics["failed"] = failed
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    return metrics, not failed


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _resolve_plan(args) -> SimulationPlan:
    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise ValidationError("give --config or --preset, not both")
    if getattr(args, "config", None):
        plan = parse_config(args.config)
    elif getattr(args, "preset", None):
        plan = preset(args.preset)
    else:
        raise ValidationError("one of --config or --preset is required")
    overrides = dict(
        seed=getattr(args, "seed", None),
        runs=getattr(args, "runs", None),
        rounds=getattr(args, "rounds", None),
        window=getattr(args, "window", None),
        margin=getattr(args, "margin", None),
        output_format=getattr(args, "format", None),
        graph_variant=getattr(args, "variant", None),
    )
    return plan.with_overrides(**overrides)


def _out_dir(args, plan: SimulationPlan | None = None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if plan is not None and plan.output_directory:
        return Path(plan.output_directory)
    return Path(os.environ.get(OUT_ENV, "personet-out"))


def _common(p: argparse.ArgumentParser, plan_required: bool = True):
    g = p.add_argument_group("plan")
    g.add_argument("--config", metavar="PATH", help="JSON configuration file")
    g.add_argument("--preset", metavar="NAME", choices=["extraversion", "agreeableness"])
    g.add_argument("--seed", type=int, metavar="N")
    g.add_argument("--runs", type=int, metavar="N")
    g.add_argument("--rounds", type=int, metavar="N")
    g.add_argument("--window", type=int, metavar="N")
    g.add_argument("--margin", type=float, metavar="X", help="trimmed from each end of the personality range")
    g.add_argument("--variant", choices=["simple", "weighted"])
    g.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./personet-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="personet", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the stochastic model and write pooled samples")
    _common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("meanfield", help="write the analytic joint density and E[k|p]")
    _common(p)

    p = sub.add_parser("estimate", help="KDE and running-mean curve from a samples file")
    _common(p)
    p.add_argument("--samples", metavar="PATH", required=True)

    p = sub.add_parser("compare", help="compare estimate outputs with meanfield outputs")
    _common(p)
    p.add_argument("--empirical", metavar="DIR", required=True)
    p.add_argument("--analytic", metavar="DIR", required=True)
    p.add_argument("--force", action="store_true", help="compare despite differing config digests")

    p = sub.add_parser("preset", help="print a preset as a configuration document")
    p.add_argument("name", choices=["extraversion", "agreeableness"])
    p.add_argument("--out", metavar="PATH", help="write to file instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "preset":
            text = dumps(preset(args.name))
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return EXIT_OK
        if args.command == "compare" and not (args.config or args.preset):
            plan = None
        else:
            plan = _resolve_plan(args)
        out = _out_dir(args, plan)
        if args.command == "simulate":
            art = cmd_simulate(plan, out, args.jobs)
            print(f"wrote {len(art.samples)} samples to {art.paths['samples']}")
        elif args.command == "meanfield":
            res = cmd_meanfield(plan, out)
            print(f"wrote {res['grid']} and {res['expectation']}")
        elif args.command == "estimate":
            res = cmd_estimate(args.samples, plan, out)
            print(f"wrote {res['density']} and {res['curve']}")
        elif args.command == "compare":
            margin = args.margin if args.margin is not None else (plan.margin if plan else 0.2)
            thresholds = {}
            if plan is not None:
                thresholds = {"max_sup_norm": plan.max_sup_norm, "max_mad": plan.max_mad, "max_l1": plan.max_l1}
            metrics, ok = cmd_compare(args.empirical, args.analytic, out, margin, thresholds, args.force)
            print(json.dumps({k: metrics[k] for k in ("sup_norm", "mad", "l1", "failed")}))
            if not ok:
                return EXIT_THRESHOLD
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
