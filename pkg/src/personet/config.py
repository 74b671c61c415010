"""JSON configuration documents <-> SimulationPlan."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from .casestudies import GridSpec, SimulationPlan, TraitFamily
from .specs import (
    SUBROUTINES,
    EdgeCountSpec,
    KernelSpec,
    ModelSpec,
    PersonalitySpec,
    ValidationError,
    model_to_dict,
)

log = logging.getLogger(__name__)


class ConfigError(ValidationError):
    pass


_TOP_KEYS = {
    "name", "seed", "rounds", "runs", "initial", "graph_variant", "rates", "personality",
    "trait", "kernels", "edge_counts", "estimation", "compare", "output",
}

DEFAULTS: dict[str, Any] = {
    "name": "custom",
    "seed": 0,
    "runs": 10,
    "rounds": 10000,
    "initial": {"nodes": 15, "edges": 30},
    "graph_variant": "simple",
    "personality": {"kind": "interval", "low": -1.0, "high": 1.0, "density": "uniform"},
    "estimation": {"window": 3000, "stride": None, "bandwidth": None,
                   "grid": {"p_min": None, "p_max": None, "p_points": 101, "k_max": 200}},
    "compare": {"margin": 0.2, "max_sup_norm": None, "max_mad": None, "max_l1": None},
    "output": {"directory": None, "format": "csv"},
}


def _section(doc: dict, key: str, allowed: set[str], where: str) -> dict:
    sec = doc.get(key, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}{key}: expected an object")
    _reject_extra(sec, allowed, f"{where}{key}")
    return sec


def _reject_extra(sec: dict, allowed: set[str], field: str):
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"{field}: unknown key(s) {', '.join(sorted(extra))}")


def _num(value, field: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{field}: expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{field}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _personality(sec: dict) -> PersonalitySpec:
    kind = sec.get("kind", "interval")
    if kind == "discrete":
        _reject_extra(sec, {"kind", "values"}, "personality")
        vals = sec.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError("personality.values: expected a list of [value, probability] pairs")
        atoms = tuple((_num(v[0], "personality.values"), _num(v[1], "personality.values")) for v in vals)
        return PersonalitySpec(kind="discrete", atoms=atoms)
    _reject_extra(sec, {"kind", "low", "high", "density", "table"}, "personality")
    table = tuple((_num(t[0], "personality.table"), _num(t[1], "personality.table")) for t in sec.get("table", []))
    return PersonalitySpec(
        kind=kind,
        low=_num(sec.get("low", -1.0), "personality.low"),
        high=_num(sec.get("high", 1.0), "personality.high"),
        density=sec.get("density", "uniform"),
        table=table,
    )


def _kernel(sec: Any, field: str) -> KernelSpec:
    if not isinstance(sec, dict):
        raise ConfigError(f"{field}: expected an object")
    _reject_extra(sec, {"form", "coefficients", "expression"}, field)
    form = sec.get("form", "constant")
    try:
        if form == "general":
            return KernelSpec("general", (), str(sec.get("expression", "")))
        return KernelSpec(form, tuple(_num(c, field) for c in sec.get("coefficients", [])))
    except ValidationError as exc:
        raise ConfigError(f"{field}: {exc}") from None


def _count(sec: Any, field: str) -> EdgeCountSpec:
    if not isinstance(sec, dict):
        raise ConfigError(f"{field}: expected an object")
    _reject_extra(sec, {"form", "coefficients"}, field)
    try:
        return EdgeCountSpec(sec.get("form", "constant"), tuple(_num(c, field) for c in sec.get("coefficients", [])))
    except ValidationError as exc:
        raise ConfigError(f"{field}: {exc}") from None


def plan_from_dict(doc: dict) -> SimulationPlan:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown key(s) {', '.join(sorted(extra))}")

    rates_sec = _section(doc, "rates", set(SUBROUTINES), "")
    rates = tuple(_num(rates_sec.get(n, 0.0), f"rates.{n}") for n in SUBROUTINES)
    if abs(sum(rates) - 1.0) > 1e-12:
        raise ConfigError(f"rates must sum to 1 (got {sum(rates):g})")

    rounds = _num(doc.get("rounds", DEFAULTS["rounds"]), "rounds", int)
    if rounds < 0:
        raise ConfigError("rounds: must be nonnegative")
    runs = _num(doc.get("runs", DEFAULTS["runs"]), "runs", int)
    if runs < 1:
        raise ConfigError("runs: must be at least 1")
    seed = _num(doc.get("seed", DEFAULTS["seed"]), "seed", int)
    init = _section(doc, "initial", {"nodes", "edges"}, "")
    personality = _personality(_section(doc, "personality", {"kind", "low", "high", "density", "table", "values"}, "")
                               or DEFAULTS["personality"])

    if "trait" in doc:
        if "kernels" in doc or "edge_counts" in doc:
            raise ConfigError("trait: give either a trait family or explicit kernels/edge_counts, not both")
        tsec = _section(doc, "trait", {"name", "coefficients"}, "")
        coeffs = tsec.get("coefficients", {})
        if isinstance(coeffs, dict):
            coeffs = [coeffs.get(f"c{i}") for i in range(len(coeffs))]
        try:
            fam = TraitFamily(tsec.get("name", ""), tuple(_num(c, "trait.coefficients") for c in coeffs))
        except ValidationError as exc:
            raise ConfigError(f"trait: {exc}") from None
        tmp = fam.model(rates)
        kernels, counts = tmp.kernels, tmp.counts
    else:
        ksec = _section(doc, "kernels", set(SUBROUTINES), "")
        csec = _section(doc, "edge_counts", set(SUBROUTINES), "")
        missing = [f"kernels.{n}" for n in SUBROUTINES if n not in ksec] + [
            f"edge_counts.{n}" for n in SUBROUTINES if n not in csec
        ]
        if missing:
            raise ConfigError(f"missing {', '.join(missing)}")
        kernels = tuple(_kernel(ksec[n], f"kernels.{n}") for n in SUBROUTINES)
        counts = tuple(_count(csec[n], f"edge_counts.{n}") for n in SUBROUTINES)

    try:
        model = ModelSpec(
            personality=personality,
            rates=rates,
            kernels=kernels,
            counts=counts,
            graph_variant=doc.get("graph_variant", DEFAULTS["graph_variant"]),
            initial_nodes=_num(init.get("nodes", 15), "initial.nodes", int),
            initial_edges=_num(init.get("edges", 30), "initial.edges", int),
            rounds=rounds,
        )
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None

    est = _section(doc, "estimation", {"window", "stride", "bandwidth", "grid"}, "")
    grid_sec = _section(est, "grid", {"p_min", "p_max", "p_points", "k_max"}, "estimation.")
    lo, hi = personality.bounds
    grid = GridSpec(
        p_min=_num(grid_sec["p_min"], "estimation.grid.p_min") if grid_sec.get("p_min") is not None else lo,
        p_max=_num(grid_sec["p_max"], "estimation.grid.p_max") if grid_sec.get("p_max") is not None else hi,
        p_points=_num(grid_sec.get("p_points", 101), "estimation.grid.p_points", int),
        k_max=_num(grid_sec.get("k_max", 200), "estimation.grid.k_max", int),
    )
    bw = est.get("bandwidth")
    if bw is not None:
        if not isinstance(bw, list) or len(bw) != 2:
            raise ConfigError("estimation.bandwidth: expected [h_p, h_k] or null")
        bw = (_num(bw[0], "estimation.bandwidth"), _num(bw[1], "estimation.bandwidth"))
    stride = est.get("stride")
    cmp_sec = _section(doc, "compare", {"margin", "max_sup_norm", "max_mad", "max_l1"}, "")
    out = _section(doc, "output", {"directory", "format"}, "")

    def opt(sec, key, field):
        v = sec.get(key)
        return None if v is None else _num(v, field)

    try:
        return SimulationPlan(
            model=model,
            runs=runs,
            seed=seed,
            window=_num(est.get("window", 3000), "estimation.window", int),
            stride=None if stride is None else _num(stride, "estimation.stride", int),
            bandwidth=bw,
            grid=grid,
            margin=_num(cmp_sec.get("margin", 0.2), "compare.margin"),
            max_sup_norm=opt(cmp_sec, "max_sup_norm", "compare.max_sup_norm"),
            max_mad=opt(cmp_sec, "max_mad", "compare.max_mad"),
            max_l1=opt(cmp_sec, "max_l1", "compare.max_l1"),
            name=str(doc.get("name", "custom")),
            output_directory=out.get("directory"),
            output_format=out.get("format", "csv"),
        )
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def plan_to_dict(plan: SimulationPlan) -> dict:
    doc = {"name": plan.name, "seed": plan.seed, "runs": plan.runs}
    doc.update(model_to_dict(plan.model))
    g = plan.grid
    doc["estimation"] = {
        "window": plan.window,
        "stride": plan.stride,
        "bandwidth": None if plan.bandwidth is None else list(plan.bandwidth),
        "grid": {"p_min": g.p_min, "p_max": g.p_max, "p_points": g.p_points, "k_max": g.k_max},
    }
    doc["compare"] = {"margin": plan.margin, "max_sup_norm": plan.max_sup_norm,
                      "max_mad": plan.max_mad, "max_l1": plan.max_l1}
    doc["output"] = {"directory": plan.output_directory, "format": plan.output_format}
    return doc


def dumps(plan: SimulationPlan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2) + "\n"


def parse_config(path) -> SimulationPlan:
    """Read, validate and resolve a JSON configuration file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    plan = plan_from_dict(doc)
    log.info("resolved configuration:\n%s", dumps(plan))
    return plan
