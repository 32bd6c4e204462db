"""
experiments.py — The experiment runners behind the CLI subcommands.

    run_simulate  one trajectory (deterministic or noisy) as CSV
    run_gramian   empirical / stochastic Gramians as matrix files + metric CSV
    run_sweep     UAV noise-level sweep: per-sample metrics + summary JSON
    run_heatmap   wing ν and κ heatmaps over the strain grid
    run_place     wing sensor placement for each r and w_ν

Each runner returns a JSON-ready summary dict and writes its artifacts under
the output directory.
"""
import logging
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from config.settings import settings
from core.errors import ConfigurationError
from core.gramian import (PerturbationPlan, empirical_gramian, numerical_rank,
                          stochastic_gramian_campaign)
from core.matrix_io import write_gramian
from core.metrics import (metric_correlation, metric_report, metric_values, summarize_values)
from core.neural_encoder import EncoderParams, encode, sta_kernel
from core.noise import NoiseSpec
from core.optimizers import PsoSettings
from core.placement import PlacementProblem, TabulatedGramianSource, exhaustive_select, place_sensors
from core.simulator import constant_input, integrate_deterministic, integrate_stochastic
from plants.flapping_wing import WingAssembly, WingParams, assemble_wing_system, strain_at
from plants.uav import HEADING_AND_WIND, UavParams, uav_system
from plants.wing_campaign import WingGramianSource, WingSchedule, span_profile
from runner.artifacts import Provenance, write_csv, write_grid_csv, write_json
from runner.schemas import RunSpec

logger = logging.getLogger(__name__)


# ══════════════════════════════════════════════════════════════
# BUILDERS
# ══════════════════════════════════════════════════════════════

def _typed_overrides(cls, overrides: Dict[str, float]) -> Dict[str, Any]:
    """Cast JSON numbers back to the dataclass field types; counts must be integral."""
    defaults = {f.name: f.default for f in fields(cls)}
    typed = {}
    for key, value in overrides.items():
        default = defaults.get(key)
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not float(value).is_integer():
                raise ConfigurationError(f"{cls.__name__}.{key} must be an integer, got {value!r}")
            value = int(value)
        typed[key] = value
    return typed


def build_wing(spec: RunSpec) -> WingAssembly:
    return assemble_wing_system(WingParams(**_typed_overrides(WingParams, spec.wing)))


def build_encoder(spec: RunSpec) -> EncoderParams:
    return EncoderParams(**spec.encoder)


def wing_schedule(spec: RunSpec) -> WingSchedule:
    return WingSchedule(
        dt=spec.dt or settings.WING_DT,
        duration=spec.wing_duration,
        t_perturb=spec.wing_perturb_time,
        epsilon=spec.epsilon or settings.WING_EPSILON,
    )


def wing_source(spec: RunSpec, assembly: WingAssembly = None) -> WingGramianSource:
    assembly = assembly or build_wing(spec)
    noise = NoiseSpec(tuple(assembly.params.q_diag), spec.seed)
    return WingGramianSource(assembly, spec.runs, noise, build_encoder(spec), wing_schedule(spec),
                             threads=spec.threads)


def uav_plan(spec: RunSpec, default_indices=tuple(range(5))) -> PerturbationPlan:
    indices = tuple(spec.perturbed_indices) if spec.perturbed_indices is not None else default_indices
    return PerturbationPlan(
        epsilon=spec.epsilon or settings.UAV_EPSILON,
        perturbed_indices=indices,
        t1=spec.t1 or settings.UAV_HORIZON,
        dt=spec.dt or settings.UAV_DT,
        x0=np.asarray(spec.uav_x0),
        input=constant_input([spec.uav_turn_rate]),
    )


def provenance(spec: RunSpec) -> Provenance:
    return Provenance(spec.spec_hash(), spec.seed)


def _metric_rows(W: np.ndarray, w_nu_values: List[float]) -> Dict[str, np.ndarray]:
    """Per-sample metric columns for a (K, m, m) stack."""
    cols = {
        "nu": metric_values(W, "nu"),
        "kappa": metric_values(W, "kappa"),
        "inv_det_root": metric_values(W, "inv_det_root"),
    }
    for w in w_nu_values:
        cols[f"combined_wnu{w:g}"] = metric_values(W, "combined", w)
    return cols


# ══════════════════════════════════════════════════════════════
# RUNNERS
# ══════════════════════════════════════════════════════════════

def run_simulate(spec: RunSpec, out: Path) -> Dict[str, Any]:
    prov = provenance(spec)
    if spec.plant == "uav":
        system = uav_system(UavParams(V=spec.uav_speed))
        x0, u = np.asarray(spec.uav_x0), constant_input([spec.uav_turn_rate])
        t1, dt = spec.t1 or settings.UAV_HORIZON, spec.dt or settings.UAV_DT
        noise = NoiseSpec((spec.q_scale, spec.q_scale), spec.seed)
    else:
        assembly = build_wing(spec)
        system = assembly.system
        x0, u = assembly.initial_state(), None
        t1, dt = spec.t1 or spec.wing_duration, spec.dt or settings.WING_DT
        noise = NoiseSpec(tuple(assembly.params.q_diag), spec.seed)
    if spec.noisy:
        traj = integrate_stochastic(system, x0, u, noise, t1, dt)
    else:
        traj = integrate_deterministic(system, x0, u, t1, dt)
    write_csv(out / "trajectory.csv", traj.to_frame(system.state_names), prov)
    summary = {"plant": spec.plant, "steps": len(traj.times) - 1, "method": traj.method,
               "final_state": traj.final_state}

    if spec.plant == "wing":
        encoder = build_encoder(spec)
        loci = np.asarray(spec.loci)
        strain = strain_at(assembly.eta(traj.states), loci, assembly.table)
        response = encode(strain, encoder, dt)
        frame = pd.DataFrame({"t": traj.times})
        for j in range(len(loci)):
            frame[f"strain_{j}"] = strain[:, j]
            frame[f"p_fire_{j}"] = response.p_fire[:, j]
        write_csv(out / "encoded.csv", frame, prov)
        kernel = sta_kernel(encoder, dt)
        write_csv(out / "sta_kernel.csv", pd.DataFrame({"tau": dt * np.arange(len(kernel)), "sta": kernel}), prov)
    write_json(out / "simulate.json", summary, prov)
    return summary


def run_gramian(spec: RunSpec, out: Path) -> Dict[str, Any]:
    prov = provenance(spec)
    w_nu = spec.w_nu_values[0]
    if spec.plant == "uav":
        system = uav_system(UavParams(V=spec.uav_speed))
        plan = uav_plan(spec)
        if spec.noisy:
            noise = NoiseSpec((spec.q_scale, spec.q_scale), spec.seed)
            samples = stochastic_gramian_campaign(system, plan, noise, spec.runs, threads=spec.threads)
        else:
            samples = [empirical_gramian(system, plan)]
        for s in samples:
            write_gramian(out / "gramians" / f"run_{s.run_index:04d}.txt", s, prov.to_dict())
        matrices = np.stack([s.matrix for s in samples])
    else:
        source = wing_source(spec)
        matrices = np.sum(source.gramians_at(np.asarray(spec.loci)), axis=1)
        source.assembly.table.export(out / "mode_curvature.txt", prov.to_dict())
    rows = [metric_report(W, w_nu).to_row() for W in matrices]
    frame = pd.DataFrame(rows)
    frame.insert(0, "run", np.arange(len(rows)))
    frame["rank"] = [numerical_rank(W) for W in matrices]
    write_csv(out / "gramian_metrics.csv", frame, prov)
    summary = {"plant": spec.plant, "runs": len(rows), "m": int(matrices.shape[-1]),
               "min_rank": int(frame["rank"].min()),
               "nu": summarize_values(frame["nu"].to_numpy()).to_dict()}
    write_json(out / "gramian.json", summary, prov)
    return summary


def run_sweep(spec: RunSpec, out: Path) -> Dict[str, Any]:
    """UAV: K stochastic Gramians over heading and wind at each noise level."""
    prov = provenance(spec)
    system = uav_system(UavParams(V=spec.uav_speed))
    plan = uav_plan(spec, HEADING_AND_WIND)
    frames, levels = [], []
    for q in spec.noise_levels:
        noise = NoiseSpec((q, q), spec.seed)
        samples = stochastic_gramian_campaign(system, plan, noise, spec.runs, threads=spec.threads)
        W = np.stack([s.matrix for s in samples])
        cols = _metric_rows(W, spec.w_nu_values)
        frame = pd.DataFrame({"q": q, "run": np.arange(len(samples)), **cols})
        frames.append(frame)
        rho, excluded = metric_correlation(cols["nu"], cols["inv_det_root"])
        level = {"q": q, "rho_nu_inv_det_root": rho, "excluded_from_rho": excluded}
        for name, values in cols.items():
            level[name] = summarize_values(values).to_dict()
        levels.append(level)
        logger.info(f"sweep q={q:g}: median nu={level['nu']['median']:.4g}, rho={rho:.3f}")
    write_csv(out / "sweep_samples.csv", pd.concat(frames, ignore_index=True), prov)
    summary = {"levels": levels, "runs": spec.runs, "perturbed_indices": list(plan.perturbed_indices),
               "t1": plan.t1, "dt": plan.dt}
    write_json(out / "sweep_summary.json", summary, prov)
    return summary


def run_heatmap(spec: RunSpec, out: Path) -> Dict[str, Any]:
    """Wing: K-run mean ν and κ of each grid node's own Gramian."""
    prov = provenance(spec)
    source = wing_source(spec)
    table = source.assembly.table
    ny, nx = table.grid_shape
    G = source.gramians_at(table.nodes())                       # (K, ny·nx, m, m)
    nu = np.mean(metric_values(G, "nu"), axis=0).reshape(ny, nx)
    kappa = np.mean(metric_values(G, "kappa"), axis=0).reshape(ny, nx)
    write_grid_csv(out / "heatmap_nu.csv", nu, table.y_cm, table.x_cm, prov)
    write_grid_csv(out / "heatmap_kappa.csv", kappa, table.y_cm, table.x_cm, prov)
    kernel = source.kernel
    write_csv(out / "sta_kernel.csv",
              pd.DataFrame({"tau": source.plan.dt * np.arange(len(kernel)), "sta": kernel}), prov)
    finite = np.isfinite(nu)
    summary = {"grid": [ny, nx], "runs": spec.runs, "x_cm": table.x_cm, "nu_span_log10": span_profile(nu),
               "nu_min": float(nu[finite].min()) if finite.any() else float("inf"),
               "infinite_nodes": int(np.sum(~finite))}
    write_json(out / "heatmap.json", summary, prov)
    return summary


def run_place(spec: RunSpec, out: Path) -> Dict[str, Any]:
    """
    Wing: place r sensors for each r and w_ν; emits the cost-vs-r table and final loci.

    With a candidate set the exhaustive optimum is reported beside each PSO
    result; a set too large for EXHAUSTIVE_BUDGET raises BudgetExceededError.
    """
    prov = provenance(spec)
    source = wing_source(spec)
    bounds = source.bounds
    candidates = None
    if spec.candidates is not None:
        candidates = np.asarray(spec.candidates, dtype=float)
        bounds = candidate_bounds(candidates)
        source = TabulatedGramianSource.from_source(source, candidates)
    rows, placements, traces = [], [], []
    for r in spec.r_values:
        row = {"r": r}
        for w in spec.w_nu_values:
            problem = PlacementProblem(
                r=r, bounds=bounds, d_allowed=spec.d_allowed, sigma=spec.sigma, K=spec.runs,
                metric=spec.metric, w_nu=w, seed=spec.seed, candidates=candidates,
                pso=PsoSettings(swarm_size=spec.pso_swarm_size, iterations=spec.pso_iterations,
                                threads=spec.threads),
                refine=spec.refine,
            )
            exact = None
            if candidates is not None:
                exact = exhaustive_select(np.swapaxes(source.gramians, 0, 1), r, spec.metric, w,
                                          budget=settings.EXHAUSTIVE_BUDGET)
            result = place_sensors(problem, source)
            row[f"cost_wnu{w:g}"] = result.cost
            placement = {"r": r, "w_nu": w, **result.to_dict()}
            if exact is not None:
                row[f"exhaustive_wnu{w:g}"] = exact.cost
                placement["exhaustive_cost"] = exact.cost
                placement["exhaustive_loci"] = candidates[list(exact.indices)].tolist()
            placements.append(placement)
            traces.append(pd.DataFrame({"r": r, "w_nu": w, "iteration": np.arange(len(result.pso_trace)),
                                        "best_cost": result.pso_trace}))
            logger.info(f"placement r={r} w_nu={w:g}: cost {result.cost:.6g}")
        rows.append(row)
    write_csv(out / "cost_vs_r.csv", pd.DataFrame(rows), prov)
    write_csv(out / "pso_traces.csv", pd.concat(traces, ignore_index=True), prov)
    summary = {"metric": spec.metric, "placements": placements, "runs": spec.runs}
    write_json(out / "placement.json", summary, prov)
    return summary


def candidate_bounds(candidates: np.ndarray) -> tuple:
    """Search box around a discrete candidate set; degenerate axes get a 0.5 cm pad."""
    lo, hi = candidates.min(axis=0), candidates.max(axis=0)
    pad = np.where(hi > lo, 0.0, 0.5)
    return (float(lo[0] - pad[0]), float(hi[0] + pad[0])), (float(lo[1] - pad[1]), float(hi[1] + pad[1]))


RUNNERS = {
    "simulate": run_simulate,
    "gramian": run_gramian,
    "sweep": run_sweep,
    "heatmap": run_heatmap,
    "place": run_place,
}
