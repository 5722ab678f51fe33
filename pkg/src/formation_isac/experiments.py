"""Experiment drivers behind the CLI subcommands.

Each ``cmd_*`` takes a :class:`~formation_isac.config.ScenarioDoc`, writes
its tables under ``out`` and returns an :class:`~formation_isac.io.ExperimentResult`.
Seeds for independent streams are derived from the command seed through
``numpy.random.SeedSequence`` so runs are reproducible and streams never
overlap.
"""
from __future__ import annotations

import math
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import aero, beamform, control, formation
from .aero import AeroParams
from .beamform import BeamformInfeasible, BfScenario, BeamSolution
from .config import GridSpec, ScenarioDoc
from .io import ExperimentResult, digest, write_csv, write_json
from .radio import dbm_to_watt

CONVERGENCE_TOL = 0.15  # m, v_shape_score threshold

TRACE_HEADER = ("slot", "uav_id", "x", "y", "leader_flag", "ref_id",
                "u_tot", "u_max", "dx_est", "dy_est")
ITER_HEADER = ("outer_iter", "eta", "probe_count", "cuts_total", "max_violation")


def derive_seed(seed: int, *tags: int) -> int:
    """Independent 64-bit seed for the stream labelled by ``tags``."""
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, np.uint64)[0])


# -- formation -------------------------------------------------------------------

def simulate_formation(doc: ScenarioDoc, k: int, seed: int,
                       n_slots: Optional[int] = None) -> formation.FormationTrace:
    """Seeded initialisation plus the diffusion-LMS run for formation ``k``."""
    cfg = doc.formation_configs()[k]
    rng = np.random.Generator(np.random.Philox(derive_seed(seed, k, 0)))
    init = formation.init_formation(cfg, doc.aero, rng)
    return formation.run_formation(cfg, doc.aero, init, n_slots or doc.flight.n_slots,
                                   derive_seed(seed, k, 1), energy=doc.energy)


def convergence_slot(scores, tol: float = CONVERGENCE_TOL) -> Optional[int]:
    """First 1-based slot from which the score stays at or below ``tol``."""
    above = np.flatnonzero(np.asarray(scores) > tol)
    if above.size == 0:
        return 1
    last = int(above[-1]) + 1
    return last + 1 if last < len(scores) else None


def follower_upwash(trace: formation.FormationTrace, slot: int) -> float:
    """Mean total upwash over the followers of a 1-based slot."""
    i = slot - 1
    mask = np.arange(trace.u_tot.shape[1]) != trace.leader[i]
    return float(np.mean(trace.u_tot[i, mask])) if mask.any() else 0.0


def _trace_rows(trace):
    for n in range(trace.n_slots):
        for m in range(trace.positions.shape[1]):
            yield (n + 1, m, trace.positions[n, m, 0], trace.positions[n, m, 1],
                   int(trace.leader[n] == m), int(trace.ref[n, m]), trace.u_tot[n, m],
                   trace.u_max[n, m], trace.est[n, m, 0], trace.est[n, m, 1])


def _field_rows(positions, p: AeroParams, n: int = 60, pad: float = 2.0):
    """Total upwash of a snapshot over its bounding box, for heatmaps."""
    lo, hi = positions.min(axis=0) - pad, positions.max(axis=0) + pad
    xs, ys = np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n)
    total = np.zeros((n, n))
    for g in positions:
        total += aero.avg_upwash(xs[None, :] - g[0], ys[:, None] - g[1], p)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            yield (x, y, total[i, j])


def cmd_formation(doc: ScenarioDoc, seed: int, out) -> ExperimentResult:
    t0 = time.perf_counter()
    out = Path(out)
    res = ExperimentResult("formation", digest("formation", doc.to_dict(), seed))
    per = []
    for k, spec in enumerate(doc.formations):
        trace = simulate_formation(doc, k, seed)
        scores = formation.trace_scores(trace, doc.aero, spec.kappa)
        name = f"formation{k + 1}"
        res.tables[f"{name}_trace"] = str(write_csv(out / f"{name}_trace.csv",
                                                    TRACE_HEADER, _trace_rows(trace)))
        res.tables[f"{name}_scores"] = str(write_csv(
            out / f"{name}_scores.csv", ("slot", "v_shape_score", "follower_upwash", "power_saving"),
            ((n + 1, scores[n], follower_upwash(trace, n + 1), trace.power_saving[n])
             for n in range(trace.n_slots))))
        res.tables[f"{name}_field"] = str(write_csv(
            out / f"{name}_field.csv", ("x", "y", "u_tot"),
            _field_rows(trace.positions[-1], doc.aero)))
        per.append({
            "formation": k + 1, "m": spec.m,
            "convergence_slot": convergence_slot(scores),
            "final_v_shape_score": float(scores[-1]),
            "follower_upwash_first": follower_upwash(trace, 1),
            "follower_upwash_last": follower_upwash(trace, trace.n_slots),
            "mean_power_reduction": float(np.mean(trace.power_saving)),
        })
    res.summary = {"seed": seed, "tolerance": CONVERGENCE_TOL, "formations": per}
    res.wall_clock = time.perf_counter() - t0
    write_json(out / "formation_summary.json", res.to_dict())
    return res


# -- upwash map --------------------------------------------------------------------

def upwash_table(doc: ScenarioDoc, grid: GridSpec):
    """Field values on ``grid`` plus the grid argmax and a refined argmax."""
    spec = doc.upwash_map
    gens = np.asarray(spec.generators, dtype=float)
    p = doc.aero

    def field_fn(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return sum(aero.avg_upwash(x - g[0], y - g[1], p) for g in gens)

    xs, ys = grid.axes()
    vals = field_fn(xs[None, :], ys[:, None])
    # Ties between mirror-image maxima go to the larger x.
    top = vals.max()
    cand = np.argwhere(vals >= top - 1e-12 * abs(top))
    i, j = max(cand, key=lambda ij: (xs[ij[1]], -ys[ij[0]]))
    arg_grid = (float(xs[j]), float(ys[i]), float(vals[i, j]))
    step = min(xs[1] - xs[0], ys[1] - ys[0])
    lo_x, hi_x = arg_grid[0] - 2 * step, arg_grid[0] + 2 * step
    lo_y, hi_y = arg_grid[1] - 2 * step, arg_grid[1] + 2 * step
    arg_ref = aero.grid_argmax(field_fn, (lo_x, hi_x), (lo_y, hi_y), step=step / 20)
    return xs, ys, vals, arg_grid, arg_ref


def cmd_upwash_map(doc: ScenarioDoc, grid: Optional[GridSpec], out) -> ExperimentResult:
    t0 = time.perf_counter()
    out = Path(out)
    grid = grid or GridSpec.parse(doc.upwash_map.grid)
    res = ExperimentResult("upwash-map", digest("upwash-map", doc.to_dict(), str(grid)))
    xs, ys, vals, arg_grid, arg_ref = upwash_table(doc, grid)

    def rows():
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                yield ("grid", x, y, vals[i, j])
        yield ("argmax_grid", *arg_grid)
        yield ("argmax_refined", *arg_ref)

    res.tables["upwash_map"] = str(write_csv(out / "upwash_map.csv", ("kind", "x", "y", "u"), rows()))
    res.summary = {"grid": str(grid), "mode": doc.upwash_map.mode,
                   "argmax_grid": list(arg_grid), "argmax_refined": list(arg_ref)}
    res.wall_clock = time.perf_counter() - t0
    write_json(out / "upwash_map_summary.json", res.to_dict())
    return res


# -- beamforming -------------------------------------------------------------------

def leader_tracks(doc: ScenarioDoc, seed: int) -> np.ndarray:
    """Leader positions ``(K, N, 3)`` at the beamforming slots.

    ``kinematic`` advects each formation centre along -y at ``v0``;
    ``trace`` subsamples the elected leader of a formation simulation.
    The N slots are spread evenly over the flight horizon.
    """
    fl, n = doc.flight, doc.beamform.n_slots
    idx = (np.arange(n) * fl.n_slots) // n
    out = np.empty((len(doc.formations), n, 3))
    for k, spec in enumerate(doc.formations):
        if doc.beamform.leaders == "kinematic":
            t = idx * fl.dt
            out[k, :, 0] = spec.center[0]
            out[k, :, 1] = spec.center[1] - fl.v0 * t
        else:
            tr = simulate_formation(doc, k, seed)
            out[k, :, :2] = tr.positions[idx, tr.leader[idx]]
        out[k, :, 2] = fl.altitude
    return out


def build_scenario(doc: ScenarioDoc, seed: int = 0, p_max_dbm: Optional[float] = None,
                   gamma_th_dbm: Optional[float] = None, derived=None,
                   leaders: Optional[np.ndarray] = None) -> BfScenario:
    bf = doc.beamform
    p = bf.p_max_dbm if p_max_dbm is None else p_max_dbm
    g = bf.gamma_th_dbm if gamma_th_dbm is None else gamma_th_dbm
    if derived is None:
        derived = control.derive_lqr_terms(doc.control.build())
    return BfScenario(
        geo=doc.array, cc=doc.channel.build(),
        leaders=leader_tracks(doc, seed) if leaders is None else leaders,
        sample_points=doc.sensing.points(doc.flight.altitude),
        gamma_th=dbm_to_watt(g), p_max=dbm_to_watt(p),
        control=[derived] * len(doc.formations), slot_weight=doc.slot_weight)


def _solve(scn: BfScenario, doc: ScenarioDoc) -> BeamSolution:
    return beamform.optimize(scn, tol=doc.beamform.tol, max_outer=doc.beamform.max_outer)


def _compare_row(sol: BeamSolution, scn: BfScenario, seed=""):
    rep = beamform.check_feasibility(sol, scn)
    return (sol.label, seed, sol.eta, float(np.min(sol.rates)), float(np.sum(sol.rates)),
            rep["min_power_margin"], rep["min_sensing_margin"])


def run_baselines(scn: BfScenario, seed: int, n_random: int) -> dict:
    rnd = [beamform.baseline_random(scn, derive_seed(seed, 100, i)) for i in range(n_random)]
    return {"identical": beamform.baseline_identical_power(scn),
            "water_filling": beamform.baseline_water_filling(scn),
            "random": rnd}


def p_max_sweep(doc: ScenarioDoc, leaders, derived, levels=None) -> list[dict]:
    rows = []
    for p in levels if levels is not None else doc.beamform.p_sweep_dbm:
        scn = build_scenario(doc, p_max_dbm=p, derived=derived, leaders=leaders)
        base = run_baselines(scn, 0, 0)
        try:
            eta = _solve(scn, doc).eta
        except BeamformInfeasible:
            eta = math.inf
        rows.append({"p_max_dbm": p, "proposed": eta, "water_filling": base["water_filling"].eta,
                     "identical": base["identical"].eta})
    return rows


def gamma_sweep(doc: ScenarioDoc, leaders, derived, levels=None, p_dbm=None) -> list[dict]:
    p_dbm = doc.beamform.gamma_sweep_p_dbm if p_dbm is None else p_dbm
    rows = []
    for g in levels if levels is not None else doc.beamform.gamma_sweep_dbm:
        scn = build_scenario(doc, p_max_dbm=p_dbm, gamma_th_dbm=g, derived=derived, leaders=leaders)
        try:
            eta, family = _solve(scn, doc).eta, ""
        except BeamformInfeasible as exc:
            eta, family = math.inf, exc.family
        rows.append({"gamma_th_dbm": g, "p_max_dbm": p_dbm, "infeasible": bool(family),
                     "binding": family, "eta": eta})
    return rows


def cmd_beamform(doc: ScenarioDoc, seed: int, out, sweeps: bool = True) -> ExperimentResult:
    t0 = time.perf_counter()
    out = Path(out)
    res = ExperimentResult("beamform", digest("beamform", doc.to_dict(), seed, sweeps))
    derived = control.derive_lqr_terms(doc.control.build())
    leaders = leader_tracks(doc, seed)
    scn = build_scenario(doc, seed, derived=derived, leaders=leaders)
    sol = _solve(scn, doc)
    base = run_baselines(scn, seed, doc.beamform.random_seeds)
    audit = beamform.check_feasibility(sol, scn)

    res.tables["iter_log"] = str(write_csv(out / "beam_iterlog.csv", ITER_HEADER,
                                           ([r[c] for c in ITER_HEADER] for r in sol.iter_log)))
    write_json(out / "beam_solution.json", sol.to_json())
    res.tables["solution"] = str(out / "beam_solution.json")
    compare = [_compare_row(sol, scn), _compare_row(base["water_filling"], scn),
               _compare_row(base["identical"], scn)]
    compare += [_compare_row(r, scn, derive_seed(seed, 100, i)) for i, r in enumerate(base["random"])]
    res.tables["compare"] = str(write_csv(
        out / "beam_compare.csv",
        ("scheme", "seed", "eta", "min_rate", "sum_rate", "min_power_margin", "min_sensing_margin"),
        compare))
    res.tables["gains"] = str(write_csv(
        out / "beam_gains.csv", ("point", "x", "y", "z", "gain", "required"),
        ((j, *scn.sample_points[j], sol.gains[j], scn.sense_rhs[j])
         for j in range(scn.sample_points.shape[0]))))

    rand_eta = [r.eta for r in base["random"]]
    res.summary = {
        "seed": seed, "eta": {"proposed": sol.eta, "water_filling": base["water_filling"].eta,
                              "identical": base["identical"].eta,
                              "random_mean": float(np.mean(rand_eta)) if rand_eta else None},
        "l_min": scn.l_min, "rates": sol.rates, "outer_iterations": len(sol.iter_log),
        "audit": {k: v for k, v in audit.items() if not isinstance(v, np.ndarray)},
    }
    if sweeps:
        prow = p_max_sweep(doc, leaders, derived)
        res.tables["p_sweep"] = str(write_csv(
            out / "beam_pmax_sweep.csv", ("p_max_dbm", "proposed", "water_filling", "identical"),
            ([r["p_max_dbm"], r["proposed"], r["water_filling"], r["identical"]] for r in prow)))
        grow = gamma_sweep(doc, leaders, derived)
        res.tables["gamma_sweep"] = str(write_csv(
            out / "beam_gamma_sweep.csv", ("gamma_th_dbm", "p_max_dbm", "infeasible", "binding", "eta"),
            ([r[c] for c in ("gamma_th_dbm", "p_max_dbm", "infeasible", "binding", "eta")]
             for r in grow)))
        res.summary["p_sweep"] = prow
        res.summary["gamma_sweep"] = grow
    res.wall_clock = time.perf_counter() - t0
    write_json(out / "beamform_summary.json", res.to_dict())
    return res


# -- LQR trade-off sweep -----------------------------------------------------------

def achieved_rates(doc: ScenarioDoc, p_dbm: float, leaders, derived, source: str) -> np.ndarray:
    scn = build_scenario(doc, p_max_dbm=p_dbm, derived=derived, leaders=leaders)
    if source == "proposed":
        return _solve(scn, doc).rates
    if source == "identical":
        return beamform.baseline_identical_power(scn).rates
    return beamform.baseline_water_filling(scn).rates


def lqr_table(doc: ScenarioDoc, rates_by_p: dict) -> list[dict]:
    """Optimal LQR cost at the achieved rates for every noise-scale pair."""
    sw = doc.lqr_sweep
    rows = []
    for vs in sw.v_scales:
        for ws in sw.w_scales:
            d = control.derive_lqr_terms(doc.control.build(vs, ws))
            for p, rates in rates_by_p.items():
                eta = max(control.cost_or_inf(r, d) for r in rates)
                rows.append({"p_max_dbm": p, "v_scale": vs, "w_scale": ws,
                             "min_rate": float(np.min(rates)), "eta": eta, "l_min": d.l_min,
                             "excess": eta - d.l_min, "ratio": eta / d.l_min})
    return rows


def cmd_lqr_sweep(doc: ScenarioDoc, seed: int, out) -> ExperimentResult:
    t0 = time.perf_counter()
    out = Path(out)
    res = ExperimentResult("lqr-sweep", digest("lqr-sweep", doc.to_dict(), seed))
    derived = control.derive_lqr_terms(doc.control.build())
    leaders = leader_tracks(doc, seed)
    rates = {p: achieved_rates(doc, p, leaders, derived, doc.lqr_sweep.rate_source)
             for p in doc.lqr_sweep.p_max_dbm}
    rows = lqr_table(doc, rates)
    cols = ("p_max_dbm", "v_scale", "w_scale", "min_rate", "eta", "l_min", "excess", "ratio")
    res.tables["tradeoff"] = str(write_csv(out / "lqr_sweep.csv", cols,
                                           ([r[c] for c in cols] for r in rows)))
    res.summary = {"seed": seed, "rate_source": doc.lqr_sweep.rate_source,
                   "min_rate_by_p": {str(p): float(np.min(r)) for p, r in rates.items()}}
    res.wall_clock = time.perf_counter() - t0
    write_json(out / "lqr_sweep_summary.json", res.to_dict())
    return res
