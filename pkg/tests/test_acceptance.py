"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest

from formation_isac import aero, beamform, control, experiments, formation
from formation_isac.conic import min_eigenvalue, solve
from formation_isac.radio import BeamformerSet, beampattern_gain

from test_conic import lambda_max_problem, random_feasible, violation

P = aero.AeroParams()


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, seconds, budget):
        ok = ok and seconds < budget
        with capsys.disabled():
            print(f"\n[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {detail}  "
                  f"({seconds:.2f} s, budget {budget:g} s)")
        assert ok, detail
    return emit


def test_c01_upwash_optimum(report):
    t0 = time.perf_counter()
    opt = aero.optimal_offset(P)
    dt = time.perf_counter() - t0
    dist = math.hypot(opt.dx - 0.9091, opt.dy - 1.0303)
    report(1, dist <= 0.01, f"argmax ({opt.dx:.5f}, {opt.dy:.5f}), {dist:.5f} m from the target",
           dt, 1)


def test_c02_gradient(report):
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(2))
    h, worst = 1e-6, 0.0
    for _ in range(1000):
        others = rng.uniform(-4, 4, size=(int(rng.integers(1, 19)), 2))
        off = rng.uniform(-4, 4, size=2)
        lam = int(rng.choice([1, -1]))
        f = lambda x, y: aero.total_upwash_at((x, y), others, P)
        fd = np.array([lam * (f(off[0] + h, off[1]) - f(off[0] - h, off[1])) / (2 * h),
                       (f(off[0], off[1] + h) - f(off[0], off[1] - h)) / (2 * h)])
        an = aero.upwash_gradient(off, lam, others, P)
        worst = max(worst, float(np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-3)))
    report(2, worst <= 1e-5, f"max relative error {worst:.2e}", time.perf_counter() - t0, 5)


def test_c03_v_formation(report, desk_doc):
    horizons = {1: 100, 0: 200}  # formation index -> slot budget
    ok_seeds, slowest, lines = 0, 0.0, []
    for seed in range(10):
        good = True
        for k, horizon in horizons.items():
            spec = desk_doc.formations[k]
            t0 = time.perf_counter()
            trace = experiments.simulate_formation(desk_doc, k, seed, n_slots=horizon)
            scores = formation.trace_scores(trace, desk_doc.aero, spec.kappa)
            slowest = max(slowest, time.perf_counter() - t0)
            conv = experiments.convergence_slot(scores)
            gain = conv is not None and (experiments.follower_upwash(trace, conv)
                                         > experiments.follower_upwash(trace, 1))
            good &= conv is not None and gain
            lines.append(f"M={spec.m}:{conv}")
        ok_seeds += good
    report(3, ok_seeds >= 8, f"{ok_seeds}/10 seeds converge with upwash gain; "
           f"convergence slots {' '.join(lines)}", slowest, 10)


def test_c04_dare(report):
    t0 = time.perf_counter()
    s = control.solve_dare_s(control.ControlModel.diagonal(n1=50))
    exact = np.array_equal(s, np.eye(50))
    sv, sw = 0.01, 0.001
    root = (sv + math.sqrt(sv * sv + 4 * sv * sw)) / 2
    p1 = control.solve_dare_p(control.ControlModel.diagonal(n1=1, sigma_v=sv, sigma_w=sw),
                              tol=1e-15)["P"][0, 0]
    p50 = control.solve_dare_p(control.ControlModel.diagonal(n1=50, sigma_v=sv, sigma_w=sw),
                               tol=1e-15)["P"]
    e1 = abs(p1 - root)
    e50 = float(np.max(np.abs(p50 - p1 * np.eye(50))))
    report(4, exact and e1 <= 1e-10 and e50 <= 1e-10,
           f"S==Q {exact}, scalar error {e1:.1e}, 50-dim entrywise error {e50:.1e}",
           time.perf_counter() - t0, 1)


def test_c05_rate_cost_round_trip(report, nominal_derived):
    t0 = time.perf_counter()
    d = nominal_derived
    costs = d.l_min * (1 + np.logspace(-4, 4, 100))
    err_c = max(abs(control.optimal_cost_for_rate(control.min_rate_for_cost(c, d), d) - c) / c
                for c in costs)
    rates = d.h + np.linspace(0.05, 200, 100)
    curve = np.array([control.optimal_cost_for_rate(r, d) for r in rates])
    err_r = max(abs(control.min_rate_for_cost(c, d) - r) / r for c, r in zip(curve, rates))
    decreasing = bool(np.all(np.diff(curve) < 0))
    tail = (control.optimal_cost_for_rate(d.h + 2000, d) - d.l_min) / d.l_min
    report(5, max(err_c, err_r) <= 1e-9 and decreasing and 0 <= tail <= 1e-9,
           f"round-trip error {max(err_c, err_r):.1e}, decreasing {decreasing}, "
           f"relative gap to l_min at high rate {tail:.1e}", time.perf_counter() - t0, 1)


def test_c06_reconstruction(report, desk_scn):
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(6))
    targets = desk_scn.sample_points
    worst, rank, min_eig = 0.0, 0.0, math.inf
    for _ in range(100):
        hs = desk_scn.channels[:, int(rng.integers(8))]

        def psd(r):
            z = rng.standard_normal((12, r)) + 1j * rng.standard_normal((12, r))
            return z @ z.conj().T * 10 ** rng.uniform(-4, 0)

        ws = [psd(int(rng.integers(1, 13))) for _ in range(2)]
        c = psd(int(rng.integers(1, 13)))
        out = beamform.reconstruct_rank1(ws, c, hs)
        star = [np.outer(v, v.conj()) for v in out["w_star"]]
        for h, a, b in zip(hs, star, ws):
            ref = np.real(h.conj() @ b @ h)
            worst = max(worst, abs(np.real(h.conj() @ a @ h) - ref) / ref)
            sv = np.linalg.svd(a, compute_uv=False)
            rank = max(rank, sv[1] / sv[0])
        before = BeamformerSet(np.zeros((1, 12)), sum(ws) + c)
        after = BeamformerSet(out["w_star"], out["c_star"])
        worst = max(worst, abs(after.power - before.power) / before.power)
        for t in targets:
            g0 = beampattern_gain(t, before, desk_scn.geo)
            worst = max(worst, abs(beampattern_gain(t, after, desk_scn.geo) - g0) / g0)
        min_eig = min(min_eig, np.linalg.eigvalsh(out["c_star"])[0])
    report(6, worst <= 1e-9 and rank <= 1e-6 and min_eig >= -1e-8,
           f"invariance error {worst:.1e}, rank ratio {rank:.1e}, C* min eig {min_eig:.1e}",
           time.perf_counter() - t0, 5)


def test_c07_conic(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    eig_err, gap = 0.0, 0.0
    for n in range(2, 25):
        a = rng.standard_normal((n, n))
        c = (a + a.T) / 2
        sol = solve(lambda_max_problem(c))
        assert sol.status == "optimal"
        eig_err = max(eig_err, abs(sol.objective_value - np.linalg.eigvalsh(c)[-1]))
        gap = max(gap, sol.residuals["gap"])
    viol, n_opt = 0.0, 0
    for _ in range(100):
        p = random_feasible(rng)
        sol = solve(p)
        n_opt += sol.status == "optimal"
        gap = max(gap, sol.residuals["gap"])
        viol = max(viol, violation(p, sol), -min(min_eigenvalue(x) for x in sol.block_values))
    report(7, eig_err <= 1e-6 and gap <= 1e-7 and viol <= 1e-7 and n_opt == 100,
           f"lambda_max error {eig_err:.1e}, max gap {gap:.1e}, {n_opt}/100 optimal, "
           f"max violation {viol:.1e}", time.perf_counter() - t0, 30)


def test_c08_sca(report, desk_scn):
    t0 = time.perf_counter()
    sol = beamform.optimize(desk_scn)
    dt = time.perf_counter() - t0
    etas = [r["eta"] for r in sol.iter_log]
    rises = max([b - a for a, b in zip(etas, etas[1:])] + [0.0])
    conv = len(etas) <= 30 and len(etas) >= 2 and abs(etas[-1] - etas[-2]) <= 1e-4
    rep = beamform.check_feasibility(sol, desk_scn)
    margin = min(rep["min_power_margin"], rep["min_sensing_margin"])
    report(8, rises <= 1e-6 and conv and rep["ok"] and margin >= -1e-6,
           f"eta {sol.eta:.5f} after {len(etas)} iterations, max rise {rises:.1e}, "
           f"min margin {margin:.2e}", dt, 120)


def test_c09_benchmarks(report, desk_doc, desk_scn, desk_solution, nominal_derived):
    t0 = time.perf_counter()
    base = experiments.run_baselines(desk_scn, desk_doc.seed, 10)
    prop, wf, ident = desk_solution.eta, base["water_filling"].eta, base["identical"].eta
    beats = sum(prop <= r.eta for r in base["random"])
    leaders = desk_scn.leaders
    prow = experiments.p_max_sweep(desk_doc, leaders, nominal_derived)
    sweep = [r["proposed"] for r in prow]
    grow = experiments.gamma_sweep(desk_doc, leaders, nominal_derived)
    flags = [r["gamma_th_dbm"] for r in grow if r["infeasible"]]
    ok = (prop <= wf <= ident and beats >= 8 and all(b < a for a, b in zip(sweep, sweep[1:]))
          and bool(flags) and grow[-1]["infeasible"])
    report(9, ok, f"eta proposed {prop:.4f} <= WF {wf:.4f} <= identical {ident:.4f}, "
           f"beats random {beats}/10, P sweep {' '.join(f'{e:.4f}' for e in sweep)}, "
           f"infeasible at Gamma_th {flags} dBm", time.perf_counter() - t0, 600)


def test_c10_closed_loop(report, nominal_derived):
    t0 = time.perf_counter()
    emp = control.simulate_closed_loop(control.ControlModel.diagonal(), n_trials=100, seed=0,
                                       derived=nominal_derived)
    rel = abs(emp - nominal_derived.l_min) / nominal_derived.l_min
    report(10, rel <= 0.1, f"empirical {emp:.4f} vs l_min {nominal_derived.l_min:.4f} "
           f"({100 * rel:.1f}%)", time.perf_counter() - t0, 30)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
