"""Fast invariant suite run by ``formation-isac selftest``.

``mutate="gradient"`` swaps in a slightly wrong upwash gradient; the
gradient check must then fail. It exists to show the check has teeth.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import aero, beamform, conic, control, radio


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float


def _perturbed_gradient(offset, lam, others, p):
    g = aero.upwash_gradient(offset, lam, others, p)
    return g * np.array([1.0 + 1e-3, 1.0])


def check_gradient(grad: Callable = aero.upwash_gradient, n: int = 200, seed: int = 0) -> tuple:
    """Analytic regressor vs central differences of the total upwash."""
    p = aero.AeroParams()
    rng = np.random.Generator(np.random.Philox(seed))
    h = 1e-6
    worst = 0.0
    for _ in range(n):
        others = rng.uniform(-3, 3, size=(int(rng.integers(1, 6)), 2))
        off = rng.uniform(-3, 3, size=2)
        lam = int(rng.choice([1, -1]))
        f = lambda x, y: aero.total_upwash_at((x, y), others, p)
        fd = np.array([lam * (f(off[0] + h, off[1]) - f(off[0] - h, off[1])) / (2 * h),
                       (f(off[0], off[1] + h) - f(off[0], off[1] - h)) / (2 * h)])
        an = grad(off, lam, others, p)
        scale = max(np.linalg.norm(fd), 1e-3)
        worst = max(worst, float(np.linalg.norm(an - fd) / scale))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


def check_dare() -> tuple:
    m = control.ControlModel.diagonal(n1=4)
    s = control.solve_dare_s(m)
    ok_s = np.array_equal(s, m.q)
    # Scalar filtering Riccati with a = 1: p^2 - sv p - sv sw = 0.
    sv, sw = 0.01, 0.001
    sc = control.ControlModel.diagonal(n1=1, sigma_v=sv, sigma_w=sw)
    p = control.solve_dare_p(sc, tol=1e-14)["P"][0, 0]
    root = (sv + math.sqrt(sv * sv + 4 * sv * sw)) / 2
    err = abs(p - root)
    return ok_s and err <= 1e-10, f"S==Q: {ok_s}, scalar P error {err:.1e}"


def check_rate_cost() -> tuple:
    d = control.derive_lqr_terms(control.ControlModel.diagonal(n1=5))
    worst = 0.0
    for r in np.linspace(d.h + 0.5, d.h + 40, 25):
        back = control.min_rate_for_cost(control.optimal_cost_for_rate(r, d), d)
        worst = max(worst, abs(back - r) / r)
    return worst <= 1e-9, f"round-trip error {worst:.1e}"


def check_reconstruction(seed: int = 0) -> tuple:
    rng = np.random.Generator(np.random.Philox(seed))
    ns, k = 6, 2

    def psd():
        z = rng.standard_normal((ns, 3)) + 1j * rng.standard_normal((ns, 3))
        return z @ z.conj().T

    hs = rng.standard_normal((k, ns)) + 1j * rng.standard_normal((k, ns))
    w, c = [psd() for _ in range(k)], psd()
    out = beamform.reconstruct_rank1(w, c, hs)
    ws = [np.outer(v, v.conj()) for v in out["w_star"]]
    tot_before = sum(w) + c
    tot_after = sum(ws) + out["c_star"]
    err_tot = np.max(np.abs(tot_after - tot_before)) / np.max(np.abs(tot_before))
    err_h = max(abs(np.real(h.conj() @ (a - b) @ h)) / abs(np.real(h.conj() @ b @ h))
                for h, a, b in zip(hs, ws, w))
    ok = err_tot <= 1e-9 and err_h <= 1e-9 and np.linalg.eigvalsh(out["c_star"])[0] >= -1e-8
    return bool(ok), f"covariance error {err_tot:.1e}, tr(HW) error {err_h:.1e}"


def check_conic(seed: int = 0) -> tuple:
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for n in (2, 3, 5):
        a = rng.standard_normal((n, n))
        a = (a + a.T) / 2
        prob = conic.ConicProblem(
            blocks=[n], free_scalars=0,
            objective=conic.Functional({0: a}),
            constraints=[conic.Constraint(conic.Functional({0: np.eye(n)}), "=", 1.0)],
            sense="max")
        sol = conic.solve(prob)
        worst = max(worst, abs(sol.objective_value - np.linalg.eigvalsh(a)[-1]))
        if sol.status != "optimal":
            return False, f"status {sol.status} at n={n}"
    return worst <= 1e-6, f"max lambda_max error {worst:.1e}"


def check_db() -> tuple:
    xs = np.logspace(-15, 5, 41)
    err = max(abs(radio.dbm_to_watt(radio.watt_to_dbm(x)) - x) / x for x in xs)
    err = max(err, max(abs(radio.db_to_linear(radio.linear_to_db(x)) - x) / x for x in xs))
    return err <= 1e-12, f"round-trip error {err:.1e}"


def run_selftest(mutate: Optional[str] = None, echo: Callable = print) -> list[Check]:
    if mutate not in (None, "gradient"):
        raise ValueError(f"unknown mutation {mutate!r}")
    grad = _perturbed_gradient if mutate == "gradient" else aero.upwash_gradient
    suite = [
        ("upwash gradient", lambda: check_gradient(grad)),
        ("DARE identities", check_dare),
        ("rate/cost round trip", check_rate_cost),
        ("rank-one reconstruction", check_reconstruction),
        ("conic lambda_max", check_conic),
        ("dB round trip", check_db),
    ]
    results = []
    for name, fn in suite:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        chk = Check(name, bool(ok), detail, time.perf_counter() - t0)
        results.append(chk)
        echo(f"{'PASS' if chk.passed else 'FAIL'}  {name:<26} {detail}  ({chk.seconds:.2f} s)")
    return results
