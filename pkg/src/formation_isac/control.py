"""Steady-state LQG quantities and the LQR cost / channel-rate trade-off.

Rates and the intrinsic entropy rate ``h`` are in bits. The closed-form
cost for a given rate works in nats internally (``R' = ln2 * (R - h)``),
which is the same curve as the base-2 rate requirement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DareDivergence(RuntimeError):
    def __init__(self, which: str, residual: float, iters: int):
        super().__init__(f"{which} Riccati iteration did not converge after "
                         f"{iters} iterations (last step {residual:.3e})")
        self.residual = residual


class InfeasibleCost(ValueError):
    """Requested LQR cost is at or below the unconstrained minimum."""


class Unstabilizable(ValueError):
    """Rate is at or below the plant's intrinsic entropy rate."""


def _is_psd(m, floor=-1e-10):
    return np.min(np.linalg.eigvalsh((m + m.T) / 2)) >= floor


@dataclass
class ControlModel:
    """Linear plant ``x+ = A x + B u + v``, ``y = G x + w`` with quadratic costs."""

    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    q: np.ndarray
    r: np.ndarray
    sigma_v: np.ndarray
    sigma_w: np.ndarray
    q1: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("a", "b", "g", "q", "r", "sigma_v", "sigma_w"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        self.q1 = self.q.copy() if self.q1 is None else np.atleast_2d(np.asarray(self.q1, float))
        n1, n2, l = self.a.shape[0], self.b.shape[1], self.g.shape[0]
        shapes = {"a": (n1, n1), "b": (n1, n2), "g": (l, n1), "q": (n1, n1),
                  "q1": (n1, n1), "r": (n2, n2), "sigma_v": (n1, n1), "sigma_w": (l, l)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("q", "q1", "r", "sigma_v", "sigma_w"):
            if not _is_psd(getattr(self, name)):
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def n1(self) -> int:
        return self.a.shape[0]

    @classmethod
    def diagonal(cls, n1=50, a=1.0, sigma_v=0.01, sigma_w=0.001, r=0.0):
        """Identity-structured plant used throughout the experiments (n1 = l = n2)."""
        eye = np.eye(n1)
        return cls(a=a * eye, b=eye, g=eye, q=eye, r=r * eye,
                   sigma_v=sigma_v * eye, sigma_w=sigma_w * eye)


@dataclass
class LqrDerived:
    s: np.ndarray
    p: np.ndarray
    kgain: np.ndarray
    sigma: np.ndarray
    m: np.ndarray
    nmat: np.ndarray
    h: float
    l_min: float
    n1: int
    residuals: dict = field(default_factory=dict)

    @property
    def det_root(self) -> float:
        """``det(N M)^(1/n1)``, computed through log-determinants."""
        return _det_root(self.nmat, self.m)


def _det_root(nmat, m):
    n1 = nmat.shape[0]
    sn, ldn = np.linalg.slogdet(nmat)
    sm, ldm = np.linalg.slogdet(m)
    if sn * sm <= 0:
        return 0.0
    return math.exp((ldn + ldm) / n1)


def _gain_term(model: ControlModel, s):
    """``M = S B (R + B'SB)^-1 B'S``."""
    bs = model.b.T @ s
    return bs.T @ np.linalg.solve(model.r + bs @ model.b, bs)


def solve_dare_s(model: ControlModel, tol=1e-10, max_iter=100_000) -> np.ndarray:
    """Control Riccati solution by fixed-point iteration from ``S0 = Q``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    a = model.a
    s = model.q.copy()
    step = math.inf
    for it in range(1, max_iter + 1):
        s_next = model.q + a.T @ (s - _gain_term(model, s)) @ a
        s_next = (s_next + s_next.T) / 2
        step = np.linalg.norm(s_next - s)
        s = s_next
        if step <= tol:
            return s
        if not np.isfinite(step):
            break
    raise DareDivergence("control", step, it)


def _kalman_gain(model: ControlModel, p):
    g = model.g
    innov = g @ p @ g.T + model.sigma_w
    try:
        return np.linalg.solve(innov, g @ p).T, innov
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc


def solve_dare_p(model: ControlModel, tol=1e-10, max_iter=100_000) -> dict:
    """Filtering Riccati solution, steady Kalman gain and posterior covariance.

    Iterates ``P+ = A P A' - A K (G P G' + Sw) K' A' + Sv`` from ``P0 = Sv``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    a = model.a
    p = model.sigma_v.copy()
    step = math.inf
    for it in range(1, max_iter + 1):
        k, innov = _kalman_gain(model, p)
        p_next = a @ p @ a.T - a @ k @ innov @ k.T @ a.T + model.sigma_v
        p_next = (p_next + p_next.T) / 2
        step = np.linalg.norm(p_next - p)
        p = p_next
        if step <= tol:
            break
        if not np.isfinite(step):
            raise DareDivergence("filtering", step, it)
    else:
        raise DareDivergence("filtering", step, max_iter)
    k, innov = _kalman_gain(model, p)
    sigma = p - k @ innov @ k.T
    return {"P": p, "K": k, "Sigma": (sigma + sigma.T) / 2}


def derive_lqr_terms(model: ControlModel, tol=1e-10, max_iter=100_000) -> LqrDerived:
    """All steady-state quantities entering the rate/cost trade-off."""
    s = solve_dare_s(model, tol, max_iter)
    filt = solve_dare_p(model, tol, max_iter)
    a, sigma = model.a, filt["Sigma"]
    m = _gain_term(model, s)
    nmat = a @ sigma @ a.T - sigma + model.sigma_v
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0:
        raise ValueError("A is singular; the intrinsic entropy rate is undefined")
    h = logdet / math.log(2)
    l_min = float(np.trace(model.sigma_v @ s) + np.trace(sigma @ s @ a.T @ m @ a))
    p = filt["P"]
    k, innov = _kalman_gain(model, p)
    residuals = {
        "S": float(np.linalg.norm(s - (model.q + a.T @ (s - m) @ a))),
        "P": float(np.linalg.norm(p - (a @ p @ a.T - a @ k @ innov @ k.T @ a.T + model.sigma_v))),
    }
    return LqrDerived(s=s, p=p, kgain=filt["K"], sigma=sigma, m=m, nmat=nmat,
                      h=h, l_min=l_min, n1=model.n1, residuals=residuals)


def min_rate_for_cost(l_bar: float, d: LqrDerived) -> float:
    """Smallest average rate (bits per slot) that can sustain LQR cost ``l_bar``."""
    if not l_bar > d.l_min:
        raise InfeasibleCost(f"cost {l_bar} is not above the minimum {d.l_min}")
    n1 = d.n1
    return d.h + n1 / 2 * math.log2(1 + n1 * d.det_root / (l_bar - d.l_min))


def optimal_cost_for_rate(avg_rate: float, d: LqrDerived) -> float:
    """Best LQR cost reachable with an average rate of ``avg_rate`` bits per slot."""
    if not avg_rate > d.h:
        raise Unstabilizable(f"rate {avg_rate} does not exceed the entropy rate {d.h}")
    n1 = d.n1
    r_nats = math.log(2) * (avg_rate - d.h)
    return n1 * d.det_root / math.expm1(2 * r_nats / n1) + d.l_min


def cost_or_inf(avg_rate: float, d: LqrDerived) -> float:
    """:func:`optimal_cost_for_rate`, returning ``inf`` below the entropy rate."""
    try:
        return optimal_cost_for_rate(avg_rate, d)
    except Unstabilizable:
        return math.inf


def _psd_sqrt(m):
    w, v = np.linalg.eigh((m + m.T) / 2)
    return v * np.sqrt(np.clip(w, 0, None))


def simulate_closed_loop(model: ControlModel, rate_budget: float = math.inf,
                         n_slots: int = 200, n_trials: int = 100, seed: int = 0,
                         derived: Optional[LqrDerived] = None) -> float:
    """Monte-Carlo estimate of the time-averaged LQR cost of the LQG loop.

    The controller sees the Kalman estimate corrupted by Gaussian
    "quantisation" noise whose covariance is chosen so that, to first
    order, the excess cost over ``l_min`` matches the rate/cost trade-off at
    ``rate_budget``. This is a validation approximation, not an optimal
    rate-limited scheme. The plant starts from its stationary prior.
    """
    d = derived or derive_lqr_terms(model)
    a, b, g = model.a, model.b, model.g
    n1, n2 = model.n1, b.shape[1]
    lgain = np.linalg.solve(model.r + b.T @ d.s @ b, b.T @ d.s @ a)
    if math.isinf(rate_budget):
        dist = 0.0
    else:
        excess = optimal_cost_for_rate(rate_budget, d) - d.l_min
        weight = np.trace(a.T @ d.m @ a)
        dist = excess / weight if weight > 0 else 0.0

    rng = np.random.Generator(np.random.Philox(seed))
    lv, lw, lp = _psd_sqrt(model.sigma_v), _psd_sqrt(model.sigma_w), _psd_sqrt(d.p)

    x = rng.standard_normal((n_trials, n1)) @ lp.T
    x_pred = np.zeros((n_trials, n1))
    total = np.zeros(n_trials)
    for n in range(1, n_slots + 1):
        y = x @ g.T + rng.standard_normal((n_trials, g.shape[0])) @ lw.T
        x_filt = x_pred + (y - x_pred @ g.T) @ d.kgain.T
        if n == n_slots:
            total += np.einsum("ti,ij,tj->t", x, model.q1, x)
            break
        x_ctrl = x_filt + math.sqrt(dist) * rng.standard_normal((n_trials, n1))
        u = -x_ctrl @ lgain.T
        total += np.einsum("ti,ij,tj->t", x, model.q, x) + np.einsum("ti,ij,tj->t", u, model.r, u)
        x = x @ a.T + u @ b.T + rng.standard_normal((n_trials, n1)) @ lv.T
        x_pred = x_filt @ a.T + u @ b.T
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
            raise DareDivergence("closed-loop simulation", float(np.max(np.abs(x))), n)
    return float(np.mean(total) / n_slots)
