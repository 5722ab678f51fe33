"""Min-max LQR dual-functional beamforming by successive convex approximation.

Each outer iteration linearises the interference logarithm of every
formation's rate at the current point, then minimises the worst LQR cost
``eta`` of the convexified relaxed problem by a one-dimensional root search
on the max-margin feasibility value ``s(eta)``. Every probe is a linear SDP:
the remaining concave ``log2`` terms are replaced by tangent cuts that are
refined until the cut violation is small. The relaxed solution is made
rank one by the standard reconstruction, which leaves all rates and gains
unchanged.

Channels are normalised by the noise standard deviation inside the SDP so
the log arguments are ``1 + (received power) / sigma^2``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import conic
from .conic import Constraint, ConicProblem, Functional
from .control import LqrDerived, cost_or_inf, min_rate_for_cost
from .radio import (ArrayGeometry, BeamformerSet, ChannelConst, channel,
                    steering_vector)

LOG2E = 1.0 / math.log(2.0)


class BeamformInfeasible(RuntimeError):
    """No beamformer satisfies the power / sensing constraints."""

    def __init__(self, family: str, detail: str):
        super().__init__(f"infeasible ({family}): {detail}")
        self.family = family
        self.detail = detail


class DegenerateDirection(ValueError):
    """A relaxed beamformer carries no power towards its own leader."""


@dataclass
class BfScenario:
    """Everything the beamforming design needs.

    ``leaders`` has shape ``(K, N, 3)``. ``slot_weight`` multiplies the
    summed sensing gain, so that ``N`` representative slots can stand in
    for a longer horizon.
    """

    geo: ArrayGeometry
    cc: ChannelConst
    leaders: np.ndarray
    sample_points: np.ndarray
    gamma_th: float
    p_max: float
    control: list
    slot_weight: float = 1.0

    def __post_init__(self):
        self.leaders = np.asarray(self.leaders, dtype=float)
        if self.leaders.ndim == 2:
            self.leaders = self.leaders[:, None, :]
        self.sample_points = np.atleast_2d(np.asarray(self.sample_points, dtype=float))
        if self.leaders.ndim != 3 or self.leaders.shape[2] != 3:
            raise ValueError("leaders must have shape (K, N, 3)")
        if self.leaders.shape[1] < 1:
            raise ValueError("need at least one slot")
        if self.sample_points.shape[0] < 1 or self.sample_points.shape[1] != 3:
            raise ValueError("need at least one 3-D sample point")
        if self.gamma_th < 0 or not self.p_max > 0 or not self.slot_weight > 0:
            raise ValueError("gamma_th must be nonnegative; p_max and slot_weight positive")
        if len(self.control) != self.leaders.shape[0]:
            raise ValueError("one control entry per formation required")
        k, n = self.leaders.shape[:2]
        self.channels = np.array([[channel(self.leaders[i, s], self.geo, self.cc)
                                   for s in range(n)] for i in range(k)])
        self.steer = np.array([steering_vector(t, self.geo) for t in self.sample_points])
        gbs = np.asarray(self.geo.gbs_pos, dtype=float)
        self.sense_rhs = self.gamma_th * np.sum((self.sample_points - gbs) ** 2, axis=1)

    @property
    def k(self) -> int:
        return self.leaders.shape[0]

    @property
    def n_slots(self) -> int:
        return self.leaders.shape[1]

    @property
    def l_min(self) -> float:
        return max(d.l_min for d in self.control)


@dataclass
class BeamSolution:
    slots: list                 # BeamformerSet per slot
    eta: float
    rates: np.ndarray           # average rate per formation (bits / slot)
    gains: np.ndarray           # weighted summed beampattern gain per sample point
    iter_log: list = field(default_factory=list)
    label: str = "proposed"

    def to_json(self) -> dict:
        def interleave(z):
            z = np.asarray(z, dtype=complex)
            return np.stack([z.real, z.imag], axis=-1).tolist()

        return {
            "schema": "beam_solution/1",
            "label": self.label,
            "eta": self.eta,
            "rates": self.rates.tolist(),
            "gains": self.gains.tolist(),
            "slots": [{"w": interleave(s.w), "c_d": interleave(s.c_d)} for s in self.slots],
            "iter_log": self.iter_log,
        }


# -- evaluation -------------------------------------------------------------------

def _sinr_matrix(scn: BfScenario, w_mats, c_mats) -> np.ndarray:
    """SINR of every (formation, slot) from covariance-form beamformers.

    ``w_mats``: (K, N, Ns, Ns); ``c_mats``: (N, Ns, Ns).
    """
    g = scn.channels
    k, n = g.shape[:2]
    out = np.empty((k, n))
    for s in range(n):
        for i in range(k):
            h = g[i, s]
            rx = np.array([np.real(h.conj() @ w_mats[j][s] @ h) for j in range(k)])
            den = rx.sum() - rx[i] + np.real(h.conj() @ c_mats[s] @ h) + scn.cc.noise_power
            out[i, s] = max(rx[i], 0.0) / den
    return out


def _avg_rates(scn: BfScenario, sinr) -> np.ndarray:
    return scn.cc.bandwidth * np.mean(np.log2(1 + sinr), axis=1)


def _eta(scn: BfScenario, rates) -> float:
    return max(cost_or_inf(r, d) for r, d in zip(rates, scn.control))


def _slot_mats(slots: Sequence[BeamformerSet], k: int):
    w_mats = [[np.outer(s.w[i], s.w[i].conj()) for s in slots] for i in range(k)]
    c_mats = [s.c_d for s in slots]
    return w_mats, c_mats


def _gains(scn: BfScenario, slots) -> np.ndarray:
    total = sum(s.covariance for s in slots)
    a = scn.steer
    return scn.slot_weight * np.real(np.einsum("ji,ik,jk->j", a.conj(), total, a))


def evaluate(scn: BfScenario, slots: Sequence[BeamformerSet], label="", iter_log=None) -> BeamSolution:
    w_mats, c_mats = _slot_mats(slots, scn.k)
    rates = _avg_rates(scn, _sinr_matrix(scn, w_mats, c_mats))
    return BeamSolution(slots=list(slots), eta=_eta(scn, rates), rates=rates,
                        gains=_gains(scn, slots), iter_log=list(iter_log or []), label=label)


# -- SCA pieces ---------------------------------------------------------------------

def sca_linearize(k: int, slot: int, channels, current: BeamformerSet,
                  noise_power: float) -> dict:
    """Affine upper bound of the interference-plus-noise logarithm (base 2).

    ``channels[k]`` is the slot's channel of formation ``k``. Returns the
    gradient matrix ``d_matrix`` and the anchor value ``r_hat_lo``.
    """
    h = np.asarray(channels[k])
    hh = np.outer(h, h.conj())
    interf = sum(float(np.abs(h.conj() @ current.w[i]) ** 2)
                 for i in range(current.w.shape[0]) if i != k)
    den = interf + float(np.real(h.conj() @ current.c_d @ h)) + noise_power
    return {"d_matrix": LOG2E * hh / den, "r_hat_lo": math.log2(den)}


def rate_lower_bound(k: int, channels, w_mats, c_mat, noise_power: float,
                     lin: dict, anchor: BeamformerSet) -> float:
    """Concave lower bound on the slot rate of formation ``k`` (bits, unit bandwidth)."""
    h = np.asarray(channels[k])
    hh = np.outer(h, h.conj())
    total = sum(np.real(np.trace(hh @ w)) for w in w_mats) + np.real(np.trace(hh @ c_mat))
    d = lin["d_matrix"]
    shift = sum(np.real(np.trace(d @ (w_mats[i] - np.outer(anchor.w[i], anchor.w[i].conj()))))
                for i in range(len(w_mats)) if i != k)
    shift += np.real(np.trace(d @ (c_mat - anchor.c_d)))
    return math.log2(total + noise_power) - (lin["r_hat_lo"] + shift)


def reconstruct_rank1(w_tilde: Sequence, c_tilde, channels) -> dict:
    """Rank-one beamformers with the same received powers and total covariance."""
    w_star, outer = [], []
    for w, h in zip(w_tilde, channels):
        w = np.asarray(w, dtype=complex)
        h = np.asarray(h, dtype=complex)
        q = float(np.real(h.conj() @ w @ h))
        if not q > 0:
            raise DegenerateDirection("relaxed beamformer is orthogonal to its channel")
        v = w @ h / math.sqrt(q)
        w_star.append(v)
        outer.append(np.outer(v, v.conj()))
    c_star = sum(np.asarray(w, dtype=complex) for w in w_tilde) + np.asarray(c_tilde) - sum(outer)
    c_star = (c_star + c_star.conj().T) / 2
    return {"w_star": np.array(w_star), "c_star": c_star}


# -- conic problem assembly -----------------------------------------------------------

class _Layout:
    """Variable indices of the probe SDP.

    The hypograph variables ``t`` are 1x1 blocks (``t >= 0`` is implied
    since every log argument is at least one); the margin is the only free
    scalar.
    """

    def __init__(self, k: int, n: int, ns: int):
        self.k, self.n, self.ns = k, n, ns
        self.n_mat = (k + 1) * n
        self.blocks = [2 * ns] * self.n_mat + [1] * (k * n)

    def w(self, i, s):
        return s * (self.k + 1) + i

    def c(self, s):
        return s * (self.k + 1) + self.k

    def t(self, i, s):
        return self.n_mat + i * self.n + s

    margin = 0


_ONE = np.ones((1, 1))


def _embed_half(m):
    """Coefficient whose inner product with an embedded variable is ``Re tr(m W)``."""
    return conic.hermitian_embed(m) / 2


@dataclass
class _Lin:
    """Per (formation, slot) linearisation in noise-normalised units."""

    hh: np.ndarray       # embedded/2 normalised channel outer product
    dd: np.ndarray       # embedded/2 gradient matrix
    const: float         # r_lo - <D, interference at anchor>
    d: np.ndarray        # complex gradient matrix


def _linearisations(scn: BfScenario, point: Sequence[BeamformerSet]) -> dict:
    sigma2 = scn.cc.noise_power
    lins = {}
    for s, bf in enumerate(point):
        g = scn.channels[:, s] / math.sqrt(sigma2)
        for i in range(scn.k):
            lin = sca_linearize(i, s, g, bf, 1.0)
            hh = np.outer(g[i], g[i].conj())
            anchor = sum(np.outer(bf.w[j], bf.w[j].conj()) for j in range(scn.k) if j != i) + bf.c_d
            const = lin["r_hat_lo"] - float(np.real(np.trace(lin["d_matrix"] @ anchor)))
            lins[i, s] = _Lin(_embed_half(hh), _embed_half(lin["d_matrix"]), const,
                              lin["d_matrix"])
    return lins


def _power_rows(lay: _Layout, p_max: float):
    half_eye = np.eye(2 * lay.ns) / 2
    cons = []
    for s in range(lay.n):
        blocks = {lay.c(s): half_eye}
        blocks.update({lay.w(i, s): half_eye for i in range(lay.k)})
        cons.append(Constraint(Functional(blocks), "<=", p_max))
    return cons


def _sense_coeffs(scn: BfScenario):
    return [scn.slot_weight * _embed_half(np.outer(a, a.conj())) for a in scn.steer]


def build_feasibility(scn: BfScenario, eta: float, lin_points: dict, cuts: dict) -> ConicProblem:
    """Max-margin form of the convexified problem at a fixed ``eta``.

    Maximises ``s`` subject to power, sensing and, for every formation,
    ``(W/N) sum_n [t_kn - lin_kn(X)] >= rho_k(eta) + s`` where each ``t_kn``
    is bounded by the tangent cuts of ``log2`` listed in ``cuts[k, n]``.
    ``eta`` is feasible for the relaxation iff the optimal ``s`` is >= 0.
    """
    if not all(eta > d.l_min for d in scn.control):
        raise ValueError(f"eta = {eta} must exceed every l_min")
    lay = _Layout(scn.k, scn.n_slots, scn.geo.n_s)
    cons = _power_rows(lay, scn.p_max)
    for coeff, rhs in zip(_sense_coeffs(scn), scn.sense_rhs):
        blocks = {}
        for s in range(lay.n):
            blocks[lay.c(s)] = coeff
            blocks.update({lay.w(i, s): coeff for i in range(lay.k)})
        cons.append(Constraint(Functional(blocks), ">=", float(rhs)))
    for (i, s), points in cuts.items():
        lin = lin_points[i, s]
        for x0 in points:
            slope = LOG2E / x0
            blocks = {lay.w(j, s): -slope * lin.hh for j in range(lay.k)}
            blocks[lay.c(s)] = -slope * lin.hh
            blocks[lay.t(i, s)] = _ONE
            cons.append(Constraint(Functional(blocks), "<=",
                                   math.log2(x0) - LOG2E + slope))
    scale = scn.cc.bandwidth / lay.n
    for i, d in enumerate(scn.control):
        blocks, scalars = {}, {lay.margin: -1.0}
        rhs = min_rate_for_cost(eta, d)
        for s in range(lay.n):
            lin = lin_points[i, s]
            blocks[lay.t(i, s)] = scale * _ONE
            for j in range(lay.k):
                if j != i:
                    blocks[lay.w(j, s)] = -scale * lin.dd
            blocks[lay.c(s)] = -scale * lin.dd
            rhs += scale * lin.const
        cons.append(Constraint(Functional(blocks, scalars), ">=", rhs))
    return ConicProblem(blocks=lay.blocks, free_scalars=1,
                        objective=Functional(scalars={lay.margin: 1.0}),
                        constraints=cons, sense="max")


def _unpack(scn: BfScenario, sol: conic.ConicSolution):
    lay = _Layout(scn.k, scn.n_slots, scn.geo.n_s)
    w = [[conic.hermitian_extract(sol.block_values[lay.w(i, s)]) for s in range(lay.n)]
         for i in range(lay.k)]
    c = [conic.hermitian_extract(sol.block_values[lay.c(s)]) for s in range(lay.n)]
    return w, c


def _log_args(scn: BfScenario, w, c) -> np.ndarray:
    """``1 + received power / sigma^2`` for every (formation, slot)."""
    g = scn.channels / math.sqrt(scn.cc.noise_power)
    out = np.empty((scn.k, scn.n_slots))
    for s in range(scn.n_slots):
        tot = sum(w[j][s] for j in range(scn.k)) + c[s]
        for i in range(scn.k):
            out[i, s] = 1 + float(np.real(g[i, s].conj() @ tot @ g[i, s]))
    return out


@dataclass
class _Probe:
    eta: float
    margin: float
    w: list
    c: list
    rounds: int
    violation: float


def _looseness(x0, x):
    """How far the tangent of ``log2`` at ``x0`` lies above ``log2`` at ``x``."""
    return math.log2(x0) + LOG2E * (x - x0) / x0 - math.log2(x)


def _add_cut(points: deque, x: float, keep: int):
    """Add a tangent point, keeping only the ``keep`` cuts tightest at ``x``.

    Dropping cuts that are slack near the current solution keeps the
    probe SDP small and well conditioned; the deque's own length cap still
    evicts oldest-first.
    """
    points.append(x)
    if len(points) > keep:
        ranked = sorted(points, key=lambda x0: _looseness(x0, x))[:keep]
        kept = [x0 for x0 in points if x0 in ranked]
        points.clear()
        points.extend(kept)


def _exact_margin(scn: BfScenario, eta, lins, w, c, x) -> float:
    """``min_k`` of the exact concave rate bound minus its target at ``eta``."""
    out = math.inf
    for i, d in enumerate(scn.control):
        total = 0.0
        for s in range(scn.n_slots):
            lin = lins[i, s]
            interf = sum(w[j][s] for j in range(scn.k) if j != i) + c[s]
            total += math.log2(x[i, s]) - float(np.real(np.sum(lin.d * interf.T))) - lin.const
        out = min(out, scn.cc.bandwidth * total / scn.n_slots - min_rate_for_cost(eta, d))
    return out


def _probe(scn, eta, lins, cuts, cut_tol, solver_tol, max_rounds=60, keep=4) -> _Probe:
    """Max-margin value at ``eta`` with cuts refined until the log terms are tight.

    The returned margin is evaluated with exact logarithms at the solution,
    so a nonnegative value certifies feasibility of the convexified problem.
    A negative cut-model margin certifies infeasibility, as the cuts only
    over-estimate.
    """
    lay = _Layout(scn.k, scn.n_slots, scn.geo.n_s)
    for rounds in range(1, max_rounds + 1):
        sol = conic.solve(build_feasibility(scn, eta, lins, cuts), tol=solver_tol)
        if sol.status not in ("optimal", "max_iter"):
            raise BeamformInfeasible("solver", f"probe at eta={eta:.6g} returned {sol.status}")
        w, c = _unpack(scn, sol)
        x = np.maximum(_log_args(scn, w, c), 1.0)
        t = np.array([[sol.block_values[lay.t(i, s)][0, 0] for s in range(lay.n)]
                      for i in range(lay.k)])
        gaps = t - np.log2(x)
        model = float(sol.scalar_values[lay.margin])
        exact = _exact_margin(scn, eta, lins, w, c, x)
        if model < 0 or exact >= 0 or model - exact <= cut_tol:
            break
        for i in range(lay.k):
            for s in range(lay.n):
                if gaps[i, s] > cut_tol:
                    _add_cut(cuts[i, s], float(x[i, s]), keep)
    margin = model if model < 0 else exact
    return _Probe(eta, margin, w, c, rounds, float(np.max(gaps)))


def _reconstruct(scn: BfScenario, w, c) -> list:
    slots = []
    for s in range(scn.n_slots):
        w_t = [w[i][s] for i in range(scn.k)]
        w_t = [(m + m.conj().T) / 2 for m in w_t]
        try:
            out = reconstruct_rank1(w_t, c[s], scn.channels[:, s])
            slots.append(BeamformerSet(out["w_star"], _clip_psd(out["c_star"])))
        except DegenerateDirection:
            slots.append(BeamformerSet(np.zeros((scn.k, scn.geo.n_s)),
                                       _clip_psd(sum(w_t) + c[s])))
    return slots


def _clip_psd(m, rel=1e-12):
    m = (m + m.conj().T) / 2
    vals, vecs = np.linalg.eigh(m)
    floor = rel * max(1.0, float(np.max(np.abs(vals))))
    if vals[0] >= 0:
        return m
    if vals[0] < -1e3 * floor:
        raise ValueError(f"matrix is not PSD (min eigenvalue {vals[0]:.3e})")
    vals = np.clip(vals, 0, None)
    return (vecs * vals) @ vecs.conj().T


def sensing_capacity(scn: BfScenario, solver_tol=1e-8) -> float:
    """Largest ``s`` such that a power-feasible covariance reaches ``s * Gamma_th d^2`` everywhere.

    Beams and the dedicated covariance are interchangeable for sensing, so
    only one covariance per slot is needed. Returns ``inf`` for
    ``Gamma_th = 0``.
    """
    if scn.gamma_th == 0:
        return math.inf
    n, ns = scn.n_slots, scn.geo.n_s
    blocks = [2 * ns] * n
    cons = [Constraint(Functional({s: np.eye(2 * ns) / 2}), "<=", scn.p_max) for s in range(n)]
    for coeff, rhs in zip(_sense_coeffs(scn), scn.sense_rhs):
        cons.append(Constraint(Functional({s: coeff for s in range(n)}, {0: -float(rhs)}), ">=", 0.0))
    prob = ConicProblem(blocks, 1, Functional(scalars={0: 1.0}), cons, "max")
    sol = conic.solve(prob, tol=solver_tol)
    return float(sol.scalar_values[0])


def initial_point(scn: BfScenario) -> list:
    """Identical-power matched filter plus a small isotropic sensing covariance."""
    ns = scn.geo.n_s
    eps = 1e-4 * scn.p_max / ns
    base = baseline_identical_power(scn, p_total=scn.p_max - eps * ns)
    return [BeamformerSet(s.w, eps * np.eye(ns)) for s in base.slots]


def _feasible(scn: BfScenario, slots, tol=1e-6) -> bool:
    gains = _gains(scn, slots)
    power = max(s.power for s in slots)
    return bool(np.all(gains >= scn.sense_rhs - tol) and power <= scn.p_max + tol)


def optimize(scn: BfScenario, init: Optional[Sequence[BeamformerSet]] = None,
             tol: float = 1e-4, max_outer: int = 30, cut_tol: float = 1e-7,
             solver_tol: float = 1e-8, max_cuts: int = 50) -> BeamSolution:
    """SCA loop with root search on ``eta`` and rank-one reconstruction.

    The iteration log holds one row per accepted outer iteration with
    columns ``outer_iter, eta, probe_count, cuts_total, max_violation``.

    Raises
    ------
    BeamformInfeasible
        If the power and sensing constraints cannot be met together.
    """
    cap = sensing_capacity(scn)
    if cap < 1.0:
        raise BeamformInfeasible(
            "sensing", f"at most {cap:.4f} of the required beampattern gain is reachable "
                       f"with P_max = {scn.p_max:.4g} W")
    point = list(init) if init is not None else initial_point(scn)
    if max(s.power for s in point) > scn.p_max * (1 + 1e-9):
        raise ValueError("initial point violates the power budget")
    current = evaluate(scn, point)
    eta_cur = current.eta if _feasible(scn, point) else math.inf
    l_lo = scn.l_min
    log, best = [], None
    for outer in range(1, max_outer + 1):
        lins = _linearisations(scn, point)
        x0 = _log_args(scn, *_slot_mats(point, scn.k))
        cuts = {(i, s): deque([float(x0[i, s])], maxlen=max_cuts)
                for i in range(scn.k) for s in range(scn.n_slots)}
        run = lambda eta: _probe(scn, eta, lins, cuts, cut_tol, solver_tol)
        probes = []

        # Upper end of the bracket: the current point is feasible at its own eta.
        if math.isfinite(eta_cur):
            hi = run(eta_cur)
        else:
            hi = run(2 * max(current.eta if math.isfinite(current.eta) else 0, l_lo + 1))
            while hi.margin < 0:
                probes.append(hi)
                nxt = l_lo + 10 * (hi.eta - l_lo)
                if nxt > 1e3 * max(1.0, hi.eta):
                    raise BeamformInfeasible("rate", "no feasible eta found")
                hi = run(nxt)
        probes.append(hi)
        lo = run(l_lo * (1 + 1e-6) + 1e-12)
        probes.append(lo)
        if lo.margin >= 0:
            hi = lo
        else:
            hi, lo = _root_search(run, lo, hi, l_lo, tol, probes)

        slots = _reconstruct(scn, hi.w, hi.c)
        cand = evaluate(scn, slots)
        n_cuts = sum(len(v) for v in cuts.values())
        viol = hi.violation
        if best is not None and cand.eta > eta_cur + 1e-9:
            break  # solver noise would make the sequence increase
        point, current, eta_prev, eta_cur = slots, cand, eta_cur, cand.eta
        best = cand
        log.append({"outer_iter": outer, "eta": cand.eta, "probe_count": len(probes),
                    "cuts_total": n_cuts, "max_violation": viol})
        if abs(eta_prev - eta_cur) <= tol:
            break
    best.iter_log = log
    best.label = "proposed"
    return best


def _root_search(run, lo: _Probe, hi: _Probe, l_lo, tol, probes):
    """Illinois regula falsi on the margin in ``z = log(eta - l_min)``."""
    z = lambda e: math.log(e - l_lo)
    f_lo, f_hi = lo.margin, hi.margin
    side = 0
    while hi.eta - lo.eta > tol and len(probes) < 60:
        z_lo, z_hi = z(lo.eta), z(hi.eta)
        zc = z_hi - f_hi * (z_hi - z_lo) / (f_hi - f_lo) if f_hi != f_lo else (z_lo + z_hi) / 2
        # Keep the probe strictly inside and prevent stalls near an end.
        width = z_hi - z_lo
        zc = min(max(zc, z_lo + 0.01 * width), z_hi - 0.01 * width)
        if hi.eta - (l_lo + math.exp(zc)) < tol / 2:
            zc = z(max(hi.eta - tol / 2, lo.eta + tol / 4))
        mid = run(l_lo + math.exp(zc))
        probes.append(mid)
        if mid.margin >= 0:
            hi, f_hi = mid, mid.margin
            if side == 1:
                f_lo /= 2
            side = 1
        else:
            lo, f_lo = mid, mid.margin
            if side == -1:
                f_hi /= 2
            side = -1
        if 0 <= hi.margin <= 1e-9:
            break
    return hi, lo


# -- baselines ------------------------------------------------------------------------

def _matched(h):
    return h / np.linalg.norm(h)


def baseline_identical_power(scn: BfScenario, p_total: Optional[float] = None) -> BeamSolution:
    p = scn.p_max if p_total is None else p_total
    ns = scn.geo.n_s
    slots = [BeamformerSet(np.array([math.sqrt(p / scn.k) * _matched(scn.channels[i, s])
                                     for i in range(scn.k)]), np.zeros((ns, ns)))
             for s in range(scn.n_slots)]
    return evaluate(scn, slots, label="identical")


def baseline_random(scn: BfScenario, seed: int) -> BeamSolution:
    rng = np.random.Generator(np.random.Philox(seed))
    ns = scn.geo.n_s
    slots = []
    for _ in range(scn.n_slots):
        z = rng.standard_normal((scn.k, ns)) + 1j * rng.standard_normal((scn.k, ns))
        z *= math.sqrt(scn.p_max / scn.k) / np.linalg.norm(z, axis=1, keepdims=True)
        slots.append(BeamformerSet(z, np.zeros((ns, ns))))
    return evaluate(scn, slots, label="random")


def water_fill(gains, p_total: float) -> np.ndarray:
    """Sum-rate optimal split of ``p_total`` over parallel channels with power gains ``gains``."""
    g = np.asarray(gains, dtype=float)
    out = np.zeros_like(g)
    active = np.flatnonzero(g > 0)
    if active.size == 0:
        return out
    inv = np.sort(1.0 / g[active])
    # Largest active set whose water level clears every inverse gain.
    for m in range(inv.size, 0, -1):
        level = (p_total + inv[:m].sum()) / m
        if level > inv[m - 1]:
            break
    out[active] = np.clip(level - 1.0 / g[active], 0, None)
    return out


def _zero_forcing(hs):
    """Unit-norm zero-forcing directions (pseudo-inverse columns)."""
    hmat = np.asarray(hs).conj()  # rows h_k^H
    v = np.linalg.pinv(hmat)
    return (v / np.linalg.norm(v, axis=0, keepdims=True)).T


def baseline_water_filling(scn: BfScenario, directions: str = "zf") -> BeamSolution:
    """Water-filling power split over per-leader effective gains, ``C_d = 0``.

    ``directions="zf"`` uses zero-forcing beams, so the split acts on
    interference-free parallel channels; ``"mf"`` uses matched filters and
    ignores interference when computing the split.
    """
    ns = scn.geo.n_s
    slots = []
    for s in range(scn.n_slots):
        hs = scn.channels[:, s]
        if directions == "zf":
            dirs = _zero_forcing(hs)
        elif directions == "mf":
            dirs = np.array([_matched(h) for h in hs])
        else:
            raise ValueError(f"unknown direction rule {directions!r}")
        eff = np.abs(np.einsum("ki,ki->k", hs.conj(), dirs)) ** 2 / scn.cc.noise_power
        p = water_fill(eff, scn.p_max)
        slots.append(BeamformerSet(np.sqrt(p)[:, None] * dirs, np.zeros((ns, ns))))
    return evaluate(scn, slots, label="water_filling")


def check_feasibility(sol: BeamSolution, scn: BfScenario) -> dict:
    """Margins of every constraint; all should be >= 0 for a feasible design."""
    power = np.array([scn.p_max - s.power for s in sol.slots])
    gains = _gains(scn, sol.slots)
    sensing = gains - scn.sense_rhs
    fresh = evaluate(scn, sol.slots)
    rate_gap = float(np.max(np.abs(fresh.rates - sol.rates)))
    eta_gap = abs(fresh.eta - sol.eta) if math.isfinite(sol.eta) else 0.0
    ranks = [float(np.linalg.svd(np.outer(w, w.conj()), compute_uv=False)[1]
                   / max(np.linalg.norm(w) ** 2, 1e-300))
             for s in sol.slots for w in s.w]
    c_min = min(float(np.linalg.eigvalsh(s.c_d)[0]) for s in sol.slots)
    return {
        "power": power, "sensing": sensing,
        "min_power_margin": float(power.min()), "min_sensing_margin": float(sensing.min()),
        "rate_consistency": rate_gap, "eta_consistency": eta_gap,
        "max_rank_ratio": max(ranks, default=0.0), "min_c_eig": c_min,
        "ok": bool(power.min() >= -1e-6 and sensing.min() >= -1e-6 and rate_gap <= 1e-9
                   and c_min >= -1e-8),
    }
