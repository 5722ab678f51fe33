"""Distributed adapt-then-combine diffusion-LMS formation simulator.

Each slot, every UAV

1. elects the leader (smallest y),
2. picks a reference among the UAVs ahead of it (weighted distance),
3. observes its total upwash and the local regressor,
4. adapts its offset estimate with one LMS step,
5. combines the neighbours' intermediate estimates,
6. moves toward ``reference + (lam*dx*, dy*)`` while advecting at ``V0``.

The whole loop is sequential in UAV id order so that the random draws are
canonical: per slot one ``(M, 3)`` standard-normal block is drawn, columns
being observation noise, x motion noise and y motion noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .aero import (AeroParams, EnergyParams, avg_upwash, avg_upwash_grad,
                   optimal_offset, power_saving)


class ContractError(RuntimeError):
    """An operation was called outside its precondition."""


class FormationDivergence(RuntimeError):
    def __init__(self, slot: int, uav: int):
        super().__init__(f"non-finite position at slot {slot}, uav {uav}")
        self.slot = slot
        self.uav = uav


@dataclass
class UavState:
    id: int
    pos: np.ndarray
    lam: int
    est: np.ndarray
    u_max: float = 0.0

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).copy()
        self.est = np.asarray(self.est, dtype=float).copy()
        if self.lam not in (1, -1):
            raise ValueError(f"side preference must be +1 or -1, got {self.lam}")

    def copy(self) -> "UavState":
        return replace(self)


@dataclass(frozen=True)
class FormationConfig:
    """Parameters of one formation.

    ``comb_weights`` are ordered (self, nearest, second nearest). When a
    neighbour set is smaller than three they are renormalised over the
    members present.
    """

    m: int = 9
    kappa: float = 1 / 3
    theta_mix: float = 0.5
    step: float = 2e-3
    comb_weights: tuple = (1 / 3, 1 / 3, 1 / 3)
    v0: float = 5.0
    dt: float = 0.05
    sigma_x2: float = 2e-4
    sigma_y2: float = 2e-4
    sigma_obs2: float = 1e-4
    init_est: Optional[tuple] = None  # defaults to (beta, beta)
    center: tuple = (100.0, 50.0)
    min_sep: Optional[float] = None   # defaults to 0.2 * beta
    lam: Optional[tuple] = None       # per-UAV side override

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("a formation needs at least one UAV")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not 0 < self.theta_mix < 1:
            raise ValueError(f"theta_mix must lie in (0, 1), got {self.theta_mix}")
        if not self.step > 0:
            raise ValueError("LMS step must be positive")
        w = np.asarray(self.comb_weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise ValueError("comb_weights must be three nonnegative numbers summing to 1")
        if min(self.sigma_x2, self.sigma_y2, self.sigma_obs2) < 0:
            raise ValueError("variances must be nonnegative")
        if self.lam is not None and len(self.lam) != self.m:
            raise ValueError("lam override must give one side per UAV")


@dataclass
class FormationTrace:
    """Per-slot snapshots. Slot ``n`` (1-based) is stored at index ``n - 1``.

    ``ref`` uses -1 for "no reference" (the leader).
    """

    positions: np.ndarray   # (n_slots, M, 2)
    est: np.ndarray         # (n_slots, M, 2)
    u_tot: np.ndarray       # (n_slots, M)
    u_max: np.ndarray       # (n_slots, M)
    leader: np.ndarray      # (n_slots,)
    ref: np.ndarray         # (n_slots, M)
    lam: np.ndarray         # (M,)
    power_saving: np.ndarray  # (n_slots,) mean follower power reduction (W)

    @property
    def n_slots(self) -> int:
        return self.positions.shape[0]

    def states(self, slot: int) -> list[UavState]:
        """Reconstruct the UAV states of a 1-based slot."""
        i = slot - 1
        return [UavState(id=m, pos=self.positions[i, m], lam=int(self.lam[m]),
                         est=self.est[i, m], u_max=float(self.u_max[i, m]))
                for m in range(self.positions.shape[1])]


# -- per-slot building blocks -------------------------------------------------

def select_leader(states: Sequence[UavState]) -> int:
    """Index of the UAV with the smallest y; ties go to the smallest id."""
    if not states:
        raise ValueError("empty formation")
    return min(range(len(states)), key=lambda i: (states[i].pos[1], states[i].id))


def find_reference(me: int, states: Sequence[UavState], kappa: float) -> Optional[int]:
    """Reference UAV of ``me``: the closest UAV ahead under ``dx^2 + kappa*dy^2``."""
    mine = states[me].pos
    best, best_key = None, None
    for i, s in enumerate(states):
        if i == me or not s.pos[1] < mine[1]:
            continue
        dx, dy = mine - s.pos
        key = (dx * dx + kappa * dy * dy, s.id)
        if best_key is None or key < best_key:
            best, best_key = i, key
    return best


def neighbor_set(me: int, states: Sequence[UavState]) -> list[int]:
    """``[me, nearest, second nearest]`` by Euclidean distance (ties by id)."""
    mine = states[me].pos
    others = sorted((i for i in range(len(states)) if i != me),
                    key=lambda i: (float(np.sum((states[i].pos - mine) ** 2)), states[i].id))
    return [me] + others[:2]


def _total_and_grad(me: int, states: Sequence[UavState], p: AeroParams):
    pos = np.array([s.pos for s in states])
    rel = pos[me] - np.delete(pos, me, axis=0)
    if rel.size == 0:
        return 0.0, np.zeros(2)
    u = float(np.sum(avg_upwash(rel[:, 0], rel[:, 1], p)))
    gx, gy = avg_upwash_grad(rel[:, 0], rel[:, 1], p)
    return u, np.array([np.sum(gx), np.sum(gy)])


def observe_upwash(me: int, states: Sequence[UavState], p: AeroParams,
                   cfg: FormationConfig, noise: float = 0.0,
                   leader: Optional[int] = None) -> dict:
    """Linearised upwash observation of a follower.

    ``noise`` is a standard-normal draw scaled here by ``sigma_obs``. The
    UAV's running maximum ``u_max`` is updated in place with the noise-free
    total upwash before ``d`` is formed, so the innovation
    ``d - f @ est`` equals ``u_max - u_tot`` plus noise and never drifts
    downhill in the absence of noise.
    """
    if leader is None:
        leader = select_leader(states)
    if me == leader:
        raise ContractError("the leader has no upwash observation")
    s = states[me]
    u_tot, g = _total_and_grad(me, states, p)
    f = np.array([s.lam * g[0], g[1]])
    s.u_max = max(s.u_max, u_tot)
    d = s.u_max - u_tot + float(f @ s.est) + math.sqrt(cfg.sigma_obs2) * noise
    return {"d": d, "f": f, "u_tot": u_tot}


def adapt(est, obs: Optional[dict], cfg: FormationConfig) -> np.ndarray:
    """LMS step; ``obs=None`` marks the leader, whose estimate is kept."""
    est = np.asarray(est, dtype=float)
    if obs is None:
        return est.copy()
    f = obs["f"]
    return est + cfg.step * f * (obs["d"] - float(f @ est))


def combine(psis: Sequence, weights: Sequence[float]) -> np.ndarray:
    """Convex combination of the neighbours' intermediate estimates."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(psis):
        raise ValueError("one weight per neighbour estimate is required")
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError(f"combination weights must be nonnegative and sum to 1, got {w}")
    return np.tensordot(w, np.asarray(psis, dtype=float), axes=1)


def step_motion(state: UavState, ref_pos, dz_star, cfg: FormationConfig,
                noise=(0.0, 0.0), is_leader: bool = False) -> np.ndarray:
    """Next horizontal position. ``noise`` holds standard-normal draws for x and y."""
    vx = math.sqrt(cfg.sigma_x2) * noise[0]
    vy = math.sqrt(cfg.sigma_y2) * noise[1]
    x, y = state.pos
    if is_leader:
        return np.array([x + vx, y - cfg.v0 * cfg.dt + vy])
    if ref_pos is None:
        raise ContractError(f"follower {state.id} has no reference position")
    th = cfg.theta_mix
    return np.array([
        th * x + (1 - th) * (ref_pos[0] + state.lam * dz_star[0]) + vx,
        th * y + (1 - th) * (ref_pos[1] + dz_star[1]) - cfg.v0 * cfg.dt + vy,
    ])


def _neighbor_weights(cfg: FormationConfig, size: int) -> np.ndarray:
    w = np.asarray(cfg.comb_weights[:size], dtype=float)
    if w.sum() <= 0:
        return np.full(size, 1.0 / size)
    return w / w.sum()


# -- initialisation and the main loop ----------------------------------------

def init_formation(cfg: FormationConfig, p: AeroParams,
                   rng: np.random.Generator) -> list[UavState]:
    """Random start: x in center_x + [-M*beta/4, M*beta/4], y in center_y + [0, M*beta/2].

    Pairs closer than ``min_sep`` are resampled. Sides are +1/-1 with equal
    probability unless overridden in ``cfg.lam``.
    """
    m, beta = cfg.m, p.beta
    min_sep = 0.2 * beta if cfg.min_sep is None else cfg.min_sep
    cx, cy = cfg.center
    pos = np.empty((m, 2))
    for i in range(m):
        for _ in range(10_000):
            cand = np.array([cx + rng.uniform(-m * beta / 4, m * beta / 4),
                             cy + rng.uniform(0.0, m * beta / 2)])
            if i == 0 or np.min(np.hypot(*(pos[:i] - cand).T)) >= min_sep:
                break
        else:
            raise RuntimeError("could not place UAVs with the requested separation")
        pos[i] = cand
    lam = cfg.lam if cfg.lam is not None else tuple(rng.choice([1, -1], size=m))
    est = cfg.init_est if cfg.init_est is not None else (beta, beta)
    return [UavState(id=i, pos=pos[i], lam=int(lam[i]), est=est) for i in range(m)]


def run_formation(cfg: FormationConfig, p: AeroParams, init: Sequence[UavState],
                  n_slots: int, seed: int,
                  energy: Optional[EnergyParams] = None) -> FormationTrace:
    """Run the ATC diffusion-LMS formation loop for ``n_slots`` slots."""
    energy = energy or EnergyParams(v0=cfg.v0)
    rng = np.random.Generator(np.random.Philox(seed))
    states = [s.copy() for s in init]
    m = len(states)
    positions = np.empty((n_slots, m, 2))
    est = np.empty((n_slots, m, 2))
    u_tot = np.zeros((n_slots, m))
    u_max = np.empty((n_slots, m))
    leaders = np.empty(n_slots, dtype=int)
    refs = np.full((n_slots, m), -1, dtype=int)
    saving = np.zeros(n_slots)

    for n in range(n_slots):
        draws = rng.standard_normal((m, 3))
        positions[n] = [s.pos for s in states]
        lead = select_leader(states)
        leaders[n] = lead

        psis, ref_pos = [], [None] * m
        for i in range(m):
            if i == lead:
                u_tot[n, i] = _total_and_grad(i, states, p)[0]
                states[i].u_max = max(states[i].u_max, u_tot[n, i])
                psis.append(adapt(states[i].est, None, cfg))
                continue
            r = find_reference(i, states, cfg.kappa)
            refs[n, i] = r
            ref_pos[i] = states[r].pos.copy()
            obs = observe_upwash(i, states, p, cfg, noise=draws[i, 0], leader=lead)
            u_tot[n, i] = obs["u_tot"]
            psis.append(adapt(states[i].est, obs, cfg))
        u_max[n] = [s.u_max for s in states]
        est[n] = [s.est for s in states]
        if m > 1:
            followers = np.arange(m) != lead
            saving[n] = np.mean(power_saving(u_tot[n, followers], energy)["power_reduction"])

        new_pos = []
        for i in range(m):
            nb = neighbor_set(i, states)
            dz = combine([psis[j] for j in nb], _neighbor_weights(cfg, len(nb)))
            states[i].est = dz
            nxt = step_motion(states[i], ref_pos[i], dz, cfg, draws[i, 1:], is_leader=(i == lead))
            if not np.all(np.isfinite(nxt)):
                raise FormationDivergence(n + 1, i)
            new_pos.append(nxt)
        for s, q in zip(states, new_pos):
            s.pos = q

    return FormationTrace(positions=positions, est=est, u_tot=u_tot, u_max=u_max,
                          leader=leaders, ref=refs,
                          lam=np.array([s.lam for s in states]), power_saving=saving)


def v_shape_score(states: Sequence[UavState], p: AeroParams, kappa: float) -> float:
    """Mean distance (m) of each follower's offset from the nearest single-wake optimum.

    A convergence diagnostic: 0 for a formation where every follower sits
    exactly at ``(±dx*, dy*)`` behind its reference.
    """
    if len(states) < 2:
        raise ValueError("need at least two UAVs")
    opt = optimal_offset(p)
    targets = np.array([[opt.dx, opt.dy], [-opt.dx, opt.dy]])
    lead = select_leader(states)
    dists = []
    for i, s in enumerate(states):
        if i == lead:
            continue
        r = find_reference(i, states, kappa)
        off = s.pos - states[r].pos
        dists.append(np.min(np.hypot(*(targets - off).T)))
    return float(np.mean(dists))


def trace_scores(trace: FormationTrace, p: AeroParams, kappa: float) -> np.ndarray:
    """``v_shape_score`` for every slot of a trace."""
    return np.array([v_shape_score(trace.states(n + 1), p, kappa)
                     for n in range(trace.n_slots)])
