"""Horseshoe-vortex upwash model for fixed-wing formation flight.

Coordinates follow the formation frame: UAVs fly along -y, so a trailing
aircraft sits at larger y than the one generating the wake. Every offset
is ``trailing - generator``. Velocities are positive upward.

All functions accept scalars or broadcastable numpy arrays.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize


@dataclass(frozen=True)
class AeroParams:
    """Wake constants of a single UAV.

    Parameters
    ----------
    beta : float
        Wingspan (m).
    alpha : float
        Separation of the two trailing vortices (m).
    zeta : float
        Vortex circulation (m^2/s).
    r_c : float
        Vortex core radius (m).
    mu : float
        Mean of the Gaussian decay along the flight axis (m).
    sigma0 : float
        Spread of the Gaussian decay; enters the exponent as ``2*sigma0`` (m^2).
    """

    beta: float = 1.0
    alpha: float = math.pi / 4
    zeta: float = 2.0
    r_c: float = 0.1
    mu: float = 0.7
    sigma0: float = 4.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"wingspan must be positive, got {self.beta}")
        if not self.r_c > 0:
            raise ValueError(f"core radius must be positive, got {self.r_c}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if not 0 < self.alpha < self.beta:
            raise ValueError(
                f"vortex separation must lie in (0, beta), got {self.alpha}")


class RelOffset(NamedTuple):
    """Offset of a trailing UAV from a reference UAV (m)."""

    dx: float
    dy: float


@dataclass(frozen=True)
class EnergyParams:
    """Lift/drag constants used for the energy bookkeeping.

    ``lift`` is F_l (N), ``v0`` the airspeed (m/s), ``c`` and ``s0`` the
    lumped parasite-drag coefficient and reference area.
    """

    lift: float = 20.0
    v0: float = 5.0
    c: float = 0.6
    s0: float = 0.5

    def __post_init__(self):
        if self.lift < 0 or self.c < 0 or self.s0 < 0:
            raise ValueError("lift, c and s0 must be nonnegative")
        if not self.v0 > 0:
            raise ValueError(f"airspeed must be positive, got {self.v0}")


def _longitudinal(dy, p: AeroParams):
    half = p.beta / 2
    return (1.0 + dy / np.sqrt(half * half + dy * dy)) * np.exp(
        -((dy - p.mu) ** 2) / (2 * p.sigma0))


def _longitudinal_dy(dy, p: AeroParams):
    half = p.beta / 2
    s = np.sqrt(half * half + dy * dy)
    decay = np.exp(-((dy - p.mu) ** 2) / (2 * p.sigma0))
    return (half * half / s**3 - (1.0 + dy / s) * (dy - p.mu) / p.sigma0) * decay


def induced_velocity(dx, dy, p: AeroParams):
    """Velocity induced by one trailing vortex line at lateral distance ``dx``.

    Burnham-Hallock core with Gaussian decay along the flight axis. Odd in
    ``dx`` and zero on the vortex axis.
    """
    dx = np.asarray(dx, dtype=float)
    core = dx / (p.r_c**2 + dx * dx)
    out = p.zeta / (2 * np.pi) * core * _longitudinal(dy, p)
    return out[()] if out.ndim == 0 else out


def vortex_pair_velocity(dx, dy, p: AeroParams):
    """Point velocity of the two counter-rotating wingtip vortices at ``±alpha/2``.

    This is the integrand whose wingspan average is :func:`avg_upwash`.
    """
    a = p.alpha / 2
    dx = np.asarray(dx, dtype=float)
    return induced_velocity(dx - a, dy, p) - induced_velocity(dx + a, dy, p)


def _lateral_log(dx, p: AeroParams):
    a, b, r2 = p.alpha / 2, p.beta / 2, p.r_c**2
    return (np.log(((dx - a + b) ** 2 + r2) / ((dx - a - b) ** 2 + r2))
            - np.log(((dx + a + b) ** 2 + r2) / ((dx + a - b) ** 2 + r2)))


def _lateral_log_dx(dx, p: AeroParams):
    a, b, r2 = p.alpha / 2, p.beta / 2, p.r_c**2
    terms = ((dx - a + b, 1.0), (dx - a - b, -1.0),
             (dx + a + b, -1.0), (dx + a - b, 1.0))
    return sum(sign * 2 * t / (t * t + r2) for t, sign in terms)


def avg_upwash(dx, dy, p: AeroParams):
    """Upwash averaged over the trailing UAV's wingspan (m/s).

    Closed form of ``(1/beta) * integral of vortex_pair_velocity`` over
    ``[dx - beta/2, dx + beta/2]``. Even in ``dx``.
    """
    dx = np.asarray(dx, dtype=float)
    out = (p.zeta / (4 * np.pi * p.beta)) * _lateral_log(dx, p) * _longitudinal(dy, p)
    return out[()] if np.ndim(out) == 0 else out


def avg_upwash_grad(dx, dy, p: AeroParams):
    """Analytic partial derivatives ``(du/ddx, du/ddy)`` of :func:`avg_upwash`."""
    scale = p.zeta / (4 * np.pi * p.beta)
    gx = scale * _lateral_log_dx(dx, p) * _longitudinal(dy, p)
    gy = scale * _lateral_log(dx, p) * _longitudinal_dy(dy, p)
    return gx, gy


def total_upwash(me: int, positions, p: AeroParams) -> float:
    """Total upwash felt by UAV ``me`` from every other UAV in the formation."""
    pos = np.asarray(positions, dtype=float)
    rel = pos[me] - np.delete(pos, me, axis=0)
    if rel.size == 0:
        return 0.0
    return float(np.sum(avg_upwash(rel[:, 0], rel[:, 1], p)))


def total_upwash_at(point, generators, p: AeroParams) -> float:
    """Total upwash at an arbitrary ``point`` from a set of generator positions."""
    rel = np.asarray(point, dtype=float) - np.asarray(generators, dtype=float).reshape(-1, 2)
    return float(np.sum(avg_upwash(rel[:, 0], rel[:, 1], p)))


def upwash_gradient(offset, lam: int, others: Sequence, p: AeroParams) -> np.ndarray:
    """LMS regressor ``[lam * du_tot/ddx, du_tot/ddy]``.

    ``offset`` is the UAV's own offset from its reference and ``others`` the
    offsets of every other UAV (reference included, at the origin) in the
    same reference frame.
    """
    if lam not in (1, -1):
        raise ValueError(f"side preference must be +1 or -1, got {lam}")
    rel = np.asarray(offset, dtype=float) - np.asarray(others, dtype=float).reshape(-1, 2)
    gx, gy = avg_upwash_grad(rel[:, 0], rel[:, 1], p)
    return np.array([lam * np.sum(gx), np.sum(gy)])


def power_saving(u_bar, e: EnergyParams) -> dict:
    """Drag (N) and power (W) reductions from an average upwash ``u_bar``.

    Negative upwash gives negative reductions, i.e. a downwash penalty.
    """
    return {"drag_reduction": e.lift * u_bar / e.v0,
            "power_reduction": e.lift * u_bar}


def parasite_drag(e: EnergyParams) -> float:
    return 0.5 * e.c * e.s0 * e.v0**2


def _golden_refine(fn, lo, hi, tol=1e-10):
    res = optimize.minimize_scalar(lambda t: -fn(t), bracket=None, bounds=(lo, hi),
                                   method="bounded", options={"xatol": tol})
    return float(res.x)


def grid_argmax(fn, xlim, ylim, step=1e-3, refine=True):
    """Maximise a 2-D scalar field on a grid, then polish by coordinate-wise golden search.

    ``fn`` must accept broadcast arrays ``(X, Y)``. Returns ``(x, y, value)``.
    """
    xs = np.arange(xlim[0], xlim[1] + step / 2, step)
    ys = np.arange(ylim[0], ylim[1] + step / 2, step)
    best = (-np.inf, 0.0, 0.0)
    # Row chunks keep memory bounded on fine grids.
    for start in range(0, ys.size, 256):
        yy = ys[start:start + 256]
        vals = fn(xs[None, :], yy[:, None])
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[i, j] > best[0]:
            best = (float(vals[i, j]), float(xs[j]), float(yy[i]))
    _, x, y = best
    if refine:
        for _ in range(30):
            x_new = _golden_refine(lambda t: fn(t, y), x - step, x + step)
            y_new = _golden_refine(lambda t: fn(x_new, t), y - step, y + step)
            moved = abs(x_new - x) + abs(y_new - y)
            x, y = x_new, y_new
            if moved < 1e-12:
                break
    return x, y, float(fn(x, y))


@functools.lru_cache(maxsize=32)
def optimal_offset(p: AeroParams, step: float = 1e-3) -> RelOffset:
    """Best trailing position behind a single generator, on the positive-x side.

    The mirror point ``(-dx, dy)`` is equally good.
    """
    x, y, _ = grid_argmax(lambda X, Y: avg_upwash(X, Y, p),
                          (0.0, 3 * p.beta), (-p.beta, 4 * p.beta), step=step)
    return RelOffset(x, y)
