"""Line-of-sight downlink from a vertical ULA: steering, SINR, rate and beampattern.

Powers are linear watts. The array has no azimuth resolution; the angle of
departure only enters through ``cos(theta) = H / distance``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    n_s: int = 12
    spacing_over_lambda: float = 0.5
    gbs_pos: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError("need at least one antenna")
        if not self.spacing_over_lambda > 0:
            raise ValueError("antenna spacing must be positive")


@dataclass(frozen=True)
class ChannelConst:
    rho0: float = 1e-6          # -60 dB
    noise_power: float = 1e-12  # -90 dBm
    bandwidth: float = 1.0

    def __post_init__(self):
        if min(self.rho0, self.noise_power, self.bandwidth) <= 0:
            raise ValueError("channel constants must be positive")


@dataclass(frozen=True)
class BeamformerSet:
    """Transmit design of one slot: a beam per formation plus a sensing covariance."""

    w: np.ndarray    # (K, N_s) complex
    c_d: np.ndarray  # (N_s, N_s) Hermitian PSD

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=complex))
        c = np.asarray(self.c_d, dtype=complex)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c_d", c)
        n = c.shape[0]
        if c.shape != (n, n) or w.shape[1] != n:
            raise ValueError("beam lengths must match the covariance size")
        if np.max(np.abs(c - c.conj().T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(c))):
            raise ValueError("dedicated covariance must be Hermitian")
        if n and np.min(np.linalg.eigvalsh((c + c.conj().T) / 2)) < -1e-8:
            raise ValueError("dedicated covariance must be PSD")

    @property
    def covariance(self) -> np.ndarray:
        return self.w.T @ self.w.conj() + self.c_d

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2) + np.trace(self.c_d).real)


def _dist(pos, geo: ArrayGeometry):
    vec = np.asarray(pos, dtype=float) - np.asarray(geo.gbs_pos, dtype=float)
    dist = float(np.linalg.norm(vec))
    if dist == 0:
        raise ValueError("target coincides with the base station")
    return vec, dist


def steering_vector(target_pos, geo: ArrayGeometry) -> np.ndarray:
    vec, dist = _dist(target_pos, geo)
    cos_theta = vec[2] / dist
    idx = np.arange(geo.n_s)
    return np.exp(2j * np.pi * geo.spacing_over_lambda * idx * cos_theta)


def channel(leader_pos, geo: ArrayGeometry, cc: ChannelConst) -> np.ndarray:
    _, dist = _dist(leader_pos, geo)
    return np.sqrt(cc.rho0 / dist**2) * steering_vector(leader_pos, geo)


def sinr(k: int, channels: Sequence[np.ndarray], bf: BeamformerSet, cc: ChannelConst) -> float:
    """Received SINR of formation ``k``; the sensing stream counts as interference."""
    h = np.asarray(channels[k])
    gains = np.abs(bf.w.conj() @ h) ** 2
    interf = gains.sum() - gains[k]
    sens = float(np.real(h.conj() @ bf.c_d @ h))
    return float(gains[k] / (interf + sens + cc.noise_power))


def rate(sinr_value: float, cc: ChannelConst) -> float:
    if sinr_value < 0:
        raise ValueError("SINR must be nonnegative")
    return cc.bandwidth * float(np.log2(1 + sinr_value))


def beampattern_gain(sample_pos, bf: BeamformerSet, geo: ArrayGeometry) -> float:
    a = steering_vector(sample_pos, geo)
    return float(np.real(a.conj() @ bf.covariance @ a))


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * np.log10(x)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(w: float) -> float:
    return 10.0 * np.log10(w) + 30.0
