"""V2I link model: SNR, SNR wall, Shannon rate, transmission time, success predicate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

MIN_DISTANCE = 1.0  # meters; avoids the distance**-phi singularity


@dataclass(frozen=True)
class ChannelParams:
    noise_n0: float  # watts
    fading_gain_mean: float
    fading_gain_var: float
    antenna_psi: float
    path_loss_phi: float
    tx_power_pi: float  # watts
    noise_uncertainty_db: tuple[float, float]

    @classmethod
    def from_config(cls, ch) -> ChannelParams:
        return cls(
            noise_n0=dbm_to_watts(ch.noise_dbm),
            fading_gain_mean=ch.fading_mean,
            fading_gain_var=ch.fading_variance,
            antenna_psi=ch.antenna_gain,
            path_loss_phi=ch.path_loss_exponent,
            tx_power_pi=ch.tx_power_mw * 1e-3,
            noise_uncertainty_db=tuple(ch.noise_uncertainty_db),
        )


@dataclass(frozen=True)
class ChannelSnapshot:
    vehicle: int
    snr: float
    rate_delta: float
    allocated_b: float
    success: bool


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def snr(params: ChannelParams, distance: float, fading_draw: float) -> float:
    d = max(float(distance), MIN_DISTANCE)
    return fading_draw * params.antenna_psi * d ** (-params.path_loss_phi) * params.tx_power_pi / params.noise_n0


def snr_wall(noise_uncertainty_db: float) -> float:
    if noise_uncertainty_db < 0:
        raise ValueError("noise uncertainty must be >= 0 dB")
    if noise_uncertainty_db == 0:
        return 0.0
    sigma = 10.0 ** (noise_uncertainty_db / 10.0)
    return (sigma * sigma - 1.0) / sigma


def rate(bandwidth: float, snr_value: float) -> float:
    if bandwidth < 0 or snr_value < 0:
        raise ValueError("bandwidth and SNR must be non-negative")
    return bandwidth * math.log2(1.0 + snr_value)


def transmission_time(size_bits: float, rate_value: float) -> float:
    """Seconds to push ``size_bits`` at ``rate_value``; ``inf`` when the rate is zero."""
    if rate_value <= 0:
        return math.inf
    return size_bits / rate_value


def success_indicator(snr_trace: Iterable[float], wall: float) -> bool:
    trace = list(snr_trace)
    if not trace:
        raise ValueError("empty SNR trace")
    return all(s > wall for s in trace)


def sample_slots(start_slot: int, offset: float, duration: float, eps: float) -> range:
    """Slot boundaries in ``[start + offset, start + offset + duration]`` (seconds), plus the start slot.

    The start slot stands in for the sub-slot interval when the whole transfer fits
    before the next boundary.
    """
    last = start_slot + math.floor((offset + duration) / eps + 1e-12)
    return range(start_slot, last + 1)


def fading_draws(params: ChannelParams, rng: np.random.Generator, size) -> np.ndarray:
    """Gamma draws with the configured mean and variance (deterministic if the variance is 0)."""
    m, v = params.fading_gain_mean, params.fading_gain_var
    if v == 0:
        return np.full(size, m, dtype=float)
    shape = m * m / v
    scale = v / m
    return rng.gamma(shape, scale, size=size)
