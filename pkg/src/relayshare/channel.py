"""Link-level model for amplify-and-forward (AF) relaying between D2D pairs.

All functions are scalar and side-effect free. Gains are amplitude gains, so
received power scales with the square of the gain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ChannelGains:
    """Per-group link gains between source, relay and destination."""

    h_sr: float
    h_sd: float
    h_rd: float
    p_source: float = 2.0
    p_relay: float = 2.0
    noise_var: float = 1.0

    def __post_init__(self):
        for name in ("h_sr", "h_sd", "h_rd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} >= 0 violated")
        if self.p_source <= 0 or self.p_relay <= 0:
            raise ValueError("powers > 0 violated")
        if self.noise_var <= 0:
            raise ValueError("noise_var > 0 violated")


@dataclass(frozen=True)
class CapacityParams:
    k_omega: float = 1.0
    alpha: float = 1.0
    t_ij: float = 1.0

    def __post_init__(self):
        if self.k_omega <= 0:
            raise ValueError("k_omega > 0 violated")
        if self.alpha <= 0:
            raise ValueError("alpha > 0 violated")
        if not 0 < self.t_ij <= 1:
            raise ValueError("t_ij in (0, 1] violated")


def snr_direct(g: ChannelGains) -> float:
    return g.p_source * g.h_sd**2 / g.noise_var


def snr_relayed(g: ChannelGains) -> float:
    """End-to-end SNR of the two-hop AF path source -> relay -> destination."""
    a = g.p_source * g.h_sr**2
    b = g.p_relay * g.h_rd**2
    return a * b / (g.noise_var * (g.noise_var + a + b))


def tau_factor(g: ChannelGains) -> float:
    """``1 + SNR_d + SNR_r``: the SNR factor seen with MRC of both copies."""
    return 1.0 + snr_direct(g) + snr_relayed(g)


def b_factor(g: ChannelGains) -> float:
    return 1.0 + snr_direct(g)


def y_factor(g: ChannelGains) -> float:
    """Effective SNR factor ``Y = max(tau, b)`` used by the modified utilities."""
    return max(tau_factor(g), b_factor(g))


def capacity_direct(bandwidth_share: float, snr_d: float) -> float:
    return bandwidth_share * math.log2(1.0 + snr_d)


def capacity_relay(bandwidth_share: float, snr_d: float, snr_r: float) -> float:
    # AF uses two phases, hence half the rate
    return 0.5 * bandwidth_share * math.log2(1.0 + snr_d + snr_r)


def relay_beneficial(c_r: float, c_d: float) -> bool:
    """True when relaying strictly beats direct transmission (ratio > 1)."""
    if c_d == 0:
        return c_r > 0
    return c_r / c_d > 1.0


def modified_log_capacity(k_omega: float, omega_i: float, n_attached: float, y: float,
                          base: float = 2.0) -> float:
    """Concave surrogate capacity ``log_base(k * omega * y / n)``.

    ``y`` is either the MRC factor ``tau`` (relayed) or ``b`` (direct).
    """
    if n_attached <= 0:
        raise ValueError("n_attached >= 1 required: share of an empty relay is undefined")
    return math.log(k_omega * omega_i * y / n_attached) / math.log(base)
