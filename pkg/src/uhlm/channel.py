"""Wireless uplink model: payload sizing, Rayleigh block fading, Shannon rate.

The channel gain is constant within a round and redrawn independently
across rounds. SNR follows the standard power-law link budget
p * h * rho^(-alpha) / N with unit-mean exponential power fading h; this
formula is the single point of truth for the link model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import RandomStream
from .errors import ValidationError

FADING_MODES = ("rayleigh", "none")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0.0:
        raise ValidationError(f"power must be positive, got {watts!r}")
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class ChannelParams:
    """Uplink link-budget parameters.

    ``b_prob`` is the wire precision of one probability entry (half or full)
    and affects only the payload size, never the arithmetic.
    """

    W_hz: float = 1e6
    p_dbm: float = 23.0
    N_dbm: float = -104.0
    alpha: float = 4.0
    rho_m: float = 2500.0
    b_prob: int = 16
    fading: str = "rayleigh"
    sync_bits: int = 0

    def __post_init__(self) -> None:
        if self.W_hz <= 0:
            raise ValidationError(f"bandwidth must be positive, got {self.W_hz!r}")
        if self.alpha <= 0:
            raise ValidationError(f"path-loss exponent must be positive, got {self.alpha!r}")
        if self.rho_m <= 0:
            raise ValidationError(f"distance must be positive, got {self.rho_m!r}")
        if self.b_prob not in (16, 32):
            raise ValidationError(f"b_prob must be 16 or 32, got {self.b_prob!r}")
        if self.fading not in FADING_MODES:
            raise ValidationError(f"fading must be one of {FADING_MODES}, got {self.fading!r}")
        if self.sync_bits < 0:
            raise ValidationError(f"sync_bits must be >= 0, got {self.sync_bits!r}")

    def mean_snr_linear(self) -> float:
        """Fading-free SNR: p * rho^(-alpha) / N in linear units."""
        return dbm_to_watts(self.p_dbm) * self.rho_m**-self.alpha / dbm_to_watts(self.N_dbm)

    def mean_snr_db(self) -> float:
        return 10.0 * math.log10(self.mean_snr_linear())


@dataclass(frozen=True)
class ChannelDraw:
    """One round's realized channel: SNR and the uplink time it implies.

    ``tau_s`` is ``+inf`` when the SNR is zero (zero Shannon capacity).
    """

    snr_linear: float
    tau_s: float


def payload_bits(vocab_size: int, b_prob: int) -> int:
    """Uplink payload for one vocabulary distribution."""
    return vocab_size * b_prob


def sample_snr(params: ChannelParams, rng: RandomStream) -> float:
    """Draw this round's received SNR; the exponential fading gain has unit
    mean, so the sample mean converges to :meth:`ChannelParams.mean_snr_linear`."""
    if params.fading == "rayleigh":
        h = float(rng.generator.exponential(1.0))
    else:
        h = 1.0
    return params.mean_snr_linear() * h


def uplink_latency(bits: int, params: ChannelParams, snr_linear: float) -> float:
    """Shannon-rate transmission time: bits / (W * log2(1 + snr))."""
    if bits <= 0:
        raise ValidationError(f"payload must be positive, got {bits!r}")
    if snr_linear <= 0.0:
        return math.inf
    return bits / (params.W_hz * math.log2(1.0 + snr_linear))


def draw_channel(bits: int, params: ChannelParams, rng: RandomStream) -> ChannelDraw:
    """Sample one block-fading round and price the uplink payload."""
    snr = sample_snr(params, rng)
    return ChannelDraw(snr_linear=snr, tau_s=uplink_latency(bits, params, snr))
