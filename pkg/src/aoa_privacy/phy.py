"""Arrays, OFDM grid, CSI synthesis, impairments and received power."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._validation import check_csi, check_weights
from .errors import ConfigError
from .geometry import PathComponent

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array. Defaults match a 4-antenna 0.026 m array."""

    num_antennas: int = 4
    spacing: float = 0.026
    orientation: float = 0.0

    def __post_init__(self):
        if self.num_antennas < 2:
            raise ConfigError("an array needs at least two antennas")
        if not self.spacing > 0:
            raise ConfigError("antenna spacing must be positive")


@dataclass(frozen=True)
class OfdmConfig:
    """Subcarrier grid ``f_i = f_c + (i - (L-1)/2) * B / L``."""

    center_frequency: float = 5.18e9
    bandwidth: float = 20e6
    num_subcarriers: int = 52

    def __post_init__(self):
        if self.num_subcarriers < 2:
            raise ConfigError("need at least two subcarriers")
        if not (self.bandwidth > 0 and self.center_frequency > 0):
            raise ConfigError("frequencies must be positive")

    @property
    def spacing(self) -> float:
        return self.bandwidth / self.num_subcarriers

    @property
    def frequencies(self) -> np.ndarray:
        i = np.arange(self.num_subcarriers)
        return self.center_frequency + (i - (self.num_subcarriers - 1) / 2) * self.spacing

    @property
    def alias_distance(self) -> float:
        """Delay span (in meters) after which the per-tone phase repeats."""
        return SPEED_OF_LIGHT / self.spacing


@dataclass
class ChannelMatrix:
    """Per-subcarrier MIMO channel, ``values[i]`` is ``K_rx x K_tx`` at ``f_i``."""

    values: np.ndarray
    ofdm: OfdmConfig
    tx: ArrayConfig
    rx: ArrayConfig
    sfo_offset: float = 0.0

    def __post_init__(self):
        expected = (self.ofdm.num_subcarriers, self.rx.num_antennas, self.tx.num_antennas)
        if self.values.shape != expected:
            raise ValueError(f"channel shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("channel has non-finite entries")

    def __add__(self, other: "ChannelMatrix") -> "ChannelMatrix":
        return ChannelMatrix(self.values + other.values, self.ofdm, self.tx, self.rx, self.sfo_offset)


@dataclass
class Precoder:
    """Per-subcarrier transmit weights, ``weights[i]`` has length ``K_tx``."""

    weights: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = check_weights(self.weights)
        power = np.mean(np.sum(np.abs(self.weights) ** 2, axis=1))
        if not abs(power - 1.0) < 1e-9:
            raise ValueError("precoder weights must have unit mean power per subcarrier")

    @property
    def num_antennas(self) -> int:
        return self.weights.shape[1]


def steering_vector(array: ArrayConfig, theta, f) -> np.ndarray:
    """ULA response ``exp(-j 2 pi f k s sin(theta) / c)``.

    ``theta`` and ``f`` broadcast; the antenna axis is last.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta) > math.pi / 2 + 1e-12):
        raise ValueError("steering angle outside [-pi/2, pi/2]")
    f = np.asarray(f, dtype=float)
    k = np.arange(array.num_antennas)
    phase = (2 * np.pi / SPEED_OF_LIGHT) * (f * array.spacing * np.sin(theta))[..., None] * k
    return np.exp(-1j * phase)


def synthesize_csi(
    paths: Sequence[PathComponent],
    tx: ArrayConfig,
    rx: ArrayConfig,
    ofdm: OfdmConfig,
    sfo_offset: float = 0.0,
) -> ChannelMatrix:
    """Sum of per-path outer products ``g e^{-j2pi f (d + dd)/c} a_rx a_tx^H``."""
    if len(paths) == 0:
        raise ValueError("cannot synthesize a channel from an empty path list")
    f = ofdm.frequencies
    H = np.zeros((len(f), rx.num_antennas, tx.num_antennas), dtype=complex)
    for p in paths:
        delay = np.exp(-2j * np.pi * f * (p.length + sfo_offset) / SPEED_OF_LIGHT)
        a_rx = steering_vector(rx, p.aoa, f)
        a_tx = steering_vector(tx, p.aod, f)
        H += p.gain * delay[:, None, None] * a_rx[:, :, None] * a_tx.conj()[:, None, :]
    return ChannelMatrix(H, ofdm, tx, rx, sfo_offset)


def draw_sfo_offset(rng: np.random.Generator, ofdm: OfdmConfig, span: float | None = None) -> float:
    """Per-packet distance offset, uniform over ``[0, span)``.

    ``span`` defaults to one full delay-alias period.
    """
    return float(rng.uniform(0.0, ofdm.alias_distance if span is None else span))


def apply_precoder(H: ChannelMatrix, w: Precoder) -> np.ndarray:
    """Effective uplink CSI ``H(f_i) w(f_i)``, returned as ``K_rx x L``."""
    if w.weights.shape != (H.values.shape[0], H.values.shape[2]):
        raise ValueError(
            f"precoder shape {w.weights.shape} does not match channel "
            f"({H.values.shape[0]} subcarriers, {H.values.shape[2]} tx antennas)"
        )
    return np.einsum("lrt,lt->rl", H.values, w.weights)


def add_noise(h_eff, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise at ``snr_db`` relative to mean entry power.

    ``snr_db = inf`` returns the input unchanged.
    """
    h = check_csi(h_eff)
    if math.isinf(snr_db) and snr_db > 0:
        return h.copy()
    if math.isnan(snr_db):
        raise ValueError("snr_db is NaN")
    signal_power = np.mean(np.abs(h) ** 2)
    noise_power = signal_power / 10 ** (snr_db / 10)
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return h + np.sqrt(noise_power / 2) * noise


def rssi_db(h_eff, calibration_offset: float = 0.0) -> float:
    """Mean per-subcarrier received power in dB; ``-inf`` for an all-zero channel."""
    h = check_csi(h_eff)
    power = np.mean(np.sum(np.abs(h) ** 2, axis=0))
    if power == 0:
        return -math.inf
    return 10 * math.log10(power) + calibration_offset
