"""Transmit precoders that hide the direct path from a snooping AP."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_angle, unit_rows
from .errors import CapabilityError, ConfigError, DefenseNotApplicableError, DegenerateGeometryError
from .geometry import PathComponent
from .phy import SPEED_OF_LIGHT, ArrayConfig, ChannelMatrix, OfdmConfig, Precoder, apply_precoder, steering_vector

logger = logging.getLogger(__name__)

MODES = ("none", "nulling", "beam_delay", "mirage")
COMBINE_RULES = ("projection", "weighted")
NORMALIZATIONS = ("average", "per_subcarrier")


@dataclass(frozen=True)
class PathKnowledge:
    """What the user learns about its two dominant paths from the downlink."""

    theta_d: float
    theta_r: float
    d_d: float
    d_r: float
    angle_error_std: float = 0.0

    def __post_init__(self):
        check_angle(self.theta_d, "theta_d")
        check_angle(self.theta_r, "theta_r")
        if not self.d_r > self.d_d:
            raise ValueError("reflected path must be longer than the direct path")
        if self.theta_d == self.theta_r:
            raise DegenerateGeometryError("direct and reflected departure angles coincide")

    @property
    def excess_length(self) -> float:
        return self.d_r - self.d_d


@dataclass(frozen=True)
class ObfuscationPolicy:
    """How to precode. ``d_obf=None`` means adaptive: excess length + ``margin``."""

    mode: str = "none"
    d_obf: float | None = None
    margin: float = 5.0
    combine_rule: str = "projection"
    normalization: str = "average"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown policy mode {self.mode!r}")
        if self.combine_rule not in COMBINE_RULES:
            raise ConfigError(f"unknown combine rule {self.combine_rule!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if not self.margin > 0:
            raise ConfigError("adaptive margin must be positive")
        if self.d_obf is not None and self.d_obf < 0:
            raise ConfigError("d_obf must be non-negative")

    def resolve_d_obf(self, k: PathKnowledge, ofdm: OfdmConfig | None = None,
                      enforce: bool = True) -> float:
        """Delay to add to the direct beam, capped inside the alias window.

        A fixed ``d_obf`` that does not exceed the excess length raises
        unless ``enforce`` is False (used to reproduce the zero-delay case).
        """
        if self.d_obf is None:
            d_obf = k.excess_length + self.margin
        else:
            d_obf = float(self.d_obf)
            if enforce and not d_obf > k.excess_length:
                raise ConfigError(
                    f"d_obf={d_obf:.3f} m must exceed the path excess {k.excess_length:.3f} m"
                )
        if ofdm is not None:
            cap = 0.95 * ofdm.alias_distance - k.d_d
            if d_obf > cap:
                logger.warning("capping d_obf %.1f m to %.1f m (alias window)", d_obf, cap)
                d_obf = cap
        return d_obf


def normalize_power(w: np.ndarray, normalization: str = "average") -> np.ndarray:
    """Scale weights to unit transmit power.

    ``average`` applies one scale factor so the mean per-subcarrier power is
    one, which leaves the delay structure of the weights intact;
    ``per_subcarrier`` forces unit norm on every tone.
    """
    if normalization == "per_subcarrier":
        return unit_rows(w)
    power = np.mean(np.sum(np.abs(w) ** 2, axis=-1))
    if not power > 0:
        raise ValueError("cannot normalize all-zero weights")
    return w / math.sqrt(power)


def _steer(tx: ArrayConfig, theta: float, ofdm: OfdmConfig) -> np.ndarray:
    return steering_vector(tx, theta, ofdm.frequencies)  # (L, K)


def _delay(ofdm: OfdmConfig, d_obf: float) -> np.ndarray:
    return np.exp(-2j * np.pi * ofdm.frequencies * d_obf / SPEED_OF_LIGHT)[:, None]


def _project_out(v: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Row-wise projection of ``target`` onto the orthogonal complement of ``v``."""
    coef = np.sum(v.conj() * target, axis=-1, keepdims=True) / np.sum(np.abs(v) ** 2, axis=-1, keepdims=True)
    return target - coef * v


def matched_precoder(theta: float, tx: ArrayConfig, ofdm: OfdmConfig) -> Precoder:
    """Plain beamforming towards ``theta``: the no-obfuscation baseline."""
    a = _steer(tx, check_angle(theta), ofdm)
    return Precoder(a / math.sqrt(tx.num_antennas), label="none")


def nulling_precoder(k: PathKnowledge, tx: ArrayConfig, ofdm: OfdmConfig) -> Precoder:
    """Steer towards the reflection inside the null space of the direct path."""
    if tx.num_antennas < 2:
        raise CapabilityError("nulling needs at least two transmit antennas")
    a_d = _steer(tx, k.theta_d, ofdm)
    a_r = _steer(tx, k.theta_r, ofdm)
    w = _project_out(a_d, a_r)
    if np.any(np.linalg.norm(w, axis=1) < 1e-9 * math.sqrt(tx.num_antennas)):
        raise DegenerateGeometryError("reflected steering vector lies along the direct one")
    return Precoder(unit_rows(w), label="nulling")


def beamform_delay_precoder(k: PathKnowledge, policy: ObfuscationPolicy, tx: ArrayConfig,
                            ofdm: OfdmConfig, enforce: bool = True) -> Precoder:
    """Two beams, the direct one delayed by ``d_obf``."""
    d_obf = policy.resolve_d_obf(k, ofdm, enforce=enforce)
    w = _steer(tx, k.theta_d, ofdm) * _delay(ofdm, d_obf) + _steer(tx, k.theta_r, ofdm)
    return Precoder(normalize_power(w, policy.normalization), label="beam_delay", meta={"d_obf": d_obf})


def null_space_basis(v) -> np.ndarray:
    """Orthonormal basis (as rows) of ``{w : v^H w = 0}``.

    Built by Householder-reflecting the standard basis: the unitary ``Q``
    of a QR factorisation of ``v`` has ``v``'s direction as its first
    column, and the remaining ``K - 1`` columns are returned. LAPACK's
    QR is deterministic, so the same ``v`` always yields the same basis.
    """
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size < 2:
        raise ValueError("need a vector of length >= 2")
    if not np.linalg.norm(v) > 0:
        raise ValueError("null space of the zero vector is the whole space")
    q, _ = np.linalg.qr(v[:, None], mode="complete")
    return q[:, 1:].T.copy()


def _null_basis_stack(a: np.ndarray) -> np.ndarray:
    """``null_space_basis`` of every row at once (batched QR, same result)."""
    q, _ = np.linalg.qr(a[:, :, None], mode="complete")
    return np.swapaxes(q[:, :, 1:], 1, 2)  # (L, K-1, K)


def _combine_projection(beam: np.ndarray, null_of: np.ndarray) -> np.ndarray:
    nulls = _null_basis_stack(null_of)
    coef = np.einsum("ljk,lk->lj", nulls.conj(), beam)  # nr_j^H a
    return np.einsum("lj,ljk->lk", coef, nulls)


def _combine_weighted(beam: np.ndarray, null_of: np.ndarray) -> np.ndarray | None:
    nulls = _null_basis_stack(null_of)
    weights = np.einsum("lk,ljk->lj", beam.conj(), nulls)  # a^H nr_j
    denom = weights.sum(axis=1, keepdims=True)
    if np.any(np.abs(denom) < 1e-9):
        return None
    return np.einsum("lj,ljk->lk", weights, nulls) / denom


def mirage_precoder(k: PathKnowledge, policy: ObfuscationPolicy, tx: ArrayConfig,
                    ofdm: OfdmConfig, enforce: bool = True) -> Precoder:
    """Delayed beam to the direct path nulled towards the reflection, plus a
    beam to the reflection nulled towards the direct path.
    """
    if tx.num_antennas < 3:
        raise CapabilityError("beamform+null+delay needs at least three transmit antennas")
    d_obf = policy.resolve_d_obf(k, ofdm, enforce=enforce)
    a_d = _steer(tx, k.theta_d, ofdm)
    a_r = _steer(tx, k.theta_r, ofdm)
    rule = policy.combine_rule
    bdnr = brnd = None
    if rule == "weighted":
        bdnr = _combine_weighted(a_d, a_r)
        brnd = _combine_weighted(a_r, a_d)
        if bdnr is None or brnd is None:
            logger.warning("weighted null-vector average is ill-conditioned; using projection")
            rule = "projection"
    if rule == "projection":
        bdnr = unit_rows(_combine_projection(a_d, a_r))
        brnd = unit_rows(_combine_projection(a_r, a_d))
    w = bdnr * _delay(ofdm, d_obf) + brnd
    return Precoder(normalize_power(w, policy.normalization), label="mirage",
                    meta={"d_obf": d_obf, "combine_rule": rule, "bdnr": bdnr, "brnd": brnd})


def make_path_knowledge(paths: Sequence[PathComponent], rng=None,
                        angle_error_std: float = 0.0) -> PathKnowledge:
    """Direct and strongest reflected path as seen from the user's downlink."""
    direct = [p for p in paths if p.order == 0]
    reflected = [p for p in paths if p.order > 0]
    if not direct:
        raise DefenseNotApplicableError("no direct path")
    if not reflected:
        raise DefenseNotApplicableError("no reflected path to hide behind")
    d = direct[0]
    r = max(reflected, key=lambda p: p.gain)
    theta_d, theta_r = d.aod, r.aod
    if angle_error_std > 0:
        theta_d += rng.normal(0.0, angle_error_std)
        theta_r += rng.normal(0.0, angle_error_std)
    clip = lambda t: max(-math.pi / 2, min(math.pi / 2, t))  # noqa: E731
    return PathKnowledge(clip(theta_d), clip(theta_r), d.length, r.length, angle_error_std)


def build_precoder(policy: ObfuscationPolicy, k: PathKnowledge | None, tx: ArrayConfig,
                   ofdm: OfdmConfig, theta_direct: float | None = None) -> Precoder:
    """Dispatch on ``policy.mode``; mode none beams at ``theta_direct``."""
    if policy.mode == "none":
        theta = k.theta_d if k is not None else theta_direct
        if theta is None:
            raise ValueError("mode none needs a direct departure angle")
        return matched_precoder(theta, tx, ofdm)
    if k is None:
        raise DefenseNotApplicableError(f"mode {policy.mode} needs path knowledge")
    if policy.mode == "nulling":
        return nulling_precoder(k, tx, ofdm)
    if policy.mode == "beam_delay":
        return beamform_delay_precoder(k, policy, tx, ofdm)
    return mirage_precoder(k, policy, tx, ofdm)


def precoder_to_csv(w: Precoder, path) -> Path:
    """Rows of subcarrier_index, antenna_index, real, imag."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subcarrier_index", "antenna_index", "real", "imag"])
        for i, row in enumerate(w.weights):
            for k, x in enumerate(row):
                writer.writerow([i, k, repr(float(x.real)), repr(float(x.imag))])
    return path


class ObfuscatingPrecoder(BaseEstimator, TransformerMixin):
    """Precoder factory with the estimator interface.

    ``fit`` takes a path list (or a ready ``PathKnowledge``) and stores
    ``precoder_``; ``transform`` maps a ``ChannelMatrix`` to the effective
    CSI an AP would estimate.
    """

    def __init__(self, mode="mirage", d_obf=None, margin=5.0, combine_rule="projection",
                 normalization="average", tx_array=None, ofdm=None, angle_error_std=0.0,
                 random_state=None):
        self.mode = mode
        self.d_obf = d_obf
        self.margin = margin
        self.combine_rule = combine_rule
        self.normalization = normalization
        self.tx_array = tx_array
        self.ofdm = ofdm
        self.angle_error_std = angle_error_std
        self.random_state = random_state

    def fit(self, X, y=None):
        policy = ObfuscationPolicy(self.mode, self.d_obf, self.margin, self.combine_rule,
                                   self.normalization)
        tx = self.tx_array or ArrayConfig()
        ofdm = self.ofdm or OfdmConfig()
        if isinstance(X, PathKnowledge):
            self.knowledge_ = X
        else:
            rng = np.random.default_rng(self.random_state)
            self.knowledge_ = make_path_knowledge(list(X), rng, self.angle_error_std)
        self.precoder_ = build_precoder(policy, self.knowledge_, tx, ofdm)
        return self

    def transform(self, X: ChannelMatrix):
        return apply_precoder(X, self.precoder_)
