"""The snooping AP: joint angle/delay MUSIC, earliest-peak selection, localization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, optimize
from sklearn.base import BaseEstimator

from ._validation import check_csi, check_increasing
from .errors import DegenerateGeometryError, InsufficientSmoothingError, NoPathError
from .geometry import ApPose, direction
from .phy import SPEED_OF_LIGHT, ArrayConfig, OfdmConfig


@dataclass(frozen=True)
class ProfileGrid:
    angles: np.ndarray = field(default_factory=lambda: np.deg2rad(np.arange(-90.0, 90.5, 1.0)))
    distances: np.ndarray = field(default_factory=lambda: np.arange(0.0, 60.0 + 1e-9, 0.25))

    def __post_init__(self):
        object.__setattr__(self, "angles", check_increasing(self.angles, "angle"))
        object.__setattr__(self, "distances", check_increasing(self.distances, "distance"))

    @classmethod
    def from_steps(cls, angle_step_deg=1.0, max_distance=60.0, distance_step=0.25,
                   min_distance=0.0, max_angle_deg=90.0):
        n_ang = int(round(2 * max_angle_deg / angle_step_deg)) + 1
        n_dist = int(round((max_distance - min_distance) / distance_step)) + 1
        return cls(
            np.deg2rad(np.linspace(-max_angle_deg, max_angle_deg, n_ang)),
            np.linspace(min_distance, max_distance, n_dist),
        )

    @property
    def angle_step(self) -> float:
        return float(np.max(np.diff(self.angles)))

    @property
    def distance_step(self) -> float:
        return float(np.max(np.diff(self.distances)))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.angles), len(self.distances)

    def validate_for(self, ofdm: OfdmConfig) -> None:
        if self.distances[-1] - self.distances[0] > ofdm.alias_distance:
            raise ValueError("distance grid spans more than one alias period")


@dataclass(frozen=True)
class Peak:
    """A retained path estimate.

    ``angle``/``distance`` are refined off the grid, starting from the grid
    local maximum at ``(grid_angle, grid_distance)``; ``power`` is the
    pseudo-spectrum value at the refined location.
    """

    angle: float
    distance: float
    power: float
    grid_angle: float = math.nan
    grid_distance: float = math.nan


@dataclass
class AngleDistanceProfile:
    """Pseudo-spectrum over ``grid`` (angles x distances) and its retained peaks."""

    spectrum: np.ndarray
    grid: ProfileGrid
    peaks: list[Peak]
    num_paths: int = 0
    peak_max: float = math.nan

    @property
    def max_power(self) -> float:
        """Reference level for relative dB values: the highest refined peak."""
        if math.isnan(self.peak_max):
            return float(self.spectrum.max())
        return max(self.peak_max, float(self.spectrum.max()))

    def relative_db(self, power) -> np.ndarray:
        return 10 * np.log10(np.asarray(power) / self.max_power)

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.spectrum), self.spectrum.shape)
        return float(self.grid.angles[i]), float(self.grid.distances[j])

    def to_csv(self, path) -> Path:
        """One row per grid cell: angle_deg, distance_m, power_db (relative to max)."""
        path = Path(path)
        db = self.relative_db(self.spectrum)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["angle_deg", "distance_m", "power_db"])
            for i, ang in enumerate(self.grid.angles):
                deg = f"{math.degrees(ang):.6g}"
                for j, dist in enumerate(self.grid.distances):
                    writer.writerow([deg, f"{dist:.6g}", f"{db[i, j]:.6f}"])
        return path


@dataclass(frozen=True)
class LocalizationEstimate:
    position: np.ndarray
    method: str
    aoas: tuple[float, ...]


def smooth_csi(h_eff, sub_antennas: int = 2, sub_subcarriers: int | None = None,
               min_snapshots: int = 2) -> np.ndarray:
    """Stack every contiguous antenna x subcarrier sub-block of the CSI as a column.

    Rows follow the sub-block in antenna-major order (``k * S + i``); columns
    run over antenna shifts (major) and subcarrier shifts (minor).
    """
    h = check_csi(h_eff)
    n_ant, n_sub = h.shape
    if sub_subcarriers is None:
        sub_subcarriers = math.ceil(n_sub / 2)
    if not (1 <= sub_antennas <= n_ant and 1 <= sub_subcarriers <= n_sub):
        raise ValueError("sub-block larger than the CSI matrix")
    shifts_a = n_ant - sub_antennas + 1
    shifts_s = n_sub - sub_subcarriers + 1
    if shifts_a * shifts_s < min_snapshots:
        raise InsufficientSmoothingError(
            f"{shifts_a * shifts_s} snapshot(s), need at least {min_snapshots}"
        )
    windows = np.lib.stride_tricks.sliding_window_view(h, (sub_antennas, sub_subcarriers))
    return windows.reshape(shifts_a * shifts_s, sub_antennas * sub_subcarriers).T.copy()


def estimate_num_paths(eigenvalues, ratio: float = 0.01) -> int:
    """Count eigenvalues at or above ``ratio`` times the largest."""
    ev = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    return max(1, int(np.sum(ev >= ratio * ev[0])))


def _local_maxima(spectrum: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(spectrum, 1, constant_values=-np.inf)
    centre = padded[1:-1, 1:-1]
    is_peak = np.ones_like(centre, dtype=bool)
    rows, cols = spectrum.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            is_peak &= centre > padded[1 + di:1 + di + rows, 1 + dj:1 + dj + cols]
    return np.nonzero(is_peak)


class _Residual:
    """Normalised noise-subspace residual ``|E_n^H v|^2 / |v|^2`` at any (angle, distance)."""

    def __init__(self, noise: np.ndarray, ofdm: OfdmConfig, rx: ArrayConfig):
        self.noise = noise  # (sub_antennas, n_sc, m)
        n_ant, n_sc, _ = noise.shape
        self.k = np.arange(n_ant)
        self.freqs = ofdm.frequencies[0] + np.arange(n_sc) * ofdm.spacing
        self.phase_a = 2 * np.pi * ofdm.center_frequency * rx.spacing / SPEED_OF_LIGHT
        self.norm = float(n_ant * n_sc)
        self._flat = noise.reshape(n_ant * n_sc, -1).conj()

    def angle_vectors(self, angles) -> np.ndarray:
        return np.exp(-1j * self.phase_a * np.outer(np.sin(angles), self.k))

    def delay_vectors(self, distances) -> np.ndarray:
        return np.exp(-2j * np.pi * np.outer(distances, self.freqs) / SPEED_OF_LIGHT)

    def grid(self, angles, distances, chunk: int = 32) -> np.ndarray:
        a = self.angle_vectors(angles)
        # per-antenna-shift projections of every delay vector on the noise basis
        Y = np.einsum("ds,ksm->kdm", self.delay_vectors(distances), self.noise.conj())
        out = np.empty((len(angles), len(distances)))
        for start in range(0, len(angles), chunk):
            Z = np.einsum("ak,kdm->adm", a[start:start + chunk], Y)
            out[start:start + chunk] = np.einsum("adm,adm->ad", Z, Z.conj()).real / self.norm
        return np.maximum(out, 0.0)

    def __call__(self, angle: float, distance: float) -> float:
        a = np.exp(-1j * self.phase_a * math.sin(angle) * self.k)
        d = np.exp(-2j * np.pi * distance * self.freqs / SPEED_OF_LIGHT)
        z = np.outer(a, d).ravel() @ self._flat
        return max(float(np.vdot(z, z).real) / self.norm, 0.0)


def _refine(residual: _Residual, angle: float, distance: float, da: float, dd: float,
            reach: float = 4.0):
    """Local minimum of the residual within ``reach`` grid cells of the start.

    Closely spaced paths leave a narrow tilted valley that the grid samples
    poorly, so the search is allowed to slide a few cells along it. Returns
    ``None`` when the search ends on its box edge: the start was the
    shoulder of a peak further away, not a peak.
    """
    lo_a = max(angle - reach * da, -math.pi / 2) / da
    hi_a = min(angle + reach * da, math.pi / 2) / da
    bounds = [(lo_a, hi_a), (distance / dd - reach, distance / dd + reach)]
    fun = lambda x: residual(x[0] * da, x[1] * dd)  # noqa: E731
    res = optimize.minimize(
        fun, [angle / da, distance / dd], method="Nelder-Mead", bounds=bounds,
        options={"xatol": 1e-3, "fatol": 1e-10, "maxiter": 300},
    )
    x = res.x
    edge = 1e-3
    on_box = (
        (x[0] - bounds[0][0] < edge and bounds[0][0] * da > -math.pi / 2)
        or (bounds[0][1] - x[0] < edge and bounds[0][1] * da < math.pi / 2)
        or x[1] - bounds[1][0] < edge or bounds[1][1] - x[1] < edge
    )
    if on_box:
        return None
    return float(x[0] * da), float(x[1] * dd), float(res.fun)


def music_profile(
    snapshots,
    grid: ProfileGrid,
    num_paths: int | None,
    ofdm: OfdmConfig,
    rx: ArrayConfig,
    sub_antennas: int = 2,
    peak_threshold_db: float = -10.0,
    eig_ratio: float = 0.01,
    floor: float = 1e-5,
    max_refine: int = 32,
) -> AngleDistanceProfile:
    """Joint angle / relative-distance MUSIC pseudo-spectrum.

    The spectrum is ``1 / (|E_n^H v|^2 / |v|^2 + floor)``. Grid local maxima
    are refined off-grid before the retention test, so a path between grid
    nodes is not penalised against one sitting exactly on a node; ``floor``
    caps the height of exact (noise-free) peaks.
    ``num_paths=None`` picks the signal dimension from the eigenvalue ratio.
    """
    X = np.asarray(snapshots, dtype=complex)
    rows, n_snap = X.shape
    if rows % sub_antennas:
        raise ValueError("snapshot rows are not a multiple of sub_antennas")
    if not np.all(np.isfinite(X)):
        raise ValueError("snapshots contain NaN or inf")
    R = X @ X.conj().T / n_snap
    eigval, eigvec = linalg.eigh(R)  # ascending
    if num_paths is None:
        num_paths = min(estimate_num_paths(eigval, eig_ratio), rows - 1)
    if not 1 <= num_paths < rows:
        raise ValueError(f"num_paths={num_paths} must lie in [1, {rows - 1}]")
    noise = eigvec[:, : rows - num_paths].reshape(sub_antennas, rows // sub_antennas, -1)
    residual = _Residual(noise, ofdm, rx)
    spectrum = 1.0 / (residual.grid(grid.angles, grid.distances) + floor)

    ii, jj = _local_maxima(spectrum)
    order = np.argsort(spectrum[ii, jj])[::-1][:max_refine]
    # grid heights understate off-node peaks, but not by this much
    keep = spectrum[ii[order], jj[order]] >= spectrum.max() * 10 ** ((peak_threshold_db - 30) / 10)
    order = order[keep]
    da, dd = grid.angle_step, grid.distance_step
    candidates: list[Peak] = []
    for p, q in zip(ii[order], jj[order]):
        ang, dist = float(grid.angles[p]), float(grid.distances[q])
        refined = _refine(residual, ang, dist, da, dd)
        if refined is None:
            continue
        r_ang, r_dist, r_res = refined
        peak = Peak(r_ang, r_dist, 1.0 / (r_res + floor), ang, dist)
        # several grid maxima along one valley converge to the same point
        dup = next((c for c in candidates if abs(c.angle - r_ang) < da / 2
                    and abs(c.distance - r_dist) < dd / 2), None)
        if dup is None:
            candidates.append(peak)
        elif peak.power > dup.power:
            candidates[candidates.index(dup)] = peak
    if not candidates and len(order):
        p, q = ii[order[0]], jj[order[0]]
        ang, dist = float(grid.angles[p]), float(grid.distances[q])
        candidates.append(Peak(ang, dist, float(spectrum[p, q]), ang, dist))
    top = max((c.power for c in candidates), default=spectrum.max())
    peaks = [c for c in candidates if 10 * math.log10(c.power / top) >= peak_threshold_db - 1e-12]
    peaks.sort(key=lambda p: (p.distance, -p.power, abs(p.angle)))
    return AngleDistanceProfile(spectrum, grid, peaks, num_paths, float(top))


def select_direct(profile: AngleDistanceProfile) -> Peak:
    """The retained peak with the smallest distance; ties go to power, then |angle|."""
    if not profile.peaks:
        raise NoPathError("profile has no retained peaks")
    return min(profile.peaks, key=lambda p: (p.distance, -p.power, abs(p.angle)))


def anchor_delay(h_eff, ofdm: OfdmConfig, threshold_db: float = -20.0,
                 resolution: float = 0.5) -> float:
    """Start of the strongest delay cluster, in meters, modulo the alias window.

    A Hann-windowed delay profile is thresholded; the cluster start is the
    first delay after the widest empty circular gap. Shifting the CSI by
    this value removes the unknown per-packet offset up to a small bias.
    """
    h = check_csi(h_eff)
    n_sub = h.shape[1]
    n_fft = int(2 ** math.ceil(math.log2(ofdm.alias_distance / resolution)))
    pdp = np.sum(np.abs(np.fft.ifft(h * np.hanning(n_sub + 2)[1:-1], n=n_fft, axis=1)) ** 2, axis=0)
    # ifft bin t corresponds to delay t * alias / n_fft (phase e^{-j2pi i dd d/c})
    above = np.nonzero(pdp >= pdp.max() * 10 ** (threshold_db / 10))[0]
    gaps = np.diff(np.concatenate([above, [above[0] + n_fft]]))
    start = above[(np.argmax(gaps) + 1) % len(above)]
    return float(start * ofdm.alias_distance / n_fft)


def shift_delay(h_eff, ofdm: OfdmConfig, distance: float) -> np.ndarray:
    """Advance every path of the CSI by ``distance`` meters."""
    h = check_csi(h_eff)
    return h * np.exp(2j * np.pi * ofdm.frequencies * distance / SPEED_OF_LIGHT)


def localize_single_ap(pose: ApPose, aoa_est: float, range_est: float) -> LocalizationEstimate:
    if not range_est > 0:
        raise ValueError("range estimate must be positive")
    pos = np.asarray(pose.position, dtype=float) + range_est * direction(pose.orientation + aoa_est)
    return LocalizationEstimate(pos, "single_ap", (float(aoa_est),))


def range_oracle(true_distance: float, sigma: float = 0.0, rng=None) -> float:
    """Stand-in for an FTM ranging exchange: truth plus Gaussian noise."""
    if sigma == 0:
        return float(true_distance)
    return max(float(true_distance + rng.normal(0.0, sigma)), 1e-3)


def triangulate(poses: Sequence[ApPose], aoa_ests: Sequence[float]) -> LocalizationEstimate:
    """Least-squares intersection of bearing lines (unweighted)."""
    if len(poses) != len(aoa_ests) or len(poses) < 2:
        raise ValueError("triangulation needs at least two (pose, bearing) pairs")
    A = np.zeros((2, 2))
    rhs = np.zeros(2)
    for pose, aoa in zip(poses, aoa_ests):
        u = direction(pose.orientation + aoa)
        n = np.array([u[1], -u[0]])
        P = np.outer(n, n)
        A += P
        rhs += P @ np.asarray(pose.position, dtype=float)
    if np.linalg.eigvalsh(A)[0] < 1e-9:
        raise DegenerateGeometryError("bearing lines are parallel")
    return LocalizationEstimate(np.linalg.solve(A, rhs), "triangulation", tuple(map(float, aoa_ests)))


class SpotFiEstimator(BaseEstimator):
    """Angle-of-arrival estimator over effective CSI.

    ``fit`` accepts one ``(K_rx, L)`` CSI matrix or a stack of packets
    ``(n, K_rx, L)`` whose smoothed snapshots are pooled. After fitting,
    ``profile_`` holds the pseudo-spectrum and ``direct_`` the earliest peak.

    Parameters
    ----------
    rx_array, ofdm : receive array and subcarrier grid.
    grid : ProfileGrid, default is -90..90 deg by 1 deg and 0..60 m by 0.25 m.
    num_paths : signal subspace dimension; None estimates it from eigenvalues.
    anchor : remove the unknown per-packet delay before profiling.
    """

    def __init__(self, rx_array=None, ofdm=None, grid=None, num_paths=None,
                 sub_antennas=2, sub_subcarriers=None, peak_threshold_db=-10.0,
                 eig_ratio=0.01, floor=1e-5, anchor=False, anchor_guard=5.0):
        self.rx_array = rx_array
        self.ofdm = ofdm
        self.grid = grid
        self.num_paths = num_paths
        self.sub_antennas = sub_antennas
        self.sub_subcarriers = sub_subcarriers
        self.peak_threshold_db = peak_threshold_db
        self.eig_ratio = eig_ratio
        self.floor = floor
        self.anchor = anchor
        self.anchor_guard = anchor_guard

    def _snapshots(self, packets, ofdm):
        blocks = []
        for h in packets:
            if self.anchor:
                h = shift_delay(h, ofdm, anchor_delay(h, ofdm) - self.anchor_guard)
            blocks.append(smooth_csi(h, self.sub_antennas, self.sub_subcarriers))
        return np.hstack(blocks)

    def fit(self, X, y=None):
        X = check_csi(X, allow_batch=True)
        packets = X[None] if X.ndim == 2 else X
        rx = self.rx_array or ArrayConfig()
        ofdm = self.ofdm or OfdmConfig()
        grid = self.grid or ProfileGrid()
        grid.validate_for(ofdm)
        if packets.shape[2] != ofdm.num_subcarriers:
            raise ValueError("CSI subcarrier count does not match the OFDM config")
        self.profile_ = music_profile(
            self._snapshots(packets, ofdm), grid, self.num_paths, ofdm, rx,
            sub_antennas=self.sub_antennas, peak_threshold_db=self.peak_threshold_db,
            eig_ratio=self.eig_ratio, floor=self.floor,
        )
        self.direct_ = select_direct(self.profile_)
        return self

    def predict(self, X):
        """Direct-path AoA (radians) for each packet in ``X``."""
        X = check_csi(X, allow_batch=True)
        packets = X[None] if X.ndim == 2 else X
        return np.array([self.fit(h).direct_.angle for h in packets])
