"""Monte-Carlo driver: random user positions, every policy, every AP."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..attacker import (
    AngleDistanceProfile,
    anchor_delay,
    localize_single_ap,
    music_profile,
    range_oracle,
    select_direct,
    shift_delay,
    smooth_csi,
    triangulate,
)
from ..defender import build_precoder, make_path_knowledge
from ..errors import AoaPrivacyError, DefenseNotApplicableError, DegenerateGeometryError
from ..geometry import bearing_to, enumerate_paths, wrap_angle
from ..phy import add_noise, apply_precoder, draw_sfo_offset, rssi_db, synthesize_csi
from .config import ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass
class ApObservation:
    """What one AP concluded about the user under one policy."""

    ap: int
    true_aoa: float
    est_aoa: float
    aoa_error: float  # radians, wrapped absolute difference
    est_distance: float
    rssi_db: float
    num_peaks: int
    sfo_offset: float
    profile: AngleDistanceProfile | None = None


@dataclass
class TrialRecord:
    index: int
    position: tuple[float, float]
    serving_ap: int = -1
    status: str = "ok"
    reason: str = ""
    d_obf: float = math.nan
    observations: dict[str, list[ApObservation]] = field(default_factory=dict)
    single_ap: dict[str, tuple[np.ndarray, float]] = field(default_factory=dict)
    triangulation: dict[str, tuple[np.ndarray, float]] = field(default_factory=dict)
    fallback: dict[str, str] = field(default_factory=dict)

    def rssi(self, policy: str) -> float:
        """Received power at the serving AP."""
        return self.observations[policy][self.serving_ap].rssi_db


def aoa_error(est: float, truth: float) -> float:
    """Absolute angular difference wrapped into [0, pi]."""
    return abs(wrap_angle(est - truth))


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per trial, so results do not depend on run order."""
    return np.random.default_rng([int(seed), int(index)])


def draw_position(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[float, float]:
    m = cfg.position_margin
    env = cfg.environment
    return float(rng.uniform(m, env.width - m)), float(rng.uniform(m, env.height - m))


def _num_paths(cfg: ScenarioConfig, n_physical: int, rows: int) -> int | None:
    mode = cfg.attacker.num_paths
    if mode == "auto":
        return None
    n = n_physical if mode == "true" else int(mode)
    return max(1, min(n, rows - 1))


def _attack(cfg: ScenarioConfig, h: np.ndarray, n_physical: int) -> AngleDistanceProfile:
    a = cfg.attacker
    if a.anchor:
        h = shift_delay(h, cfg.ofdm, anchor_delay(h, cfg.ofdm) - a.anchor_guard)
    X = smooth_csi(h, a.sub_antennas, a.sub_subcarriers)
    return music_profile(
        X, a.grid, _num_paths(cfg, n_physical, X.shape[0]), cfg.ofdm, cfg.array,
        sub_antennas=a.sub_antennas, peak_threshold_db=a.peak_threshold_db,
        eig_ratio=a.eig_ratio, floor=a.floor,
    )


def run_trial(cfg: ScenarioConfig, index: int, keep_profiles: bool = False,
              position: tuple[float, float] | None = None) -> TrialRecord:
    """One user position: every policy observed by every AP.

    Module errors are caught and recorded on the returned record.
    """
    rng = trial_rng(cfg.seed, index)
    pos = draw_position(cfg, rng) if position is None else (float(position[0]), float(position[1]))
    record = TrialRecord(index, pos)
    try:
        _run_trial(cfg, record, rng, keep_profiles)
    except (AoaPrivacyError, ValueError, LookupError, np.linalg.LinAlgError) as exc:
        record.status = "failed"
        record.reason = f"{type(exc).__name__}: {exc}"
        logger.warning("trial %d failed: %s", index, record.reason)
    return record


def _run_trial(cfg: ScenarioConfig, record: TrialRecord, rng, keep_profiles: bool):
    env = cfg.environment
    pos = record.position
    # the user serves (and defends against) its nearest AP, facing it
    serving = int(np.argmin([math.dist(pos, ap.position) for ap in env.ap_poses]))
    record.serving_ap = serving
    facing = math.atan2(env.ap_poses[serving].position[0] - pos[0],
                        env.ap_poses[serving].position[1] - pos[1])
    ap_paths = [enumerate_paths(env, pos, i, cfg.max_order, user_orientation=facing)
                for i in range(len(env.ap_poses))]

    try:
        knowledge = make_path_knowledge(ap_paths[serving], rng, cfg.angle_error_std)
    except DefenseNotApplicableError as exc:
        knowledge = None
        logger.warning("trial %d: %s; defenses fall back to mode none", record.index, exc)
    theta_direct = ap_paths[serving][0].aod

    for mode in cfg.policies:
        policy = cfg.policy_for(mode)
        if knowledge is None and mode != "none":
            record.fallback[mode] = "no reflected path"
            policy = cfg.policy_for("none")
        w = build_precoder(policy, knowledge, cfg.array, cfg.ofdm, theta_direct)
        if "d_obf" in w.meta:
            record.d_obf = float(w.meta["d_obf"])
        observations = []
        for i, paths in enumerate(ap_paths):
            sfo = draw_sfo_offset(rng, cfg.ofdm, cfg.sfo_span)  # fresh per packet
            H = synthesize_csi(paths, cfg.array, cfg.array, cfg.ofdm, sfo)
            h = add_noise(apply_precoder(H, w), cfg.snr_db, rng)
            profile = _attack(cfg, h, len(paths))
            direct = select_direct(profile)
            truth = paths[0].aoa if paths[0].order == 0 else bearing_to(env.ap_poses[i], pos)
            observations.append(ApObservation(
                ap=i, true_aoa=truth, est_aoa=direct.angle, aoa_error=aoa_error(direct.angle, truth),
                est_distance=direct.distance, rssi_db=rssi_db(h), num_peaks=len(profile.peaks),
                sfo_offset=sfo, profile=profile if keep_profiles else None,
            ))
        record.observations[mode] = observations

        truth_xy = np.asarray(pos)
        srv = observations[serving]
        rng_est = range_oracle(math.dist(pos, env.ap_poses[serving].position), cfg.range_sigma, rng)
        est = localize_single_ap(env.ap_poses[serving], srv.est_aoa, rng_est)
        record.single_ap[mode] = (est.position, float(np.linalg.norm(est.position - truth_xy)))
        if len(env.ap_poses) >= 2:
            try:
                tri = triangulate(env.ap_poses, [o.est_aoa for o in observations])
            except DegenerateGeometryError:
                record.triangulation[mode] = (np.full(2, np.nan), math.nan)
            else:
                err = float(np.linalg.norm(tri.position - truth_xy))
                record.triangulation[mode] = (tri.position, err)


def _worker(args):
    cfg, index, keep = args
    return run_trial(cfg, index, keep)


def run_experiment(cfg: ScenarioConfig, keep_profiles: bool = False) -> list[TrialRecord]:
    """All trials in index order; ``cfg.jobs > 1`` runs them in worker processes.

    Each trial owns a child RNG derived from ``(seed, index)``, so the
    records are identical for any degree of parallelism.
    """
    tasks = [(cfg, i, keep_profiles) for i in range(cfg.num_positions)]
    if cfg.jobs == 1:
        return [_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(_worker, tasks))
