"""Aggregation of trial records and the CSV files a run leaves behind."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import dump_resolved
from .experiment import TrialRecord

TRIAL_COLUMNS = [
    "trial", "x_m", "y_m", "serving_ap", "policy", "ap", "status", "reason", "d_obf_m",
    "true_aoa_deg", "est_aoa_deg", "aoa_error_deg", "est_distance_m", "num_peaks",
    "rssi_db", "rssi_delta_db", "single_ap_error_m", "triangulation_x_m",
    "triangulation_y_m", "triangulation_error_m",
]
HIST_BIN_DEG = 2.0
CDF_STEP_M = 0.1


@dataclass
class Summary:
    """Per-policy scalar metrics plus the AoA histogram and localization CDFs."""

    rows: list[tuple[str, str, float]] = field(default_factory=list)
    histograms: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    cdfs: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def value(self, policy: str, metric: str) -> float:
        for p, m, v in self.rows:
            if p == policy and m == metric:
                return v
        raise KeyError((policy, metric))


def _rmse(x) -> float:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(np.sqrt(np.mean(x ** 2))) if x.size else math.nan


def _finite_stat(fn, x) -> float:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(fn(x)) if x.size else math.nan


def empirical_cdf(errors, step: float = CDF_STEP_M) -> tuple[np.ndarray, np.ndarray]:
    """CDF of ``errors`` sampled on a ``step`` grid from 0 to the largest error."""
    e = np.asarray(errors, dtype=float)
    e = np.sort(e[np.isfinite(e)])
    if e.size == 0:
        return np.zeros(1), np.zeros(1)
    # bin each error up to the grid point at or above it
    top = math.ceil(e[-1] / step - 1e-9) * step
    grid = np.round(np.arange(0.0, top + step / 2, step), 10)
    binned = np.ceil(e / step - 1e-9) * step
    return grid, np.searchsorted(binned, grid + 1e-9, side="right") / e.size


def aoa_histogram(errors_deg, bin_deg: float = HIST_BIN_DEG) -> tuple[np.ndarray, np.ndarray]:
    edges = np.arange(0.0, 180.0 + bin_deg / 2, bin_deg)
    counts, _ = np.histogram(np.clip(errors_deg, 0.0, 180.0), bins=edges)
    return edges, counts


def summarize(records: Sequence[TrialRecord]) -> Summary:
    """Per policy: AoA error statistics and histogram, localization RMSE/median
    and CDF per method, and mean serving-AP RSSI change against policy none.
    """
    if not records:
        raise ValueError("nothing to summarize")
    ok = [r for r in records if r.status == "ok"]
    policies = list(ok[0].observations) if ok else []
    out = Summary()
    base = {}
    for policy in policies:
        errs = np.degrees([o.aoa_error for r in ok for o in r.observations[policy]])
        srv = np.degrees([r.observations[policy][r.serving_ap].aoa_error for r in ok])
        single = [r.single_ap[policy][1] for r in ok]
        tri = [r.triangulation[policy][1] for r in ok if policy in r.triangulation]
        delta = [r.rssi(policy) - r.rssi("none") for r in ok]
        metrics = {
            "trials_ok": float(len(ok)),
            "trials_failed": float(len(records) - len(ok)),
            "aoa_error_mean_deg": float(np.mean(errs)),
            "aoa_error_median_deg": float(np.median(errs)),
            "serving_aoa_error_mean_deg": float(np.mean(srv)),
            "serving_aoa_error_median_deg": float(np.median(srv)),
            "single_ap_rmse_m": _rmse(single),
            "single_ap_median_m": _finite_stat(np.median, single),
            "triangulation_rmse_m": _rmse(tri),
            "triangulation_median_m": _finite_stat(np.median, tri),
            "rssi_delta_mean_db": _finite_stat(np.mean, delta),
        }
        if policy == "none":
            base = metrics
        for key in ("aoa_error_mean_deg", "triangulation_rmse_m"):
            ref = base.get(key, math.nan)
            metrics[key.rsplit("_", 1)[0] + "_ratio_vs_none"] = (
                metrics[key] / ref if ref > 0 else math.nan
            )
        out.rows.extend((policy, name, value) for name, value in metrics.items())
        out.histograms[policy] = aoa_histogram(errs)
        out.cdfs[(policy, "single_ap")] = empirical_cdf(single)
        out.cdfs[(policy, "triangulation")] = empirical_cdf(tri)
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def _open(path: Path):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_trials(records: Sequence[TrialRecord], path) -> Path:
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in records:
            head = [r.index, _fmt(r.position[0]), _fmt(r.position[1]), r.serving_ap]
            if r.status != "ok":
                w.writerow(head + ["", "", r.status, r.reason] + [""] * (len(TRIAL_COLUMNS) - 8))
                continue
            for policy, obs in r.observations.items():
                tri_xy, tri_err = r.triangulation.get(policy, (np.full(2, np.nan), math.nan))
                for o in obs:
                    delta = o.rssi_db - r.observations["none"][o.ap].rssi_db
                    w.writerow(head + [
                        policy, o.ap, r.status, r.fallback.get(policy, ""),
                        _fmt(r.d_obf if policy in ("beam_delay", "mirage") else math.nan),
                        _fmt(math.degrees(o.true_aoa)), _fmt(math.degrees(o.est_aoa)),
                        _fmt(math.degrees(o.aoa_error)), _fmt(o.est_distance), o.num_peaks,
                        _fmt(o.rssi_db), _fmt(delta),
                        _fmt(r.single_ap[policy][1]) if o.ap == r.serving_ap else "",
                        _fmt(tri_xy[0]), _fmt(tri_xy[1]), _fmt(tri_err),
                    ])
    return path


def write_summary(summary: Summary, outdir) -> list[Path]:
    outdir = Path(outdir)
    paths = [outdir / "summary.csv", outdir / "aoa_histogram.csv", outdir / "localization_cdf.csv"]
    with _open(paths[0]) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "metric", "value"])
        for policy, metric, value in summary.rows:
            w.writerow([policy, metric, _fmt(value)])
    with _open(paths[1]) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "bin_start_deg", "bin_end_deg", "count"])
        for policy, (edges, counts) in summary.histograms.items():
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([policy, _fmt(lo), _fmt(hi), int(c)])
    with _open(paths[2]) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "method", "error_m", "cdf"])
        for (policy, method), (x, F) in summary.cdfs.items():
            for xi, fi in zip(x, F):
                w.writerow([policy, method, _fmt(xi), _fmt(fi)])
    return paths


def emit_outputs(records: Sequence[TrialRecord], summary: Summary, outdir,
                 resolved: dict | None = None, dump_profiles: bool = False) -> list[Path]:
    """Write scenario.resolved, trials.csv, the summary tables and optionally
    one profile CSV per trial, policy and AP under ``profiles/``.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {outdir}: {exc.strerror}") from exc
    written = []
    if resolved is not None:
        p = outdir / "scenario.resolved"
        with _open(p) as fh:
            fh.write(dump_resolved(resolved))
        written.append(p)
    written.append(write_trials(records, outdir / "trials.csv"))
    written.extend(write_summary(summary, outdir))
    if dump_profiles:
        pdir = outdir / "profiles"
        pdir.mkdir(exist_ok=True)
        for r in records:
            for policy, obs in r.observations.items():
                for o in obs:
                    if o.profile is not None:
                        written.append(o.profile.to_csv(pdir / f"trial{r.index:04d}_{policy}_ap{o.ap}.csv"))
    return written
