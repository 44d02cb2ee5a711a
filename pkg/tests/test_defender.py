import csv
import logging
import math

import numpy as np
import pytest
from sklearn.base import clone

from aoa_privacy import (
    ArrayConfig,
    ObfuscatingPrecoder,
    ObfuscationPolicy,
    PathComponent,
    PathKnowledge,
    Precoder,
    SpotFiEstimator,
    apply_precoder,
    beamform_delay_precoder,
    make_path_knowledge,
    matched_precoder,
    mirage_precoder,
    null_space_basis,
    nulling_precoder,
    steering_vector,
    synthesize_csi,
)
from aoa_privacy import defender
from aoa_privacy.defender import build_precoder, normalize_power, precoder_to_csv
from aoa_privacy.errors import (
    CapabilityError,
    ConfigError,
    DefenseNotApplicableError,
    DegenerateGeometryError,
)

from conftest import C

DEG = math.pi / 180


def knowledge(paths):
    d, r = paths
    return PathKnowledge(d.aod, r.aod, d.length, r.length)


def projector(a):
    """I - a a^H / |a|^2 for one steering vector."""
    return np.eye(len(a)) - np.outer(a, a.conj()) / np.vdot(a, a).real


# ---------------------------------------------------------------- null space

def test_null_space_basis_examples():
    b = null_space_basis([1.0, 0.0])
    assert b.shape == (1, 2)
    assert abs(abs(b[0, 1]) - 1) < 1e-12 and abs(b[0, 0]) < 1e-12
    v = np.array([1, 1j, -1, 0.5])
    b = null_space_basis(v)
    assert b.shape == (3, 4)
    assert np.allclose(b.conj() @ b.T, np.eye(3))
    assert np.allclose(b.conj() @ v, 0.0)
    assert np.array_equal(b, null_space_basis(v))


def test_null_space_basis_rejects_degenerate():
    with pytest.raises(ValueError):
        null_space_basis([1.0])
    with pytest.raises(ValueError):
        null_space_basis([0.0, 0.0, 0.0])


# ---------------------------------------------------------------- nulling

def test_nulling_two_antennas_is_difference_beam(ofdm):
    tx = ArrayConfig(2, 0.026)
    w = nulling_precoder(PathKnowledge(0.0, -40 * DEG, 10.0, 14.0), tx, ofdm).weights
    target = np.array([1, -1]) / math.sqrt(2)
    assert np.allclose(np.abs(w @ target.conj()), 1.0)


def test_nulling_matches_explicit_projection(canonical_paths, tx, ofdm):
    k = knowledge(canonical_paths)
    w = nulling_precoder(k, tx, ofdm).weights
    for i, f in enumerate(ofdm.frequencies):
        a_d = steering_vector(tx, k.theta_d, f)
        a_r = steering_vector(tx, k.theta_r, f)
        expect = projector(a_d) @ a_r
        expect /= np.linalg.norm(expect)
        assert abs(abs(np.vdot(expect, w[i])) - 1) < 1e-12
        assert abs(np.vdot(a_d, w[i])) < 1e-10


def test_nulling_removes_direct_path(canonical_paths, tx, ofdm):
    H = synthesize_csi(canonical_paths[:1], tx, tx, ofdm)
    h = apply_precoder(H, nulling_precoder(knowledge(canonical_paths), tx, ofdm))
    assert np.max(np.abs(h)) < 1e-10


def test_coincident_departure_angles_rejected():
    with pytest.raises(DegenerateGeometryError):
        PathKnowledge(0.1, 0.1, 10.0, 12.0)


# ---------------------------------------------------------------- beam + delay

def test_beam_delay_weights_closed_form(canonical_paths, tx, ofdm):
    k = knowledge(canonical_paths)
    policy = ObfuscationPolicy("beam_delay", d_obf=20.0)
    w = beamform_delay_precoder(k, policy, tx, ofdm)
    phase = np.exp(-2j * np.pi * ofdm.frequencies * 20.0 / C)[:, None]
    raw = steering_vector(tx, k.theta_d, ofdm.frequencies) * phase + steering_vector(tx, k.theta_r, ofdm.frequencies)
    alpha = math.sqrt(np.mean(np.sum(np.abs(raw) ** 2, axis=1)))
    assert np.allclose(w.weights, raw / alpha)
    assert w.meta["d_obf"] == 20.0


def test_beam_delay_without_delay_reveals_direct_path(canonical_paths, tx, ofdm):
    k = knowledge(canonical_paths)
    w = beamform_delay_precoder(k, ObfuscationPolicy("beam_delay", d_obf=0.0), tx, ofdm, enforce=False)
    h = apply_precoder(synthesize_csi(canonical_paths, tx, tx, ofdm), w)
    est = SpotFiEstimator(num_paths=2).fit(h)
    assert abs(est.direct_.angle) <= DEG


# ---------------------------------------------------------------- mirage

@pytest.mark.parametrize("rule", ["projection", "weighted"])
def test_mirage_cross_terms_vanish(canonical_paths, tx, ofdm, rule):
    k = knowledge(canonical_paths)
    w = mirage_precoder(k, ObfuscationPolicy("mirage", 15.0, combine_rule=rule), tx, ofdm)
    assert w.meta["combine_rule"] == rule
    a_d = steering_vector(tx, k.theta_d, ofdm.frequencies)
    a_r = steering_vector(tx, k.theta_r, ofdm.frequencies)
    bdnr, brnd = w.meta["bdnr"], w.meta["brnd"]
    assert np.max(np.abs(np.sum(a_r.conj() * bdnr, axis=1))) < 1e-10
    assert np.max(np.abs(np.sum(a_d.conj() * brnd, axis=1))) < 1e-10
    assert np.min(np.abs(np.sum(a_d.conj() * bdnr, axis=1))) > 0.5
    assert np.min(np.abs(np.sum(a_r.conj() * brnd, axis=1))) > 0.5


def test_mirage_projection_beams_match_explicit_projectors(canonical_paths, tx, ofdm):
    k = knowledge(canonical_paths)
    w = mirage_precoder(k, ObfuscationPolicy("mirage", 15.0), tx, ofdm)
    for i in (0, 26, 51):
        f = ofdm.frequencies[i]
        a_d = steering_vector(tx, k.theta_d, f)
        a_r = steering_vector(tx, k.theta_r, f)
        bd = projector(a_r) @ a_d
        br = projector(a_d) @ a_r
        bd, br = bd / np.linalg.norm(bd), br / np.linalg.norm(br)
        assert abs(np.vdot(bd, w.meta["bdnr"][i]) - 1) < 1e-10
        assert abs(np.vdot(br, w.meta["brnd"][i]) - 1) < 1e-10


def test_mirage_delays_only_the_direct_path(canonical_paths, tx, ofdm):
    """Through the direct path alone the phase slope carries d + d_obf; through
    the reflection alone it carries the plain reflected length."""
    k = knowledge(canonical_paths)
    w = mirage_precoder(k, ObfuscationPolicy("mirage", 15.0), tx, ofdm)
    df = ofdm.frequencies - ofdm.center_frequency
    for p, extra in ((canonical_paths[0], 15.0), (canonical_paths[1], 0.0)):
        h = apply_precoder(synthesize_csi([p], tx, tx, ofdm), w)
        slope = np.polyfit(df, np.unwrap(np.angle(h[0])), 1)[0]
        assert slope == pytest.approx(-2 * math.pi * (p.length + extra) / C, rel=1e-9)


def test_mirage_needs_three_antennas(canonical_paths, ofdm):
    with pytest.raises(CapabilityError):
        mirage_precoder(knowledge(canonical_paths), ObfuscationPolicy("mirage"), ArrayConfig(2, 0.026), ofdm)


def test_weighted_falls_back(monkeypatch, canonical_paths, tx, ofdm, caplog):
    monkeypatch.setattr(defender, "_combine_weighted", lambda beam, null_of: None)
    with caplog.at_level(logging.WARNING, logger="aoa_privacy"):
        w = mirage_precoder(knowledge(canonical_paths),
                            ObfuscationPolicy("mirage", 15.0, combine_rule="weighted"), tx, ofdm)
    assert w.meta["combine_rule"] == "projection"
    assert "ill-conditioned" in caplog.text


# ---------------------------------------------------------------- policy / d_obf

def test_adaptive_d_obf(canonical_paths, ofdm):
    k = knowledge(canonical_paths)
    assert ObfuscationPolicy("mirage", margin=3.0).resolve_d_obf(k, ofdm) == pytest.approx(k.excess_length + 3.0)


def test_fixed_d_obf_must_exceed_excess(canonical_paths, ofdm):
    k = knowledge(canonical_paths)  # excess 4.14 m
    with pytest.raises(ConfigError):
        ObfuscationPolicy("mirage", d_obf=4.0).resolve_d_obf(k, ofdm)
    assert ObfuscationPolicy("mirage", d_obf=4.0).resolve_d_obf(k, ofdm, enforce=False) == 4.0


def test_d_obf_capped_inside_alias_window(canonical_paths, ofdm):
    k = knowledge(canonical_paths)
    got = ObfuscationPolicy("mirage", d_obf=5000.0).resolve_d_obf(k, ofdm)
    assert got == pytest.approx(0.95 * ofdm.alias_distance - k.d_d)


@pytest.mark.parametrize("kwargs", [
    {"mode": "cloak"}, {"combine_rule": "mean"}, {"normalization": "peak"},
    {"margin": 0.0}, {"d_obf": -1.0},
])
def test_policy_validation(kwargs):
    with pytest.raises(ConfigError):
        ObfuscationPolicy(**kwargs)


def test_path_knowledge_validation():
    with pytest.raises(ValueError):
        PathKnowledge(0.0, 0.5, 12.0, 10.0)
    with pytest.raises(ValueError):
        PathKnowledge(2.0, 0.5, 10.0, 12.0)


def test_normalize_power(rng):
    w = rng.standard_normal((52, 4)) + 1j * rng.standard_normal((52, 4))
    avg = normalize_power(w)
    assert np.mean(np.sum(np.abs(avg) ** 2, axis=1)) == pytest.approx(1.0)
    assert np.allclose(avg / w, avg[0, 0] / w[0, 0])  # a single scale factor
    per = normalize_power(w, "per_subcarrier")
    assert np.allclose(np.linalg.norm(per, axis=1), 1.0)
    with pytest.raises(ValueError):
        normalize_power(np.zeros((52, 4)))


@pytest.mark.parametrize("mode", ["none", "nulling", "beam_delay", "mirage"])
@pytest.mark.parametrize("norm", ["average", "per_subcarrier"])
def test_every_precoder_satisfies_power_invariant(canonical_paths, tx, ofdm, mode, norm):
    w = build_precoder(ObfuscationPolicy(mode, normalization=norm), knowledge(canonical_paths), tx, ofdm)
    assert isinstance(w, Precoder)
    assert w.weights.shape == (52, 4)
    assert np.mean(np.sum(np.abs(w.weights) ** 2, axis=1)) == pytest.approx(1.0)


def test_build_precoder_needs_knowledge(tx, ofdm):
    with pytest.raises(DefenseNotApplicableError):
        build_precoder(ObfuscationPolicy("mirage"), None, tx, ofdm)
    with pytest.raises(ValueError):
        build_precoder(ObfuscationPolicy("none"), None, tx, ofdm)
    w = build_precoder(ObfuscationPolicy("none"), None, tx, ofdm, theta_direct=0.2)
    assert np.allclose(w.weights, matched_precoder(0.2, tx, ofdm).weights)


# ---------------------------------------------------------------- path knowledge

def test_make_path_knowledge_picks_strongest_reflection():
    paths = [
        PathComponent(10.0, 0.0, 0.0, 0.1, 0),
        PathComponent(12.0, 0.3, 0.2, 0.02, 1),
        PathComponent(15.0, -0.4, -0.5, 0.05, 1),
    ]
    k = make_path_knowledge(paths)
    assert (k.theta_d, k.theta_r, k.d_d, k.d_r) == (0.0, -0.4, 10.0, 15.0)


def test_make_path_knowledge_without_reflection():
    with pytest.raises(DefenseNotApplicableError):
        make_path_knowledge([PathComponent(10.0, 0.0, 0.0, 0.1, 0)])
    with pytest.raises(DefenseNotApplicableError):
        make_path_knowledge([PathComponent(12.0, 0.3, 0.2, 0.02, 1)])


def test_angle_error_degrades_null(canonical_paths, tx, ofdm):
    H = synthesize_csi(canonical_paths[:1], tx, tx, ofdm)
    exact = apply_precoder(H, nulling_precoder(make_path_knowledge(canonical_paths), tx, ofdm))
    leaks = []
    for seed in range(20):
        k = make_path_knowledge(canonical_paths, np.random.default_rng(seed), 3 * DEG)
        leaks.append(np.max(np.abs(apply_precoder(H, nulling_precoder(k, tx, ofdm)))))
    assert np.max(np.abs(exact)) < 1e-10
    assert np.median(leaks) > 1e-4


# ---------------------------------------------------------------- export and estimator

def test_precoder_csv_round_trip(canonical_paths, tx, ofdm, tmp_path):
    w = mirage_precoder(knowledge(canonical_paths), ObfuscationPolicy("mirage"), tx, ofdm)
    path = precoder_to_csv(w, tmp_path / "w.csv")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["subcarrier_index", "antenna_index", "real", "imag"]
    assert len(rows) == 1 + 52 * 4
    back = np.zeros((52, 4), complex)
    for i, k, re, im in rows[1:]:
        back[int(i), int(k)] = float(re) + 1j * float(im)
    assert np.array_equal(back, w.weights)


def test_obfuscating_precoder_api(canonical_paths, tx, ofdm):
    est = ObfuscatingPrecoder(mode="mirage", d_obf=15.0)
    assert est.get_params()["mode"] == "mirage"
    twin = clone(est).set_params(mode="nulling")
    assert twin.mode == "nulling" and est.mode == "mirage"
    H = synthesize_csi(canonical_paths, tx, tx, ofdm)
    h = est.fit(canonical_paths).transform(H)
    assert h.shape == (4, 52)
    assert est.precoder_.meta["d_obf"] == 15.0
    again = ObfuscatingPrecoder(mode="mirage", d_obf=15.0).fit(knowledge(canonical_paths))
    assert np.array_equal(again.precoder_.weights, est.precoder_.weights)


def test_attacker_invariant_to_precoder_global_phase(canonical_paths, tx, ofdm):
    H = synthesize_csi(canonical_paths, tx, tx, ofdm)
    w = mirage_precoder(knowledge(canonical_paths), ObfuscationPolicy("mirage", 15.0), tx, ofdm)
    rotated = Precoder(w.weights * np.exp(0.9j))
    a = SpotFiEstimator(num_paths=2).fit(apply_precoder(H, w))
    b = SpotFiEstimator(num_paths=2).fit(apply_precoder(H, rotated))
    assert a.profile_.argmax() == b.profile_.argmax()
    assert a.direct_.angle == pytest.approx(b.direct_.angle, abs=1e-6)
