import numpy as np
import pytest

from fusetrack.fusion import (
    FusionEngine,
    FusionMode,
    OOOPolicy,
    SourcedMeasurement,
    TrackConfig,
    Tracker,
    UnknownTrackError,
    anchor_to_absolute,
    init_track,
    merge_streams,
    run_scenario,
)
from fusetrack.kalman import ProcessModel
from fusetrack.uncertainty import NoiseMap

PM = ProcessModel(0.5, 400.0)
MAPS = {"event": NoiseMap(0.1, 50.0), "frame": NoiseMap(0.5, 200.0)}


def ev(t, dz, p=1.0, tid=0):
    return SourcedMeasurement(t, tid, "event", "relative", np.asarray(dz, float), p)


def fr(t, z, p=1.0, tid=0):
    return SourcedMeasurement(t, tid, "frame", "absolute", np.asarray(z, float), p)


def interleaved(seed=7, duration=1.0):
    rng = np.random.default_rng(seed)
    events = [ev(0.01 * k, rng.normal(0, 1, 2), rng.uniform()) for k in range(1, 101)]
    frames = [fr(0.042 * k, rng.normal(0, 5, 2), rng.uniform())
              for k in range(1, int(duration / 0.042) + 1)]
    return events, frames


def reference_filter(measurements, cfg, pm, maps):
    """Sort, then filter once over the merged list with plain numpy algebra."""
    order = sorted(measurements, key=lambda m: (m.t, m.source != "frame"))
    x = np.array([*cfg.p_ref, 0.0, 0.0])
    P = np.diag([cfg.init_pos_var] * 2 + [cfg.init_vel_var] * 2)
    t = ref_t = cfg.t0
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    out = []
    for m in order:
        if m.kind == "relative":
            z = x[:2] - x[2:] * (t - ref_t) + m.z_raw
            ref_t = m.t
        else:
            z = m.z_raw
        dt = m.t - t
        F = np.eye(4)
        F[0, 2] = F[1, 3] = dt
        q = np.array([[pm.q_pos * dt + pm.q_vel * dt**3 / 3, pm.q_vel * dt**2 / 2],
                      [pm.q_vel * dt**2 / 2, pm.q_vel * dt]])
        Q = np.kron(q, np.eye(2))
        x, P = F @ x, F @ P @ F.T + Q
        nm = maps[m.source]
        R = (nm.sigma2_min + (nm.sigma2_max - nm.sigma2_min) * (1 - m.p_vis) ** 2) * np.eye(2)
        K = P @ H.T @ np.linalg.inv(H @ P @ H.T + R)
        x = x + K @ (z - H @ x)
        P = (np.eye(4) - K @ H) @ P
        t = m.t
        out.append((t, x[:2].copy()))
    return out


def test_init_track():
    tr = init_track(TrackConfig((10.0, 20.0), init_pos_var=1.0))
    o = tr.initial_output()
    np.testing.assert_array_equal(o.pos, [10, 20])
    np.testing.assert_array_equal(o.cov_pos, np.eye(2))
    a, b = init_track(TrackConfig((1.0, 2.0))), init_track(TrackConfig((1.0, 2.0)))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.P, b.P)


def test_anchor_to_absolute():
    np.testing.assert_array_equal(anchor_to_absolute(ev(0.01, [1, -1]), (5, 5)), [6, 4])
    np.testing.assert_array_equal(anchor_to_absolute(ev(0.01, [0, 0]), (5, 5)), [5, 5])
    with pytest.raises(ValueError):
        anchor_to_absolute(ev(0.01, [1, 1]), None)
    with pytest.raises(ValueError):
        anchor_to_absolute(fr(0.01, [1, 1]), (0, 0))


def test_measurement_validation():
    with pytest.raises(ValueError):
        SourcedMeasurement(0.0, 0, "frame", "relative", np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        SourcedMeasurement(float("inf"), 0, "event", "relative", np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        SourcedMeasurement(0.0, 0, "lidar", "absolute", np.zeros(2), 1.0)


def test_anchor_chain_hand_trace():
    # zero velocity uncertainty, unit measurement noise: gains are 1/2, 1/3, 1/4
    cfg = TrackConfig((0.0, 0.0), init_pos_var=1.0, init_vel_var=1e-300)
    tr = Tracker(cfg, mode="kalman_fused", process=ProcessModel(0.0, 0.0),
                 noise_maps={"event": NoiseMap(1.0, 2.0), "frame": NoiseMap(1.0, 2.0)})
    xs = [tr.ingest(ev(0.01 * k, [2.0, 0.0]))[0].pos[0] for k in (1, 2, 3)]
    # anchors are 0, 1, 5/3 (previous outputs); raw chaining would measure 2, 4, 6
    np.testing.assert_allclose(xs, [1.0, 5 / 3, 13 / 6], rtol=1e-12)


def test_naive_overwrites_and_anchors_on_last_output():
    tr = Tracker(TrackConfig((0.0, 0.0)), mode="naive_combo", noise_maps=MAPS)
    outs = [tr.ingest(m)[0] for m in
            (ev(0.01, [1, 0]), ev(0.02, [1, 0]), fr(0.025, [5, 5]), ev(0.03, [1, 1]))]
    np.testing.assert_array_equal([o.pos for o in outs], [[1, 0], [2, 0], [5, 5], [6, 6]])
    np.testing.assert_allclose(tr.x[2:], [200, 200])
    np.testing.assert_allclose(outs[2].cov_pos, 0.5 * np.eye(2))


def test_interleaved_matches_sort_then_filter():
    events, frames = interleaved()
    cfg = TrackConfig((0.0, 0.0), init_pos_var=2.0, init_vel_var=100.0)
    out = run_scenario({"event": events, "frame": frames}, {0: cfg}, "kalman_fused", PM, MAPS)[0]
    ref = reference_filter(events + frames, cfg, PM, MAPS)
    assert len(out) == len(ref) + 1
    for o, (t, p) in zip(out[1:], ref):
        assert o.t == t
        np.testing.assert_allclose(o.pos, p, rtol=1e-9, atol=1e-9)


def test_merged_stream_equals_engine_interleaving():
    events, frames = interleaved(seed=11)
    cfg = {0: TrackConfig((1.0, 1.0))}
    a = run_scenario([events, frames], cfg, "kalman_fused", PM, MAPS)[0]
    b = run_scenario([merge_streams([events, frames])], cfg, "kalman_fused", PM, MAPS)[0]
    for oa, ob in zip(a, b):
        np.testing.assert_allclose(oa.pos, ob.pos, rtol=0, atol=1e-12)


def test_frames_first_at_equal_time():
    merged = merge_streams({"event": [ev(0.5, [0, 0])], "frame": [fr(0.5, [1, 1])]})
    assert [m.source for m in merged] == ["frame", "event"]


def test_zero_noise_frame_snaps():
    tr = Tracker(TrackConfig((0.0, 0.0)), process=PM,
                 noise_maps={"event": NoiseMap(), "frame": NoiseMap(1e-12, 1.0)})
    out = tr.ingest(fr(0.04, [3.0, -2.0]))[0]
    np.testing.assert_allclose(out.pos, [3, -2], atol=1e-5)


def test_infinite_noise_event_coasts():
    maps = {"event": NoiseMap(0.25, 1e12), "frame": NoiseMap()}
    tr = Tracker(TrackConfig((0.0, 0.0)), process=PM, noise_maps=maps)
    tr.x[2:] = [30.0, -10.0]
    out = tr.ingest(ev(0.1, [50.0, 50.0], p=0.0))[0]
    np.testing.assert_allclose(out.pos, [3.0, -1.0], atol=1e-6)


def test_empty_streams_give_initial_state():
    out = run_scenario({"event": [], "frame": []}, {3: TrackConfig((4.0, 5.0), t0=0.5)})
    assert list(out) == [3] and len(out[3]) == 1
    assert out[3][0].t == 0.5


def test_single_source_fused_equals_single_mode():
    events, _ = interleaved()
    cfg = {0: TrackConfig((0.0, 0.0))}
    a = run_scenario([events], cfg, "kalman_fused", PM, MAPS)[0]
    b = run_scenario([events], cfg, "event_only", PM, MAPS)[0]
    assert all(np.array_equal(x.pos, y.pos) and np.array_equal(x.cov_pos, y.cov_pos)
               for x, y in zip(a, b))


def test_single_source_modes_ignore_other_source():
    events, frames = interleaved()
    cfg = {0: TrackConfig((0.0, 0.0))}
    out = run_scenario([events, frames], cfg, "frame_only", PM, MAPS)[0]
    assert len(out) == len(frames) + 1


def test_reject_policy_counts_out_of_order():
    tr = Tracker(TrackConfig((0.0, 0.0)), process=PM, noise_maps=MAPS)
    tr.ingest(fr(0.1, [1, 1]))
    assert tr.ingest(fr(0.05, [2, 2])) == []
    assert [r.reason for r in tr.rejected] == ["out_of_order"]
    assert tr.n_processed == 1


def test_buffer_policy_reorders_within_window():
    events, frames = interleaved()
    ordered = merge_streams([events, frames])
    delay = np.random.default_rng(0).uniform(0, 0.02, len(ordered))
    jittered = [ordered[i] for i in np.argsort([m.t + d for m, d in zip(ordered, delay)])]
    assert jittered != ordered
    cfg = TrackConfig((0.0, 0.0), ooo=OOOPolicy("buffer", window=0.03))
    tr = Tracker(cfg, process=PM, noise_maps=MAPS)
    out = [o for m in jittered for o in tr.ingest(m)] + tr.flush()
    ref = run_scenario([ordered], {0: TrackConfig((0.0, 0.0))}, "kalman_fused", PM, MAPS)[0][1:]
    assert not tr.rejected
    assert [o.t for o in out] == [o.t for o in ref]
    for a, b in zip(out, ref):
        np.testing.assert_array_equal(a.pos, b.pos)


def test_buffer_policy_rejects_too_late():
    tr = Tracker(TrackConfig((0.0, 0.0), ooo=OOOPolicy("buffer", 0.01)), process=PM,
                 noise_maps=MAPS)
    tr.ingest(fr(0.1, [0, 0]))
    tr.ingest(fr(0.2, [0, 0]))
    assert tr.ingest(fr(0.05, [0, 0])) == []
    assert tr.rejected[0].reason == "late_beyond_window"


def test_unknown_track_rejected():
    eng = FusionEngine({0: TrackConfig((0.0, 0.0))})
    with pytest.raises(UnknownTrackError):
        eng.ingest(fr(0.1, [0, 0], tid=5))


def test_outputs_are_valid_covariances():
    events, frames = interleaved(seed=3)
    for mode in FusionMode:
        out = run_scenario([events, frames], {0: TrackConfig((0.0, 0.0))}, mode, PM, MAPS)[0]
        for o in out:
            assert np.array_equal(o.cov_pos, o.cov_pos.T)
            assert np.linalg.eigvalsh(o.cov_pos)[0] >= -1e-9


def test_deterministic():
    events, frames = interleaved(seed=42)
    cfg = {0: TrackConfig((0.0, 0.0))}
    a = run_scenario([events, frames], cfg, "kalman_fused", PM, MAPS)[0]
    b = run_scenario([events, frames], cfg, "kalman_fused", PM, MAPS)[0]
    assert all(np.array_equal(x.pos, y.pos) for x, y in zip(a, b))
