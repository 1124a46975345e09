# Fusing a relative 100 Hz stream with an absolute 24 Hz stream.
from fusetrack import FusionMode, ScenarioSpec, build_scenario, evaluate, run_scenario
from fusetrack.config import RunConfig

spec = ScenarioSpec(seed=3, n_tracks=10)
sc = build_scenario(spec)
print(f"{len(sc.streams['event'])} event and {len(sc.streams['frame'])} frame measurements, "
      f"occluded fraction {sc.occlusion_fraction:.2f}")

cfg = RunConfig()
configs = sc.track_configs(cfg.track.init_pos_var, cfg.track.init_vel_var)
for mode in FusionMode:
    out = run_scenario(sc.streams, configs, mode, cfg.process, cfg.noise.as_mapping())
    r = evaluate(out, sc.tracks)
    print(f"{mode.value:13s} delta_vis={r.delta_vis:.3f} delta_occ={r.delta_occ:.3f} "
          f"delta_all={r.delta_all:.3f} expected_fa={r.expected_fa:.3f}")
