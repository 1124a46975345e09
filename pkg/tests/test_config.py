import pytest

from fusetrack import config
from fusetrack.config import ConfigError, RunConfig
from fusetrack.fusion import FusionMode, OOOPolicy
from fusetrack.metrics import EvalConfig
from fusetrack.synth import ScenarioSpec


def test_defaults_round_trip():
    for cls in (RunConfig, EvalConfig, ScenarioSpec):
        obj = cls()
        assert config.loads(cls, config.dump_kv(obj)) == obj


def test_dotted_keys_and_comments():
    cfg = config.loads(RunConfig, """
        # fused run
        mode = naive_combo
        noise.event.sigma2_max=64   # px^2
        process.q_vel=25
        ooo.policy=buffer
        ooo.window=0.05
    """)
    assert cfg.mode is FusionMode.NAIVE_COMBO
    assert cfg.noise.event.sigma2_max == 64.0
    assert cfg.noise.event.sigma2_min == RunConfig().noise.event.sigma2_min
    assert cfg.process.q_vel == 25.0
    assert cfg.ooo == OOOPolicy("buffer", 0.05)


def test_tuple_fields():
    cfg = config.loads(EvalConfig, "delta_thresholds=1,3,9\n")
    assert cfg.delta_thresholds == (1.0, 3.0, 9.0)


@pytest.mark.parametrize("text, line", [
    ("mode=kalman_fused\nbogus=1\n", 2),
    ("seed=1\nseed=2\n", 2),
    ("\n\nno equals sign\n", 3),
    ("process.q_vel=fast\n", 1),
    ("mode=extra_fused\n", 1),
])
def test_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as ei:
        config.loads(RunConfig, text, "run.cfg")
    assert ei.value.line == line and ei.value.path == "run.cfg"


def test_invariant_violation_is_config_error():
    with pytest.raises(ConfigError):
        config.loads(RunConfig, "noise.frame.sigma2_min=500\nnoise.frame.sigma2_max=400\n")
    with pytest.raises(ConfigError):
        config.loads(RunConfig, "process.q_vel=-1\n")


def test_spec_echo_preserves_nested_models():
    spec = ScenarioSpec(seed=12, n_tracks=3)
    text = config.dump_kv(spec)
    assert "event.occluded_behavior=stuck" in text
    assert config.loads(ScenarioSpec, text) == spec


def test_load_none_gives_defaults():
    assert config.load_run_config() == RunConfig()
    assert config.load_eval_config() == EvalConfig()


def test_partial_nested_override_keeps_parent_default():
    cfg = config.loads(RunConfig, "process.q_pos=1\nnoise.frame.sigma2_max=500\n")
    assert cfg.process.q_vel == RunConfig().process.q_vel
    assert cfg.noise.frame.sigma2_min == RunConfig().noise.frame.sigma2_min
    assert cfg.noise.event == RunConfig().noise.event
