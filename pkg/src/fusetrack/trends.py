"""Mode comparison over the benchmark suite.

Every scenario is run through each fusion mode with the same run config and
scored with :func:`metrics.evaluate`.  Suite aggregates are means of the
per-scenario pooled scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .fusion import FusionMode, run_scenario
from .metrics import EvalConfig, evaluate
from .synth import ScenarioSpec, benchmark_suite, build_scenario

SPLITS = ("vis", "occ", "all")
BASELINES = (FusionMode.EVENT_ONLY, FusionMode.FRAME_ONLY, FusionMode.NAIVE_COMBO)


@dataclass(frozen=True, eq=False)
class SuiteResult:
    """``deltas[mode]`` has shape ``(n_scenarios, 3)``: columns vis, occ, all."""

    deltas: dict[FusionMode, np.ndarray]
    expected_fa: dict[FusionMode, np.ndarray]

    @property
    def n_scenarios(self) -> int:
        return len(next(iter(self.deltas.values())))

    def aggregate(self, mode, split: str = "all") -> float:
        return float(np.nanmean(self.deltas[FusionMode(mode)][:, SPLITS.index(split)]))

    def win_rate(self, mode, over, split: str = "all") -> float:
        """Fraction of scenarios where ``mode`` strictly beats ``over``."""
        col = SPLITS.index(split)
        return float(np.mean(self.deltas[FusionMode(mode)][:, col]
                             > self.deltas[FusionMode(over)][:, col]))

    def relative_gain(self, mode, over, split: str) -> float:
        """Aggregate ``mode / over - 1`` on one split."""
        return self.aggregate(mode, split) / self.aggregate(over, split) - 1.0


def _score(d):
    return np.nan if d is None else d


def run_suite(
    specs: list[ScenarioSpec] | None = None,
    cfg: RunConfig | None = None,
    modes=tuple(FusionMode),
    eval_cfg: EvalConfig | None = None,
) -> SuiteResult:
    specs = benchmark_suite(0) if specs is None else specs
    cfg = RunConfig() if cfg is None else cfg
    eval_cfg = EvalConfig() if eval_cfg is None else eval_cfg
    modes = [FusionMode(m) for m in modes]
    deltas = {m: [] for m in modes}
    efa = {m: [] for m in modes}
    for spec in specs:
        sc = build_scenario(spec)
        configs = sc.track_configs(cfg.track.init_pos_var, cfg.track.init_vel_var, cfg.ooo)
        for m in modes:
            out = run_scenario(sc.streams, configs, m, cfg.process, cfg.noise.as_mapping())
            r = evaluate(out, sc.tracks, eval_cfg)
            deltas[m].append([_score(r.delta_vis), _score(r.delta_occ), _score(r.delta_all)])
            efa[m].append(_score(r.expected_fa))
    return SuiteResult({m: np.array(v, dtype=float) for m, v in deltas.items()},
                       {m: np.array(v, dtype=float) for m, v in efa.items()})
