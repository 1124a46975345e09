"""Single-thread throughput of the Kalman step and of a fused ingest.

As with :mod:`timeit`, the cyclic garbage collector is paused while timing so
that collections triggered by the pre-built inputs do not land in the loop.
"""

from __future__ import annotations

import gc
import time
from contextlib import contextmanager

import numpy as np

from .fusion import FusionMode, SourcedMeasurement, TrackConfig, Tracker
from .kalman import Observation, ProcessModel, StateEstimate, predict_update


@contextmanager
def _gc_paused():
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def time_predict_update(iterations: int = 1_000_000) -> float:
    """Mean wall time in ns of one :func:`predict_update` call."""
    pm = ProcessModel()
    state = StateEstimate.create([0.0, 0.0, 10.0, -5.0], np.eye(4))
    obs = Observation.create([0.1, -0.05], 1.0)
    predict_update(state, 0.01, pm, obs)  # JIT warm-up
    with _gc_paused():
        start = time.perf_counter_ns()
        for _ in range(iterations):
            state, _ = predict_update(state, 0.01, pm, obs)
        elapsed = time.perf_counter_ns() - start
    return elapsed / iterations


def time_ingest(iterations: int = 200_000) -> float:
    """Mean wall time in ns of one fused ``Tracker.ingest`` of an event measurement."""
    tracker = Tracker(TrackConfig((0.0, 0.0)), 0, FusionMode.KALMAN_FUSED)
    dz = np.array([0.1, -0.05])
    ms = [SourcedMeasurement((k + 1) * 0.01, 0, "event", "relative", dz, 1.0)
          for k in range(iterations + 1)]
    tracker.ingest(ms[0])
    with _gc_paused():
        start = time.perf_counter_ns()
        for m in ms[1:]:
            tracker.ingest(m)
        elapsed = time.perf_counter_ns() - start
    return elapsed / iterations


def run_bench(iterations: int = 1_000_000) -> dict:
    ns = time_predict_update(iterations)
    ingest_ns = time_ingest(max(iterations // 5, 1))
    return {
        "iterations": iterations,
        "mean_ns_predict_update": ns,
        "mean_ns_fused_ingest": ingest_ns,
        "fused_ingests_per_second": 1e9 / ingest_ns,
    }
