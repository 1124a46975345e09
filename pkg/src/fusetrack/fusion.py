"""Asynchronous per-feature fusion of event-rate and frame-rate measurements.

Each feature is tracked by a :class:`Tracker` that consumes timestamped
:class:`SourcedMeasurement` records one at a time.  How a measurement is
used depends on the :class:`FusionMode`:

* ``event_only`` / ``frame_only`` run the Kalman filter on one source and
  ignore the other.
* ``kalman_fused`` runs the Kalman filter on both sources, weighting each
  measurement by the covariance remapped from its reported visibility.
* ``naive_combo`` is the baseline that simply overwrites the position with
  whichever source reported last and re-estimates velocity by finite
  difference.

Relative (event) measurements are displacements since the previous event
sample.  The Kalman modes add them to the track's estimate of where it was
at that previous event time: the most recent output moved back along its
velocity over any time that has passed since (non-zero only when a frame
update came in between).  ``naive_combo`` adds them to the most recent
output as is.

A :class:`Tracker` is a sequential state machine and must not be shared
between concurrent writers.  Distinct trackers are independent.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .kalman import (
    DegenerateCovarianceError,
    ProcessModel,
    StateEstimate,
    _step_kernel,
    _step_relative_kernel,
)
from .uncertainty import NoiseMap, VisibilityReport, variance

SOURCES = ("event", "frame")
KINDS = ("absolute", "relative")
# frames are absolute anchors, so they go first at equal timestamps
SOURCE_RANK = {"frame": 0, "event": 1}


class FusionMode(str, Enum):
    EVENT_ONLY = "event_only"
    FRAME_ONLY = "frame_only"
    NAIVE_COMBO = "naive_combo"
    KALMAN_FUSED = "kalman_fused"


class UnknownTrackError(KeyError):
    pass


@dataclass(frozen=True)
class OOOPolicy:
    """Out-of-order handling.

    ``reject`` drops any measurement older than the track's current time.
    ``buffer`` holds measurements in a reorder buffer and releases them in
    timestamp order once they are ``window`` seconds older than the newest
    measurement seen; anything arriving after its slot was released is
    rejected.
    """

    policy: str = "reject"
    window: float = 0.0

    def __post_init__(self):
        if self.policy not in ("reject", "buffer"):
            raise ValueError(f"unknown out-of-order policy {self.policy!r}")
        if not self.window >= 0.0:
            raise ValueError(f"window must be >= 0, got {self.window}")


@dataclass(frozen=True)
class TrackConfig:
    p_ref: tuple[float, float]
    t0: float = 0.0
    init_pos_var: float = 1.0
    init_vel_var: float = 1.0e4
    ooo: OOOPolicy = field(default_factory=OOOPolicy)

    def __post_init__(self):
        if not (self.init_pos_var > 0.0 and self.init_vel_var > 0.0):
            raise ValueError("initial variances must be positive")


@dataclass(frozen=True, eq=False)
class SourcedMeasurement:
    t: float
    track_id: int
    source: str
    kind: str
    z_raw: np.ndarray
    p_vis: float

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError(f"measurement time must be finite, got {self.t}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "relative" and self.source != "event":
            raise ValueError("only event measurements may be relative")
        if not 0.0 <= self.p_vis <= 1.0:
            raise ValueError(f"p_vis must lie in [0, 1], got {self.p_vis}")

    @property
    def report(self) -> VisibilityReport:
        return VisibilityReport.from_p_vis(self.p_vis)

    def __eq__(self, other):
        if not isinstance(other, SourcedMeasurement):
            return NotImplemented
        return (
            self.t == other.t
            and self.track_id == other.track_id
            and self.source == other.source
            and self.kind == other.kind
            and np.array_equal(self.z_raw, other.z_raw)
            and self.p_vis == other.p_vis
        )


@dataclass(frozen=True, eq=False)
class TrackOutput:
    t: float
    pos: np.ndarray
    cov_pos: np.ndarray
    p_vis_used: float = 1.0


@dataclass(frozen=True)
class Rejection:
    measurement: SourcedMeasurement
    reason: str


def default_noise_maps() -> dict[str, NoiseMap]:
    return {"event": NoiseMap(), "frame": NoiseMap()}


def anchor_to_absolute(m: SourcedMeasurement, anchor) -> np.ndarray:
    """Absolute position of a relative measurement issued from ``anchor``."""
    if m.kind != "relative":
        raise ValueError("anchor_to_absolute expects a relative measurement")
    if anchor is None:
        raise ValueError("relative measurement has no prior anchor")
    return np.asarray(anchor, dtype=np.float64) + m.z_raw


class Tracker:
    """Single-feature fusion state machine."""

    def __init__(
        self,
        cfg: TrackConfig,
        track_id: int = 0,
        mode: FusionMode | str = FusionMode.KALMAN_FUSED,
        process: ProcessModel | None = None,
        noise_maps: Mapping[str, NoiseMap] | None = None,
    ):
        self.cfg = cfg
        self.track_id = track_id
        self.mode = FusionMode(mode)
        self.process = process if process is not None else ProcessModel()
        self.noise_maps = dict(noise_maps) if noise_maps is not None else default_noise_maps()
        self.x = np.array([cfg.p_ref[0], cfg.p_ref[1], 0.0, 0.0], dtype=np.float64)
        self.P = np.diag([cfg.init_pos_var] * 2 + [cfg.init_vel_var] * 2).astype(np.float64)
        self.t = float(cfg.t0)
        self.event_ref_t = self.t
        self.rejected: list[Rejection] = []
        self.n_processed = 0
        self._pending: list = []
        self._seq = itertools.count()
        self._newest = self.t

    @property
    def state(self) -> StateEstimate:
        return StateEstimate(self.x.copy(), self.P.copy(), self.t)

    def initial_output(self) -> TrackOutput:
        return TrackOutput(self.t, self.x[:2].copy(), self.P[:2, :2].copy(), 1.0)

    def anchor(self) -> np.ndarray:
        """Position that the next relative measurement is measured from."""
        if self.mode is FusionMode.NAIVE_COMBO:
            return self.x[:2].copy()
        return self.x[:2] - self.x[2:] * (self.t - self.event_ref_t)

    def accepts(self, m: SourcedMeasurement) -> bool:
        if self.mode is FusionMode.EVENT_ONLY:
            return m.source == "event"
        if self.mode is FusionMode.FRAME_ONLY:
            return m.source == "frame"
        return True

    def ingest(self, m: SourcedMeasurement) -> list[TrackOutput]:
        """Feed one measurement; return the outputs it released.

        Under the ``reject`` policy this is zero or one output.  Measurements
        for the other source in a single-source mode produce nothing.
        """
        if m.track_id != self.track_id:
            raise UnknownTrackError(m.track_id)
        if not self.accepts(m):
            return []
        if self.cfg.ooo.policy == "reject":
            if m.t < self.t:
                self.rejected.append(Rejection(m, "out_of_order"))
                return []
            return [self._process(m)]

        if m.t < self.t:
            self.rejected.append(Rejection(m, "late_beyond_window"))
            return []
        heapq.heappush(self._pending, (m.t, SOURCE_RANK[m.source], next(self._seq), m))
        self._newest = max(self._newest, m.t)
        release_before = self._newest - self.cfg.ooo.window
        out = []
        while self._pending and self._pending[0][0] <= release_before:
            out.append(self._process(heapq.heappop(self._pending)[3]))
        return out

    def flush(self) -> list[TrackOutput]:
        out = []
        while self._pending:
            out.append(self._process(heapq.heappop(self._pending)[3]))
        return out

    def _process(self, m: SourcedMeasurement) -> TrackOutput:
        dt = m.t - self.t
        var = variance(m.p_vis, self.noise_maps[m.source])
        relative = m.kind == "relative"

        if self.mode is FusionMode.NAIVE_COMBO:
            z = anchor_to_absolute(m, self.anchor()) if relative else np.asarray(m.z_raw, float)
            x = np.empty(4)
            x[:2] = z
            x[2:] = (z - self.x[:2]) / dt if dt > 0.0 else self.x[2:]
            P = self.P.copy()
            P[:2, :] = 0.0
            P[:, :2] = 0.0
            P[0, 0] = P[1, 1] = var
        else:
            pm = self.process
            if relative:
                # same arithmetic as anchor_to_absolute(m, self.anchor()), fused for speed
                status, x, P, _ = _step_relative_kernel(
                    self.x, self.P, dt, pm.q_pos, pm.q_vel, np.asarray(m.z_raw, float),
                    self.t - self.event_ref_t, var,
                )
            else:
                status, x, P = _step_kernel(
                    self.x, self.P, dt, pm.q_pos, pm.q_vel, np.asarray(m.z_raw, float), var
                )
            if status:
                raise DegenerateCovarianceError(
                    f"track {self.track_id}: degenerate innovation covariance at t={m.t}"
                )
        if relative:
            self.event_ref_t = m.t
        self.x, self.P, self.t = x, P, m.t
        self.n_processed += 1
        return TrackOutput(m.t, x[:2].copy(), P[:2, :2].copy(), m.p_vis)


def init_track(cfg: TrackConfig, **kwargs) -> Tracker:
    return Tracker(cfg, **kwargs)


def merge_streams(
    streams: Mapping[str, Sequence[SourcedMeasurement]] | Iterable[Sequence[SourcedMeasurement]],
) -> list[SourcedMeasurement]:
    """Merge per-source time-sorted streams into global processing order.

    Order is by timestamp, frames before events at equal timestamps, and
    input order otherwise.
    """
    if isinstance(streams, Mapping):
        streams = list(streams.values())
    return list(heapq.merge(*streams, key=lambda m: (m.t, SOURCE_RANK[m.source])))


class FusionEngine:
    """Routes measurements to per-track :class:`Tracker` instances."""

    def __init__(
        self,
        configs: Mapping[int, TrackConfig],
        mode: FusionMode | str = FusionMode.KALMAN_FUSED,
        process: ProcessModel | None = None,
        noise_maps: Mapping[str, NoiseMap] | None = None,
    ):
        self.mode = FusionMode(mode)
        self.trackers = {
            tid: Tracker(cfg, tid, self.mode, process, noise_maps) for tid, cfg in configs.items()
        }
        self.outputs = {tid: [tr.initial_output()] for tid, tr in self.trackers.items()}

    def ingest(self, m: SourcedMeasurement) -> list[TrackOutput]:
        try:
            tracker = self.trackers[m.track_id]
        except KeyError:
            raise UnknownTrackError(m.track_id) from None
        out = tracker.ingest(m)
        self.outputs[m.track_id].extend(out)
        return out

    def flush(self) -> None:
        for tid, tracker in self.trackers.items():
            self.outputs[tid].extend(tracker.flush())

    @property
    def rejected(self) -> list[Rejection]:
        return [r for tr in self.trackers.values() for r in tr.rejected]


def run_scenario(
    streams,
    configs: Mapping[int, TrackConfig],
    mode: FusionMode | str = FusionMode.KALMAN_FUSED,
    process: ProcessModel | None = None,
    noise_maps: Mapping[str, NoiseMap] | None = None,
) -> dict[int, list[TrackOutput]]:
    """Run every track over the merged streams; deterministic in its inputs.

    The first output of each track is its initial state at ``t0``.
    """
    engine = FusionEngine(configs, mode, process, noise_maps)
    for m in merge_streams(streams):
        engine.ingest(m)
    engine.flush()
    return engine.outputs
