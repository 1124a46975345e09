"""Seeded synthetic tracking scenarios with moving occluders.

Ground-truth tracks are sampled on a uniform master clock.  Moving
axis-aligned rectangles occlude them; a sample is occluded when its point
lies inside (or on the border of) any rectangle.  Two measurement sources
are then simulated from the ground truth:

* an *event* source at high rate that reports relative displacements,
  suffers a random-walk bias, and gets stuck while the point is occluded;
* a *frame* source at low rate that reports absolute positions, never
  drifts, and returns garbage near the last visible position while the
  point is occluded.

Every random draw comes from a generator derived from ``(seed, ...)`` so
all outputs are pure functions of the spec.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .fusion import SourcedMeasurement, TrackConfig

_MOTION_STREAM = 0
_SOURCE_STREAM = {"event": 1, "frame": 2}
_OCCLUDER_STREAM = 1 << 20


@dataclass(frozen=True)
class SourceModel:
    source: str = "event"
    rate: float = 100.0
    noise_std: float = 0.3
    drift_std: float = 0.0
    occluded_behavior: str = "stuck"
    garbage_radius: float = 0.0
    vis_flip_prob: float = 0.0

    def __post_init__(self):
        if self.source not in _SOURCE_STREAM:
            raise ValueError(f"unknown source {self.source!r}")
        if not self.rate > 0.0:
            raise ValueError("source rate must be positive")
        if not (self.noise_std >= 0.0 and self.drift_std >= 0.0 and self.garbage_radius >= 0.0):
            raise ValueError("noise, drift and garbage radius must be >= 0")
        if self.occluded_behavior not in ("stuck", "uniform_garbage"):
            raise ValueError(f"unknown occluded behavior {self.occluded_behavior!r}")
        if not 0.0 <= self.vis_flip_prob < 0.5:
            raise ValueError("vis_flip_prob must lie in [0, 0.5)")


@dataclass(frozen=True)
class MotionParams:
    max_speed: float = 120.0
    accel_std: float = 600.0
    accel_interval: float = 0.05


@dataclass(frozen=True)
class OccluderParams:
    count: int = 80
    size_min: float = 5.0
    size_max: float = 20.0
    max_speed: float = 300.0
    coverage_target: float = 0.25


def default_event_model() -> SourceModel:
    return SourceModel("event", 100.0, 0.1, 0.05, "stuck", 0.0, 0.05)


def default_frame_model() -> SourceModel:
    return SourceModel("frame", 24.0, 1.0, 0.0, "uniform_garbage", 20.0, 0.05)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    duration: float = 2.0
    n_tracks: int = 20
    master_rate: float = 1000.0
    width: float = 640.0
    height: float = 480.0
    motion: MotionParams = field(default_factory=MotionParams)
    occluders: OccluderParams = field(default_factory=OccluderParams)
    event: SourceModel = field(default_factory=default_event_model)
    frame: SourceModel = field(default_factory=default_frame_model)

    def __post_init__(self):
        if not (self.duration > 0.0 and self.master_rate > 0.0):
            raise ValueError("duration and master_rate must be positive")
        if self.n_tracks < 0 or self.occluders.count < 0:
            raise ValueError("counts must be non-negative")
        if self.event.source != "event" or self.frame.source != "frame":
            raise ValueError("event/frame source models carry the wrong source tag")


@dataclass(frozen=True, eq=False)
class GroundTruthTrack:
    track_id: int
    t: np.ndarray
    pos: np.ndarray
    visible: np.ndarray

    def position_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return np.stack(
            [np.interp(t, self.t, self.pos[:, 0]), np.interp(t, self.t, self.pos[:, 1])], axis=-1
        )


@dataclass(frozen=True)
class Occluder:
    center: tuple[float, float]
    velocity: tuple[float, float]
    width: float
    height: float

    def center_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)[..., None]
        return np.asarray(self.center) + np.asarray(self.velocity) * t

    def contains(self, t, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=np.float64)
        d = np.abs(pos - self.center_at(t))
        return (d[..., 0] <= 0.5 * self.width) & (d[..., 1] <= 0.5 * self.height)


@dataclass(frozen=True)
class OccluderSet:
    rectangles: tuple[Occluder, ...] = ()

    def contains(self, t, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=np.float64)
        inside = np.zeros(pos.shape[:-1], dtype=bool)
        for rect in self.rectangles:
            inside |= rect.contains(t, pos)
        return inside

    def scaled(self, s: float) -> OccluderSet:
        return OccluderSet(
            tuple(replace(r, width=r.width * s, height=r.height * s) for r in self.rectangles)
        )


def master_times(spec: ScenarioSpec) -> np.ndarray:
    n = int(np.floor(spec.duration * spec.master_rate + 1e-9))
    return np.arange(n + 1) / spec.master_rate


def _generate_path(spec: ScenarioSpec, track_id: int, times: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, track_id, _MOTION_STREAM])
    mp = spec.motion
    dt = 1.0 / spec.master_rate
    margin = 0.2
    p0 = rng.uniform([margin * spec.width, margin * spec.height],
                     [(1 - margin) * spec.width, (1 - margin) * spec.height])
    heading = rng.uniform(0.0, 2.0 * np.pi)
    v = rng.uniform(0.0, mp.max_speed) * np.array([np.cos(heading), np.sin(heading)])
    n_seg = int(np.ceil(spec.duration / mp.accel_interval)) + 1
    accel = rng.standard_normal((n_seg, 2)) * mp.accel_std

    return _integrate_path(p0, v, accel, times, mp.accel_interval, dt, mp.max_speed)


@numba.njit(cache=True)
def _integrate_path(p0, v0, accel, times, interval, dt, max_speed):
    n_seg = accel.shape[0]
    pos = np.empty((len(times), 2))
    pos[0] = p0
    vx, vy = v0[0], v0[1]
    for k in range(1, len(times)):
        seg = min(int(times[k - 1] / interval), n_seg - 1)
        vx += accel[seg, 0] * dt
        vy += accel[seg, 1] * dt
        speed = np.hypot(vx, vy)
        if speed > max_speed:
            vx *= max_speed / speed
            vy *= max_speed / speed
        # semi-implicit Euler keeps the finite-difference speed within the clamp
        pos[k, 0] = pos[k - 1, 0] + vx * dt
        pos[k, 1] = pos[k - 1, 1] + vy * dt
    return pos


def _random_occluders(spec: ScenarioSpec) -> OccluderSet:
    op = spec.occluders
    rng = np.random.default_rng([spec.seed, _OCCLUDER_STREAM])
    rects = []
    for _ in range(op.count):
        c = rng.uniform([0.0, 0.0], [spec.width, spec.height])
        heading = rng.uniform(0.0, 2.0 * np.pi)
        speed = rng.uniform(0.0, op.max_speed)
        w, h = rng.uniform(op.size_min, op.size_max, size=2)
        vel = (speed * np.cos(heading), speed * np.sin(heading))
        rects.append(Occluder((float(c[0]), float(c[1])), (float(vel[0]), float(vel[1])),
                              float(w), float(h)))
    return OccluderSet(tuple(rects))


def _covering_scale(occ: OccluderSet, times: np.ndarray, paths: np.ndarray) -> np.ndarray:
    """Smallest uniform scale at which some rectangle covers each sample."""
    best = np.full(paths.shape[:-1], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for rect in occ.rectangles:
            d = np.abs(paths - rect.center_at(times[None, :]))
            need = np.maximum(d[..., 0] / (0.5 * rect.width), d[..., 1] / (0.5 * rect.height))
            np.minimum(best, np.nan_to_num(need, nan=0.0, posinf=np.inf), out=best)
    return best


def _fit_coverage(occ: OccluderSet, times, paths, target: float) -> OccluderSet:
    """Scale every rectangle by one factor so the occluded fraction is near ``target``.

    Containment is monotone in the scale, so bisection converges.
    """
    need = _covering_scale(occ, times, paths)

    def fraction(s):
        return float(np.mean(need <= s))

    lo, hi = 0.0, 1.0
    while fraction(hi) < target:
        hi *= 2.0
        if hi > 1e6:
            return occ.scaled(hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if fraction(mid) < target:
            lo = mid
        else:
            hi = mid
    return occ.scaled(hi)


def generate_tracks(
    spec: ScenarioSpec, occluders: OccluderSet | None = None
) -> tuple[list[GroundTruthTrack], OccluderSet]:
    """Ground-truth tracks and the occluders that hide them.

    With ``occluders=None`` the rectangles are drawn from the spec and, if
    ``spec.occluders.coverage_target > 0``, rescaled to hit that fraction of
    occluded samples.  Explicit occluders are used as given.
    """
    times = master_times(spec)
    paths = np.array([_generate_path(spec, i, times) for i in range(spec.n_tracks)])
    paths = paths.reshape(spec.n_tracks, len(times), 2)
    if occluders is None:
        occluders = _random_occluders(spec)
        target = spec.occluders.coverage_target
        if occluders.rectangles and spec.n_tracks and target > 0.0:
            occluders = _fit_coverage(occluders, times, paths, target)
    tracks = []
    for i in range(spec.n_tracks):
        visible = ~occluders.contains(times, paths[i])
        tracks.append(GroundTruthTrack(i, times.copy(), paths[i], visible))
    return tracks, occluders


@dataclass(frozen=True, eq=False)
class SourceTrace:
    """Internal absolute simulation of one source along one track."""

    t: np.ndarray
    z: np.ndarray
    bias: np.ndarray
    visible: np.ndarray
    p_vis: np.ndarray
    origin: np.ndarray


def sample_times(t0: float, t_end: float, rate: float) -> np.ndarray:
    n = int(np.floor((t_end - t0) * rate + 1e-9))
    return t0 + np.arange(1, n + 1) / rate


def simulate_trace(
    track: GroundTruthTrack, occluders: OccluderSet, model: SourceModel, seed
) -> SourceTrace:
    """Absolute positions a source would report along ``track``.

    Random draws, in order: per-step bias increments, per-sample noise,
    visibility flip uniforms, garbage-disk uniforms.  Each is drawn in full
    regardless of the model's magnitudes so streams stay aligned.

    While the point is visible the reading is ``gt + noise + bias`` (plus,
    for the event source, the displacement it missed while stuck, so a
    re-acquired track resumes from where it froze instead of jumping).
    """
    rng = np.random.default_rng(seed)
    times = sample_times(float(track.t[0]), float(track.t[-1]), model.rate)
    n = len(times)
    steps = rng.standard_normal((n, 2)) * model.drift_std
    noise = rng.standard_normal((n, 2)) * model.noise_std
    flip = rng.random(n) < model.vis_flip_prob
    u = rng.random((n, 2))

    relative = model.source == "event"
    bias = np.cumsum(steps, axis=0) if relative else np.zeros((n, 2))
    gt = track.position_at(times)
    visible = ~occluders.contains(times, gt)

    origin = track.pos[0].copy()
    z = np.empty((n, 2))
    offset = np.zeros(2)
    last_z, last_g, last_b = origin, origin, np.zeros(2)
    prev_vis, prev_g, prev_b = True, origin, np.zeros(2)
    for j in range(n):
        if visible[j]:
            if relative and not prev_vis:
                offset = offset + (last_g - prev_g) + (last_b - prev_b)
            z[j] = gt[j] + bias[j] + offset + noise[j]
            last_z, last_g, last_b = z[j], gt[j], bias[j]
        elif model.occluded_behavior == "stuck":
            z[j] = last_z
        else:
            r = model.garbage_radius * np.sqrt(u[j, 0])
            a = 2.0 * np.pi * u[j, 1]
            z[j] = last_z + r * np.array([np.cos(a), np.sin(a)])
        prev_vis, prev_g, prev_b = visible[j], gt[j], bias[j]

    p_vis = np.where(visible ^ flip, 1.0, 0.0)
    return SourceTrace(times, z, bias, visible, p_vis, origin)


def trace_to_measurements(trace: SourceTrace, track_id: int, source: str) -> list[SourcedMeasurement]:
    if source == "event":
        prev = np.vstack([trace.origin[None, :], trace.z[:-1]])
        values, kind = trace.z - prev, "relative"
    else:
        values, kind = trace.z, "absolute"
    return [
        SourcedMeasurement(float(t), track_id, source, kind, values[j].copy(), float(trace.p_vis[j]))
        for j, t in enumerate(trace.t)
    ]


def simulate_source(
    track: GroundTruthTrack, occluders: OccluderSet, model: SourceModel, seed
) -> list[SourcedMeasurement]:
    """Measurements of ``track`` as seen through ``model``, time-sorted."""
    trace = simulate_trace(track, occluders, model, seed)
    return trace_to_measurements(trace, track.track_id, model.source)


def source_seed(spec_seed: int, track_id: int, source: str) -> list[int]:
    return [spec_seed, track_id, _SOURCE_STREAM[source]]


@dataclass(eq=False)
class Scenario:
    spec: ScenarioSpec
    tracks: list[GroundTruthTrack]
    occluders: OccluderSet
    streams: dict[str, list[SourcedMeasurement]]

    @property
    def occlusion_fraction(self) -> float:
        if not self.tracks:
            return 0.0
        return float(1.0 - np.mean(np.concatenate([tr.visible for tr in self.tracks])))

    def track_configs(self, init_pos_var: float = 1.0, init_vel_var: float = 1.0e4, ooo=None):
        kw = {} if ooo is None else {"ooo": ooo}
        return {
            tr.track_id: TrackConfig(
                (float(tr.pos[0, 0]), float(tr.pos[0, 1])), float(tr.t[0]),
                init_pos_var, init_vel_var, **kw,
            )
            for tr in self.tracks
        }


def build_scenario(spec: ScenarioSpec) -> Scenario:
    tracks, occluders = generate_tracks(spec)
    streams = {}
    for model in (spec.event, spec.frame):
        ms = []
        for tr in tracks:
            ms.extend(simulate_source(tr, occluders, model,
                                      source_seed(spec.seed, tr.track_id, model.source)))
        ms.sort(key=lambda m: (m.t, m.track_id))
        streams[model.source] = ms
    return Scenario(spec, tracks, occluders, streams)


def benchmark_suite(seed: int = 0) -> list[ScenarioSpec]:
    """The standard 100-scenario workload: 2 s, 1 kHz, 20 tracks, 100 Hz / 24 Hz."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=100)
    targets = rng.uniform(0.2, 0.3, size=100)
    return [
        ScenarioSpec(
            seed=int(s), duration=2.0, n_tracks=20, master_rate=1000.0,
            occluders=OccluderParams(coverage_target=float(c)),
            event=replace(default_event_model(), rate=100.0),
            frame=replace(default_frame_model(), rate=24.0),
        )
        for s, c in zip(seeds, targets)
    ]
