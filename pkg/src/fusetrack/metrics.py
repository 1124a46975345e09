"""Feature-tracking evaluation: feature age, expected feature age, delta_avg.

Predictions are linearly interpolated onto the ground-truth timestamps;
ground-truth samples outside the prediction time span are excluded (never
extrapolated) and counted.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

DELTA_THRESHOLDS = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class EvalConfig:
    fa_dist_threshold: float = 5.0
    delta_thresholds: tuple[float, ...] = DELTA_THRESHOLDS
    stable_min_age: float = 0.1

    def __post_init__(self):
        th = tuple(float(d) for d in self.delta_thresholds)
        object.__setattr__(self, "delta_thresholds", th)
        if not th or any(d <= 0.0 for d in th) or list(th) != sorted(th):
            raise ValueError(f"delta thresholds must be positive and ascending: {th}")
        if not self.fa_dist_threshold > 0.0:
            raise ValueError("fa_dist_threshold must be positive")


def _as_arrays(outputs) -> tuple[np.ndarray, np.ndarray]:
    """``(t, pos)`` arrays from a list of TrackOutput or a ``(t, pos)`` pair.

    Repeated timestamps keep the last output (the final estimate at that time).
    """
    if isinstance(outputs, tuple) and len(outputs) == 2:
        t, pos = (np.asarray(a, dtype=np.float64) for a in outputs)
    else:
        t = np.array([o.t for o in outputs], dtype=np.float64)
        pos = np.array([o.pos for o in outputs], dtype=np.float64).reshape(-1, 2)
    if len(t) > 1:
        keep = np.append(t[1:] != t[:-1], True)
        t, pos = t[keep], pos[keep]
    return t, pos


def interpolate_at(outputs, t) -> np.ndarray:
    """Piecewise-linear position at time(s) ``t``; exact at output timestamps.

    Raises:
        ValueError: if any ``t`` lies outside the output time span.
    """
    ts, pos = _as_arrays(outputs)
    t = np.asarray(t, dtype=np.float64)
    if len(ts) == 0 or np.any(t < ts[0]) or np.any(t > ts[-1]):
        raise ValueError("interpolation time outside the prediction span")
    return np.stack([np.interp(t, ts, pos[:, 0]), np.interp(t, ts, pos[:, 1])], axis=-1)


@dataclass(frozen=True, eq=False)
class AlignedErrors:
    """Per-gt-sample errors for the evaluated (in-span) samples of one track."""

    t: np.ndarray
    err: np.ndarray
    visible: np.ndarray
    n_excluded: int


def align(pred, gt_t, gt_pos, gt_visible=None) -> AlignedErrors:
    ts, pos = _as_arrays(pred)
    gt_t = np.asarray(gt_t, dtype=np.float64)
    gt_pos = np.asarray(gt_pos, dtype=np.float64).reshape(-1, 2)
    vis = np.ones(len(gt_t), bool) if gt_visible is None else np.asarray(gt_visible, bool)
    if len(ts) == 0:
        inside = np.zeros(len(gt_t), bool)
    else:
        inside = (gt_t >= ts[0]) & (gt_t <= ts[-1])
    t_eval = gt_t[inside]
    if len(t_eval):
        p = interpolate_at((ts, pos), t_eval)
        err = np.hypot(p[:, 0] - gt_pos[inside, 0], p[:, 1] - gt_pos[inside, 1])
    else:
        err = np.zeros(0)
    return AlignedErrors(t_eval, err, vis[inside], int(np.count_nonzero(~inside)))


def feature_age_from_errors(t: np.ndarray, err: np.ndarray, threshold: float) -> float:
    """Fraction of the evaluated span before the error first exceeds ``threshold``."""
    if len(t) == 0:
        return 0.0
    fail = np.flatnonzero(err > threshold)
    if len(fail) == 0:
        return 1.0
    span = t[-1] - t[0]
    if span <= 0.0:
        return 0.0
    return float((t[fail[0]] - t[0]) / span)


def feature_age(pred, gt, cfg: EvalConfig = EvalConfig()) -> float:
    a = align(pred, gt.t, gt.pos, gt.visible)
    return feature_age_from_errors(a.t, a.err, cfg.fa_dist_threshold)


def stable_mask(per_track_fa, cfg: EvalConfig = EvalConfig()) -> np.ndarray:
    return np.asarray(per_track_fa, dtype=np.float64) >= cfg.stable_min_age


def expected_fa(per_track_fa: Sequence[float], cfg: EvalConfig = EvalConfig()) -> float:
    """Mean feature age of the stable tracks times the stable-track ratio."""
    fa = np.asarray(per_track_fa, dtype=np.float64)
    if fa.size == 0:
        raise ValueError("expected_fa needs at least one track")
    stable = stable_mask(fa, cfg)
    if not stable.any():
        return 0.0
    return float(fa[stable].mean() * (stable.sum() / fa.size))


def delta_from_errors(err: np.ndarray, thresholds=DELTA_THRESHOLDS) -> float | None:
    """Mean over thresholds of the fraction of errors strictly below each.

    Returns ``None`` for an empty set of points.
    """
    err = np.asarray(err, dtype=np.float64)
    if err.size == 0:
        return None
    return float(np.mean([np.mean(err < d) for d in thresholds]))


def delta_avg(pred, gt, visibility=None, cfg: EvalConfig = EvalConfig()):
    """``(delta_vis, delta_occ, delta_all)`` for one track; absent splits are ``None``."""
    vis = gt.visible if visibility is None else visibility
    a = align(pred, gt.t, gt.pos, vis)
    th = cfg.delta_thresholds
    return (
        delta_from_errors(a.err[a.visible], th),
        delta_from_errors(a.err[~a.visible], th),
        delta_from_errors(a.err, th),
    )


@dataclass(frozen=True)
class TrackReport:
    track_id: int
    fa: float
    delta_vis: float | None
    delta_occ: float | None
    delta_all: float | None
    n_vis: int
    n_occ: int
    n_excluded: int


@dataclass(frozen=True)
class EvalReport:
    tracks: tuple[TrackReport, ...]
    fa: float | None
    expected_fa: float | None
    delta_vis: float | None
    delta_occ: float | None
    delta_all: float | None
    count_vis: int
    count_occ: int
    count_all: int
    count_excluded: int
    mismatched_track_ids: tuple[int, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "n_tracks": len(self.tracks),
            "fa": self.fa,
            "expected_fa": self.expected_fa,
            "delta_vis": self.delta_vis,
            "delta_occ": self.delta_occ,
            "delta_all": self.delta_all,
            "count_vis": self.count_vis,
            "count_occ": self.count_occ,
            "count_all": self.count_all,
            "count_excluded": self.count_excluded,
            "mismatched_track_ids": list(self.mismatched_track_ids),
        }


def evaluate(preds: Mapping[int, object], gts, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Evaluate every track present in both ``preds`` and ``gts``.

    ``delta_*`` are pooled over all evaluated points of all tracks, so
    ``delta_all`` is a pointwise mean and not the mean of the two splits.
    Track ids present on only one side are listed in ``mismatched_track_ids``.
    """
    gt_by_id = {g.track_id: g for g in gts}
    common = sorted(set(preds) & set(gt_by_id))
    mismatched = tuple(sorted(set(preds) ^ set(gt_by_id)))
    reports, vis_err, occ_err = [], [], []
    excluded = 0
    th = cfg.delta_thresholds
    for tid in common:
        g = gt_by_id[tid]
        a = align(preds[tid], g.t, g.pos, g.visible)
        ev, eo = a.err[a.visible], a.err[~a.visible]
        vis_err.append(ev)
        occ_err.append(eo)
        excluded += a.n_excluded
        reports.append(TrackReport(
            tid,
            feature_age_from_errors(a.t, a.err, cfg.fa_dist_threshold),
            delta_from_errors(ev, th),
            delta_from_errors(eo, th),
            delta_from_errors(a.err, th),
            len(ev), len(eo), a.n_excluded,
        ))
    if not reports:
        return EvalReport((), None, None, None, None, None, 0, 0, 0, excluded, mismatched)
    fas = [r.fa for r in reports]
    ev = np.concatenate(vis_err)
    eo = np.concatenate(occ_err)
    return EvalReport(
        tuple(reports),
        float(np.mean(fas)),
        expected_fa(fas, cfg),
        delta_from_errors(ev, th),
        delta_from_errors(eo, th),
        delta_from_errors(np.concatenate([ev, eo]), th),
        len(ev), len(eo), len(ev) + len(eo), excluded, mismatched,
    )
