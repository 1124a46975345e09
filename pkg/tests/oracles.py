"""Independent brute-force references shared by the unit and acceptance tests."""

import math

import numpy as np

from fusetrack.fusion import TrackOutput
from fusetrack.synth import GroundTruthTrack


def ref_lerp(ts, ps, t):
    for i in range(len(ts) - 1):
        if ts[i] <= t <= ts[i + 1]:
            if ts[i + 1] == ts[i]:
                return ps[i + 1]
            w = (t - ts[i]) / (ts[i + 1] - ts[i])
            return [ps[i][0] + w * (ps[i + 1][0] - ps[i][0]),
                    ps[i][1] + w * (ps[i + 1][1] - ps[i][1])]
    if t == ts[-1]:
        return ps[-1]
    return None


def ref_track(pred_t, pred_p, g_t, g_p, g_v, fa_th):
    rows = []
    for t, p, v in zip(g_t, g_p, g_v):
        q = ref_lerp(pred_t, pred_p, t)
        if q is not None:
            rows.append((t, math.hypot(q[0] - p[0], q[1] - p[1]), v))
    fa = 1.0
    for t, e, _ in rows:
        if e > fa_th:
            fa = (t - rows[0][0]) / (rows[-1][0] - rows[0][0])
            break
    return rows, fa


def ref_delta(errs, ths=(1, 2, 4, 8, 16)):
    if not errs:
        return None
    return sum(sum(1 for e in errs if e < d) / len(errs) for d in ths) / len(ths)


def ref_evaluate(instances, fa_th=5.0, stable=0.1):
    all_rows, fas = [], []
    for pred_t, pred_p, g_t, g_p, g_v in instances:
        rows, fa = ref_track(pred_t, pred_p, g_t, g_p, g_v, fa_th)
        all_rows += rows
        fas.append(fa)
    st = [f for f in fas if f >= stable]
    efa = (sum(st) / len(st)) * (len(st) / len(fas)) if st else 0.0
    return {
        "fa": sum(fas) / len(fas),
        "expected_fa": efa,
        "delta_vis": ref_delta([e for _, e, v in all_rows if v]),
        "delta_occ": ref_delta([e for _, e, v in all_rows if not v]),
        "delta_all": ref_delta([e for _, e, _ in all_rows]),
    }


def random_instance(rng):
    n_tracks = int(rng.integers(1, 6))
    tracks = []
    for _ in range(n_tracks):
        g_t = np.sort(rng.uniform(0, 2, int(rng.integers(5, 60))))
        g_t = np.unique(g_t)
        g_p = np.cumsum(rng.normal(0, 2, (len(g_t), 2)), axis=0)
        g_v = rng.random(len(g_t)) < 0.7
        lo, hi = rng.uniform(0, 0.5), rng.uniform(1.5, 2.1)
        p_t = np.sort(rng.uniform(lo, hi, int(rng.integers(2, 40))))
        p_t[0], p_t[-1] = lo, hi
        p_p = np.interp(p_t, g_t, g_p[:, 0])[:, None] + rng.normal(0, 4, (len(p_t), 2))
        tracks.append((p_t.tolist(), p_p.tolist(), g_t.tolist(), g_p.tolist(), g_v.tolist()))
    return tracks


def instance_inputs(inst):
    """``(preds, gts)`` in library types for one :func:`random_instance`."""
    preds = {i: [TrackOutput(float(t), np.asarray(p, float), np.eye(2)) for t, p in zip(pt, pp)]
             for i, (pt, pp, *_rest) in enumerate(inst)}
    gts = [GroundTruthTrack(i, np.asarray(gt, float), np.asarray(gp, float), np.asarray(gv, bool))
           for i, (_a, _b, gt, gp, gv) in enumerate(inst)]
    return preds, gts
