"""Event-branch supervision losses and analytic gradients through the update.

The displacement loss is a gated L1 on the Kalman-filtered displacement and
the uncertainty loss is a binary cross-entropy on the visibility
probability.  Gradients of the posterior state and of the total loss with
respect to the measurement and the visibility probability are derived in
closed form and checked against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kalman import Observation, StateEstimate, update
from .uncertainty import NoiseMap, VisibilityReport, variance, variance_grad

PROB_CLAMP = 1e-12
KINK_TOL = 1e-6


@dataclass(frozen=True)
class DisplacementLossSpec:
    r: float = 15.0

    def __post_init__(self):
        if not self.r > 0.0:
            raise ValueError("gating radius must be positive")


@dataclass(frozen=True)
class UncertaintyLossSpec:
    w1: float = 2.0

    def __post_init__(self):
        if not self.w1 > 0.0:
            raise ValueError("w1 must be positive")


def gate_open(dp_gt, spec: DisplacementLossSpec) -> bool:
    return float(np.abs(np.asarray(dp_gt, dtype=np.float64)).sum()) < spec.r


def displacement_loss(dp_hat, dp_gt, spec: DisplacementLossSpec = DisplacementLossSpec()) -> float:
    """``|dp_hat - dp_gt|_1`` when ``|dp_gt|_1 < r``, else 0."""
    dp_hat = np.asarray(dp_hat, dtype=np.float64)
    dp_gt = np.asarray(dp_gt, dtype=np.float64)
    if not gate_open(dp_gt, spec):
        return 0.0
    return float(np.abs(dp_hat - dp_gt).sum())


def uncertainty_loss(p_hat: VisibilityReport, v: bool) -> float:
    """Cross-entropy of the predicted (occluded, visible) distribution.

    Probabilities are clamped at ``PROB_CLAMP`` before the log.
    """
    p = p_hat.p_vis if v else p_hat.p_occ
    return -math.log(max(p, PROB_CLAMP))


def event_loss(
    dp_tilde,
    dp_gt,
    p_hat: VisibilityReport,
    v: bool,
    disp: DisplacementLossSpec = DisplacementLossSpec(),
    unc: UncertaintyLossSpec = UncertaintyLossSpec(),
) -> float:
    return displacement_loss(dp_tilde, dp_gt, disp) + unc.w1 * uncertainty_loss(p_hat, v)


def kalman_jacobians(state: StateEstimate, obs: Observation) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of the posterior mean w.r.t. ``z`` and ``diag(R)``.

    ``d x_post / d z = K`` and, since ``dK/dR_ii = -P H^T S^-1 E_ii S^-1``,
    column ``i`` of the second Jacobian is ``-P H^T S^-1 E_ii S^-1 y``.
    """
    _, mid = update(state, obs)
    S_inv = np.linalg.inv(mid.S)
    PHt = state.P[:, :2]
    w = S_inv @ mid.y
    dR = np.empty((4, 2))
    for i in range(2):
        dR[:, i] = -(PHt @ S_inv[:, i]) * w[i]
    return mid.K.copy(), dR


@dataclass(frozen=True, eq=False)
class LossStep:
    """One supervised event step.

    ``prior`` is the predicted state at the measurement time, ``anchor`` the
    position the displacement is measured from, ``z`` the absolute
    measurement and ``p_vis`` the predicted visibility that sets ``R``.
    """

    prior: StateEstimate
    anchor: np.ndarray
    z: np.ndarray
    p_vis: float
    dp_gt: np.ndarray
    visible: bool
    noise_map: NoiseMap = NoiseMap()


def _forward(step: LossStep, z, p_vis, disp, unc):
    R = variance(p_vis, step.noise_map) * np.eye(2)
    post, mid = update(step.prior, Observation(np.asarray(z, dtype=np.float64), R))
    dp_tilde = post.x[:2] - step.anchor
    loss = event_loss(dp_tilde, step.dp_gt, VisibilityReport.from_p_vis(p_vis), step.visible,
                      disp, unc)
    return loss, dp_tilde - step.dp_gt


def step_loss(step: LossStep, disp=DisplacementLossSpec(), unc=UncertaintyLossSpec()) -> float:
    return _forward(step, step.z, step.p_vis, disp, unc)[0]


@dataclass(frozen=True, eq=False)
class GradReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_err: float
    kink: bool = False


def relative_error(a, b) -> float:
    """Normwise ``|a - b|_inf / max(|a|_inf, |b|_inf)`` (0 when both vanish)."""
    a = np.ravel(a)
    b = np.ravel(b)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)


def _central_diff(f, theta: np.ndarray, h: float) -> np.ndarray:
    cols = []
    for j in range(len(theta)):
        e = np.zeros_like(theta)
        e[j] = h
        cols.append((np.asarray(f(theta + e)) - np.asarray(f(theta - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def jacobian_check(state: StateEstimate, obs: Observation, h: float = 1e-5) -> GradReport:
    """Compare :func:`kalman_jacobians` with central differences at ``h`` and ``h/10``."""
    dz, dR = kalman_jacobians(state, obs)
    analytic = np.hstack([dz, dR])
    R_off = obs.R[0, 1]

    def post(theta):
        R = np.array([[theta[2], R_off], [R_off, theta[3]]])
        return update(state, Observation(theta[:2].copy(), R))[0].x

    theta = np.array([obs.z[0], obs.z[1], obs.R[0, 0], obs.R[1, 1]])
    coarse = _central_diff(post, theta, h)
    fine = _central_diff(post, theta, h / 10.0)
    err = max(relative_error(analytic, coarse), relative_error(analytic, fine))
    return GradReport(analytic, coarse, err)


def analytic_loss_gradient(
    step: LossStep, disp=DisplacementLossSpec(), unc=UncertaintyLossSpec()
) -> np.ndarray:
    """``[dL/dz_x, dL/dz_y, dL/dp_vis]`` with L1 subgradient 0 at 0."""
    _, resid = _forward(step, step.z, step.p_vis, disp, unc)
    p = step.p_vis
    if step.visible:
        dce = -1.0 / p if p > PROB_CLAMP else 0.0
    else:
        dce = 1.0 / (1.0 - p) if 1.0 - p > PROB_CLAMP else 0.0
    g = np.zeros(3)
    g[2] = unc.w1 * dce
    if not gate_open(step.dp_gt, disp):
        return g
    R = variance(p, step.noise_map) * np.eye(2)
    dz, dR = kalman_jacobians(step.prior, Observation(step.z, R))
    s = np.sign(resid)
    g[:2] = s @ dz[:2, :]
    dx_dp = (dR[:, 0] + dR[:, 1]) * variance_grad(p, step.noise_map)
    g[2] += s @ dx_dp[:2]
    return g


def loss_gradients(
    step: LossStep,
    disp=DisplacementLossSpec(),
    unc=UncertaintyLossSpec(),
    h: float = 1e-5,
) -> GradReport:
    """Check ``dL/dz`` and ``dL/dp_vis`` against central differences.

    A step is reported as a kink (and not compared) when any L1 residual
    coordinate is within ``KINK_TOL`` of zero or changes sign inside the
    finite-difference stencil.
    """
    theta = np.array([step.z[0], step.z[1], step.p_vis])

    def f(th):
        return _forward(step, th[:2], th[2], disp, unc)

    analytic = analytic_loss_gradient(step, disp, unc)
    kink = False
    if gate_open(step.dp_gt, disp):
        resid = f(theta)[1]
        base = np.sign(resid)
        kink = bool(np.any(np.abs(resid) < KINK_TOL))
        for j in range(3):
            for sgn in (-1.0, 1.0):
                e = np.zeros(3)
                e[j] = sgn * h
                if np.any(np.sign(f(theta + e)[1]) != base):
                    kink = True
    coarse = _central_diff(lambda th: f(th)[0], theta, h)
    if kink:
        return GradReport(analytic, coarse, math.nan, True)
    fine = _central_diff(lambda th: f(th)[0], theta, h / 10.0)
    err = max(relative_error(analytic, coarse), relative_error(analytic, fine))
    return GradReport(analytic, coarse, err)


def random_case(rng: np.random.Generator) -> tuple[StateEstimate, Observation]:
    """A well-conditioned random (prior, observation) pair."""
    A = rng.standard_normal((4, 4))
    P = A @ A.T / 4.0 + 0.5 * np.eye(4)
    x = rng.standard_normal(4) * 10.0
    z = x[:2] + rng.standard_normal(2) * 3.0
    R = np.diag(rng.uniform(0.5, 5.0, size=2))
    return StateEstimate(x, P, 0.0), Observation(z, R)


def random_step(rng: np.random.Generator) -> LossStep:
    prior, obs = random_case(rng)
    dp_gt = rng.standard_normal(2) * 2.0
    anchor = prior.x[:2] - dp_gt + rng.standard_normal(2)
    return LossStep(
        prior, anchor, obs.z, float(rng.uniform(0.05, 0.95)), dp_gt, bool(rng.random() < 0.5)
    )


@dataclass(frozen=True)
class GradcheckSummary:
    cases: int
    max_rel_err: float
    max_rel_err_jacobian: float
    max_rel_err_loss: float
    kinks_skipped: int
    gain_identity_max_abs: float

    def as_dict(self) -> dict:
        return {
            "cases": self.cases,
            "max_rel_err": self.max_rel_err,
            "max_rel_err_jacobian": self.max_rel_err_jacobian,
            "max_rel_err_loss": self.max_rel_err_loss,
            "kinks_skipped": self.kinks_skipped,
            "gain_identity_max_abs": self.gain_identity_max_abs,
        }


def gradcheck(cases: int = 1000, seed: int = 0, h: float = 1e-5) -> GradcheckSummary:
    """Run Jacobian and loss-gradient checks over ``cases`` seeded inputs."""
    rng = np.random.default_rng(seed)
    jac_err = loss_err = gain_err = 0.0
    kinks = 0
    for _ in range(cases):
        prior, obs = random_case(rng)
        rep = jacobian_check(prior, obs, h)
        jac_err = max(jac_err, rep.max_rel_err)
        _, mid = update(prior, obs)
        gain_err = max(gain_err, float(np.max(np.abs(rep.analytic[:, :2] - mid.K))))
        lrep = loss_gradients(random_step(rng), h=h)
        if lrep.kink:
            kinks += 1
        else:
            loss_err = max(loss_err, lrep.max_rel_err)
    return GradcheckSummary(cases, max(jac_err, loss_err), jac_err, loss_err, kinks, gain_err)
