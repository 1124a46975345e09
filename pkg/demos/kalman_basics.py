# Constant-velocity Kalman filter on one feature: predict, update, coast.
import numpy as np

from fusetrack import Observation, ProcessModel, StateEstimate, predict, update

pm = ProcessModel(q_pos=0.0, q_vel=25.0)
state = StateEstimate.create([0.0, 0.0, 0.0, 0.0], np.diag([1.0, 1.0, 1e4, 1e4]))

# feature moving right at 50 px/s, observed at 100 Hz with 0.25 px^2 noise
rng = np.random.default_rng(1)
for k in range(1, 21):
    state = predict(state, 0.01, pm)
    z = np.array([0.5 * k, 0.0]) + rng.normal(0, 0.5, 2)
    state, mid = update(state, Observation.create(z, 0.25))
print("after 20 updates: pos", state.position.round(3), "vel", state.velocity.round(2))
print("gain on x position", mid.K[0, 0].round(4))

# without measurements the mean moves in a straight line and P grows
coast = predict(state, 0.2, pm)
print("coasted 0.2 s:", coast.position.round(3))
print("position std before/after coast:",
      np.sqrt(state.P[0, 0]).round(3), np.sqrt(coast.P[0, 0]).round(3))
