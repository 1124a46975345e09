# Analytic derivatives of the Kalman update checked against central differences.
import numpy as np

from fusetrack.losses import gradcheck, jacobian_check, random_case

rng = np.random.default_rng(0)
prior, obs = random_case(rng)
rep = jacobian_check(prior, obs)
print("d x_post / d (z, x_prior) relative error:", f"{rep.max_rel_err:.2e}")

summ = gradcheck(cases=200, seed=1)
for k, v in summ.as_dict().items():
    print(f"{k:22s} {v}")
