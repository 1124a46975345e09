# Mapping a visibility probability to measurement noise.
import numpy as np

from fusetrack import NoiseMap, VisibilityReport, remap
from fusetrack.uncertainty import variance, variance_grad

m = NoiseMap(sigma2_min=0.25, sigma2_max=64.0)
for p in (1.0, 0.9, 0.5, 0.1, 0.0):
    print(f"p_vis={p:.1f}  var={variance(p, m):8.4f}  dvar/dp={variance_grad(p, m):9.4f}")

# the covariance handed to the filter is isotropic
print(remap(VisibilityReport.from_p_vis(0.5), m))

# a confident visible reading is trusted, an occluded one practically ignored
p = np.linspace(0, 1, 6)
print(np.round([variance(x, NoiseMap(0.05, 1e4)) for x in p], 3))
