# Comparing the four fusion modes over a slice of the benchmark suite.
# The full 100-scenario run takes about a minute; pass a count to change it.
import sys

from fusetrack import FusionMode, benchmark_suite
from fusetrack.trends import BASELINES, SPLITS, run_suite

n = int(sys.argv[1]) if len(sys.argv) > 1 else 10
res = run_suite(benchmark_suite(0)[:n])
print(f"{n} scenarios")
for mode in FusionMode:
    print(f"{mode.value:13s}", "  ".join(f"{s}={res.aggregate(mode, s):.4f}" for s in SPLITS))
for b in BASELINES:
    print(f"kalman_fused beats {b.value} in {res.win_rate(FusionMode.KALMAN_FUSED, b):.0%} "
          f"of scenarios")
for s in ("vis", "occ"):
    g = res.relative_gain(FusionMode.KALMAN_FUSED, FusionMode.NAIVE_COMBO, s)
    print(f"gain over naive_combo on {s}: {g:+.1%}")
