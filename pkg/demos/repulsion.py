"""
Spreading prototypes apart
==========================

Class prototypes start as standard-normal draws and are pushed apart by
gradient descent on the negated sum of pairwise distances.
"""
import numpy as np

from reproto import Metric, build_prototypes, optimize_prototypes

###############################################################################
# Two points on a line: each step adds ``2 * r * mu`` to their separation.

pair = optimize_prototypes([[-1.0, 0.0], [1.0, 0.0]], r=1.0, mu=0.01, epochs=100,
                           metric=Metric.L2)
print("two-point separation after 100 steps:", pair.stats.min_pairwise)

###############################################################################
# Ten prototypes in 50 dimensions, under both metrics.

for metric in ("l2", "linf"):
    protos = build_prototypes(10, 50, seed=0, metric=metric)
    s = protos.stats
    print(f"{metric:>4}: min {s.min_pairwise:.3f}  mean {s.mean_pairwise:.3f}")

###############################################################################
# The growth is unbounded unless a bound is given.

bounded = build_prototypes(5, 8, seed=1, bound=1.0)
print("largest centre norm with bound=1:", np.linalg.norm(bounded.centers, axis=1).max())
