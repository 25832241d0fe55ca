"""
Prototype loss versus softmax under PGD
=======================================

Train both heads on the same Gaussian-blob task, then sweep the L-infinity
budget and compare how quickly robust accuracy collapses.
"""
from reproto.experiments import BlobTask, attack_for, compare

seed = 0
cmp = compare(seed, BlobTask(epochs=15), attack=attack_for(restarts=3, seed=seed))

print("natural accuracy (prototype, softmax):", cmp.natural)
eps = cmp.breaking_eps(0.4)
print(f"softmax falls below 40% at eps={eps:.2f}")
print("robust accuracy there:", cmp.robust_at(eps))
print("retention from eps/2 to eps:", cmp.retention(eps))

for e, a, b in zip(cmp.curve_repulsive.eps_values[::5], cmp.curve_repulsive.robust_acc[::5],
                   cmp.curve_softmax.robust_acc[::5]):
    print(f"  eps {e:.2f}   prototype {a:.3f}   softmax {b:.3f}")
