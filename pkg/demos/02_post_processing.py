"""Corrupt a ground-truth map and project it back onto a legal tree.

The prediction mimics a network that confuses whole regions with another
partition plus some cell noise.  Opening the pruning thresholds lets the
search consider more splits; the error against the prediction can only drop,
at the price of more search time.
"""

import math
import time

import numpy as np

from partmap import PostConfig, random_tree, reconstruct, tree_error, tree_to_map
from partmap.synth import perturb_map


def paste_regions(target, source, rng, n=3):
    qd, md, mdir = np.array(target.qd), np.array(target.md), np.array(target.mdir)
    for _ in range(n):
        r, c = rng.integers(0, 4, 2) * 8
        win = (slice(r, r + 8), slice(c, c + 8))
        qd[win] = source.qd[win]
        md[(slice(None), *win)] = source.md[(slice(None), *win)]
        mdir[(slice(None), *win)] = source.mdir[(slice(None), *win)]
    return target.replace(qd=qd, md=md, mdir=mdir)


rng = np.random.default_rng(2)
truth = random_tree(rng, split_prob=0.7)
other = random_tree(rng, split_prob=0.7)
noisy = perturb_map(paste_regions(tree_to_map(truth), tree_to_map(other), rng), rng, 30)
print(f"ground-truth tree error against the prediction: {tree_error(truth, noisy)}")

print(f"{'th_qt':>6} {'th_mtt':>7} {'error':>6} {'ms':>8}")
for th_qt, th_mtt in [(0, 0), (0, 64), (8, 64), (64, 64), (math.inf, math.inf)]:
    cfg = PostConfig(th_qt=th_qt, th_mtt=th_mtt, max_tree_depth=5)
    start = time.perf_counter()
    tree = reconstruct(noisy, cfg)
    ms = (time.perf_counter() - start) * 1e3
    print(f"{th_qt:>6} {th_mtt:>7} {tree_error(tree, noisy):>6} {ms:>8.1f}")

# A clean prediction always comes back unchanged, whatever the thresholds.
print("exact map recovered:", reconstruct(tree_to_map(truth), PostConfig(th_qt=0, th_mtt=0)) == truth)
