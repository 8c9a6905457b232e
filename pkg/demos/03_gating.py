"""Simulate the dual-threshold RDO gating on a synthetic 1080p frame.

Labels are random legal trees; predictions are the labels with noise, and
the MTT-mask probability is the label bit blurred by a little uncertainty.
"""

import numpy as np

from partmap import CtuPrediction, FramePartition, GatingConfig, random_tree, simulate_frame, tree_to_map
from partmap.synth import perturb_map

rng = np.random.default_rng(5)
width, height = 1920, 1080
rows, cols = -(-height // 128), -(-width // 128)

labels, preds = [], []
for r in range(rows):
    row = []
    for c in range(cols):
        m = tree_to_map(random_tree(rng, split_prob=rng.uniform(0.2, 0.8)))
        row.append(m)
        p = float(np.clip(m.mask * 0.8 + rng.normal(0.1, 0.15), 0, 1))
        preds.append(CtuPrediction(perturb_map(m, rng, 10), p, r, c))
    labels.append(tuple(row))
frame = FramePartition(0, width, height, tuple(labels))

print(f"{'config':<16} {'ET':>4} {'RDO':>4} {'NN':>4} {'skip':>7}")
for level, th1, th2 in [(0, 0.0, 1.0), (1, 0.2, 0.9), (2, 0.2, 0.9), (3, 0.2, 0.9), (3, 0.4, 0.6)]:
    cfg = GatingConfig(level=level, th1=th1, th2=th2)
    rep = simulate_frame(frame, preds, cfg)
    et, rdo, nn = rep.counts.values()
    print(f"{cfg.label:<16} {et:>4} {rdo:>4} {nn:>4} {rep.skip_ratio:>7.1%}")
