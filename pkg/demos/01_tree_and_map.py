"""Walk through one CTU: build a split tree, encode it as a partition map,
look at the layers, and decode it back."""

import numpy as np

from partmap import CTU_GEOMETRY, SplitMode, map_to_tree_exact, tree_to_map
from partmap.partition import split


def show(name, grid):
    # one character per 8x8 pixels keeps the picture small
    print(f"{name}:")
    for row in grid[::2, ::2]:
        print("   " + " ".join(f"{v:+d}" if name.startswith("mdir") else str(v) for v in row))


# Quad split the CTU, then give the top-left quadrant a vertical ternary split
# and split its middle column horizontally.
quads = list(split(CTU_GEOMETRY, SplitMode.QT).children)
tt = split(quads[0].geometry, SplitMode.TT_V, 1, 0)
middle = split(tt.children[1].geometry, SplitMode.BT_H, 1, 1)
tt = split(quads[0].geometry, SplitMode.TT_V, 1, 0, children=[tt.children[0], middle, tt.children[2]])
quads[0] = tt
tree = split(CTU_GEOMETRY, SplitMode.QT, children=quads)

pmap = tree_to_map(tree)
print("MTT mask:", pmap.mask)
show("qd (top-left quadrant)", pmap.qd[:16, :16])
show("md1", pmap.md[0][:16, :16])
show("mdir1", pmap.mdir[0][:16, :16])
show("md2", pmap.md[1][:16, :16])
show("mdir2", pmap.mdir[1][:16, :16])

back = map_to_tree_exact(pmap)
print("decoded tree identical:", back == tree)
print("leaf CUs:", sum(1 for _ in back.leaves()))

# The whole layer stack is monotone, which is what makes decoding possible.
layers = np.stack([pmap.qd, *pmap.md])
print("layers non-decreasing:", bool((np.diff(layers, axis=0) >= 0).all()))
