"""Synthetic partition maps for tests, demos and stress runs."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .formats import format_split_log
from .partition import (
    CTU_SIZE,
    DEFAULT_RULES,
    GRID,
    MTT_LAYERS,
    CuGeometry,
    PartitionMap,
    PartitionRules,
    random_tree,
)


def perturb_map(pmap: PartitionMap, rng: np.random.Generator, n_edits: int,
                region: Optional[CuGeometry] = None, max_step: int = 2) -> PartitionMap:
    """Apply ``n_edits`` random edits to the MTT layers inside ``region``.

    Each edit picks a layer and a cell, shifts its depth by up to ``max_step``
    and redraws its direction.  Depths are kept non-negative.
    """
    md = np.array(pmap.md)
    mdir = np.array(pmap.mdir)
    rows, cols = (region.cells if region is not None else (slice(0, GRID), slice(0, GRID)))
    r0, c0 = rows.start, cols.start
    h, w = rows.stop - rows.start, cols.stop - cols.start
    for _ in range(n_edits):
        layer = rng.integers(MTT_LAYERS)
        r, c = r0 + rng.integers(h), c0 + rng.integers(w)
        md[layer, r, c] = max(0, md[layer, r, c] + rng.integers(-max_step, max_step + 1))
        mdir[layer, r, c] = rng.integers(-1, 2)
    return pmap.replace(md=md, mdir=mdir)


def garbage_map(rng: np.random.Generator, max_qd: int = 4, max_md: int = 10) -> PartitionMap:
    """Uniformly random layer values with no structure at all."""
    return PartitionMap(rng.integers(0, max_qd + 1, (GRID, GRID)),
                        rng.integers(0, max_md + 1, (MTT_LAYERS, GRID, GRID)),
                        rng.integers(-1, 2, (MTT_LAYERS, GRID, GRID)),
                        bool(rng.random() < 0.5))


def random_split_log(rng: np.random.Generator, poc: int, rows: int, cols: int,
                     rules: PartitionRules = DEFAULT_RULES, drop_leaves: float = 0.5,
                     duplicates: float = 0.05) -> tuple[str, dict]:
    """A shuffled split log for a ``rows x cols`` CTU frame.

    Some NS leaf records are dropped and a few records are repeated, as real
    encoder dumps do.  Returns the text and the generating trees.
    """
    trees = {(r, c): random_tree(rng, rules) for r in range(rows) for c in range(cols)}
    lines = format_split_log(poc, trees).splitlines()
    kept = [ln for ln in lines
            if not (ln.endswith(",NS") and not _is_root(ln) and rng.random() < drop_leaves)]
    kept += [ln for ln in kept if rng.random() < duplicates]
    order = rng.permutation(len(kept))
    return "".join(kept[i] + "\n" for i in order), trees


def _is_root(line: str) -> bool:
    _, x, y, w, h, _ = line.split(",")
    return int(w) == CTU_SIZE and int(h) == CTU_SIZE
