"""Map-tree post-processing: turn a (possibly noisy) predicted partition map
into a standard-compliant split tree.

Two search strategies give identical results:

* :func:`generate_map_tree` + :func:`select_best_path` build the explicit map
  tree, where each node applies one mode to every frontier CU (a Cartesian
  product over the frontier).  Faithful, but exponential.
* :func:`search` exploits that the path error is a sum of per-CU terms, so the
  best product equals the product of per-CU optima.  This is what
  :func:`reconstruct` uses.

The path error is the L1 distance between the candidate's MTT depth and
direction layers and the predicted ones, summed over the three MTT layers.
Ties are broken by fewer split nodes, then by the preorder sequence of modes
under NS < QT < BT_H < BT_V < TT_H < TT_V.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .partition import (
    CTU_GEOMETRY,
    DEFAULT_RULES,
    MTT_LAYERS,
    CuGeometry,
    PartitionMap,
    PartitionRules,
    SplitMode,
    SplitTree,
    apply_split,
    child_depths,
    enumerate_trees,
    leaf,
    legal_splits,
    make_node,
    tree_to_map,
)


class SearchBudgetExceeded(RuntimeError):
    def __init__(self, nodes: int, ctu=None):
        where = f" for CTU {ctu}" if ctu is not None else ""
        super().__init__(f"map-tree search exceeded {nodes} nodes{where}")
        self.nodes = nodes
        self.ctu = ctu


@dataclass(frozen=True)
class PostConfig:
    th_qt: float = 0
    th_mtt: float = math.inf
    max_tree_depth: int = 7
    rules: PartitionRules = DEFAULT_RULES
    max_splits: Optional[int] = None
    node_budget: int = 1_000_000

    def __post_init__(self):
        if self.th_qt < 0 or self.th_mtt < 0:
            raise ValueError("thresholds must be non-negative")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")


class Cu(NamedTuple):
    """Frontier CU: geometry, depth counters and its MTT base depth."""

    geometry: CuGeometry
    qt_depth: int
    mtt_stage: int
    base: int


class ErrorTables:
    """Summed-area tables over the predicted layers for O(1) region errors."""

    def __init__(self, pred: PartitionMap):
        self.pred = pred
        self._md = {}
        self._dir = {}
        self._qt = {}
        self._layer = {}

    @staticmethod
    def _sat(a: np.ndarray) -> np.ndarray:
        s = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
        s[1:, 1:] = a.cumsum(0).cumsum(1)
        return s.tolist()

    @staticmethod
    def _region(s: list, g: CuGeometry) -> int:
        r0, c0 = g.y // 4, g.x // 4
        r1, c1 = r0 + g.h // 4, c0 + g.w // 4
        return s[r1][c1] - s[r0][c1] - s[r1][c0] + s[r0][c0]

    def md_error(self, layer: int, value: int, g: CuGeometry) -> int:
        key = (layer, value)
        if key not in self._md:
            self._md[key] = self._sat(np.abs(value - self.pred.md[layer].astype(np.int64)))
        return self._region(self._md[key], g)

    def dir_error(self, layer: int, direction: int, g: CuGeometry) -> int:
        key = (layer, direction)
        if key not in self._dir:
            self._dir[key] = self._sat(np.abs(direction - self.pred.mdir[layer].astype(np.int64)))
        return self._region(self._dir[key], g)

    def qt_overshoot(self, depth: int, g: CuGeometry) -> int:
        """Cells where a QT split to ``depth`` goes deeper than the prediction."""
        if depth not in self._qt:
            self._qt[depth] = self._sat((self.pred.qd < depth).astype(np.int64))
        return self._region(self._qt[depth], g)

    def layer_error(self, cu: Cu, mode: SplitMode) -> int:
        """Error of ``mode`` on the CU's current MTT layer only (used for gating)."""
        key = (cu, mode)
        if key not in self._layer:
            self._layer[key] = self._layer_error(cu, mode)
        return self._layer[key]

    def _layer_error(self, cu: Cu, mode: SplitMode) -> int:
        n = cu.mtt_stage
        if n >= MTT_LAYERS:
            return 0
        if mode is SplitMode.NS:
            return self.md_error(n, cu.base, cu.geometry) + self.dir_error(n, 0, cu.geometry)
        return sum(self.md_error(n, cu.base + inc, g) + self.dir_error(n, mode.direction, g)
                   for g, inc in zip(apply_split(cu.geometry, mode), mode.increments))

    def decision_cost(self, cu: Cu, mode: SplitMode) -> int:
        """Share of the path error fixed by choosing ``mode`` for ``cu``.

        An MTT split fixes its own layer; a leaf fixes every remaining layer;
        a QT split defers everything to its children.
        """
        if mode is SplitMode.QT:
            return 0
        if mode is SplitMode.NS:
            return sum(self.md_error(n, cu.base, cu.geometry) + self.dir_error(n, 0, cu.geometry)
                       for n in range(cu.mtt_stage, MTT_LAYERS))
        return self.layer_error(cu, mode)


def root_cu(root: CuGeometry = CTU_GEOMETRY, root_qt_depth: int = 0) -> Cu:
    return Cu(root, root_qt_depth, 0, root_qt_depth)


def child_cus(cu: Cu, mode: SplitMode) -> list[Cu]:
    cq, cm = child_depths(cu.qt_depth, cu.mtt_stage, mode)
    geoms = apply_split(cu.geometry, mode)
    if mode is SplitMode.QT:
        return [Cu(g, cq, cm, cq) for g in geoms]
    return [Cu(g, cq, cm, cu.base + inc) for g, inc in zip(geoms, mode.increments)]


def _allowed(cu: Cu, cfg: PostConfig, tree_depth: int) -> list[SplitMode]:
    if tree_depth >= cfg.max_tree_depth:
        return [SplitMode.NS]
    modes = legal_splits(cu.geometry, cu.qt_depth, cu.mtt_stage, cfg.rules)
    if cu.mtt_stage > 0:
        modes.discard(SplitMode.QT)
    return sorted(modes, key=lambda m: m.order)


def candidate_modes(cu: Cu, pred: PartitionMap, cfg: PostConfig = PostConfig(),
                    tables: Optional[ErrorTables] = None, tree_depth: int = 0) -> set[SplitMode]:
    """Modes of ``cu`` that survive the QT and MTT gates.

    QT survives when at most ``th_qt`` cells of the CU would end up deeper than
    the predicted QT depth.  NS and each MTT mode survive when their error on
    the CU's current MTT layer is at most ``th_mtt``.

    When no non-QT mode survives, the lowest-error one is kept as well, unless
    QT survived with zero overshoot (the prediction asks for QT everywhere).
    Candidate sets then only grow with either threshold, so raising a
    threshold never worsens the selected path.
    """
    tables = tables or ErrorTables(pred)
    allowed = _allowed(cu, cfg, tree_depth)
    if allowed == [SplitMode.NS]:
        return {SplitMode.NS}
    keep = set()
    errors = {}
    certain_qt = False
    for mode in allowed:
        if mode is SplitMode.QT:
            overshoot = tables.qt_overshoot(cu.qt_depth + 1, cu.geometry)
            if overshoot <= cfg.th_qt:
                keep.add(mode)
                certain_qt = overshoot == 0
            continue
        errors[mode] = tables.layer_error(cu, mode)
        if errors[mode] <= cfg.th_mtt:
            keep.add(mode)
    if keep <= {SplitMode.QT} and not certain_qt:
        keep.add(min(errors, key=lambda m: (errors[m], m.order)))
    return keep


# ---------------------------------------------------------------------------
# Explicit map tree


@dataclass(eq=False)
class MapNode:
    cus: list[Cu]
    tree_depth: int = 0
    decisions: tuple[tuple[Cu, SplitMode], ...] = ()
    error: int = 0
    splits: int = 0
    parent: Optional["MapNode"] = field(default=None, repr=False)
    children: list["MapNode"] = field(default_factory=list, repr=False)

    def path_decisions(self) -> list[tuple[Cu, SplitMode]]:
        chain = []
        node = self
        while node is not None:
            chain.append(node.decisions)
            node = node.parent
        return [d for step in reversed(chain) for d in step]

    def current_map(self) -> PartitionMap:
        """Temporary partition map: decided splits, frontier CUs as leaves."""
        root = self
        while root.parent is not None:
            root = root.parent
        start = root.cus[0]
        return tree_to_map(_build_tree(start, dict(
            (cu.geometry, mode) for cu, mode in self.path_decisions())))

    @property
    def cur_qd(self) -> np.ndarray:
        return self.current_map().qd

    @property
    def cur_md(self) -> np.ndarray:
        return self.current_map().md

    @property
    def cur_mdir(self) -> np.ndarray:
        return self.current_map().mdir

    def leaves(self) -> Iterator["MapNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.children:
                stack.extend(reversed(node.children))
            else:
                yield node


def _build_tree(cu: Cu, modes: dict[CuGeometry, SplitMode]) -> SplitTree:
    mode = modes.get(cu.geometry, SplitMode.NS)
    if mode is SplitMode.NS:
        return leaf(cu.geometry, cu.qt_depth, cu.mtt_stage)
    kids = [_build_tree(c, modes) for c in child_cus(cu, mode)]
    return make_node(cu.geometry, mode, kids, cu.qt_depth, cu.mtt_stage)


def generate_map_tree(pred: PartitionMap, cfg: PostConfig = PostConfig(),
                      root: CuGeometry = CTU_GEOMETRY, root_qt_depth: int = 0,
                      ctu=None) -> MapNode:
    """Depth-first expansion of the map tree.

    Every leaf of the returned tree is a complete candidate: its frontier is
    empty or it sits at ``max_tree_depth`` (remaining CUs stay unsplit).
    """
    tables = ErrorTables(pred)
    start = MapNode([root_cu(root, root_qt_depth)])
    count = [1]

    def expand(node: MapNode):
        if node.tree_depth >= cfg.max_tree_depth or not node.cus:
            # remaining frontier CUs are leaves
            node.error += sum(tables.decision_cost(cu, SplitMode.NS) for cu in node.cus)
            return
        per_cu = [sorted(candidate_modes(cu, pred, cfg, tables, node.tree_depth), key=lambda m: m.order)
                  for cu in node.cus]
        for combo in itertools.product(*per_cu):
            added = sum(m is not SplitMode.NS for m in combo)
            if cfg.max_splits is not None and node.splits + added > cfg.max_splits:
                continue
            count[0] += 1
            if count[0] > cfg.node_budget:
                raise SearchBudgetExceeded(cfg.node_budget, ctu)
            frontier = []
            cost = 0
            for cu, mode in zip(node.cus, combo):
                cost += tables.decision_cost(cu, mode)
                if mode is not SplitMode.NS:
                    frontier.extend(child_cus(cu, mode))
            child = MapNode(frontier, node.tree_depth + 1, tuple(zip(node.cus, combo)),
                            node.error + cost, node.splits + added, node)
            expand(child)
            node.children.append(child)

    expand(start)
    return start


def select_best_path(map_tree: MapNode, pred: Optional[PartitionMap] = None) -> SplitTree:
    """Least-error complete candidate of an expanded map tree.

    ``pred`` is accepted for symmetry with the search; errors were already
    accumulated on the nodes during expansion.
    """
    start = map_tree.cus[0]
    best = None
    for node in map_tree.leaves():
        tree = _build_tree(start, {cu.geometry: m for cu, m in node.path_decisions()})
        key = (node.error, node.splits, tree.mode_sequence)
        if best is None or key < best[0]:
            best = (key, tree)
    return best[1]


# ---------------------------------------------------------------------------
# Factored search


@dataclass(frozen=True)
class SearchResult:
    tree: SplitTree
    error: int


def search(pred: PartitionMap, cfg: PostConfig = PostConfig(),
           root: CuGeometry = CTU_GEOMETRY, root_qt_depth: int = 0, ctu=None) -> SearchResult:
    tables = ErrorTables(pred)
    memo: dict = {}
    modes_memo: dict = {}
    count = [0]

    # key: (error, splits, preorder mode sequence, tree)
    def best(cu: Cu, depth: int, budget: Optional[int]):
        k = (cu, depth, budget)
        if k in memo:
            return memo[k]
        count[0] += 1
        if count[0] > cfg.node_budget:
            raise SearchBudgetExceeded(cfg.node_budget, ctu)
        if (cu, depth) not in modes_memo:
            modes_memo[cu, depth] = sorted(candidate_modes(cu, pred, cfg, tables, depth), key=lambda m: m.order)
        out = None
        for mode in modes_memo[cu, depth]:
            cost = tables.decision_cost(cu, mode)
            if mode is SplitMode.NS:
                cand = (cost, 0, (mode.order,), leaf(cu.geometry, cu.qt_depth, cu.mtt_stage))
            else:
                if budget is not None and budget < 1:
                    continue
                kids = child_cus(cu, mode)
                if budget is None:
                    parts = [best(c, depth + 1, None) for c in kids]
                else:
                    parts = _best_forest(kids, depth + 1, budget - 1, best)
                    if parts is None:
                        continue
                seq = (mode.order,) + tuple(itertools.chain.from_iterable(p[2] for p in parts))
                cand = (cost + sum(p[0] for p in parts), 1 + sum(p[1] for p in parts), seq,
                        make_node(cu.geometry, mode, [p[3] for p in parts], cu.qt_depth, cu.mtt_stage))
            if out is None or cand[:3] < out[:3]:
                out = cand
        memo[k] = out
        return out

    res = best(root_cu(root, root_qt_depth), 0, cfg.max_splits)
    return SearchResult(res[3], res[0])


def _best_forest(kids: list[Cu], depth: int, budget: int, best):
    """Best joint choice for sibling CUs sharing ``budget`` split nodes."""
    # table[b] = best combination of the processed prefix using <= b splits
    table = [(0, 0, (), ())] * (budget + 1)
    for cu in kids:
        options = [best(cu, depth, b) for b in range(budget + 1)]
        new = []
        for b in range(budget + 1):
            pick = None
            for b1 in range(b + 1):
                left, right = table[b1], options[b - b1]
                if left is None or right is None:
                    continue
                cand = (left[0] + right[0], left[1] + right[1], left[2] + right[2], left[3] + (right,))
                if pick is None or cand[:3] < pick[:3]:
                    pick = cand
            new.append(pick)
        table = new
    final = table[budget]
    return None if final is None else list(final[3])


def reconstruct(pred: PartitionMap, cfg: PostConfig = PostConfig(),
                root: CuGeometry = CTU_GEOMETRY, root_qt_depth: int = 0, ctu=None) -> SplitTree:
    return search(pred, cfg, root, root_qt_depth, ctu).tree


# ---------------------------------------------------------------------------
# Oracle


def tree_error(tree: SplitTree, pred: PartitionMap) -> int:
    """Summed L1 distance of the tree's MTT layers to ``pred`` over the tree's region."""
    m = tree_to_map(tree)
    rows, cols = tree.geometry.cells
    d_md = np.abs(m.md[:, rows, cols].astype(np.int64) - pred.md[:, rows, cols])
    d_dir = np.abs(m.mdir[:, rows, cols].astype(np.int64) - pred.mdir[:, rows, cols])
    return int(d_md.sum() + d_dir.sum())


def brute_force_best_tree(pred: PartitionMap, rules: PartitionRules = DEFAULT_RULES,
                          depth_cap: int = 3, root: CuGeometry = CTU_GEOMETRY,
                          root_qt_depth: int = 0, limit: int = 200_000) -> SplitTree:
    """Exhaustive minimum of the path error over trees with <= ``depth_cap`` splits.

    Candidates and their painted layers are cached per (rules, cap, root), so
    repeated calls only pay for the vectorised L1 distances.
    """
    trees, md, mdir = _candidate_layers(rules, depth_cap, root, root_qt_depth, limit)
    rows, cols = root.cells
    p_md = pred.md[:, rows, cols].astype(np.int64)
    p_dir = pred.mdir[:, rows, cols].astype(np.int64)
    errors = np.abs(md - p_md).sum(axis=(1, 2, 3)) + np.abs(mdir - p_dir).sum(axis=(1, 2, 3))
    best = min(range(len(trees)),
               key=lambda i: (int(errors[i]), trees[i].num_splits, trees[i].mode_sequence))
    return trees[best]


@functools.lru_cache(maxsize=8)
def _candidate_layers(rules, depth_cap, root, root_qt_depth, limit):
    trees = []
    for tree in enumerate_trees(root, rules, depth_cap, root_qt_depth):
        if len(trees) >= limit:
            raise ValueError(f"more than {limit} candidate trees; lower depth_cap")
        trees.append(tree)
    rows, cols = root.cells
    maps = [tree_to_map(t) for t in trees]
    md = np.stack([m.md[:, rows, cols] for m in maps]).astype(np.int64)
    mdir = np.stack([m.mdir[:, rows, cols] for m in maps]).astype(np.int64)
    return trees, md, mdir
