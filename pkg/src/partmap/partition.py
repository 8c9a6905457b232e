"""CTU geometry, split modes, legality rules and the partition map.

A 128x128 CTU is described at 4x4-pixel granularity, giving 32x32 cells per
layer.  The map holds one QT depth layer, three cumulative MTT depth layers
(``md[n]`` builds on ``md[n-1]``, with ``md[-1]`` being the QT depth), three
MTT direction layers (+1 horizontal, -1 vertical, 0 none) and a per-CTU MTT
mask flag.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

CTU_SIZE = 128
CELL = 4
GRID = CTU_SIZE // CELL
MTT_LAYERS = 3


class SplitMode(enum.Enum):
    NS = "NS"
    QT = "QT"
    BT_H = "BT_H"
    BT_V = "BT_V"
    TT_H = "TT_H"
    TT_V = "TT_V"

    @property
    def order(self) -> int:
        return _MODE_ORDER[self]

    @property
    def is_mtt(self) -> bool:
        return self not in (SplitMode.NS, SplitMode.QT)

    @property
    def direction(self) -> int:
        if self in (SplitMode.BT_H, SplitMode.TT_H):
            return 1
        if self in (SplitMode.BT_V, SplitMode.TT_V):
            return -1
        return 0

    @property
    def increments(self) -> tuple[int, ...]:
        """MTT depth increment written for each child, in child order."""
        if self in (SplitMode.BT_H, SplitMode.BT_V):
            return (1, 1)
        if self in (SplitMode.TT_H, SplitMode.TT_V):
            return (2, 1, 2)
        return ()


MODES = tuple(SplitMode)
_MODE_ORDER = {m: i for i, m in enumerate(MODES)}
MTT_MODES = (SplitMode.BT_H, SplitMode.BT_V, SplitMode.TT_H, SplitMode.TT_V)


class CuGeometry(NamedTuple):
    """CTU-local rectangle in pixels."""

    x: int
    y: int
    w: int
    h: int

    @property
    def cells(self) -> tuple[slice, slice]:
        return (slice(self.y // CELL, (self.y + self.h) // CELL),
                slice(self.x // CELL, (self.x + self.w) // CELL))

    @property
    def area(self) -> int:
        return self.w * self.h

    def is_valid(self) -> bool:
        return (4 <= self.w <= CTU_SIZE and 4 <= self.h <= CTU_SIZE
                and self.x % CELL == 0 and self.y % CELL == 0
                and self.x >= 0 and self.y >= 0
                and self.x + self.w <= CTU_SIZE and self.y + self.h <= CTU_SIZE)


CTU_GEOMETRY = CuGeometry(0, 0, CTU_SIZE, CTU_SIZE)


@dataclass(frozen=True)
class PartitionRules:
    min_cu_side: int = 4
    max_qt_depth: int = 4
    max_mtt_stage: int = 3
    max_bt_side: int = 64
    max_tt_side: int = 64
    allow_qt_after_mtt: bool = False

    def __post_init__(self):
        if self.min_cu_side < 4:
            raise ValueError("min_cu_side must be >= 4")
        if not 0 <= self.max_mtt_stage <= MTT_LAYERS:
            raise ValueError("max_mtt_stage must be in 0..3")
        if not 0 <= self.max_qt_depth <= 4:
            raise ValueError("max_qt_depth must be in 0..4")

    @classmethod
    def from_mapping(cls, values: dict) -> "PartitionRules":
        kwargs = {}
        for key, raw in values.items():
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown rules key: {key}")
            if key == "allow_qt_after_mtt":
                kwargs[key] = str(raw).strip().lower() in ("1", "true", "yes")
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


DEFAULT_RULES = PartitionRules()


@dataclass(frozen=True)
class SplitTree:
    geometry: CuGeometry
    mode: SplitMode = SplitMode.NS
    children: tuple["SplitTree", ...] = ()
    qt_depth: int = 0
    mtt_stage: int = 0

    def preorder(self) -> Iterator["SplitTree"]:
        yield self
        for child in self.children:
            yield from child.preorder()

    def leaves(self) -> Iterator["SplitTree"]:
        for node in self.preorder():
            if node.mode is SplitMode.NS:
                yield node

    @property
    def num_splits(self) -> int:
        return sum(1 for n in self.preorder() if n.mode is not SplitMode.NS)

    @property
    def mode_sequence(self) -> tuple[int, ...]:
        """Preorder mode indices; prefix-free over complete trees."""
        return tuple(n.mode.order for n in self.preorder())

    @property
    def has_mtt(self) -> bool:
        return any(n.mode.is_mtt for n in self.preorder())

    def truncated(self, max_mtt_stage: int) -> "SplitTree":
        """Copy with every MTT split at stage >= ``max_mtt_stage`` removed."""
        if self.mode.is_mtt and self.mtt_stage >= max_mtt_stage:
            return SplitTree(self.geometry, SplitMode.NS, (), self.qt_depth, self.mtt_stage)
        kids = tuple(c.truncated(max_mtt_stage) for c in self.children)
        return SplitTree(self.geometry, self.mode, kids, self.qt_depth, self.mtt_stage)


class InconsistentMapError(ValueError):
    """Raised when a partition map cannot be decoded into a legal tree."""

    def __init__(self, block: CuGeometry, reason: str):
        super().__init__(f"inconsistent map at block {tuple(block)}: {reason}")
        self.block = block
        self.reason = reason


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.int16, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PartitionMap:
    qd: np.ndarray
    md: np.ndarray
    mdir: np.ndarray
    mask: bool = False

    def __post_init__(self):
        qd, md, mdir = _frozen(self.qd), _frozen(self.md), _frozen(self.mdir)
        if qd.shape != (GRID, GRID):
            raise ValueError(f"qd must be {GRID}x{GRID}, got {qd.shape}")
        if md.shape != (MTT_LAYERS, GRID, GRID) or mdir.shape != md.shape:
            raise ValueError("md and mdir must be 3x32x32")
        object.__setattr__(self, "qd", qd)
        object.__setattr__(self, "md", md)
        object.__setattr__(self, "mdir", mdir)
        object.__setattr__(self, "mask", bool(self.mask))

    @classmethod
    def zeros(cls) -> "PartitionMap":
        return cls(np.zeros((GRID, GRID)), np.zeros((3, GRID, GRID)), np.zeros((3, GRID, GRID)), False)

    def replace(self, **changes) -> "PartitionMap":
        kw = dict(qd=self.qd, md=self.md, mdir=self.mdir, mask=self.mask)
        kw.update(changes)
        return PartitionMap(**kw)

    def layers(self) -> dict[str, np.ndarray]:
        out = {"qd": self.qd}
        for n in range(MTT_LAYERS):
            out[f"md{n + 1}"] = self.md[n]
        for n in range(MTT_LAYERS):
            out[f"mdir{n + 1}"] = self.mdir[n]
        return out

    def __eq__(self, other):
        if not isinstance(other, PartitionMap):
            return NotImplemented
        return (self.mask == other.mask and np.array_equal(self.qd, other.qd)
                and np.array_equal(self.md, other.md) and np.array_equal(self.mdir, other.mdir))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FramePartition:
    poc: int
    width: int
    height: int
    ctus: tuple[tuple[PartitionMap, ...], ...] = field(default=())

    def __post_init__(self):
        rows, cols = self.grid_shape
        ctus = tuple(tuple(r) for r in self.ctus) if self.ctus else tuple(
            tuple(PartitionMap.zeros() for _ in range(cols)) for _ in range(rows))
        if len(ctus) != rows or any(len(r) != cols for r in ctus):
            raise ValueError(f"CTU grid must be {rows}x{cols} for a {self.width}x{self.height} frame")
        object.__setattr__(self, "ctus", ctus)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (-(-self.height // CTU_SIZE), -(-self.width // CTU_SIZE))

    def ctu_items(self) -> Iterator[tuple[int, int, PartitionMap]]:
        for r, row in enumerate(self.ctus):
            for c, m in enumerate(row):
                yield r, c, m

    def picture_cells(self, row: int, col: int) -> np.ndarray:
        """Boolean 32x32 mask of cells whose origin lies inside the picture."""
        ys = row * CTU_SIZE + CELL * np.arange(GRID)
        xs = col * CTU_SIZE + CELL * np.arange(GRID)
        return (ys[:, None] < self.height) & (xs[None, :] < self.width)

    def __eq__(self, other):
        if not isinstance(other, FramePartition):
            return NotImplemented
        return ((self.poc, self.width, self.height) == (other.poc, other.width, other.height)
                and self.ctus == other.ctus)

    __hash__ = None


# ---------------------------------------------------------------------------
# Split legality and geometry


def legal_splits(geom: CuGeometry, qt_depth: int, mtt_stage: int,
                 rules: PartitionRules = DEFAULT_RULES) -> set[SplitMode]:
    w, h = geom.w, geom.h
    modes = {SplitMode.NS}
    if ((mtt_stage == 0 or rules.allow_qt_after_mtt) and w == h
            and w // 2 >= rules.min_cu_side and qt_depth < rules.max_qt_depth):
        modes.add(SplitMode.QT)
    if mtt_stage < rules.max_mtt_stage:
        if max(w, h) <= rules.max_bt_side:
            if h // 2 >= rules.min_cu_side:
                modes.add(SplitMode.BT_H)
            if w // 2 >= rules.min_cu_side:
                modes.add(SplitMode.BT_V)
        if max(w, h) <= rules.max_tt_side:
            if h // 4 >= rules.min_cu_side:
                modes.add(SplitMode.TT_H)
            if w // 4 >= rules.min_cu_side:
                modes.add(SplitMode.TT_V)
    return modes


def apply_split(geom: CuGeometry, mode: SplitMode) -> list[CuGeometry]:
    x, y, w, h = geom
    if mode is SplitMode.QT:
        if w != h or w < 8:
            raise ValueError(f"QT not applicable to {tuple(geom)}")
        s = w // 2
        return [CuGeometry(x, y, s, s), CuGeometry(x + s, y, s, s),
                CuGeometry(x, y + s, s, s), CuGeometry(x + s, y + s, s, s)]
    if mode is SplitMode.BT_H:
        if h < 8:
            raise ValueError(f"BT_H not applicable to {tuple(geom)}")
        return [CuGeometry(x, y, w, h // 2), CuGeometry(x, y + h // 2, w, h // 2)]
    if mode is SplitMode.BT_V:
        if w < 8:
            raise ValueError(f"BT_V not applicable to {tuple(geom)}")
        return [CuGeometry(x, y, w // 2, h), CuGeometry(x + w // 2, y, w // 2, h)]
    if mode is SplitMode.TT_H:
        if h < 16:
            raise ValueError(f"TT_H not applicable to {tuple(geom)}")
        q = h // 4
        return [CuGeometry(x, y, w, q), CuGeometry(x, y + q, w, 2 * q), CuGeometry(x, y + 3 * q, w, q)]
    if mode is SplitMode.TT_V:
        if w < 16:
            raise ValueError(f"TT_V not applicable to {tuple(geom)}")
        q = w // 4
        return [CuGeometry(x, y, q, h), CuGeometry(x + q, y, 2 * q, h), CuGeometry(x + 3 * q, y, q, h)]
    raise ValueError("NS has no children")


def child_depths(qt_depth: int, mtt_stage: int, mode: SplitMode) -> tuple[int, int]:
    if mode is SplitMode.QT:
        return qt_depth + 1, mtt_stage
    return qt_depth, mtt_stage + 1


def make_node(geom: CuGeometry, mode: SplitMode, children: Sequence[SplitTree],
              qt_depth: int, mtt_stage: int) -> SplitTree:
    return SplitTree(geom, mode, tuple(children), qt_depth, mtt_stage)


def leaf(geom: CuGeometry, qt_depth: int = 0, mtt_stage: int = 0) -> SplitTree:
    return SplitTree(geom, SplitMode.NS, (), qt_depth, mtt_stage)


def split(geom: CuGeometry, mode: SplitMode, qt_depth: int = 0, mtt_stage: int = 0,
          children: Optional[Sequence[SplitTree]] = None) -> SplitTree:
    """Build a one-level split whose children default to leaves."""
    if children is None:
        cq, cm = child_depths(qt_depth, mtt_stage, mode)
        children = [leaf(g, cq, cm) for g in apply_split(geom, mode)]
    return make_node(geom, mode, children, qt_depth, mtt_stage)


def check_tree(tree: SplitTree, rules: PartitionRules = DEFAULT_RULES) -> None:
    """Raise ValueError if ``tree`` breaks any structural or legality invariant."""
    seen_mtt = False

    def walk(node: SplitTree, under_mtt: bool):
        if not node.geometry.is_valid():
            raise ValueError(f"invalid geometry {tuple(node.geometry)}")
        if node.mtt_stage > MTT_LAYERS:
            raise ValueError("mtt_stage above 3")
        if node.mode is SplitMode.NS:
            if node.children:
                raise ValueError("NS node with children")
            return
        if node.mode is SplitMode.QT and under_mtt and not rules.allow_qt_after_mtt:
            raise ValueError("QT below an MTT split")
        if node.mode not in legal_splits(node.geometry, node.qt_depth, node.mtt_stage, rules):
            raise ValueError(f"{node.mode.value} illegal at {tuple(node.geometry)}")
        geoms = apply_split(node.geometry, node.mode)
        if [c.geometry for c in node.children] != geoms:
            raise ValueError(f"children do not tile {tuple(node.geometry)}")
        cq, cm = child_depths(node.qt_depth, node.mtt_stage, node.mode)
        for c in node.children:
            if (c.qt_depth, c.mtt_stage) != (cq, cm):
                raise ValueError("child depth counters inconsistent")
            walk(c, under_mtt or node.mode.is_mtt)

    walk(tree, seen_mtt)


# ---------------------------------------------------------------------------
# Tree <-> map


def derive_mtt_mask(qd_pred, md0_label) -> bool:
    """MTT mask label: False when the QT depth covers the first MTT layer everywhere."""
    return not bool(np.all(np.asarray(qd_pred) >= np.asarray(md0_label)))


def _paint(tree: SplitTree, qd, md, mdir) -> None:
    if any(n.mode is SplitMode.QT and n.mtt_stage > 0 for n in tree.preorder()):
        raise ValueError("QT below MTT is not representable in a partition map")

    def paint(node: SplitTree, base: int):
        sl = node.geometry.cells
        if node.mode is SplitMode.NS:
            qd[sl] = node.qt_depth
            for n in range(node.mtt_stage, MTT_LAYERS):
                md[n][sl] = base
                mdir[n][sl] = 0
            return
        if node.mode is SplitMode.QT:
            for c in node.children:
                paint(c, c.qt_depth)
            return
        n = node.mtt_stage
        for c, inc in zip(node.children, node.mode.increments):
            md[n][c.geometry.cells] = base + inc
            mdir[n][c.geometry.cells] = node.mode.direction
            paint(c, base + inc)

    paint(tree, tree.qt_depth)


def tree_to_map(tree: SplitTree) -> PartitionMap:
    qd = np.zeros((GRID, GRID), dtype=np.int16)
    md = np.zeros((MTT_LAYERS, GRID, GRID), dtype=np.int16)
    mdir = np.zeros_like(md)
    _paint(tree, qd, md, mdir)
    return PartitionMap(qd, md, mdir, derive_mtt_mask(qd, md[0]))


def _first_mismatch(tree: SplitTree, pmap: PartitionMap, ref: PartitionMap) -> Optional[CuGeometry]:
    for node in tree.preorder():
        if node.children:
            continue
        sl = node.geometry.cells
        if (not np.array_equal(pmap.qd[sl], ref.qd[sl])
                or not np.array_equal(pmap.md[:, sl[0], sl[1]], ref.md[:, sl[0], sl[1]])
                or not np.array_equal(pmap.mdir[:, sl[0], sl[1]], ref.mdir[:, sl[0], sl[1]])):
            return node.geometry
    return None


def map_to_tree_exact(pmap: PartitionMap, rules: PartitionRules = DEFAULT_RULES,
                      root: CuGeometry = CTU_GEOMETRY, root_qt_depth: int = 0,
                      check_mask: bool = True) -> SplitTree:
    """Decode an exact partition map into the unique tree that produced it.

    ``root`` and ``root_qt_depth`` select a sub-tree region; the default is the
    whole CTU.  With ``check_mask`` the stored mask must agree with the layers.
    """
    qd, md, mdir = pmap.qd, pmap.md, pmap.mdir

    def decode(geom: CuGeometry, qt: int, mtt: int, base: int) -> SplitTree:
        sl = geom.cells
        legal = legal_splits(geom, qt, mtt, rules)
        if mtt == 0:
            q = qd[sl]
            if np.all(q > qt):
                if SplitMode.QT not in legal:
                    raise InconsistentMapError(geom, "QT depth exceeds legal QT splits")
                kids = [decode(g, qt + 1, 0, qt + 1) for g in apply_split(geom, SplitMode.QT)]
                return make_node(geom, SplitMode.QT, kids, qt, mtt)
            if not np.all(q == qt):
                raise InconsistentMapError(geom, "non-uniform QT depth")
        if mtt >= MTT_LAYERS:
            return leaf(geom, qt, mtt)
        inc = md[mtt][sl].astype(np.int64) - base
        d = mdir[mtt][sl]
        if not inc.any() and not d.any():
            return leaf(geom, qt, mtt)
        direction = int(d.flat[0])
        if direction == 0 or not np.all(d == direction):
            raise InconsistentMapError(geom, "MTT direction missing or mixed")
        for mode in MTT_MODES:
            if mode.direction != direction or mode not in legal:
                continue
            kids = apply_split(geom, mode)
            if all(np.all(inc[_rel(g, geom)] == i) for g, i in zip(kids, mode.increments)):
                sub = [decode(g, qt, mtt + 1, base + i) for g, i in zip(kids, mode.increments)]
                return make_node(geom, mode, sub, qt, mtt)
        raise InconsistentMapError(geom, "MTT increments match no legal split")

    tree = decode(root, root_qt_depth, 0, root_qt_depth)
    ref = tree_to_map(tree)
    bad = _first_mismatch(tree, pmap, ref)
    if bad is not None:
        raise InconsistentMapError(bad, "layers beyond the decoded split disagree")
    if check_mask and pmap.mask != derive_mtt_mask(qd, md[0]):
        raise InconsistentMapError(root, "MTT mask disagrees with the depth layers")
    return tree


def _rel(child: CuGeometry, parent: CuGeometry) -> tuple[slice, slice]:
    r0 = (child.y - parent.y) // CELL
    c0 = (child.x - parent.x) // CELL
    return slice(r0, r0 + child.h // CELL), slice(c0, c0 + child.w // CELL)


# ---------------------------------------------------------------------------
# Validation, accuracy, pruning


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    inconsistent_cells: int
    inconsistency_error: float


def project_qt_depth(qd, rules: PartitionRules = DEFAULT_RULES) -> np.ndarray:
    """Nearest QT-legal depth map by recursive majority vote.

    A block at expected depth ``d`` becomes a leaf when at least half of its
    cells equal ``d`` (ties go to the leaf); otherwise it is split into
    quadrants at depth ``d + 1``.
    """
    qd = np.asarray(qd)
    out = np.zeros(qd.shape, dtype=np.int16)

    def visit(geom: CuGeometry, d: int):
        sl = geom.cells
        block = qd[sl]
        can_split = (d < rules.max_qt_depth and geom.w // 2 >= rules.min_cu_side)
        if not can_split or 2 * np.count_nonzero(block == d) >= block.size:
            out[sl] = d
            return
        for g in apply_split(geom, SplitMode.QT):
            visit(g, d + 1)

    visit(CTU_GEOMETRY, 0)
    return out


def validate_map(pmap: PartitionMap, rules: PartitionRules = DEFAULT_RULES,
                 region=None) -> ValidityReport:
    """Check decodability and measure QT inconsistency.

    ``region`` optionally restricts the inconsistency count to a boolean cell
    mask (used to drop padded cells).
    """
    projected = project_qt_depth(pmap.qd, rules)
    altered = projected != pmap.qd
    if region is not None:
        altered &= np.asarray(region, dtype=bool)
    bad = int(np.count_nonzero(altered))
    try:
        map_to_tree_exact(pmap, rules)
        valid = True
    except InconsistentMapError as exc:
        valid = False
        if bad == 0:
            sl = exc.block.cells
            bad = max(1, exc.block.area // (CELL * CELL)) if region is None else max(
                1, int(np.count_nonzero(np.asarray(region)[sl])))
    total = GRID * GRID if region is None else max(1, int(np.count_nonzero(region)))
    return ValidityReport(valid, bad, bad / total)


LAYER_NAMES = ("qd", "mask", "md1", "md2", "md3", "mdir1", "mdir2", "mdir3")


def layer_accuracy(pred: FramePartition, label: FramePartition) -> dict[str, float]:
    if (pred.width, pred.height) != (label.width, label.height):
        raise ValueError("prediction and label frame geometry differ")
    hits = dict.fromkeys(LAYER_NAMES, 0)
    cells = 0
    ctus = 0
    for (r, c, p), (_, _, t) in zip(pred.ctu_items(), label.ctu_items()):
        inside = pred.picture_cells(r, c)
        cells += int(inside.sum())
        ctus += 1
        hits["mask"] += int(p.mask == t.mask)
        for name, layer in p.layers().items():
            hits[name] += int(np.count_nonzero((layer == t.layers()[name]) & inside))
    out = {name: hits[name] / cells for name in LAYER_NAMES if name != "mask"}
    out["mask"] = hits["mask"] / ctus
    return {name: out[name] for name in LAYER_NAMES}


def prune_map(pmap: PartitionMap, level: int) -> PartitionMap:
    """Keep the QT layer, the mask and the first ``level`` MTT layers."""
    if not 0 <= level <= MTT_LAYERS:
        raise ValueError("level must be in 0..3")
    md = np.array(pmap.md)
    mdir = np.array(pmap.mdir)
    keep = pmap.qd if level == 0 else pmap.md[level - 1]
    md[level:] = keep
    mdir[level:] = 0
    return pmap.replace(md=md, mdir=mdir)


# ---------------------------------------------------------------------------
# Tree generation


def random_tree(rng: np.random.Generator, rules: PartitionRules = DEFAULT_RULES,
                root: CuGeometry = CTU_GEOMETRY, root_qt_depth: int = 0,
                split_prob: float = 0.6, decay: float = 0.85,
                max_splits: Optional[int] = None) -> SplitTree:
    budget = [np.inf if max_splits is None else max_splits]

    def grow(geom, qt, mtt, p):
        modes = legal_splits(geom, qt, mtt, rules) - {SplitMode.NS}
        if mtt > 0:
            # not representable in a partition map
            modes.discard(SplitMode.QT)
        if not modes or budget[0] <= 0 or rng.random() >= p:
            return leaf(geom, qt, mtt)
        budget[0] -= 1
        mode = sorted(modes, key=lambda m: m.order)[rng.integers(len(modes))]
        cq, cm = child_depths(qt, mtt, mode)
        kids = [grow(g, cq, cm, p * decay) for g in apply_split(geom, mode)]
        return make_node(geom, mode, kids, qt, mtt)

    return grow(root, root_qt_depth, 0, split_prob)


def enumerate_trees(root: CuGeometry = CTU_GEOMETRY, rules: PartitionRules = DEFAULT_RULES,
                    max_splits: int = 2, root_qt_depth: int = 0,
                    max_depth: Optional[int] = None) -> Iterator[SplitTree]:
    """Yield every legal tree below ``root`` with at most ``max_splits`` split nodes."""

    def trees(geom, qt, mtt, budget, depth):
        yield leaf(geom, qt, mtt), 0
        if budget == 0 or (max_depth is not None and depth >= max_depth):
            return
        for mode in sorted(legal_splits(geom, qt, mtt, rules) - {SplitMode.NS}, key=lambda m: m.order):
            if mode is SplitMode.QT and mtt > 0:
                continue
            cq, cm = child_depths(qt, mtt, mode)
            geoms = apply_split(geom, mode)
            for kids, used in forests(geoms, cq, cm, budget - 1, depth + 1):
                yield make_node(geom, mode, kids, qt, mtt), used + 1

    def forests(geoms, qt, mtt, budget, depth):
        if not geoms:
            yield [], 0
            return
        for first, used in trees(geoms[0], qt, mtt, budget, depth):
            for rest, more in forests(geoms[1:], qt, mtt, budget - used, depth):
                yield [first] + rest, used + more

    for t, _ in trees(root, root_qt_depth, 0, max_splits, 0):
        yield t
