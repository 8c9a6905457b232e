"""Dual-threshold MTT gating and a node-count simulator of the partition search.

Each CTU is put in one of three classes from its predicted MTT-mask
probability ``p``:

* ``MTT_ET``  (``p < th1``): MTT splits are skipped once the predicted QT depth
  is reached;
* ``MTT_NN``  (``p >= th2``, ``th2 < 1``): the post-processed map's MTT
  decisions are followed without RDO;
* ``MTT_RDO`` otherwise: the default recursive search runs.

QT splits are always forced down to the predicted QT depth.  The simulator
counts split-mode evaluations as a proxy for encoder work: an RDO node costs
one evaluation per legal mode, a forced decision costs one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .partition import (
    CTU_GEOMETRY,
    DEFAULT_RULES,
    MTT_LAYERS,
    CuGeometry,
    FramePartition,
    InconsistentMapError,
    PartitionMap,
    PartitionRules,
    SplitMode,
    apply_split,
    child_depths,
    legal_splits,
    map_to_tree_exact,
    prune_map,
)
from .post import PostConfig, reconstruct


class CtuClass(enum.Enum):
    MTT_ET = "MTT_ET"
    MTT_RDO = "MTT_RDO"
    MTT_NN = "MTT_NN"


class Action(enum.Enum):
    FORCE_QT = "FORCE_QT"
    SKIP_MTT = "SKIP_MTT"
    FOLLOW_NN = "FOLLOW_NN"
    FULL_RDO = "FULL_RDO"
    STOP = "STOP"


@dataclass(frozen=True)
class GatingConfig:
    level: int = 3
    th1: float = 0.2
    th2: float = 0.9
    d_max: int = 7
    rules: PartitionRules = DEFAULT_RULES

    def __post_init__(self):
        if not 0 <= self.level <= MTT_LAYERS:
            raise ValueError("level must be in 0..3")
        if not (0 <= self.th1 <= self.th2 <= 1):
            raise ValueError("thresholds must satisfy 0 <= th1 <= th2 <= 1")
        if self.d_max < 0:
            raise ValueError("d_max must be non-negative")

    @property
    def label(self) -> str:
        return f"L{self.level}({self.th1:g},{self.th2:g})"


@dataclass(frozen=True)
class CtuPrediction:
    map: PartitionMap
    p_mask: float
    row: int = 0
    col: int = 0

    def __post_init__(self):
        if not 0 <= self.p_mask <= 1:
            raise ValueError(f"p_mask {self.p_mask} outside [0, 1]")


@dataclass
class GatingReport:
    counts: dict = field(default_factory=lambda: {c: 0 for c in CtuClass})
    nodes_full: int = 0
    nodes_gated: int = 0
    rdo_evaluations: int = 0
    forced_decisions: int = 0

    @property
    def total_ctus(self) -> int:
        return sum(self.counts.values())

    @property
    def skip_ratio(self) -> float:
        return 1.0 - self.nodes_gated / self.nodes_full if self.nodes_full else 0.0

    @property
    def et_ratio(self) -> float:
        return self.counts[CtuClass.MTT_ET] / self.total_ctus if self.total_ctus else 0.0

    def rows(self) -> list[tuple[str, str]]:
        out = [("ctus", str(self.total_ctus))]
        out += [(c.value.lower(), str(self.counts[c])) for c in CtuClass]
        out += [("et_ratio", f"{self.et_ratio:.4f}"),
                ("nodes_full", str(self.nodes_full)),
                ("nodes_gated", str(self.nodes_gated)),
                ("rdo_evaluations", str(self.rdo_evaluations)),
                ("forced_decisions", str(self.forced_decisions)),
                ("skip_ratio", f"{self.skip_ratio:.4f}")]
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.rows())

    def to_csv(self) -> str:
        return "statistic,value\n" + "".join(f"{k},{v}\n" for k, v in self.rows())


def classify_ctu(p_mask: float, cfg: GatingConfig = GatingConfig()) -> CtuClass:
    if p_mask < cfg.th1:
        return CtuClass.MTT_ET
    if cfg.th2 < 1.0 and p_mask >= cfg.th2:
        return CtuClass.MTT_NN
    return CtuClass.MTT_RDO


def gate_node(depth: int, qc: int, qp_pred: int, ctu_class: CtuClass,
              cfg: GatingConfig = GatingConfig()) -> Action:
    if depth > cfg.d_max:
        return Action.STOP
    if qc < qp_pred:
        return Action.FORCE_QT
    return {CtuClass.MTT_ET: Action.SKIP_MTT,
            CtuClass.MTT_NN: Action.FOLLOW_NN,
            CtuClass.MTT_RDO: Action.FULL_RDO}[ctu_class]


def et_ratio(preds: Sequence[CtuPrediction], cfg: GatingConfig = GatingConfig()) -> float:
    if not preds:
        raise ValueError("no predictions")
    return sum(classify_ctu(p.p_mask, cfg) is CtuClass.MTT_ET for p in preds) / len(preds)


@lru_cache(maxsize=None)
def _full_count(w: int, h: int, qt: int, mtt: int, rules: PartitionRules) -> int:
    geom = CuGeometry(0, 0, w, h)
    modes = legal_splits(geom, qt, mtt, rules)
    if mtt > 0:
        modes.discard(SplitMode.QT)
    total = len(modes)
    for mode in modes - {SplitMode.NS}:
        cq, cm = child_depths(qt, mtt, mode)
        total += sum(_full_count(g.w, g.h, cq, cm, rules) for g in apply_split(geom, mode))
    return total


def full_search_nodes(rules: PartitionRules = DEFAULT_RULES, geom: CuGeometry = CTU_GEOMETRY,
                      qt_depth: int = 0, mtt_stage: int = 0) -> int:
    """Split-mode evaluations of the ungated exhaustive search below ``geom``."""
    return _full_count(geom.w, geom.h, qt_depth, mtt_stage, rules)


def _nn_modes(pmap: PartitionMap, rules: PartitionRules) -> dict:
    try:
        tree = map_to_tree_exact(pmap, rules, check_mask=False)
    except InconsistentMapError:
        tree = reconstruct(pmap, PostConfig(rules=rules))
    return {n.geometry: n.mode for n in tree.preorder()}


def simulate_ctu(pred: CtuPrediction, cfg: GatingConfig = GatingConfig()) -> tuple[CtuClass, int, int]:
    """Return ``(class, forced decisions, RDO evaluations)`` for one CTU."""
    rules = cfg.rules
    ctu_class = classify_ctu(pred.p_mask, cfg)
    pmap = prune_map(pred.map, cfg.level)
    nn = _nn_modes(pmap, rules) if ctu_class is CtuClass.MTT_NN else {}
    forced = 0
    rdo = 0

    def visit(geom: CuGeometry, qt: int, mtt: int):
        nonlocal forced, rdo
        legal = legal_splits(geom, qt, mtt, rules)
        if mtt > 0:
            legal.discard(SplitMode.QT)
        if legal == {SplitMode.NS}:
            forced += 1
            return
        qp = int(np.max(pmap.qd[geom.cells]))
        action = gate_node(qt + mtt, qt, qp, ctu_class, cfg)
        if action is Action.FORCE_QT and SplitMode.QT not in legal:
            action = gate_node(qt + mtt, qt, qt, ctu_class, cfg)
        if action is Action.FOLLOW_NN and (mtt >= cfg.level or geom not in nn):
            # layer pruned away or node outside the NN tree
            action = Action.FULL_RDO
        if action in (Action.STOP, Action.SKIP_MTT):
            forced += 1
            return
        if action is Action.FORCE_QT:
            forced += 1
            modes = [SplitMode.QT]
        elif action is Action.FOLLOW_NN:
            forced += 1
            modes = [nn[geom]] if nn[geom] in legal else [SplitMode.NS]
        else:
            rdo += len(legal)
            modes = sorted(legal, key=lambda m: m.order)
        for mode in modes:
            if mode is SplitMode.NS:
                continue
            cq, cm = child_depths(qt, mtt, mode)
            for g in apply_split(geom, mode):
                visit(g, cq, cm)

    visit(CTU_GEOMETRY, 0, 0)
    return ctu_class, forced, rdo


def simulate_frame(labels: FramePartition, preds: Sequence[CtuPrediction],
                   cfg: GatingConfig = GatingConfig()) -> GatingReport:
    rows, cols = labels.grid_shape
    positions = sorted((p.row, p.col) for p in preds)
    expected = [(r, c) for r in range(rows) for c in range(cols)]
    if positions != expected:
        raise ValueError(f"predictions do not cover the {rows}x{cols} CTU grid exactly once")
    report = GatingReport()
    per_ctu = full_search_nodes(cfg.rules)
    for pred in sorted(preds, key=lambda p: (p.row, p.col)):
        cls, forced, rdo = simulate_ctu(pred, cfg)
        report.counts[cls] += 1
        report.forced_decisions += forced
        report.rdo_evaluations += rdo
        report.nodes_full += per_ctu
    report.nodes_gated = report.forced_decisions + report.rdo_evaluations
    return report


def predictions_from_frame(frame: FramePartition, p_mask: Optional[dict] = None) -> list[CtuPrediction]:
    """Wrap a frame's maps as predictions; ``p_mask`` maps (row, col) to a probability.

    Without ``p_mask`` the map's own mask bit is used (1.0 or 0.0).
    """
    out = []
    for r, c, m in frame.ctu_items():
        p = float(m.mask) if p_mask is None else p_mask[(r, c)]
        out.append(CtuPrediction(m, p, r, c))
    return out
