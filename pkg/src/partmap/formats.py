"""Readers and writers for the on-disk formats.

* PMAP1 partition-map text (one file per frame)
* split-decision log CSV ``poc,x,y,w,h,mode``
* binary PGM (P5, maxval 255) luma rasters
* Middlebury ``.flo`` flow fields
* raw float depth grids and signed 16-bit residuals (8-byte size header)
* RD-curve CSV, p_mask sidecar CSV, ``key=value`` configs, timing series
"""

from __future__ import annotations

import io
import os
import re
import struct
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .partition import (
    CTU_SIZE,
    DEFAULT_RULES,
    GRID,
    MTT_LAYERS,
    CuGeometry,
    FramePartition,
    PartitionMap,
    PartitionRules,
    SplitMode,
    SplitTree,
    apply_split,
    child_depths,
    legal_splits,
    make_node,
    tree_to_map,
)

PathLike = Union[str, os.PathLike]

LOG_TOKENS = {
    "NS": SplitMode.NS, "QT": SplitMode.QT,
    "BTH": SplitMode.BT_H, "BTV": SplitMode.BT_V,
    "TTH": SplitMode.TT_H, "TTV": SplitMode.TT_V,
}
MODE_TOKENS = {v: k for k, v in LOG_TOKENS.items()}


class FormatError(ValueError):
    def __init__(self, message: str, line: int = None, source: str = None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """Write through a temp file in the target directory, then rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _lines(source) -> Iterable[tuple[int, str]]:
    if isinstance(source, (str, bytes)) and not isinstance(source, os.PathLike):
        text = source.decode() if isinstance(source, bytes) else source
        stream = io.StringIO(text)
    else:
        stream = source
    for i, line in enumerate(stream, 1):
        yield i, line.rstrip("\r\n")


# ---------------------------------------------------------------------------
# PMAP1


def format_pmap(frame: FramePartition) -> str:
    out = [f"PMAP1 {frame.poc} {frame.width} {frame.height}"]
    for r, c, m in frame.ctu_items():
        out.append(f"CTU {r} {c} {int(m.mask)}")
        for grid in (m.qd, *m.md, *m.mdir):
            out.extend(" ".join(str(int(v)) for v in row) for row in grid)
    return "\n".join(out) + "\n"


def parse_pmap(text: str, source: str = None) -> FramePartition:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty PMAP file", source=source)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "PMAP1":
        raise FormatError("expected header 'PMAP1 poc width height'", 1, source)
    try:
        poc, width, height = (int(v) for v in head[1:])
    except ValueError:
        raise FormatError("non-integer header field", 1, source) from None
    rows, cols = -(-height // CTU_SIZE), -(-width // CTU_SIZE)
    block = 1 + (1 + 2 * MTT_LAYERS) * GRID
    if len(lines) - 1 != rows * cols * block:
        raise FormatError(f"expected {rows * cols} CTU blocks of {block} lines", source=source)
    grid = [[None] * cols for _ in range(rows)]
    pos = 1
    for _ in range(rows * cols):
        tag = lines[pos].split()
        if len(tag) != 4 or tag[0] != "CTU" or tag[3] not in ("0", "1"):
            raise FormatError("expected 'CTU row col mask'", pos + 1, source)
        r, c = int(tag[1]), int(tag[2])
        if not (0 <= r < rows and 0 <= c < cols) or grid[r][c] is not None:
            raise FormatError(f"bad or duplicate CTU position ({r}, {c})", pos + 1, source)
        layers = []
        for k in range(1 + 2 * MTT_LAYERS):
            start = pos + 1 + k * GRID
            try:
                arr = np.array([[int(v) for v in lines[start + i].split()] for i in range(GRID)])
            except ValueError:
                raise FormatError("non-integer grid value", start + 1, source) from None
            if arr.shape != (GRID, GRID):
                raise FormatError(f"grid rows must hold {GRID} integers", start + 1, source)
            layers.append(arr)
        grid[r][c] = PartitionMap(layers[0], np.stack(layers[1:4]), np.stack(layers[4:7]), tag[3] == "1")
        pos += block
    return FramePartition(poc, width, height, tuple(tuple(row) for row in grid))


def read_pmap(path: PathLike) -> FramePartition:
    return parse_pmap(Path(path).read_text(), str(path))


def write_pmap(path: PathLike, frame: FramePartition) -> None:
    atomic_write(path, format_pmap(frame))


# ---------------------------------------------------------------------------
# Split-decision logs


def parse_split_log(source, rules: PartitionRules = DEFAULT_RULES,
                    name: str = None) -> dict[int, dict[tuple[int, int], SplitTree]]:
    """Rebuild per-frame CTU split trees from ``poc,x,y,w,h,mode`` records.

    Records may come in any order and leaf (NS) records may be omitted.
    Returns ``{poc: {(ctu_row, ctu_col): tree}}``.
    """
    records: dict[tuple, tuple[SplitMode, int]] = {}
    for lineno, line in _lines(source):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 6:
            raise FormatError("expected 'poc,x,y,w,h,mode'", lineno, name)
        try:
            poc, x, y, w, h = (int(p) for p in parts[:5])
        except ValueError:
            raise FormatError("non-integer field", lineno, name) from None
        token = parts[5].upper()
        if token not in LOG_TOKENS:
            raise FormatError(f"unknown split mode {parts[5]!r}", lineno, name)
        key = (poc, x, y, w, h)
        mode = LOG_TOKENS[token]
        if key in records and records[key][0] is not mode:
            raise FormatError(f"conflicting duplicate record for {key}", lineno, name)
        records.setdefault(key, (mode, lineno))

    used = set()
    forest: dict[int, dict[tuple[int, int], SplitTree]] = defaultdict(dict)

    def build(poc, ox, oy, geom, qt, mtt):
        key = (poc, ox + geom.x, oy + geom.y, geom.w, geom.h)
        mode, lineno = records.get(key, (SplitMode.NS, None))
        if lineno is not None:
            used.add(key)
        if mode is SplitMode.NS:
            return make_node(geom, mode, (), qt, mtt)
        legal = legal_splits(geom, qt, mtt, rules)
        if mtt > 0:
            legal.discard(SplitMode.QT)
        if mode not in legal:
            raise FormatError(f"split {MODE_TOKENS[mode]} illegal for block {key[1:]}", lineno, name)
        cq, cm = child_depths(qt, mtt, mode)
        kids = [build(poc, ox, oy, g, cq, cm) for g in apply_split(geom, mode)]
        return make_node(geom, mode, kids, qt, mtt)

    for key in sorted(records, key=lambda k: records[k][1]):
        poc, x, y, w, h = key
        if w == CTU_SIZE and h == CTU_SIZE and x % CTU_SIZE == 0 and y % CTU_SIZE == 0:
            if x < 0 or y < 0:
                continue
            forest[poc][(y // CTU_SIZE, x // CTU_SIZE)] = build(
                poc, x, y, CuGeometry(0, 0, CTU_SIZE, CTU_SIZE), 0, 0)
    for key in sorted(set(records) - used, key=lambda k: records[k][1]):
        raise FormatError(f"record {key[1:]} is not reachable from any CTU root", records[key][1], name)
    return dict(forest)


def format_split_log(poc: int, trees: dict[tuple[int, int], SplitTree]) -> str:
    """Preorder log of every node, CTUs in raster order."""
    out = []
    for (r, c) in sorted(trees):
        ox, oy = c * CTU_SIZE, r * CTU_SIZE
        for node in trees[(r, c)].preorder():
            g = node.geometry
            out.append(f"{poc},{ox + g.x},{oy + g.y},{g.w},{g.h},{MODE_TOKENS[node.mode]}")
    return "".join(line + "\n" for line in out)


def frame_from_trees(poc: int, width: int, height: int,
                     trees: dict[tuple[int, int], SplitTree]) -> FramePartition:
    rows, cols = -(-height // CTU_SIZE), -(-width // CTU_SIZE)
    for (r, c) in trees:
        if not (0 <= r < rows and 0 <= c < cols):
            raise ValueError(f"CTU ({r}, {c}) lies outside a {width}x{height} frame")
    grid = tuple(tuple(tree_to_map(trees[(r, c)]) if (r, c) in trees else PartitionMap.zeros()
                       for c in range(cols)) for r in range(rows))
    return FramePartition(poc, width, height, grid)


# ---------------------------------------------------------------------------
# Rasters and fields


_PGM_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*([^\s#]+)")


def parse_pgm(data: bytes, source: str = None) -> np.ndarray:
    """Decode a binary P5 PGM with maxval <= 255 into a uint8 array."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise FormatError("truncated PGM header", source=source)
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError("not a binary PGM (P5)", source=source)
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255 or maxval < 1:
        raise FormatError("only 8-bit PGM is supported", source=source)
    pos += 1  # single whitespace after maxval
    raw = data[pos:pos + width * height]
    if len(raw) != width * height:
        raise FormatError("truncated PGM raster", source=source)
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def read_pgm(path: PathLike) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes(), str(path))


def format_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2 or img.min(initial=0) < 0 or img.max(initial=0) > 255:
        raise ValueError("PGM raster must be 2-D with samples in 0..255")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.astype(np.uint8).tobytes()


def write_pgm(path: PathLike, img: np.ndarray) -> None:
    atomic_write(path, format_pgm(img))


FLO_MAGIC = b"PIEH"


def parse_flo(data: bytes, source: str = None) -> tuple[np.ndarray, np.ndarray]:
    if data[:4] != FLO_MAGIC:
        raise FormatError("bad .flo magic", source=source)
    width, height = struct.unpack("<ii", data[4:12])
    if width <= 0 or height <= 0:
        raise FormatError("bad .flo dimensions", source=source)
    body = np.frombuffer(data, dtype="<f4", offset=12)
    if body.size != 2 * width * height:
        raise FormatError("truncated .flo payload", source=source)
    uv = body.reshape(height, width, 2).astype(np.float64)
    return uv[..., 0].copy(), uv[..., 1].copy()


def read_flo(path: PathLike) -> tuple[np.ndarray, np.ndarray]:
    return parse_flo(Path(path).read_bytes(), str(path))


def format_flo(u: np.ndarray, v: np.ndarray) -> bytes:
    u = np.asarray(u)
    h, w = u.shape
    uv = np.stack([u, np.asarray(v)], axis=-1).astype("<f4")
    return FLO_MAGIC + struct.pack("<ii", w, h) + uv.tobytes()


def write_flo(path: PathLike, u: np.ndarray, v: np.ndarray) -> None:
    atomic_write(path, format_flo(u, v))


def parse_float_grid(data: bytes, source: str = None) -> np.ndarray:
    if len(data) < 8:
        raise FormatError("truncated float grid header", source=source)
    width, height = struct.unpack("<ii", data[:8])
    body = np.frombuffer(data, dtype="<f4", offset=8)
    if width <= 0 or height <= 0 or body.size != width * height:
        raise FormatError("float grid size does not match its header", source=source)
    return body.reshape(height, width).astype(np.float64)


def format_float_grid(grid: np.ndarray) -> bytes:
    grid = np.asarray(grid)
    h, w = grid.shape
    return struct.pack("<ii", w, h) + grid.astype("<f4").tobytes()


def format_residual(res: np.ndarray) -> bytes:
    """Signed 16-bit little-endian raster behind a width/height int32 header."""
    res = np.rint(np.asarray(res, dtype=float))
    h, w = res.shape
    return struct.pack("<ii", w, h) + np.clip(res, -32768, 32767).astype("<i2").tobytes()


def parse_residual(data: bytes, source: str = None) -> np.ndarray:
    if len(data) < 8:
        raise FormatError("truncated residual header", source=source)
    width, height = struct.unpack("<ii", data[:8])
    if width <= 0 or height <= 0 or len(data) != 8 + 2 * width * height:
        raise FormatError("residual size does not match its header", source=source)
    return np.frombuffer(data, dtype="<i2", offset=8).reshape(height, width).astype(np.int16)


def depth_from_frame(frame: FramePartition) -> np.ndarray:
    """Frame-level QT depth grid (cells) from a partition-map frame."""
    rows, cols = frame.grid_shape
    out = np.zeros((rows * GRID, cols * GRID))
    for r, c, m in frame.ctu_items():
        out[r * GRID:(r + 1) * GRID, c * GRID:(c + 1) * GRID] = m.qd
    return out


# ---------------------------------------------------------------------------
# Small text formats


def _data_lines(source) -> Iterable[tuple[int, str]]:
    for lineno, line in _lines(source):
        body = line.split("#", 1)[0].strip()
        if body:
            yield lineno, body


def parse_key_values(source, name: str = None) -> dict[str, str]:
    out = {}
    for lineno, body in _data_lines(source):
        if "=" not in body:
            raise FormatError("expected key=value", lineno, name)
        key, value = body.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_rd_csv(source, name: str = None) -> list[tuple[float, float]]:
    """``qp,bitrate_kbps,psnr_db`` rows -> list of (bitrate, psnr)."""
    points = []
    for lineno, body in _data_lines(source):
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 3:
            raise FormatError("expected 'qp,bitrate_kbps,psnr_db'", lineno, name)
        try:
            _, rate, psnr = (float(p) for p in parts)
        except ValueError:
            if not points and lineno == 1:
                continue  # header row
            raise FormatError("non-numeric RD field", lineno, name) from None
        points.append((rate, psnr))
    return points


def parse_sidecar(source, name: str = None) -> dict[tuple[int, int], float]:
    """``row,col,p_mask`` rows -> {(row, col): p_mask}."""
    out = {}
    for lineno, body in _data_lines(source):
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 3:
            raise FormatError("expected 'row,col,p_mask'", lineno, name)
        try:
            r, c, p = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise FormatError("bad sidecar field", lineno, name) from None
        if not 0 <= p <= 1:
            raise FormatError(f"p_mask {p} outside [0, 1]", lineno, name)
        if (r, c) in out:
            raise FormatError(f"duplicate CTU ({r}, {c})", lineno, name)
        out[(r, c)] = p
    return out


def parse_qp_values(source, name: str = None) -> dict[int, float]:
    """``qp,value`` rows -> {qp: value}."""
    out = {}
    for lineno, body in _data_lines(source):
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 2:
            raise FormatError("expected 'qp,value'", lineno, name)
        try:
            out[int(parts[0])] = float(parts[1])
        except ValueError:
            raise FormatError("bad qp,value row", lineno, name) from None
    return out


def parse_timings(text: str, name: str = None) -> list[float]:
    try:
        values = [float(t) for t in text.split()]
    except ValueError:
        raise FormatError("timing series must be whitespace-separated numbers", source=name) from None
    if any(v <= 0 for v in values):
        raise FormatError("timings must be positive", source=name)
    return values
