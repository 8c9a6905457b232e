import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from partmap import formats
from partmap.formats import FormatError
from partmap.partition import (
    CTU_GEOMETRY,
    FramePartition,
    PartitionMap,
    SplitMode,
    leaf,
    random_tree,
    split,
    tree_to_map,
)
from partmap.synth import random_split_log


class TestSplitLog:
    def test_single_unsplit_ctu(self):
        forest = formats.parse_split_log("0,0,0,128,128,NS\n")
        assert forest == {0: {(0, 0): leaf(CTU_GEOMETRY)}}

    def test_one_qt_level(self):
        text = "0,0,0,128,128,QT\n" + "".join(
            f"0,{x},{y},64,64,NS\n" for y in (0, 64) for x in (0, 64))
        tree = formats.parse_split_log(text)[0][(0, 0)]
        assert tree == split(CTU_GEOMETRY, SplitMode.QT)
        assert (tree_to_map(tree).qd == 1).all()

    def test_illegal_root_split(self):
        with pytest.raises(FormatError, match="line 1"):
            formats.parse_split_log("0,0,0,128,128,BTH\n")

    def test_omitted_leaves_default_to_ns(self):
        assert formats.parse_split_log("2,128,0,128,128,QT\n")[2][(0, 1)] == split(CTU_GEOMETRY, SplitMode.QT)

    def test_order_independent(self, rng):
        text, trees = random_split_log(rng, 5, 2, 2)
        lines = text.splitlines()
        rng.shuffle(lines)
        assert formats.parse_split_log("\n".join(lines))[5] == trees

    def test_conflicting_duplicate(self):
        text = "0,0,0,128,128,QT\n0,0,0,64,64,NS\n0,0,0,64,64,BTH\n"
        with pytest.raises(FormatError, match="line 3.*conflicting"):
            formats.parse_split_log(text)

    def test_identical_duplicate_ok(self):
        text = "0,0,0,128,128,QT\n0,0,0,128,128,QT\n"
        assert formats.parse_split_log(text)[0][(0, 0)].mode is SplitMode.QT

    def test_unreachable_record(self):
        text = "0,0,0,128,128,NS\n0,0,0,64,64,NS\n"
        with pytest.raises(FormatError, match="line 2.*not reachable"):
            formats.parse_split_log(text)

    def test_geometry_no_mode_produces(self):
        text = "0,0,0,128,128,QT\n0,4,0,60,64,NS\n"
        with pytest.raises(FormatError, match="line 2"):
            formats.parse_split_log(text)

    @pytest.mark.parametrize("line", ["0,0,0,128,NS", "0,0,0,128,128,XX", "a,0,0,128,128,NS"])
    def test_malformed(self, line):
        with pytest.raises(FormatError, match="line 1"):
            formats.parse_split_log(line + "\n")

    @given(st.integers(0, 2**32 - 1))
    def test_format_parse_roundtrip(self, seed):
        r = np.random.default_rng(seed)
        trees = {(0, c): random_tree(r) for c in range(2)}
        assert formats.parse_split_log(formats.format_split_log(9, trees))[9] == trees

    def test_comments_and_blank_lines(self):
        text = "# dump\n\n0,0,0,128,128,NS  # root\n"
        assert (0, 0) in formats.parse_split_log(text)[0]


class TestPmap:
    def test_roundtrip(self, rng):
        grid = tuple(tuple(tree_to_map(random_tree(rng)) for _ in range(3)) for _ in range(2))
        f = FramePartition(11, 330, 200, grid)
        assert formats.parse_pmap(formats.format_pmap(f)) == f

    def test_empty_frame_is_zero(self):
        f = formats.frame_from_trees(0, 256, 128, {})
        g = formats.parse_pmap(formats.format_pmap(f))
        assert all(m == PartitionMap.zeros() for _, _, m in g.ctu_items())

    def test_ctu_outside_frame(self):
        with pytest.raises(ValueError):
            formats.frame_from_trees(0, 128, 128, {(0, 1): leaf(CTU_GEOMETRY)})

    def test_truncated(self, rng):
        f = FramePartition(0, 128, 128, ((PartitionMap.zeros(),),))
        text = formats.format_pmap(f)
        with pytest.raises(FormatError):
            formats.parse_pmap(text[: len(text) // 2])

    def test_bad_header(self):
        with pytest.raises(FormatError, match="line 1"):
            formats.parse_pmap("PMAP2 0 128 128\n")


class TestRasters:
    def test_pgm_roundtrip(self, rng):
        img = rng.integers(0, 256, (17, 23)).astype(np.uint8)
        assert np.array_equal(formats.parse_pgm(formats.format_pgm(img)), img)

    def test_pgm_with_comment(self):
        data = b"P5\n# made by hand\n3 2\n255\n" + bytes(range(6))
        assert formats.parse_pgm(data).tolist() == [[0, 1, 2], [3, 4, 5]]

    def test_pgm_rejects_ascii(self):
        with pytest.raises(FormatError):
            formats.parse_pgm(b"P2\n1 1\n255\n0\n")

    def test_pgm_truncated(self):
        with pytest.raises(FormatError):
            formats.parse_pgm(b"P5\n4 4\n255\n" + bytes(5))

    def test_flo_roundtrip(self, rng):
        u = rng.normal(size=(9, 13)).astype(np.float32)
        v = rng.normal(size=(9, 13)).astype(np.float32)
        data = formats.format_flo(u, v)
        assert data[:4] == b"PIEH" and len(data) == 12 + 8 * 9 * 13
        pu, pv = formats.parse_flo(data)
        assert np.array_equal(pu, u) and np.array_equal(pv, v)

    def test_flo_bad_magic(self):
        with pytest.raises(FormatError):
            formats.parse_flo(b"XXXX" + bytes(8))

    def test_residual_roundtrip(self):
        res = np.array([[-255.0, 0.4], [254.6, -1.5]])
        back = formats.parse_residual(formats.format_residual(res))
        assert back.tolist() == [[-255, 0], [255, -2]]

    def test_float_grid_roundtrip(self, rng):
        g = rng.random((5, 7)).astype(np.float32)
        assert np.array_equal(formats.parse_float_grid(formats.format_float_grid(g)), g)


class TestTextFormats:
    def test_key_values(self):
        assert formats.parse_key_values("a = 1\n# c\nb=x=y\n") == {"a": "1", "b": "x=y"}

    def test_key_values_error(self):
        with pytest.raises(FormatError, match="line 2"):
            formats.parse_key_values("a=1\nnope\n")

    def test_rd_csv_with_header(self):
        pts = formats.parse_rd_csv("qp,bitrate_kbps,psnr_db\n22,1000,40.1\n27,520,37.4\n")
        assert pts == [(1000.0, 40.1), (520.0, 37.4)]

    def test_sidecar(self):
        assert formats.parse_sidecar("0,1,0.25\n1,0,1\n") == {(0, 1): 0.25, (1, 0): 1.0}

    @pytest.mark.parametrize("text", ["0,0,1.5\n", "0,0,0.1\n0,0,0.2\n", "0,0\n"])
    def test_sidecar_errors(self, text):
        with pytest.raises(FormatError):
            formats.parse_sidecar(text)

    def test_timings(self):
        assert formats.parse_timings("1.5 2\n3\t4\n") == [1.5, 2.0, 3.0, 4.0]
        with pytest.raises(FormatError):
            formats.parse_timings("1 -2")


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.bin"

    class Boom:
        pass

    with pytest.raises(TypeError):
        formats.atomic_write(target, Boom())
    assert list(tmp_path.iterdir()) == []
