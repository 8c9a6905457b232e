import subprocess
import sys

import numpy as np
import pytest

from partmap import formats
from partmap.cli import main
from partmap.gating import GatingConfig, et_ratio, predictions_from_frame
from partmap.partition import FramePartition, PartitionMap, tree_to_map
from partmap.post import PostConfig, reconstruct
from partmap.pwarp import FlowField, adaptive_flow, warp
from partmap.synth import garbage_map, perturb_map, random_split_log


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def log_file(tmp_path, rng):
    text, trees = random_split_log(rng, 3, 2, 2)
    path = tmp_path / "frame.log"
    path.write_text(text)
    return path, trees


class TestConvert:
    def test_matches_library(self, tmp_path, capsys, log_file):
        path, trees = log_file
        code, _, _ = run(capsys, "convert", path, "--out", tmp_path / "maps")
        assert code == 0
        got = formats.read_pmap(tmp_path / "maps" / "poc0003.pmap")
        assert got == formats.frame_from_trees(3, 256, 256, trees)

    def test_explicit_size(self, tmp_path, capsys, log_file):
        path, _ = log_file
        run(capsys, "convert", path, "--out", tmp_path / "f.pmap", "--width", 300, "--height", 250)
        f = formats.read_pmap(tmp_path / "f.pmap")
        assert (f.width, f.height, f.grid_shape) == (300, 250, (2, 3))

    def test_empty_frame(self, tmp_path, capsys):
        (tmp_path / "empty.log").write_text("")
        code, _, _ = run(capsys, "convert", tmp_path / "empty.log", "--out", tmp_path / "e.pmap",
                         "--poc", 4, "--width", 256, "--height", 128)
        assert code == 0
        f = formats.read_pmap(tmp_path / "e.pmap")
        assert f.poc == 4 and all(m == PartitionMap.zeros() for _, _, m in f.ctu_items())

    def test_illegal_log_leaves_no_output(self, tmp_path, capsys):
        (tmp_path / "bad.log").write_text("0,0,0,128,128,NS\n0,128,0,128,128,BTH\n")
        code, _, err = run(capsys, "convert", tmp_path / "bad.log", "--out", tmp_path / "x.pmap")
        assert code != 0
        assert err.count("\n") == 1 and "bad.log:2" in err
        assert not (tmp_path / "x.pmap").exists()

    def test_rules_file(self, tmp_path, capsys):
        (tmp_path / "rules.cfg").write_text("max_qt_depth=0\n")
        (tmp_path / "a.log").write_text("0,0,0,128,128,QT\n")
        code, _, err = run(capsys, "convert", tmp_path / "a.log", "--out", tmp_path / "a.pmap",
                           "--rules", tmp_path / "rules.cfg")
        assert code == 2 and "illegal" in err


class TestReconstruct:
    def test_exact_roundtrip(self, tmp_path, capsys, log_file):
        path, trees = log_file
        run(capsys, "convert", path, "--out", tmp_path / "m.pmap")
        code, out, _ = run(capsys, "reconstruct", tmp_path / "m.pmap")
        assert code == 0
        assert out == formats.format_split_log(3, trees)

    def test_zero_map(self, tmp_path, capsys):
        formats.write_pmap(tmp_path / "z.pmap", formats.frame_from_trees(1, 256, 128, {}))
        _, out, _ = run(capsys, "reconstruct", tmp_path / "z.pmap")
        assert out == "1,0,0,128,128,NS\n1,128,0,128,128,NS\n"

    def test_noisy_matches_library(self, tmp_path, capsys, rng):
        maps = [perturb_map(tree_to_map(t), rng, 30) for t in
                formats.parse_split_log(random_split_log(rng, 0, 1, 2)[0])[0].values()]
        formats.write_pmap(tmp_path / "n.pmap", FramePartition(0, 256, 128, (tuple(maps),)))
        _, out, _ = run(capsys, "reconstruct", tmp_path / "n.pmap", "--thqt", 2, "--thmtt", 40)
        cfg = PostConfig(th_qt=2, th_mtt=40)
        assert out == formats.format_split_log(0, {(0, c): reconstruct(m, cfg) for c, m in enumerate(maps)})

    def test_budget_reported_per_ctu(self, tmp_path, capsys, rng):
        deep = garbage_map(rng).replace(qd=np.full((32, 32), 4))
        frame = FramePartition(0, 256, 128, ((PartitionMap.zeros(), deep),))
        formats.write_pmap(tmp_path / "g.pmap", frame)
        code, _, err = run(capsys, "reconstruct", tmp_path / "g.pmap",
                           "--node-budget", 100, "--out", tmp_path / "g.log")
        assert code == 3
        assert "(0, 1)" in err and "(0, 0)" not in err
        assert (tmp_path / "g.log").read_text() == "0,0,0,128,128,NS\n"


class TestGate:
    @pytest.fixture
    def frames(self, tmp_path, capsys, log_file):
        path, _ = log_file
        run(capsys, "convert", path, "--out", tmp_path / "m.pmap")
        return tmp_path / "m.pmap"

    def sidecar(self, tmp_path, ps):
        lines = [f"{r},{c},{p}" for (r, c), p in ps.items()]
        path = tmp_path / "p.csv"
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_all_zero(self, tmp_path, capsys, frames):
        side = self.sidecar(tmp_path, {(r, c): 0.0 for r in range(2) for c in range(2)})
        _, out, _ = run(capsys, "gate", frames, frames, "--pmask", side)
        assert "et_ratio=1.0000\n" in out

    def test_no_gating(self, tmp_path, capsys, frames):
        side = self.sidecar(tmp_path, {(r, c): 0.0 for r in range(2) for c in range(2)})
        _, out, _ = run(capsys, "gate", frames, frames, "--pmask", side, "--th1", 0, "--th2", 1)
        assert "et_ratio=0.0000\n" in out

    def test_mixed(self, tmp_path, capsys, frames):
        ps = {(0, 0): 0.1, (0, 1): 0.5, (1, 0): 0.95, (1, 1): 0.15}
        side = self.sidecar(tmp_path, ps)
        _, out, _ = run(capsys, "gate", frames, frames, "--pmask", side, "--format", "csv")
        preds = predictions_from_frame(formats.read_pmap(frames), ps)
        assert f"et_ratio,{et_ratio(preds, GatingConfig()):.4f}\n" in out
        assert "mtt_et,2\n" in out and "mtt_nn,1\n" in out

    def test_missing_entry(self, tmp_path, capsys, frames):
        side = self.sidecar(tmp_path, {(0, 0): 0.1})
        code, _, err = run(capsys, "gate", frames, frames, "--pmask", side)
        assert code == 2 and "lacks CTU" in err


class TestPwarp:
    def write_inputs(self, tmp_path, cur, ref, u, v, depth):
        formats.write_pgm(tmp_path / "c.pgm", cur)
        formats.write_pgm(tmp_path / "r.pgm", ref)
        formats.write_flo(tmp_path / "f.flo", u, v)
        (tmp_path / "d.grid").write_bytes(formats.format_float_grid(depth))
        return [tmp_path / n for n in ("c.pgm", "r.pgm", "f.flo")] + ["--depth", tmp_path / "d.grid"]

    def test_identical_frames(self, tmp_path, capsys, rng):
        img = rng.integers(0, 256, (100, 130)).astype(np.uint8)
        z = np.zeros((100, 130))
        args = self.write_inputs(tmp_path, img, img, z, z, rng.random((25, 33)) * 3)
        code, _, _ = run(capsys, "pwarp", *args, "--out", tmp_path / "res.raw")
        assert code == 0
        assert not formats.parse_residual((tmp_path / "res.raw").read_bytes()).any()

    def test_uniform_flow_and_composition(self, tmp_path, capsys, rng):
        ref = rng.integers(0, 256, (128, 128)).astype(np.uint8)
        cur = rng.integers(0, 256, (128, 128)).astype(np.uint8)
        u = np.full((128, 128), 1.25)
        v = np.full((128, 128), -0.5)
        depth = rng.random((32, 32)) * 3
        args = self.write_inputs(tmp_path, cur, ref, u, v, depth)
        run(capsys, "pwarp", *args, "--out", tmp_path / "res.raw", "--flow-out", tmp_path / "vp.flo")
        vu, vv = formats.read_flo(tmp_path / "vp.flo")
        assert np.allclose(vu, 1.25) and np.allclose(vv, -0.5)
        flow = FlowField(*formats.read_flo(tmp_path / "f.flo"))
        depth32 = formats.parse_float_grid((tmp_path / "d.grid").read_bytes())
        want = np.rint(cur - warp(ref.astype(float), adaptive_flow(flow, depth32)))
        assert np.array_equal(formats.parse_residual((tmp_path / "res.raw").read_bytes()), want)

    def test_pmap_depth_source(self, tmp_path, capsys, rng, log_file):
        path, trees = log_file
        run(capsys, "convert", path, "--out", tmp_path / "m.pmap")
        img = rng.integers(0, 256, (256, 256)).astype(np.uint8)
        z = np.zeros((256, 256))
        args = self.write_inputs(tmp_path, img, img, z, z, np.zeros((1, 1)))
        args[-1] = tmp_path / "m.pmap"
        code, _, _ = run(capsys, "pwarp", *args, "--out", tmp_path / "res.raw")
        assert code == 0

    def test_dimension_mismatch(self, tmp_path, capsys, rng):
        a = rng.integers(0, 256, (64, 64)).astype(np.uint8)
        b = rng.integers(0, 256, (64, 80)).astype(np.uint8)
        z = np.zeros((64, 64))
        args = self.write_inputs(tmp_path, a, b, z, z, np.zeros((16, 16)))
        code, _, err = run(capsys, "pwarp", *args, "--out", tmp_path / "res.raw")
        assert code == 2 and "mismatch" in err
        assert not (tmp_path / "res.raw").exists()


class TestMetrics:
    def test_eta(self, capsys):
        assert run(capsys, "metrics", "eta", "0.5130")[1] == "2.0534\n"

    def test_ets_and_rho(self, capsys):
        assert run(capsys, "metrics", "ets", 100, 48.7)[1] == "0.5130\n"
        assert run(capsys, "metrics", "rho", 48.87, 0.44, 0.03)[1] == "0.0095\n"

    def test_bdrate_identical(self, tmp_path, capsys):
        rd = tmp_path / "rd.csv"
        rd.write_text("qp,bitrate_kbps,psnr_db\n22,1000,40\n27,520,37.4\n32,270,34.6\n37,140,31.9\n")
        assert run(capsys, "metrics", "bdrate", rd, rd)[1] == "0.0000\n"

    def test_delta(self, tmp_path, capsys):
        (tmp_path / "t.csv").write_text("".join(f"{q},0.5\n" for q in range(18, 38)))
        (tmp_path / "b.csv").write_text("".join(f"{q},0.5\n" for q in (22, 27, 32, 37)))
        _, out, _ = run(capsys, "metrics", "delta", "--ets-total", tmp_path / "t.csv",
                        "--ets-basic", tmp_path / "b.csv", "--bdbr-total", 2.2, "--bdbr-basic", 2.0)
        assert out == "delta_ets=0.0000\ndelta_bdbr=10.0000\n"

    def test_timestats_constant(self, tmp_path, capsys):
        (tmp_path / "t.txt").write_text("10 10 10 10 10 10\n")
        _, out, _ = run(capsys, "metrics", "timestats", tmp_path / "t.txt")
        assert out == "mean=10.0000\nm=4\nretained=4\nconverged=1\n"

    def test_timestats_runs_dry(self, tmp_path, capsys):
        (tmp_path / "t.txt").write_text("1 5 9\n")
        code, out, err = run(capsys, "metrics", "timestats", tmp_path / "t.txt")
        assert code == 2 and out == "" and err.count("\n") == 1

    @pytest.mark.parametrize("argv", [("eta", "1.5"), ("ets", "0", "1"), ("rho", "-1", "0", "0")])
    def test_rejected_input(self, capsys, argv):
        code, out, err = run(capsys, "metrics", *argv)
        assert code != 0 and out == "" and err.startswith("error: ") and err.count("\n") == 1


def test_byte_stable(tmp_path, capsys, log_file):
    path, _ = log_file
    outputs = []
    for k in range(2):
        run(capsys, "convert", path, "--out", tmp_path / f"m{k}.pmap")
        run(capsys, "reconstruct", tmp_path / f"m{k}.pmap", "--out", tmp_path / f"r{k}.log")
        outputs.append(((tmp_path / f"m{k}.pmap").read_bytes(), (tmp_path / f"r{k}.log").read_bytes()))
    assert outputs[0] == outputs[1]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "partmap", "metrics", "eta", "0.5"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout == "2.0000\n"
