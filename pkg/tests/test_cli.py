import numpy as np
import pytest

from lmd import graph, netpbm, weights
from lmd.cli import EXIT_CONTRACT, EXIT_IO, EXIT_OK, EXIT_USAGE

from conftest import run_cli
from scenes import LANE, dashed_lane_scene, road_image


@pytest.fixture(scope="module")
def weights3(tmp_path_factory):
    path = tmp_path_factory.mktemp("w") / "lmd3.lmdw"
    assert run_cli("init-weights", path, "--seed", 5, "--num-classes", 3)[0] == EXIT_OK
    return path


@pytest.fixture
def scene_files(tmp_path):
    labels = dashed_lane_scene()
    netpbm.write(tmp_path / "scene.pgm", labels.astype(np.uint8))
    netpbm.write(tmp_path / "scene.ppm", road_image())
    return tmp_path / "scene.ppm", tmp_path / "scene.pgm"


def parse_models(report):
    rows = [line.split() for line in report.splitlines() if line and line[0].isdigit()]
    return {int(r[0]): [float(v) for v in r[1:5]] + [int(r[5])] for r in rows}


class TestInfo:
    def test_lmd12(self):
        code, out = run_cli("info")
        assert code == EXIT_OK
        assert "total parameters: 15256844" in out
        assert "encoder output stride: 8" in out
        assert "enc11" in out and "unpool1" in out

    def test_class_count_only_moves_classifier(self):
        t3 = run_cli("info", "--num-classes", 3)[1].splitlines()
        t12 = run_cli("info", "--num-classes", 12)[1].splitlines()
        changed = [a.split()[0] for a, b in zip(t3, t12) if a != b]
        assert changed[0] == "dec7"
        assert set(changed[1:]) <= {"total", "parameter", "model"}


class TestInitWeights:
    def test_deterministic_files(self, tmp_path):
        for name in ("a", "b"):
            run_cli("init-weights", tmp_path / name, "--seed", 9)
        run_cli("init-weights", tmp_path / "c", "--seed", 10)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
        assert (tmp_path / "a").read_bytes() != (tmp_path / "c").read_bytes()

    def test_loads_against_network(self, weights3):
        weights.load(weights3, graph.build_lmd(3))

    def test_unwritable(self, tmp_path):
        code, _ = run_cli("init-weights", tmp_path / "missing" / "w.lmdw")
        assert code == EXIT_IO


class TestInferDetect:
    def test_infer_writes_label_map(self, tmp_path, weights3):
        netpbm.write(tmp_path / "img.ppm", road_image(32, 40))
        code, _ = run_cli("infer", tmp_path / "img.ppm", "--weights", weights3, "-o", tmp_path / "out.pgm")
        assert code == EXIT_OK
        labels = netpbm.read(tmp_path / "out.pgm")
        assert labels.shape == (32, 40) and labels.max() < 3

    def test_detect_with_network(self, tmp_path, weights3):
        netpbm.write(tmp_path / "img.ppm", road_image(32, 32))
        code, out = run_cli("detect", tmp_path / "img.ppm", "--weights", weights3, "--out-dir", tmp_path)
        assert code == EXIT_OK and "groups:" in out
        assert netpbm.read(tmp_path / "img.overlay.ppm").shape == (32, 32, 3)

    def test_labels_in_merges_dashes(self, tmp_path, scene_files):
        image, labels = scene_files
        lone = dashed_lane_scene(distractor=False)
        netpbm.write(tmp_path / "lone.pgm", lone.astype(np.uint8))
        code, out = run_cli("detect", image, "--labels-in", tmp_path / "lone.pgm", "--out-dir", tmp_path / "o")
        assert code == EXIT_OK
        assert "supermarkings: 2" in out and "groups: 1" in out
        assert (tmp_path / "o" / "scene.report.txt").read_text() == out
        assert np.array_equal(netpbm.read(tmp_path / "o" / "scene.labels.pgm"), lone)
        overlay = netpbm.read(tmp_path / "o" / "scene.overlay.ppm")
        assert (overlay != road_image()).any()

    def test_empty_lane_mask(self, tmp_path, scene_files):
        image, _ = scene_files
        netpbm.write(tmp_path / "empty.pgm", np.zeros((360, 480), np.uint8))
        code, out = run_cli("detect", image, "--labels-in", tmp_path / "empty.pgm", "--out-dir", tmp_path)
        assert code == EXIT_OK and "groups: 0" in out

    def test_bad_dimensions(self, tmp_path):
        netpbm.write(tmp_path / "odd.ppm", np.zeros((359, 480, 3), np.uint8))
        netpbm.write(tmp_path / "odd.pgm", np.zeros((359, 480), np.uint8))
        code, _ = run_cli("detect", tmp_path / "odd.ppm", "--labels-in", tmp_path / "odd.pgm")
        assert code == EXIT_CONTRACT

    def test_unreadable_image(self, tmp_path, weights3):
        code, _ = run_cli("detect", tmp_path / "nope.ppm", "--weights", weights3)
        assert code == EXIT_IO
        (tmp_path / "junk.ppm").write_bytes(b"not an image")
        assert run_cli("detect", tmp_path / "junk.ppm", "--weights", weights3)[0] == EXIT_IO

    def test_bad_weights(self, tmp_path, weights3):
        netpbm.write(tmp_path / "img.ppm", road_image(16, 16))
        (tmp_path / "bad.lmdw").write_bytes(b"LMDX" + weights3.read_bytes()[4:])
        assert run_cli("detect", tmp_path / "img.ppm", "--weights", tmp_path / "bad.lmdw")[0] == EXIT_IO
        # right format, wrong class count
        assert run_cli(
            "detect", tmp_path / "img.ppm", "--weights", weights3, "--num-classes", 4
        )[0] == EXIT_CONTRACT

    def test_needs_a_label_source(self, scene_files):
        assert run_cli("detect", scene_files[0])[0] == EXIT_USAGE


class TestPostprocess:
    def test_flags_and_outputs(self, tmp_path, scene_files):
        image, labels = scene_files
        code, out = run_cli(
            "postprocess", labels, "--image", image, "--overlay", tmp_path / "ov.ppm",
            "--groups-out", tmp_path / "groups.pgm", "--report", tmp_path / "r.txt",
            "--connectivity", 4, "--min-pixels", 5, "--merge-threshold", 30, "--blocks", 16,
        )
        assert code == EXIT_OK and "groups: 2" in out
        groups = netpbm.read(tmp_path / "groups.pgm")
        assert set(np.unique(groups)) == {0, 1, 2}
        assert (groups > 0).sum() == (dashed_lane_scene() == LANE).sum()

    def test_tiny_threshold_splits(self, scene_files):
        _, labels = scene_files
        out = run_cli("postprocess", labels, "--merge-threshold", 1)[1]
        assert "groups: 3" in out

    def test_bad_flag_values(self, scene_files):
        _, labels = scene_files
        assert run_cli("postprocess", labels, "--connectivity", 6)[0] == EXIT_USAGE
        assert run_cli("postprocess", labels, "--blocks", 0)[0] == EXIT_CONTRACT


@pytest.fixture
def eval_dirs(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    # 2-class toy giving the confusion matrix [[3, 1], [2, 4]]
    g = np.array([[0, 0, 0, 0, 1], [1, 1, 1, 1, 1]], np.uint8)
    p = np.array([[0, 0, 0, 1, 0], [0, 1, 1, 1, 1]], np.uint8)
    netpbm.write(gt / "a.pgm", g)
    netpbm.write(pred / "a.pgm", p)
    return pred, gt


class TestEvaluate:
    def test_identical(self, eval_dirs):
        _, gt = eval_dirs
        code, out = run_cli("evaluate", gt, gt, "--num-classes", 2)
        assert code == EXIT_OK
        assert "class avg: 1.000000" in out and "mIoU: 1.000000" in out

    def test_hand_tally(self, eval_dirs):
        pred, gt = eval_dirs
        out = run_cli("evaluate", pred, gt, "--num-classes", 2)[1]
        assert "    0   0.750000   0.500000" in out
        assert "    1   0.666667   0.571429" in out
        assert "class avg: 0.708333" in out

    def test_missing_gt(self, eval_dirs):
        pred, gt = eval_dirs
        netpbm.write(pred / "b.pgm", np.zeros((2, 5), np.uint8))
        code, _ = run_cli("evaluate", pred, gt, "--num-classes", 2)
        assert code == EXIT_IO

    def test_missing_gt_message_names_file(self, eval_dirs, capsys):
        pred, gt = eval_dirs
        netpbm.write(pred / "b.pgm", np.zeros((2, 5), np.uint8))
        run_cli("evaluate", pred, gt, "--num-classes", 2)
        assert "b.pgm" in capsys.readouterr().err

    def test_size_mismatch(self, eval_dirs):
        pred, gt = eval_dirs
        netpbm.write(pred / "a.pgm", np.zeros((3, 5), np.uint8))
        assert run_cli("evaluate", pred, gt, "--num-classes", 2)[0] == EXIT_CONTRACT

    def test_ignore_label(self, eval_dirs):
        pred, gt = eval_dirs
        netpbm.write(gt / "a.pgm", np.full((2, 5), 255, np.uint8))
        out = run_cli("evaluate", pred, gt, "--num-classes", 2)[1]
        assert "pixels: 0" in out and "mIoU: -" in out


def write_corpus(directory):
    directory.mkdir(exist_ok=True)
    labels = np.zeros((10, 10), np.uint8)
    labels.flat[50:80] = 1
    labels.flat[80:] = 2
    netpbm.write(directory / "m0.pgm", labels)
    return directory


def parse_weights(out):
    rows = [line.split() for line in out.splitlines()[2:]]
    return [float(r[2]) for r in rows]


class TestClassWeights:
    def test_corpus(self, tmp_path):
        out = run_cli("class-weights", write_corpus(tmp_path / "c"), "--num-classes", 3)[1]
        assert parse_weights(out) == [0.6, 1.0, 1.5]

    def test_scale(self, tmp_path):
        out = run_cli("class-weights", write_corpus(tmp_path / "c"), "--num-classes", 3, "--scale", "2:5")[1]
        assert parse_weights(out) == [0.6, 1.0, 7.5]

    def test_uniform_labels(self, tmp_path):
        d = tmp_path / "u"
        d.mkdir()
        netpbm.write(d / "x.pgm", np.ones((4, 4), np.uint8))
        out = run_cli("class-weights", d, "--num-classes", 3)[1]
        assert parse_weights(out) == [0.0, 1.0, 0.0]
        assert "0 - 0.0" in out

    def test_unreadable(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        (d / "x.pgm").write_bytes(b"garbage")
        assert run_cli("class-weights", d, "--num-classes", 3)[0] == EXIT_IO

    def test_bad_scale_spec(self, tmp_path):
        assert run_cli("class-weights", tmp_path, "--num-classes", 3, "--scale", "two")[0] == EXIT_USAGE
