"""Integration tests for end-to-end labeling runs.

Tests cover:
- synth -> infer -> eval through the command line
- config files, determinism and batch/per-frame equivalences
- error exits for bad inputs
- acceptance runs on the default synthetic video (slow)
"""

import csv

import numpy as np
import pytest

from colabelcrf.cli.main import main
from colabelcrf.core.api import evaluate_dirs, infer, kmeans_layer, load_layers, load_video
from colabelcrf.core.hoc import CliqueSet, PnPottsParams, enumerate_clique_expectation, hoc_update_field
from colabelcrf.core.lattice import FeatureMatrix, brute_force_gaussian, build_lattice, relative_rms
from colabelcrf.core.model import KernelKind, KernelSpec, default_kernels
from colabelcrf.core.solver import run_sequential
from colabelcrf.utils.formats import load_labelmap, save_labelmap
from colabelcrf.utils.synth import SynthConfig, generate, write_dataset


def _infer_args(data, out, *extra):
    return [
        "--no-color", "-q", "infer",
        "--images", str(data / "images"),
        "--unaries", str(data / "unaries"),
        "--out", str(out),
        *extra,
    ]


def _read_labels(directory):
    return {p.stem: load_labelmap(p) for p in sorted(directory.glob("*.pgm"))}


class TestCommandLineWorkflow:
    """synth, infer and eval chained through the CLI."""

    def test_synth_infer_eval(self, tmp_path):
        """A full run writes label maps, colorizations, a report and metrics."""
        data = tmp_path / "data"
        assert main(["--no-color", "synth", "--out", str(data), "--frames", "3", "--width", "24",
                     "--height", "16", "--labels", "3", "--noise", "0.6",
                     "--kmeans-clusters", "6"]) == 0
        out = tmp_path / "run"
        assert main(_infer_args(data, out, "--segments", str(data / "segments"),
                                "--palette", str(data / "palette.txt"), "--batch", "2")) == 0

        assert len(list((out / "labels").glob("*.pgm"))) == 3
        assert len(list((out / "color").glob("*.ppm"))) == 3
        with (out / "report.csv").open(newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
        assert [r["batch"] for r in rows] == ["0", "1", "total"]
        assert [r["frames"] for r in rows] == ["2", "1", "3"]

        metrics = tmp_path / "metrics.csv"
        assert main(["--no-color", "eval", "--pred", str(out / "labels"), "--gt", str(data / "gt"),
                     "--labels", "3", "--palette", str(data / "palette.txt"),
                     "--csv", str(metrics)]) == 0
        with metrics.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert rows[1][1] == "background"
        assert rows[-2][0] == "average"
        assert 0.0 <= float(rows[-2][-1]) <= 1.0

    def test_config_file_run(self, small_dataset, tmp_path):
        data, _ = small_dataset
        out = tmp_path / "run"
        config = tmp_path / "run.cfg"
        config.write_text(
            f"images = {data / 'images'}\nunaries = {data / 'unaries'}\nout = {out}\n"
            f"segments = {data / 'segments'}\niters = 2\nsplit-supervoxels = on\n",
            encoding="utf-8",
        )
        assert main(["--no-color", "-q", "infer", "--config", str(config)]) == 0
        with (out / "report.csv").open(newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
        assert rows[0]["iterations"] == "2"

    def test_runs_are_deterministic(self, small_dataset, tmp_path):
        data, _ = small_dataset
        args = ("--segments", str(data / "segments"), "--iters", "3")
        assert main(_infer_args(data, tmp_path / "a", *args)) == 0
        assert main(_infer_args(data, tmp_path / "b", *args)) == 0
        for name in ("frame_00000", "frame_00001", "frame_00002"):
            a = (tmp_path / "a" / "labels" / f"{name}.pgm").read_bytes()
            b = (tmp_path / "b" / "labels" / f"{name}.pgm").read_bytes()
            assert a == b

    def test_kmeans_layer_is_seeded(self, small_dataset, tmp_path):
        data, _ = small_dataset
        args = ("--kmeans", "5", "--seed", "3", "--iters", "2")
        assert main(_infer_args(data, tmp_path / "a", *args)) == 0
        assert main(_infer_args(data, tmp_path / "b", *args)) == 0
        a, b = _read_labels(tmp_path / "a" / "labels"), _read_labels(tmp_path / "b" / "labels")
        assert set(a) == {"frame_00000", "frame_00001", "frame_00002"}
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_kmeans_layer_cliques(self, small_dataset):
        data, _ = small_dataset
        _, volume, _ = load_video(data / "images", data / "unaries")
        first = kmeans_layer(volume, 5, PnPottsParams(alpha=0.05), seed=3)
        second = kmeans_layer(volume, 5, PnPottsParams(alpha=0.05), seed=3)
        assert first.layers == ("kmeans",)
        np.testing.assert_array_equal(first.members, second.members)
        assert np.sort(first.members).tolist() == list(range(volume.num_variables))

    def test_perframe_mode_equals_batch_of_one(self, small_dataset, tmp_path):
        data, _ = small_dataset
        assert main(_infer_args(data, tmp_path / "a", "--mode", "perframe")) == 0
        assert main(_infer_args(data, tmp_path / "b", "--batch", "1")) == 0
        a, b = _read_labels(tmp_path / "a" / "labels"), _read_labels(tmp_path / "b" / "labels")
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_no_pairwise_no_cliques_is_unary_argmax(self, small_dataset, tmp_path):
        data, _ = small_dataset
        assert main(_infer_args(data, tmp_path / "run", "--hoc", "off", "--w1", "0", "--w2", "0")) == 0
        names, _, unary = load_video(data / "images", data / "unaries")
        labels = _read_labels(tmp_path / "run" / "labels")
        expected = np.argmin(unary.costs, axis=-1).reshape(unary.frames, unary.height, unary.width)
        for t, name in enumerate(names):
            np.testing.assert_array_equal(labels[name], expected[t])

    def test_eval_of_ground_truth_is_perfect(self, small_dataset):
        data, _ = small_dataset
        report, cm, names = evaluate_dirs(data / "gt", data / "gt", 3)
        assert report.average == pytest.approx(1.0)
        assert cm.total == 3 * 24 * 16 - cm.ignored
        assert len(names) == 3

    def test_eval_single_frame(self, tmp_path):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        save_labelmap(gt / "f.pgm", np.array([[0, 0, 1, 1]], dtype=np.uint8))
        save_labelmap(pred / "f.pgm", np.array([[0, 1, 1, 1]], dtype=np.uint8))
        report, _, _ = evaluate_dirs(pred, gt, 2)
        assert report.average == pytest.approx(0.75)


class TestErrorExits:
    """Bad inputs end with exit status 1."""

    def test_frame_set_mismatch(self, small_dataset, tmp_path):
        data, _ = small_dataset
        pred = tmp_path / "pred"
        save_labelmap(pred / "frame_00000.pgm", np.zeros((16, 24), dtype=np.uint8))
        save_labelmap(pred / "other.pgm", np.zeros((16, 24), dtype=np.uint8))
        assert main(["--no-color", "eval", "--pred", str(pred), "--gt", str(data / "gt"),
                     "--labels", "3"]) == 1

    def test_no_common_frames(self, small_dataset, tmp_path):
        data, _ = small_dataset
        pred = tmp_path / "pred"
        save_labelmap(pred / "x.pgm", np.zeros((16, 24), dtype=np.uint8))
        assert main(["--no-color", "eval", "--pred", str(pred), "--gt", str(data / "gt"),
                     "--labels", "3"]) == 1

    def test_label_count_mismatch(self, small_dataset, tmp_path):
        data, _ = small_dataset
        assert main(_infer_args(data, tmp_path / "run", "--labels", "5")) == 1

    def test_missing_unary(self, small_dataset, tmp_path):
        data, _ = small_dataset
        (data / "unaries" / "frame_00001.unr").unlink()
        assert main(_infer_args(data, tmp_path / "run")) == 1

    def test_corrupt_unary(self, small_dataset, tmp_path):
        data, _ = small_dataset
        path = data / "unaries" / "frame_00002.unr"
        path.write_bytes(path.read_bytes()[:-8])
        assert main(_infer_args(data, tmp_path / "run")) == 1

    def test_segment_size_mismatch(self, small_dataset, tmp_path):
        data, _ = small_dataset
        other = tmp_path / "other"
        write_dataset(generate(SynthConfig(seed=1, frames=2, width=24, height=16, labels=3,
                                           noise=0.5, kmeans_clusters=4)), other)
        assert main(_infer_args(data, tmp_path / "run", "--segments",
                                str(other / "segments" / "grid.seg"))) == 1


class TestLibraryWorkflow:
    """The same pipeline through the Python API."""

    def test_decoupled_joint_run_equals_per_frame(self, small_dataset):
        data, _ = small_dataset
        _, volume, unary = load_video(data / "images", data / "unaries")
        kernels = (
            KernelSpec(KernelKind.SMOOTHNESS, 3.0, 3.0, 1e-3),
            KernelSpec(KernelKind.APPEARANCE, 5.0, 50.0, 1e-3, 10.0),
        )
        joint = infer(volume, unary, kernels, batch=3)
        single = infer(volume, unary, kernels, batch=1)
        np.testing.assert_allclose(joint.marginals.q, single.marginals.q, atol=1e-3)

    def test_layers_from_directory(self, small_dataset):
        data, manifest = small_dataset
        _, volume, unary = load_video(data / "images", data / "unaries")
        cliques = load_layers([data / "segments"], volume, PnPottsParams(alpha=0.05))
        assert set(cliques.layers) == set(manifest["layers"])
        result = infer(volume, unary, cliques=cliques, iterations=2)
        assert result.labels.shape == (3, 16, 24)
        assert result.summary.iterations == 2


@pytest.mark.slow
class TestAcceptance:
    """Larger checks on the default synthetic video and random instances."""

    @pytest.fixture(scope="class")
    def default_dataset(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("default")
        manifest = write_dataset(generate(SynthConfig()), out / "data")
        return out, manifest

    def _accuracy(self, out, data, name, *extra):
        assert main(_infer_args(data, out / name, *extra)) == 0
        report, _, _ = evaluate_dirs(out / name / "labels", data / "gt", 4)
        return report.average

    def test_joint_labeling_beats_unaries(self, default_dataset):
        out, manifest = default_dataset
        data = out / "data"
        unary = manifest["unary_argmax_accuracy"]
        joint_hoc = self._accuracy(out, data, "joint_hoc", "--segments", str(data / "segments"))
        perframe = self._accuracy(out, data, "perframe", "--hoc", "off", "--mode", "perframe")
        assert joint_hoc >= unary + 0.05
        assert joint_hoc >= perframe + 0.02

    def test_clique_field_matches_enumeration(self):
        rng = np.random.default_rng(7)
        params = PnPottsParams(alpha=0.2)
        for _ in range(200):
            labels = int(rng.integers(2, 4))
            size = int(rng.integers(1, 9))
            q = rng.dirichlet(np.ones(labels), size=12)
            clique = np.sort(rng.choice(12, size=size, replace=False))
            h = hoc_update_field(q, CliqueSet.from_lists([clique], params=params))
            pixel = int(rng.choice(clique))
            label = int(rng.integers(labels))
            expected = enumerate_clique_expectation(q, clique, pixel, label, params)
            assert h[pixel, label] == pytest.approx(expected, abs=1e-9)

    def test_sequential_free_energy_is_monotone(self, make_problem):
        for _ in range(50):
            problem = make_problem(frames=2, width=5, height=4, cliques=4, clique_size=4)
            _, report = run_sequential(problem, sweeps=2)
            assert (np.diff(report.free_energy_trace) <= 1e-9).all()

    def test_lattice_matches_brute_force(self):
        """Signed values over d = 2..6 and several densities; linear and self-adjoint."""
        rng = np.random.default_rng(11)
        for instance in range(100):
            d = 2 + instance % 5
            n = int(rng.integers(200, 2001))
            side = float(rng.uniform(1.0, 8.0))
            feats = FeatureMatrix(rng.uniform(0.0, side, size=(n, d)))
            values = rng.standard_normal((n, 2))
            other = rng.standard_normal((n, 2))
            lattice = build_lattice(feats)

            approx = lattice.filter_array(values)
            exact = brute_force_gaussian(feats, values).data
            assert relative_rms(approx, exact) <= 0.08, (d, n, side)

            combined = lattice.filter_array(2.0 * values - 0.5 * other)
            assert relative_rms(combined, 2.0 * approx - 0.5 * lattice.filter_array(other)) <= 1e-6

            u, v = values[:, 0], other[:, 0]
            left = float(u @ lattice.filter_array(v))
            right = float(lattice.filter_array(u) @ v)
            assert abs(left - right) <= 1e-6 * max(abs(left), 1.0)

    def test_default_kernels_are_coupled(self):
        assert all(kernel.couples_frames() for kernel in default_kernels())
