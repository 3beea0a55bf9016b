import os

import numpy as np
import pytest

from mv3mr import io
from mv3mr.cli import main
from mv3mr.kernels import DistanceMetric
from mv3mr.synth import SyntheticSpec, generate_synthetic
from mv3mr.trainer import Dataset, DegenerateLabelWarning, TrainConfig, View, fit, transductive_scores


def tiny_dataset():
    X = np.array([[0.1, 1.0 / 3.0], [2.5e-17, -7.0]])
    return Dataset([View("only", "features", X, DistanceMetric.L1)], np.array([[1.0], [0.0]]), [0], [1])


@pytest.fixture()
def synth_dir(tmp_path):
    spec = SyntheticSpec(seed=11, n_labeled=10, n_unlabeled=20, n_test=8, n_labels=2, informativeness=(1.0, 0.2))
    return io.save_dataset(generate_synthetic(spec), tmp_path / "data")


def _write(path, text):
    path.write_text(text)
    return path


class TestMatrixFormat:
    def test_round_trip_bits(self, tmp_path):
        A = np.array([[0.1, -1e-300, np.pi], [1 / 3, 2.0**60, -0.0]])
        io.write_matrix(tmp_path / "m.txt", A)
        B = io.read_matrix(tmp_path / "m.txt")
        assert A.tobytes() == B.tobytes()

    def test_bad_row_names_line(self, tmp_path):
        p = _write(tmp_path / "m.txt", "2 2\n1 2\n3\n")
        with pytest.raises(io.FormatError, match=r"m\.txt:3"):
            io.read_matrix(p)

    def test_bad_number(self, tmp_path):
        with pytest.raises(io.FormatError, match="not a number"):
            io.read_matrix(_write(tmp_path / "m.txt", "1 1\nabc\n"))

    def test_trailing_content(self, tmp_path):
        with pytest.raises(io.FormatError, match="unexpected"):
            io.read_matrix(_write(tmp_path / "m.txt", "1 1\n1\n2\n"))


class TestDatasetFiles:
    def test_minimal_round_trip(self, tmp_path):
        data = tiny_dataset()
        m = io.save_dataset(data, tmp_path / "d")
        back = io.load_dataset(m)
        assert back.views[0].data.tobytes() == data.views[0].data.tobytes()
        np.testing.assert_array_equal(back.Y, data.Y)
        np.testing.assert_array_equal(back.labeled, [0])
        np.testing.assert_array_equal(back.unlabeled, [1])
        assert back.views[0].metric is DistanceMetric.L1
        # re-saving the loaded dataset gives the same bytes
        m2 = io.save_dataset(back, tmp_path / "d2")
        for name in ("manifest.txt", "labels.txt", "split.txt", "view0.txt"):
            assert (m.parent / name).read_bytes() == (m2.parent / name).read_bytes()

    def test_unlabeled_row_with_label(self, tmp_path):
        m = io.save_dataset(tiny_dataset(), tmp_path / "d")
        io.write_matrix(m.parent / "labels.txt", [[1.0], [1.0]])
        with pytest.raises(io.FormatError, match="row 1"):
            io.load_dataset(m)

    def test_asymmetric_gram(self, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        io.write_matrix(d / "g.txt", [[1.0, 0.5], [0.4, 1.0]])
        io.write_matrix(d / "y.txt", [[1.0], [0.0]])
        _write(d / "manifest.txt", "labels = y.txt\nview.g = gram g.txt\n")
        with pytest.raises(io.FormatError, match="not symmetric"):
            io.load_dataset(d / "manifest.txt")

    def test_declared_count_mismatch(self, tmp_path):
        m = io.save_dataset(tiny_dataset(), tmp_path / "d")
        m.write_text(m.read_text().replace("n_views = 1", "n_views = 2"))
        with pytest.raises(io.FormatError, match="n_views"):
            io.load_dataset(m)

    def test_unknown_key(self, tmp_path):
        p = _write(tmp_path / "manifest.txt", "labels = y.txt\ncolour = red\n")
        with pytest.raises(io.FormatError, match="manifest.txt:2"):
            io.Manifest.read(p)

    def test_default_split(self, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        io.write_matrix(d / "y.txt", [[0.0], [-1.0], [0.0]])
        io.write_matrix(d / "x.txt", [[0.0], [1.0], [2.0]])
        _write(d / "manifest.txt", "labels = y.txt\nview.x = features l2 x.txt\n")
        data = io.load_dataset(d / "manifest.txt")
        np.testing.assert_array_equal(data.labeled, [1])
        np.testing.assert_array_equal(data.unlabeled, [0, 2])


class TestConfigFiles:
    def test_round_trip(self, tmp_path):
        cfg = TrainConfig(gamma_A=1 / 3, k_in=4, loss="least_squares", normalized_laplacian=False)
        io.write_config(tmp_path / "c.txt", cfg)
        assert io.read_config(tmp_path / "c.txt") == cfg

    def test_partial_and_comments(self, tmp_path):
        cfg = io.read_config(_write(tmp_path / "c.txt", "# tuned\ngamma_O = 0.25  # half\n"))
        assert cfg == TrainConfig(gamma_O=0.25)

    def test_unknown_key(self, tmp_path):
        with pytest.raises(io.FormatError):
            io.read_config(_write(tmp_path / "c.txt", "gamma_Z = 1\n"))

    def test_invalid_value(self, tmp_path):
        with pytest.raises(ValueError):
            io.read_config(_write(tmp_path / "c.txt", "gamma_O = 2\n"))


class TestModelFiles:
    def test_round_trip_bits(self, tmp_path, synth_dir):
        model = fit(io.load_dataset(synth_dir), TrainConfig())
        io.save_model(tmp_path / "m.txt", model)
        back = io.load_model(tmp_path / "m.txt")
        for name in ("a", "b", "beta", "theta", "Q", "objective_trace", "train_index"):
            assert getattr(back, name).tobytes() == getattr(model, name).tobytes(), name
        assert back.config == model.config and back.n_labeled == model.n_labeled
        for k0, k1 in zip(model.kernels, back.kernels):
            assert k0.train.tobytes() == k1.train.tobytes()
            assert (k0.scale, k0.trace, k0.metric, k0.kind) == (k1.scale, k1.trace, k1.metric, k1.kind)
        io.save_model(tmp_path / "m2.txt", back)
        assert (tmp_path / "m.txt").read_bytes() == (tmp_path / "m2.txt").read_bytes()

    def test_minimal_model(self, tmp_path):
        with pytest.warns(DegenerateLabelWarning):
            model = fit(tiny_dataset(), TrainConfig())
        io.save_model(tmp_path / "m.txt", model)
        back = io.load_model(tmp_path / "m.txt")
        np.testing.assert_array_equal(transductive_scores(back), transductive_scores(model))

    def test_bad_header(self, tmp_path):
        with pytest.raises(io.FormatError, match="not a model file"):
            io.load_model(_write(tmp_path / "m.txt", "something else\n"))


def test_atomic_write_leaves_old_file_on_failure(tmp_path, monkeypatch):
    p = tmp_path / "out.txt"
    io.atomic_write(p, "old\n")

    def boom(*args):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        io.atomic_write(p, "new\n")
    assert p.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["out.txt"]


class TestCli:
    def test_train_predict_matches_transductive(self, tmp_path, synth_dir, capsys):
        model_path, scores = tmp_path / "model.txt", tmp_path / "s.txt"
        assert main(["train", "--manifest", str(synth_dir), "--out-model", str(model_path),
                     "--out-trace", str(tmp_path / "trace.txt")]) == 0
        assert "beta = " in capsys.readouterr().out
        assert main(["predict", "--model", str(model_path), "--manifest", str(synth_dir),
                     "--split", "train", "--out-scores", str(scores)]) == 0
        want = transductive_scores(io.load_model(model_path))
        np.testing.assert_allclose(io.read_matrix(scores), want, atol=1e-10, rtol=0)
        trace = io.read_vector(tmp_path / "trace.txt")
        assert np.all(np.diff(trace) <= 1e-12)

    def test_evaluate_worked_example(self, tmp_path, capsys):
        io.write_matrix(tmp_path / "y.txt", np.zeros((4, 1)))
        io.write_matrix(tmp_path / "t.txt", [[1.0], [-1.0], [1.0], [-1.0]])
        _write(tmp_path / "manifest.txt", "labels = y.txt\ntruth = t.txt\n")
        io.write_matrix(tmp_path / "s.txt", [[4.0], [3.0], [2.0], [1.0]])
        assert main(["evaluate", "--scores", str(tmp_path / "s.txt"), "--manifest", str(tmp_path / "manifest.txt"),
                     "--split", "all", "--out-curves", str(tmp_path / "c.txt")]) == 0
        out = capsys.readouterr().out
        report = {k.strip(): float(v) for k, v in (ln.split("=") for ln in out.splitlines())}
        assert report["mAP"] == pytest.approx(28 / 33, abs=1e-15)
        assert report["mAUC"] == 0.75
        assert np.isnan(report["RL"]) and report["RL_invalid"] == 4
        assert len((tmp_path / "c.txt").read_text().splitlines()) == 5

    def test_evaluate_shape_mismatch(self, tmp_path, synth_dir, capsys):
        io.write_matrix(tmp_path / "s.txt", np.zeros((3, 2)))
        assert main(["evaluate", "--scores", str(tmp_path / "s.txt"), "--manifest", str(synth_dir)]) == 1
        assert "error" in capsys.readouterr().err

    def test_compare_single_view_rows_identical(self, tmp_path):
        spec = SyntheticSpec(seed=2, n_labeled=8, n_unlabeled=16, n_test=0, n_labels=2, informativeness=(1.0,))
        m = io.save_dataset(generate_synthetic(spec), tmp_path / "d")
        out = tmp_path / "table.txt"
        assert main(["compare", "--manifest", str(m), "--labeled-count", "6", "--repeats", "3", "--out-table", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].split() == ["repeat", "method", "mAP", "mAUC", "RL", "beta.0"]
        rows = [ln.split() for ln in lines[1:]]
        assert len(rows) == 6
        for learned, uniform in zip(rows[::2], rows[1::2]):
            assert learned[1] == "learned" and uniform[1] == "uniform"
            assert learned[2:] == uniform[2:]

    def test_synth_deterministic(self, tmp_path):
        spec = _write(tmp_path / "spec.txt", "seed = 5\nn_labeled = 6\nn_unlabeled = 6\nn_test = 2\ninformativeness = 1.0 0.0\n")
        for d in ("a", "b"):
            assert main(["synth", "--spec", str(spec), "--out-dir", str(tmp_path / d)]) == 0
        for name in ("manifest.txt", "labels.txt", "truth.txt", "split.txt", "view0.txt", "view1.txt", "spec.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_file_exit_code(self, tmp_path, capsys):
        assert main(["train", "--manifest", str(tmp_path / "none.txt"), "--out-model", str(tmp_path / "m")]) == 1
        assert "mv3mr train: error" in capsys.readouterr().err

    def test_predict_wrong_dataset(self, tmp_path, synth_dir):
        model_path = tmp_path / "model.txt"
        assert main(["train", "--manifest", str(synth_dir), "--out-model", str(model_path)]) == 0
        other = io.save_dataset(tiny_dataset(), tmp_path / "other")
        assert main(["predict", "--model", str(model_path), "--manifest", str(other), "--out-scores", str(tmp_path / "s")]) == 1

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == 2
