import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polysketch import apps
from polysketch.cli import ExperimentConfig, cmd_features, cmd_kernel_approx, cmd_sinkhorn, main
from polysketch.data import Dataset, parse_libsvm, synthetic, synthetic_pixels, write_libsvm
from polysketch.errors import DataError


def read_report(text):
    lines = text.splitlines()
    assert lines[0] == "# schema_version=1"
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def metric(rows, name, method=None):
    return [float(r["value"]) for r in rows if r["metric"] == name and (method is None or r["method"] == method)]


def as_dicts(header, rows):
    return [dict(zip(header, map(str, row))) for row in rows]


class TestLibsvm:
    def test_single_line(self, tmp_path):
        p = tmp_path / "a.svm"
        p.write_text("1 1:0.5 3:2.0\n")
        ds = parse_libsvm(p)
        np.testing.assert_array_equal(ds.features, [[0.5, 0.0, 2.0]])
        assert ds.labels.tolist() == [1]

    def test_dimension_is_max_index(self, tmp_path):
        p = tmp_path / "b.svm"
        p.write_text("2 2:1\n1 1:1\n")
        ds = parse_libsvm(p)
        np.testing.assert_array_equal(ds.features, [[0, 1], [1, 0]])
        assert ds.labels.tolist() == [2, 1]

    def test_comments_and_blank_lines(self, tmp_path):
        p = tmp_path / "c.svm"
        p.write_text("# header\n\n-1 1:3 # trailing\n")
        assert parse_libsvm(p).features.tolist() == [[3.0]]

    @pytest.mark.parametrize(
        "line",
        ["1 2:1 1:1", "1 1:abc", "x 1:1", "1 0:1", "1 1:1 1:2", "1 1:nan", "1 3"],
    )
    def test_malformed_reports_line(self, tmp_path, line):
        p = tmp_path / "bad.svm"
        p.write_text(f"1 1:1\n{line}\n")
        with pytest.raises(DataError, match="line 2"):
            parse_libsvm(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.svm"
        p.write_text("\n# nothing\n")
        with pytest.raises(DataError):
            parse_libsvm(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            parse_libsvm(tmp_path / "absent.svm")

    @settings(max_examples=40, deadline=None)
    @given(
        X=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=st.floats(-1e6, 1e6)),
        seed=st.integers(0, 100),
    )
    def test_round_trip(self, tmp_path_factory, X, seed):
        X = X.copy()
        X[:, -1] = np.where(X[:, -1] == 0, 1.0, X[:, -1])  # keep the last column so d survives
        labels = np.random.default_rng(seed).integers(-3, 4, size=len(X))
        p = tmp_path_factory.mktemp("rt") / "x.svm"
        write_libsvm(p, X, labels)
        ds = parse_libsvm(p)
        np.testing.assert_allclose(ds.features, X, rtol=1e-12, atol=0)
        assert ds.labels.tolist() == labels.tolist()


class TestSynthetic:
    def test_shape_and_scale(self):
        ds = synthetic(4000, 50, seed=1)
        assert ds.shape == (4000, 50)
        assert np.var(ds.features) == pytest.approx(1 / 50, rel=0.05)

    def test_pixels_in_unit_cube(self):
        x, y = synthetic_pixels(100, 3, seed=2)
        assert x.min() >= 0 and x.max() <= 1 and y.min() >= 0 and y.max() <= 1


def small_config(command, **kw):
    base = dict(m=10, r=10, k_centers=10, gamma=1.0, repeats=0, synthetic=(200, 20))
    base.update(kw)
    return ExperimentConfig(command=command, **base)


class TestKernelApprox:
    def test_exact_method_has_zero_error(self):
        rows = as_dicts(*cmd_kernel_approx(small_config("kernel-approx", methods=("exact",))))
        assert metric(rows, "rel_error_fro") == [0.0] and metric(rows, "rel_error_mean") == [0.0]

    def test_same_seed_same_errors(self):
        cfg = small_config("kernel-approx", methods=("coreset-ts", "rff", "nystrom"), seed=4)
        a = as_dicts(*cmd_kernel_approx(cfg))
        b = as_dicts(*cmd_kernel_approx(cfg))
        assert metric(a, "rel_error_fro") == metric(b, "rel_error_fro")

    def test_coreset_beats_taylor_on_default_config(self):
        cfg = small_config("kernel-approx", methods=("coreset-ts", "taylor-ts"), synthetic=(1000, 50), trials=10)
        rows = as_dicts(*cmd_kernel_approx(cfg))
        assert np.mean(metric(rows, "rel_error_mean", "coreset-ts")) < np.mean(metric(rows, "rel_error_mean", "taylor-ts"))

    def test_sampled_errors_track_dense(self, monkeypatch):
        from polysketch import cli

        cfg = small_config("kernel-approx", methods=("coreset-ts",), synthetic=(400, 10))
        dense = metric(as_dicts(*cmd_kernel_approx(cfg)), "rel_error_fro")[0]
        monkeypatch.setattr(cli, "EXACT_LIMIT", 10)
        sampled = metric(as_dicts(*cmd_kernel_approx(cfg)), "rel_error_fro")[0]
        assert sampled == pytest.approx(dense, rel=0.1)

    def test_dataset_input(self, tmp_path):
        p = tmp_path / "d.svm"
        write_libsvm(p, synthetic(50, 4, seed=0).features, np.ones(50, dtype=int))
        cfg = small_config("kernel-approx", methods=("nystrom",), r=3, synthetic=None)
        rows = as_dicts(*cmd_kernel_approx(cfg, parse_libsvm(p)))
        assert len(metric(rows, "rel_error_fro")) == 1


class TestSinkhornCommand:
    def test_exact_ratio_is_one(self):
        cfg = small_config("sinkhorn", m=20, r=3, methods=("exact",), synthetic=(100, 3))
        rows = as_dicts(*cmd_sinkhorn(cfg))
        assert metric(rows, "objective_ratio") == [1.0]

    def test_default_config_ratio(self):
        cfg = small_config("sinkhorn", m=20, r=3, methods=("coreset-ts",), synthetic=(500, 3), trials=3)
        ratios = metric(as_dicts(*cmd_sinkhorn(cfg)), "objective_ratio")
        assert all(0.8 <= q <= 1.25 for q in ratios)

    def test_speedup_grows_with_n(self):
        per_iter = {}
        for n in (1000, 2000, 4000):
            cfg = small_config("sinkhorn", m=20, r=3, methods=("exact", "coreset-ts"), synthetic=(n, 3), repeats=3)
            rows = as_dicts(*cmd_sinkhorn(cfg))
            per_iter[n] = (metric(rows, "wall_ms_per_iter", "exact")[0], metric(rows, "wall_ms_per_iter", "coreset-ts")[0])
        speedups = [per_iter[n][0] / per_iter[n][1] for n in (1000, 2000, 4000)]
        assert speedups[2] > speedups[0]
        assert per_iter[4000][1] / per_iter[1000][1] < 16

    def test_mismatched_dimensions(self):
        with pytest.raises(DataError):
            cmd_sinkhorn(small_config("sinkhorn", methods=("exact",)), np.ones((3, 2)), np.ones((3, 3)))


class TestFeaturesCommand:
    def test_width_round_trip_and_report(self, tmp_path):
        U = synthetic(120, 5, seed=3).features
        ds = Dataset(U, np.arange(120) % 2, "mem")
        out = tmp_path / "f.svm"
        cfg = small_config("features", m=20, r=3)
        header, rows = cmd_features(cfg, ds, out)
        back = parse_libsvm(out)
        assert metric(as_dicts(header, rows), "width") == [61.0]
        assert back.labels.tolist() == ds.labels.tolist()
        F = np.zeros((120, 61))
        F[:, : back.features.shape[1]] = back.features
        err = apps.relative_frobenius_error(F @ F.T, apps.rbf_kernel(U, 1.0))
        assert metric(as_dicts(header, rows), "rel_error_fro")[0] == pytest.approx(err, rel=1e-9)

    def test_unwritable_path(self, tmp_path):
        ds = Dataset(synthetic(20, 3).features, None, "mem")
        with pytest.raises(DataError):
            cmd_features(small_config("features", m=4, r=2), ds, tmp_path / "no" / "dir" / "f.svm")


class TestMain:
    def test_kernel_approx_writes_csv(self, tmp_path):
        out = tmp_path / "k.csv"
        code = main(["kernel-approx", "--synthetic", "100,8", "--repeats", "0", "--method", "coreset-ts", "--out", str(out)])
        assert code == 0
        rows = read_report(out.read_text())
        assert list(rows[0]) == ["method", "m", "r", "gamma", "seed", "metric", "value"]
        assert {r["metric"] for r in rows} == {"rel_error_fro", "rel_error_mean", "wall_ms"}

    def test_seed_reproducible(self, tmp_path):
        args = ["kernel-approx", "--synthetic", "80,6", "--repeats", "0", "--seed", "9", "--trials", "2"]
        main(args + ["--out", str(tmp_path / "a.csv")])
        main(args + ["--out", str(tmp_path / "b.csv")])
        a, b = (metric(read_report((tmp_path / f).read_text()), "rel_error_fro") for f in ("a.csv", "b.csv"))
        assert a == b

    def test_workers_match_serial(self, tmp_path):
        args = ["kernel-approx", "--synthetic", "60,5", "--repeats", "0", "--trials", "3", "--method", "rff,coreset-ts"]
        main(args + ["--out", str(tmp_path / "s.csv")])
        main(args + ["--workers", "2", "--out", str(tmp_path / "p.csv")])
        s, p = (read_report((tmp_path / f).read_text()) for f in ("s.csv", "p.csv"))
        assert metric(s, "rel_error_fro") == metric(p, "rel_error_fro")

    def test_dump_config(self, capsys):
        assert main(["sinkhorn", "--synthetic", "10,3", "--dump-config"]) == 0
        cfg = json.loads(capsys.readouterr().out)
        assert (cfg["m"], cfg["r"], cfg["gamma"]) == (20, 3, 1.0)

    def test_kernel_defaults(self, capsys):
        main(["kernel-approx", "--synthetic", "10,3", "--dump-config"])
        cfg = json.loads(capsys.readouterr().out)
        assert (cfg["m"], cfg["r"], cfg["k_centers"]) == (10, 10, 10)

    def test_selftest(self, capsys):
        assert main(["sketch-selftest", "--trials", "3"]) == 0
        assert "pass,1" in capsys.readouterr().out

    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["kernel-approx"],
            ["kernel-approx", "--synthetic", "3"],
            ["kernel-approx", "--synthetic", "5,2", "--method", "magic"],
            ["kernel-approx", "--synthetic", "5,2", "--gamma", "-1"],
            ["features", "--synthetic", "5,2"],
            ["sinkhorn", "--input", "x.svm"],
        ],
    )
    def test_usage_errors_exit_1(self, argv, capsys):
        try:
            code = main(argv)
        except SystemExit as exc:
            code = exc.code
        assert code == 1

    def test_data_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.svm"
        bad.write_text("1 1:x\n")
        assert main(["kernel-approx", "--input", str(bad)]) == 2

    def test_numerical_failure_exit_3(self, monkeypatch):
        from polysketch import cli
        from polysketch.errors import SingularSystemError

        def boom(*args, **kwargs):
            raise SingularSystemError("singular")

        monkeypatch.setattr(cli, "build_kernel", boom)
        assert main(["kernel-approx", "--synthetic", "5,2", "--repeats", "0"]) == 3
