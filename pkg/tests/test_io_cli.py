import json

import numpy as np
import pytest

from gglr.cli import ProblemSpec, Report, main, run
from gglr.errors import (
    DegeneratePoints,
    DuplicateEdge,
    InvalidSpec,
    LengthMismatch,
    NotManifold,
    ParseError,
    SelfLoop,
)
from gglr.io import (
    grid_graph,
    knn_graph,
    load_graph,
    load_mask,
    load_point_cloud,
    load_signal,
    make_rng,
    psnr,
    read_pgm,
    save_graph,
    save_point_cloud,
    save_signal,
    write_pgm,
)

from conftest import star_graph


def write(path, text):
    path.write_text(text, encoding="ascii")
    return str(path)


class TestGraphFormat:
    def test_two_node_file(self, tmp_path):
        p = write(tmp_path / "g.txt", "2\n0 1 1.0\n")
        g = load_graph(p)
        assert g.n == 2 and g.m == 1 and g.edge_w[0] == 1.0

    def test_coordinate_block(self, tmp_path):
        p = write(tmp_path / "g.txt", "3\n0 1 1.0\n1 2 2.0\n#coords 2\n0 0\n1 0\n2 0.5\n")
        g = load_graph(p)
        assert g.coord_dim == 2
        assert np.allclose(g.coords[2], [2.0, 0.5])

    def test_features_block(self, tmp_path):
        p = write(tmp_path / "g.txt", "2\n0 1 1.0\n#features 1\n0.5\n1.5\n")
        g = load_graph(p)
        assert np.allclose(g.features.ravel(), [0.5, 1.5])

    def test_malformed_weight_reports_line(self, tmp_path):
        p = write(tmp_path / "g.txt", "2\n0 1 oops\n")
        with pytest.raises(ParseError) as exc:
            load_graph(p)
        assert "line 2" in str(exc.value)

    def test_duplicate_and_self_loop(self, tmp_path):
        with pytest.raises(DuplicateEdge):
            load_graph(write(tmp_path / "d.txt", "2\n0 1 1.0\n1 0 2.0\n"))
        with pytest.raises(SelfLoop):
            load_graph(write(tmp_path / "s.txt", "2\n1 1 1.0\n"))

    def test_round_trip_byte_identical(self, tmp_path):
        p = write(
            tmp_path / "g.txt",
            "4\n0 1 0.25\n1 2 1.0\n2 3 0.125\n#coords 1\n0.0\n1.0\n2.0\n3.5\n",
        )
        out1 = tmp_path / "o1.txt"
        out2 = tmp_path / "o2.txt"
        save_graph(load_graph(p), out1)
        save_graph(load_graph(out1), out2)
        assert out1.read_bytes() == out2.read_bytes()

    def test_signal_round_trip(self, tmp_path):
        x = np.array([1.0, -2.5, 3.25e-7])
        save_signal(x, tmp_path / "x.txt")
        assert np.array_equal(load_signal(tmp_path / "x.txt"), x)

    def test_mask_validation(self, tmp_path):
        p = write(tmp_path / "m.txt", "1\n0\n1\n")
        assert load_mask(p, 3).tolist() == [0, 2]
        with pytest.raises(LengthMismatch):
            load_mask(p, 4)
        bad = write(tmp_path / "b.txt", "0.5\n1\n0\n")
        with pytest.raises(ParseError):
            load_mask(bad, 3)


class TestPgm:
    def test_round_trip(self, tmp_path):
        rng = make_rng(1)
        img = rng.integers(0, 256, size=(5, 7)).astype(float)
        path = tmp_path / "img.pgm"
        write_pgm(img, path)
        back = read_pgm(path)
        assert np.array_equal(back, img)
        write_pgm(back, tmp_path / "img2.pgm")
        assert (tmp_path / "img.pgm").read_bytes() == (tmp_path / "img2.pgm").read_bytes()

    def test_rejects_non_p5(self, tmp_path):
        (tmp_path / "bad.pgm").write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(ParseError):
            read_pgm(tmp_path / "bad.pgm")


class TestPointCloud:
    def test_round_trip(self, tmp_path):
        pts = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
        vals = np.array([0.5, -1.0])
        save_point_cloud(pts, vals, tmp_path / "pc.txt")
        p2, v2 = load_point_cloud(tmp_path / "pc.txt")
        assert np.array_equal(p2, pts) and np.array_equal(v2, vals)


class TestGridGraph:
    def test_two_by_two(self):
        g = grid_graph(2, 2)
        assert g.n == 4 and g.m == 4

    def test_three_by_three(self):
        g = grid_graph(3, 3)
        assert g.n == 9 and g.m == 12

    def test_degree_profile(self):
        g = grid_graph(4, 3)
        deg = np.zeros(12)
        for i, j in zip(g.edge_i, g.edge_j):
            deg[int(i)] += 1
            deg[int(j)] += 1
        corners = [0, 3, 8, 11]
        interior = [5, 6]
        assert all(deg[c] == 2 for c in corners)
        assert all(deg[i] == 4 for i in interior)
        edges = set(range(12)) - set(corners) - set(interior)
        assert all(deg[e] == 3 for e in edges)


class TestKnnGraph:
    def test_collinear_points_make_a_path(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        g = knn_graph(pts, 1)
        assert sorted(zip(g.edge_i.tolist(), g.edge_j.tolist())) == [(0, 1), (1, 2)]

    def test_full_k_gives_complete_graph(self, rng):
        pts = rng.standard_normal((6, 3))
        g = knn_graph(pts, 5)
        assert g.m == 15

    def test_every_node_reaches_k_neighbors(self, rng):
        pts = rng.standard_normal((100, 3))
        g = knn_graph(pts, 5)
        deg = np.zeros(100)
        for i, j in zip(g.edge_i, g.edge_j):
            deg[int(i)] += 1
            deg[int(j)] += 1
        assert deg.min() >= 5

    def test_duplicates_rejected(self):
        pts = np.array([[0.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]])
        with pytest.raises(DegeneratePoints):
            knn_graph(pts, 1)


class TestPsnr:
    def test_identical_capped(self):
        assert psnr(np.ones(4), np.ones(4), 255.0) == 999.0

    def test_full_scale_error_is_zero_db(self):
        assert psnr(np.zeros(3), np.full(3, 255.0), 255.0) == pytest.approx(0.0)

    def test_closed_form_thirty_db(self):
        x = np.zeros(1)
        ref = np.array([np.sqrt(65.025)])
        assert psnr(x, ref, 255.0) == pytest.approx(30.0, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            psnr(np.zeros(3), np.zeros(4), 1.0)


def two_plane_image(w, h):
    c, r = np.meshgrid(np.arange(w), np.arange(h))
    img = np.where(c < w // 2, 40.0 + 6.0 * c + 3.0 * r, 200.0 - 5.0 * c - 2.0 * r)
    return img.astype(float)


class TestCliRuns:
    def test_deterministic_interpolation_report(self, tmp_path):
        img = two_plane_image(16, 16)
        path = tmp_path / "in.pgm"
        write_pgm(img, path)
        spec_kwargs = dict(
            task="interpolate",
            image=str(path),
            missing_frac=0.9,
            seed=11,
            mu=0.01,
            max_iters=40,
        )
        r1 = run(ProblemSpec(**spec_kwargs))
        r2 = run(ProblemSpec(**spec_kwargs))
        assert r1.psnr == r2.psnr
        assert r1.objective_trace == r2.objective_trace
        assert r1.psnr > 15.0

    def test_auto_mu_matches_tradeoff_module(self, tmp_path):
        from gglr.daggrad import build_dag, gradient_field
        from gglr.gng import GnlOperator, gradient_graph
        from gglr.io import save_signal
        from gglr.tradeoff import fit_spectrum, minimize_mu
        from conftest import line_graph

        n = 24
        g = line_graph(n)
        rng = make_rng(5)
        p = g.coords[:, 0]
        clean = np.where(p < 12, p, 24.0 - p)
        y = clean + 0.4 * rng.standard_normal(n)

        gpath = tmp_path / "g.txt"
        save_graph(g, gpath)
        ypath = tmp_path / "y.txt"
        save_signal(y, ypath)
        spec = ProblemSpec(
            task="denoise", graph=str(gpath), signal=str(ypath), mu="auto",
            sigma_z=0.4, sigma_alpha=1.0, seed=0, separable="off",
        )
        report = run(spec)

        plan = build_dag(g, None)
        fld = gradient_field(plan, y)
        op = GnlOperator(
            plan, gradient_graph(plan, fld, "signal-dependent", g, sigma_alpha=1.0)
        )
        expect = minimize_mu(fit_spectrum(op, y, 0.4))
        assert report.mu_used == pytest.approx(expect, rel=1e-12)

    def test_manifold_gate_refusal_exit_code(self, tmp_path):
        g = star_graph(33)
        gpath = tmp_path / "g.txt"
        save_graph(g, gpath)
        ypath = tmp_path / "y.txt"
        save_signal(np.zeros(g.n), ypath)
        code = main(
            [
                "--task", "denoise", "--graph", str(gpath), "--signal", str(ypath),
                "--out", str(tmp_path / "report.json"),
            ]
        )
        assert code == NotManifold.exit_code
        report = Report.from_json((tmp_path / "report.json").read_text())
        assert report.status == "error"
        assert report.error["class"] == "NotManifold"

    def test_report_round_trips(self, tmp_path):
        img = two_plane_image(8, 8)
        path = tmp_path / "in.pgm"
        write_pgm(img, path)
        report = run(
            ProblemSpec(task="denoise", image=str(path), mu=0.05, max_iters=5)
        )
        back = Report.from_json(report.to_json())
        assert back.to_json() == report.to_json()

    def test_main_writes_output_files(self, tmp_path):
        img = two_plane_image(8, 8)
        path = tmp_path / "in.pgm"
        write_pgm(img, path)
        out = tmp_path / "report.json"
        restored = tmp_path / "restored.pgm"
        trace = tmp_path / "trace.csv"
        code = main(
            [
                "--task", "denoise", "--image", str(path), "--mu", "0.05",
                "--max-iters", "5", "--out", str(out),
                "--save-image", str(restored), "--trace-csv", str(trace),
                "--reference", str(path),
            ]
        )
        assert code == 0
        data = json.loads(out.read_text())
        assert data["status"] == "ok"
        assert data["psnr"] > 30.0
        assert read_pgm(restored).shape == (8, 8)
        lines = trace.read_text().splitlines()
        assert lines[0] == "iteration,objective"
        assert len(lines) == data["iterations"] + 1

    def test_config_file_with_overrides(self, tmp_path):
        img = two_plane_image(8, 8)
        path = tmp_path / "in.pgm"
        write_pgm(img, path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"task": "denoise", "image": str(path), "mu": 0.5}))
        out = tmp_path / "r.json"
        code = main(["--config", str(cfg), "--mu", "0.05", "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["mu_used"] == pytest.approx(0.05)

    def test_spec_validation_errors(self):
        with pytest.raises(InvalidSpec):
            ProblemSpec(task="sharpen", image="x.pgm").validate()
        with pytest.raises(InvalidSpec):
            ProblemSpec(task="denoise").validate()
        with pytest.raises(InvalidSpec):
            ProblemSpec(task="interpolate", image="x.pgm").validate()

    def test_missing_file_maps_to_io_exit_code(self, tmp_path):
        code = main(
            ["--task", "denoise", "--image", str(tmp_path / "absent.pgm")]
        )
        assert code == 18
