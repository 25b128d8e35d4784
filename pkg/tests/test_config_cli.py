import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from coherentsets import ConfigError, ExperimentConfig
from coherentsets.reporting import read_csv_grid, write_csv_grid, write_pgm


def minimal_fp_config(**overrides):
    cfg = {
        "version": 1,
        "flow": {"kind": "quadruple_gyre"},
        "grid": {"d": 2, "N": 3, "M": 6, "lengths": [2.0, 2.0]},
        "fp": {"epsilon": 0.05, "t0": 0.0, "t1": 0.5, "steps": 5},
        "num_singular": 3,
        "plot_resolution": 12,
    }
    cfg.update(overrides)
    return cfg


class TestConfigParsing:
    def test_minimal_valid(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(minimal_fp_config()))
        cfg = ExperimentConfig.load(p)
        assert cfg.grid.N == 3
        assert cfg.fp.scheme == "etdrk4"

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            ExperimentConfig.parse(minimal_fp_config(typo_section={}))

    def test_unknown_nested_key(self):
        raw = minimal_fp_config()
        raw["fp"]["step"] = 5
        with pytest.raises(ConfigError, match="unknown keys in fp"):
            ExperimentConfig.parse(raw)

    def test_unknown_flow_kind(self):
        raw = minimal_fp_config(flow={"kind": "vortex_soup"})
        with pytest.raises(ConfigError, match="flow kind"):
            ExperimentConfig.parse(raw)

    def test_version_required(self):
        raw = minimal_fp_config()
        raw["version"] = 99
        with pytest.raises(ConfigError, match="version"):
            ExperimentConfig.parse(raw)
        del raw["version"]
        with pytest.raises(ConfigError, match="missing"):
            ExperimentConfig.parse(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            ExperimentConfig.load(tmp_path / "none.json")

    def test_extraction_modes(self):
        raw = minimal_fp_config(extraction={"mode": "nearest"})
        with pytest.raises(ConfigError, match="extraction mode"):
            ExperimentConfig.parse(raw)

    def test_vorticity_ic_validation(self):
        raw = minimal_fp_config(
            flow={"kind": "vorticity", "ic": {"kind": "random"},
                  "t_start": 0, "t_end": 1, "steps": 5}
        )
        with pytest.raises(ConfigError, match="missing keys in flow.ic"):
            ExperimentConfig.parse(raw)


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "coherentsets.cli", *args],
        capture_output=True,
        text=True,
    )


class TestCli:
    def test_missing_flow_file_reports_path(self, tmp_path):
        cfg = minimal_fp_config(flow={"kind": "gridded", "path": "absent_flow.json"})
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        r = run_cli("run-fp", "--config", str(cfg_path), "--out", str(out))
        assert r.returncode != 0
        err = json.loads((out / "error.json").read_text())
        assert "absent_flow.json" in err["error"]["message"]

    def test_run_fp_writes_versioned_metadata(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(minimal_fp_config()))
        out = tmp_path / "out"
        r = run_cli("run-fp", "--config", str(cfg_path), "--out", str(out))
        assert r.returncode == 0, r.stderr
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["schema_version"] == 1
        assert meta["kind"] == "fp"
        assert len(meta["results"]["singular_values"]) == 3
        assert meta["results"]["singular_values"][0] == pytest.approx(1.0, abs=1e-6)
        assert (out / "right_vector_2.csv").exists()
        assert (out / "right_vector_2.pgm").exists()
        assert (out / "right_vector_2.png").exists()
        assert (out / "singular_values.png").exists()
        assert (out / "transfer_matrix.bin").exists()

    def test_run_fp_deterministic_artifacts(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(minimal_fp_config()))
        r1 = run_cli("run-fp", "--config", str(cfg_path), "--out", str(tmp_path / "a"))
        r2 = run_cli("run-fp", "--config", str(cfg_path), "--out", str(tmp_path / "b"))
        assert r1.returncode == 0 and r2.returncode == 0
        for name in ("right_vector_2.csv", "right_vector_2.pgm", "transfer_matrix.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_run_ulam_identity_flow(self, tmp_path):
        cfg = {
            "version": 1,
            "flow": {"kind": "constant", "velocity": [0.0, 0.0], "lengths": [2.0, 2.0]},
            "ulam": {"boxes_per_axis": 6, "samples_per_box": 4, "seed": 0,
                     "sampling": "subgrid", "t0": 0.0, "t1": 1.0},
            "num_singular": 4,
        }
        cfg_path = tmp_path / "u.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        r = run_cli("run-ulam", "--config", str(cfg_path), "--out", str(out))
        assert r.returncode == 0, r.stderr
        meta = json.loads((out / "metadata.json").read_text())
        # diffusion-free identity dynamics: degenerate sigma_2 = 1
        assert meta["results"]["singular_values"][1] == pytest.approx(1.0, abs=1e-12)
        assert (out / "transition_matrix.txt").exists()

    def test_run_ulam_deterministic(self, tmp_path, quad_gyre):
        cfg = {
            "version": 1,
            "flow": {"kind": "quadruple_gyre"},
            "ulam": {"boxes_per_axis": 6, "samples_per_box": 5, "seed": 3,
                     "traj_step": 0.05, "t0": 0.0, "t1": 0.4},
            "num_singular": 3,
        }
        cfg_path = tmp_path / "u.json"
        cfg_path.write_text(json.dumps(cfg))
        r1 = run_cli("run-ulam", "--config", str(cfg_path), "--out", str(tmp_path / "a"))
        r2 = run_cli("run-ulam", "--config", str(cfg_path), "--out", str(tmp_path / "b"))
        assert r1.returncode == 0, r1.stderr
        assert (tmp_path / "a" / "transition_matrix.txt").read_bytes() == (
            tmp_path / "b" / "transition_matrix.txt"
        ).read_bytes()

    def test_run_ns_zero_ic(self, tmp_path):
        cfg = {
            "version": 1,
            "flow": {"kind": "vorticity", "ic": {"kind": "zero"}, "nu": 0.01,
                     "resolution": 16, "t_start": 0.0, "t_end": 0.5, "steps": 10,
                     "snapshot_every": 5},
        }
        cfg_path = tmp_path / "ns.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        r = run_cli("run-ns", "--config", str(cfg_path), "--out", str(out))
        assert r.returncode == 0, r.stderr
        raw = np.frombuffer((out / "flow.bin").read_bytes(), dtype=np.float64)
        assert np.abs(raw).max() == 0.0

    def test_run_ns_reproducible_bytes(self, tmp_path):
        cfg = {
            "version": 1,
            "flow": {"kind": "vorticity", "ic": {"kind": "random", "seed": 5},
                     "nu": 0.02, "resolution": 16, "t_start": 0.0, "t_end": 0.5,
                     "steps": 10, "snapshot_every": 5},
        }
        cfg_path = tmp_path / "ns.json"
        cfg_path.write_text(json.dumps(cfg))
        r1 = run_cli("run-ns", "--config", str(cfg_path), "--out", str(tmp_path / "a"))
        r2 = run_cli("run-ns", "--config", str(cfg_path), "--out", str(tmp_path / "b"))
        assert r1.returncode == 0, r1.stderr
        assert (tmp_path / "a" / "flow.bin").read_bytes() == (
            tmp_path / "b" / "flow.bin"
        ).read_bytes()
        assert json.loads((tmp_path / "a" / "flow.json").read_text()) == json.loads(
            (tmp_path / "b" / "flow.json").read_text()
        )

    def test_ns_to_fp_pipeline(self, tmp_path):
        ns_cfg = {
            "version": 1,
            "flow": {"kind": "vorticity", "ic": {"kind": "three_vortex"}, "nu": 0.001,
                     "resolution": 32, "t_start": 0.0, "t_end": 1.0, "steps": 20,
                     "snapshot_every": 2},
        }
        (tmp_path / "ns.json").write_text(json.dumps(ns_cfg))
        r = run_cli("run-ns", "--config", str(tmp_path / "ns.json"),
                    "--out", str(tmp_path / "ns_out"))
        assert r.returncode == 0, r.stderr
        L = 2 * np.pi
        fp_cfg = {
            "version": 1,
            "flow": {"kind": "gridded", "path": "ns_out/flow.json"},
            "grid": {"d": 2, "N": 9, "M": 16, "lengths": [L, L]},
            "fp": {"epsilon": 0.01, "t0": 0.0, "t1": 1.0, "steps": 10},
            "num_singular": 3,
            "plot_resolution": 16,
        }
        (tmp_path / "fp.json").write_text(json.dumps(fp_cfg))
        r = run_cli("run-fp", "--config", str(tmp_path / "fp.json"),
                    "--out", str(tmp_path / "fp_out"))
        assert r.returncode == 0, r.stderr
        meta = json.loads((tmp_path / "fp_out" / "metadata.json").read_text())
        assert meta["results"]["singular_values"][0] == pytest.approx(1.0, abs=1e-6)

    def test_extract_and_validate_sde(self, tmp_path):
        cfg = minimal_fp_config(
            extraction={"mode": "threshold", "theta": 0.0},
            sde={"particles": 2000, "dt": 0.05, "seed": 2},
        )
        cfg["fp"] = {"epsilon": 0.05, "t0": 0.0, "t1": 1.0, "steps": 10}
        cfg_path = tmp_path / "e.json"
        cfg_path.write_text(json.dumps(cfg))
        r = run_cli("extract", "--config", str(cfg_path), "--out", str(tmp_path / "ex"))
        assert r.returncode == 0, r.stderr
        meta = json.loads((tmp_path / "ex" / "metadata.json").read_text())
        assert meta["results"]["rho"] - 1.0 <= meta["results"]["sigma2"] + 1e-6
        assert (tmp_path / "ex" / "mask_a0.pgm").exists()
        assert (tmp_path / "ex" / "mask_a0.png").exists()
        r = run_cli("validate-sde", "--config", str(cfg_path),
                    "--out", str(tmp_path / "val"))
        assert r.returncode == 0, r.stderr
        meta = json.loads((tmp_path / "val" / "metadata.json").read_text())
        assert 0.0 <= meta["results"]["kappa"] <= 1.0
        assert meta["results"]["kappa_stderr"] > 0

    def test_run_fp_3d_artifacts(self, tmp_path):
        cfg = {
            "version": 1,
            "flow": {"kind": "octuple_gyre"},
            "grid": {"d": 3, "N": 3, "M": 6, "lengths": [2.0, 2.0, 2.0]},
            "fp": {"epsilon": 0.1, "t0": 0.0, "t1": 0.5, "steps": 5},
            "num_singular": 2,
            "plot_resolution": 6,
        }
        cfg_path = tmp_path / "c3.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        r = run_cli("run-fp", "--config", str(cfg_path), "--out", str(out))
        assert r.returncode == 0, r.stderr
        vals, lengths = read_csv_grid(out / "right_vector_2.csv")
        assert vals.shape == (6, 6, 6)
        assert lengths == (2.0, 2.0, 2.0)
        for sl in ("x-slice", "y-slice", "z-slice"):
            assert (out / f"right_vector_2_{sl}.pgm").exists()
        assert (out / "right_vector_2.png").exists()

    def test_extract_line_search(self, tmp_path):
        cfg = minimal_fp_config(extraction={"mode": "line_search", "n_quantiles": 16})
        cfg_path = tmp_path / "ls.json"
        cfg_path.write_text(json.dumps(cfg))
        r = run_cli("extract", "--config", str(cfg_path), "--out", str(tmp_path / "ls"))
        assert r.returncode == 0, r.stderr
        meta = json.loads((tmp_path / "ls" / "metadata.json").read_text())
        assert meta["results"]["mode"] == "line_search"
        assert meta["results"]["rho"] - 1.0 <= meta["results"]["sigma2"] + 1e-6

    def test_extract_kmeans(self, tmp_path):
        cfg = minimal_fp_config(
            extraction={"mode": "kmeans", "k": 2, "n_vectors": 2, "seed": 1,
                        "restarts": 3},
        )
        cfg_path = tmp_path / "k.json"
        cfg_path.write_text(json.dumps(cfg))
        r = run_cli("extract", "--config", str(cfg_path), "--out", str(tmp_path / "km"))
        assert r.returncode == 0, r.stderr
        meta = json.loads((tmp_path / "km" / "metadata.json").read_text())
        assert sum(meta["results"]["cluster_sizes"]) == 12 * 12

    def test_threads_flag_same_results(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(minimal_fp_config()))
        r1 = run_cli("run-fp", "--config", str(cfg_path), "--out",
                     str(tmp_path / "t1"), "--threads", "1")
        r2 = run_cli("run-fp", "--config", str(cfg_path), "--out",
                     str(tmp_path / "t2"), "--threads", "4")
        assert r1.returncode == 0 and r2.returncode == 0
        assert (tmp_path / "t1" / "transfer_matrix.bin").read_bytes() == (
            tmp_path / "t2" / "transfer_matrix.bin"
        ).read_bytes()


class TestReportingFormats:
    def test_csv_grid_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        vals = rng.standard_normal((6, 6))
        path = write_csv_grid(tmp_path / "g.csv", vals, (2.0, 3.0), N=5)
        back, lengths = read_csv_grid(path)
        assert np.array_equal(back, vals)
        assert lengths == (2.0, 3.0)

    def test_csv_x_fastest(self, tmp_path):
        vals = np.arange(9.0).reshape(3, 3)  # vals[ix, iy]
        path = write_csv_grid(tmp_path / "g.csv", vals, (1.0, 1.0))
        lines = path.read_text().strip().splitlines()[1:]
        first_x = [float(line.split(",")[0]) for line in lines[:3]]
        assert first_x == [0.0, 1.0 / 3.0, 2.0 / 3.0]

    def test_pgm_format(self, tmp_path):
        vals = np.linspace(-1, 1, 64).reshape(8, 8)
        path = write_pgm(tmp_path / "f.pgm", vals)
        data = path.read_bytes()
        assert data.startswith(b"P5\n8 8\n255\n")
        assert len(data) == len(b"P5\n8 8\n255\n") + 64

    def test_shipped_configs_parse(self):
        cfg_dir = Path(__file__).resolve().parent.parent / "configs"
        for f in sorted(cfg_dir.glob("*.json")):
            ExperimentConfig.load(f)
