"""CLI behavior: commands, outputs and exit codes."""

from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

from dacov.cli import main
from dacov.covariance import read_covariance_records
from dacov.geometry import save_scene
from dacov.matching import Homography
from dacov.scoremap import save_score_map
from dacov.synth import NoiseSpec, synth_blob_scoremap, synth_multiview_scene


@pytest.fixture
def blob_map_path(tmp_path):
    noisy, _ = synth_blob_scoremap((16.0, 16.0), 3.0, 0.0, (33, 33), seed=0)
    path = tmp_path / "blob.npy"
    save_score_map(noisy, path)
    return path


class TestExtract:
    def test_full_method_near_isotropic_blob(self, tmp_path, blob_map_path):
        out = tmp_path / "records.csv"
        code = main(["extract", "--map", str(blob_map_path), "--method", "full",
                     "--nms-radius", "4", "--min-score", "0.5", "--out", str(out)])
        assert code == 0
        records = read_covariance_records(out)
        assert len(records) == 1
        r = records[0]
        assert (r.x, r.y) == (16.0, 16.0)
        assert abs(r.s12) / max(r.s11, r.s22) < 1e-6
        assert r.s11 == pytest.approx(r.s22, rel=1e-6)

    def test_iso_method_inverse_peak(self, tmp_path, blob_map_path):
        out = tmp_path / "records.json"
        code = main(["extract", "--map", str(blob_map_path), "--method", "iso",
                     "--nms-radius", "4", "--min-score", "0.5", "--out", str(out)])
        assert code == 0
        r = read_covariance_records(out)[0]
        assert r.s11 == pytest.approx(1.0, rel=1e-9)  # peak score is 1
        assert r.s12 == 0.0

    def test_missing_file_exit_2(self, tmp_path, capsys):
        code = main(["extract", "--map", str(tmp_path / "nope.npy"), "--out", str(tmp_path / "o.csv")])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestEvalMma:
    def make_records(self, tmp_path, blob=False):
        rng = np.random.default_rng(0)
        n = 40
        from dacov.covariance import CovarianceRecord, write_covariance_records

        records = []
        for i in range(n):
            s = float(rng.uniform(0.5, 4.0))
            records.append(CovarianceRecord(id=i, x=float(rng.uniform(5, 60)), y=float(rng.uniform(5, 60)),
                                            score=1.0, s11=s, s12=0.0, s22=s, method="iso"))
        path_a = tmp_path / "a.csv"
        path_b = tmp_path / "b.csv"
        write_covariance_records(records, path_a)
        write_covariance_records(records, path_b)
        return path_a, path_b, n

    def test_identity_homography_identical_features(self, tmp_path):
        path_a, path_b, n = self.make_records(tmp_path)
        hpath = tmp_path / "H.txt"
        Homography(h=np.eye(3)).to_file(hpath)
        mpath = tmp_path / "matches.txt"
        mpath.write_text("\n".join(f"{i} {i}" for i in range(n)))
        out = tmp_path / "mma.csv"
        code = main(["eval-mma", "--records-a", str(path_a), "--records-b", str(path_b),
                     "--homography", str(hpath), "--matches", str(mpath),
                     "--bins", "4", "--out-table", str(out),
                     "--out-summary", str(tmp_path / "mma.json")])
        assert code == 0
        rows = out.read_text().strip().splitlines()[1:]
        assert all(row.split(",")[-1] == "1.0" for row in rows)

    def test_more_bins_than_matches_exit_2(self, tmp_path):
        path_a, path_b, n = self.make_records(tmp_path)
        hpath = tmp_path / "H.txt"
        Homography(h=np.eye(3)).to_file(hpath)
        mpath = tmp_path / "matches.txt"
        mpath.write_text("0 0\n1 1\n")
        code = main(["eval-mma", "--records-a", str(path_a), "--records-b", str(path_b),
                     "--homography", str(hpath), "--matches", str(mpath),
                     "--bins", "10", "--out-table", str(tmp_path / "mma.csv")])
        assert code == 2

    def test_descriptor_matching_path(self, tmp_path):
        path_a, path_b, n = self.make_records(tmp_path)
        rng = np.random.default_rng(1)
        desc = rng.standard_normal((n, 16))
        np.save(tmp_path / "da.npy", desc)
        np.save(tmp_path / "db.npy", desc)
        hpath = tmp_path / "H.txt"
        Homography(h=np.eye(3)).to_file(hpath)
        code = main(["eval-mma", "--records-a", str(path_a), "--records-b", str(path_b),
                     "--homography", str(hpath), "--desc-a", str(tmp_path / "da.npy"),
                     "--desc-b", str(tmp_path / "db.npy"), "--bins", "4",
                     "--out-table", str(tmp_path / "mma.csv")])
        assert code == 0


class TestEvalPose:
    def test_noiseless_scene(self, tmp_path, capsys):
        scene = synth_multiview_scene(n_tracks=30, seed=1)
        spath = tmp_path / "scene.json"
        save_scene(scene, spath)
        out = tmp_path / "report.json"
        code = main(["eval-pose", "--scene", str(spath), "--mode", "full2d", "--out", str(out)])
        assert code == 0
        assert out.exists()
        assert "frames_ok=1" in capsys.readouterr().out

    def test_underdetermined_frame_continues(self, tmp_path):
        scene = synth_multiview_scene(n_tracks=5, seed=2)
        spath = tmp_path / "scene.json"
        save_scene(scene, spath)
        code = main(["eval-pose", "--scene", str(spath), "--mode", "none",
                     "--out", str(tmp_path / "r.json")])
        assert code == 0

    def test_malformed_scene_exit_2(self, tmp_path):
        spath = tmp_path / "scene.json"
        spath.write_text("{}")
        code = main(["eval-pose", "--scene", str(spath), "--out", str(tmp_path / "r.json")])
        assert code == 2


class TestValidationCommands:
    def test_validate_epnpu_small(self, tmp_path):
        code = main(["validate-epnpu", "--trials", "10", "--points", "20",
                     "--seed", "0", "--out", str(tmp_path / "v.json")])
        assert code == 0
        assert (tmp_path / "v.json").exists()

    def test_crlb_check_small(self, tmp_path):
        code = main(["crlb-check", "--trials", "2000", "--noise-sigma", "0.1",
                     "--blob-sigma", "3.0", "--tolerance", "0.3",
                     "--out", str(tmp_path / "c.json")])
        assert code == 0

    def test_crlb_check_fails_with_impossible_tolerance(self):
        code = main(["crlb-check", "--trials", "1000", "--noise-sigma", "0.1",
                     "--blob-sigma", "3.0", "--tolerance", "1e-6"])
        assert code == 1


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "dacov.cli", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "extract" in proc.stdout

    def test_usage_error_exit_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "dacov.cli", "no-such-command"], capture_output=True, text=True
        )
        assert proc.returncode == 2

    def test_dac_log_env(self, tmp_path):
        noisy, _ = synth_blob_scoremap((16.0, 16.0), 3.0, 0.0, (33, 33), seed=0)
        path = tmp_path / "blob.npy"
        save_score_map(noisy, path)
        proc = subprocess.run(
            [sys.executable, "-m", "dacov.cli", "extract", "--map", str(path),
             "--min-score", "0.5", "--out", str(tmp_path / "r.csv")],
            capture_output=True, text=True, env={"DAC_LOG": "INFO", "PATH": "/usr/bin:/bin"},
        )
        assert proc.returncode == 0
        assert "extracting" in proc.stderr
