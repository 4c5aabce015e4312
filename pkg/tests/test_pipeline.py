"""Scene files and the end-to-end pose-evaluation pipeline."""

from __future__ import annotations

import numpy as np
import pytest

from dacov.geometry import evaluate_scene, load_scene, save_scene
from dacov.synth import NoiseSpec, synth_multiview_scene

MIXTURE = NoiseSpec(
    kind="mixture",
    components=(
        (0.7, NoiseSpec(kind="iso_gauss", sigma=0.3)),
        (0.3, NoiseSpec(kind="aniso_gauss", sigma_x=4.0, sigma_y=0.3, theta=0.7)),
    ),
)


class TestSceneIo:
    def test_round_trip(self, tmp_path):
        scene = synth_multiview_scene(n_tracks=10, seed=0, noise_2d=MIXTURE)
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded.query_frames == scene.query_frames
        assert len(loaded.tracks) == 10
        assert np.allclose(loaded.frames[0].R, scene.frames[0].R)
        o0 = loaded.tracks[0].observations[0]
        s0 = scene.tracks[0].observations[0]
        assert np.allclose(o0.uv, s0.uv)
        assert o0.cov == s0.cov

    def test_malformed_scene_rejected(self, tmp_path):
        path = tmp_path / "scene.json"
        path.write_text('{"camera": {"fx": 1.0}}')
        with pytest.raises(ValueError, match="malformed"):
            load_scene(path)

    def test_missing_scene_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_scene(tmp_path / "none.json")


class TestEvaluateScene:
    def test_noiseless_scene_any_mode_near_exact(self):
        scene = synth_multiview_scene(n_tracks=30, seed=1)
        for mode in ("none", "iso2d", "full2d", "full2d+3d"):
            report = evaluate_scene(scene, mode=mode)
            assert len(report.ok_frames) == 1
            frame = report.ok_frames[0]
            assert frame.e_rot_deg < 1e-5
            assert frame.e_t < 1e-6

    def test_five_correspondences_flagged_not_fatal(self):
        scene = synth_multiview_scene(n_tracks=5, seed=2)
        report = evaluate_scene(scene, mode="full2d")
        assert report.frames[0].status == "failed"
        assert "5" in report.frames[0].reason
        agg = report.aggregate()
        assert agg["n_failed"] == 1
        assert agg["mean_e_rot_deg"] is None

    def test_full_mode_beats_none_on_average(self):
        totals = {"none": np.zeros(2), "full2d": np.zeros(2)}
        for seed in range(25):
            scene = synth_multiview_scene(n_tracks=40, seed=seed, noise_2d=MIXTURE)
            for mode in totals:
                report = evaluate_scene(scene, mode=mode)
                frame = report.ok_frames[0]
                totals[mode] += (frame.e_rot_deg, frame.e_t)
        assert totals["full2d"][0] < totals["none"][0]
        assert totals["full2d"][1] < totals["none"][1]

    def test_report_serializes(self, tmp_path):
        scene = synth_multiview_scene(n_tracks=20, seed=3, noise_2d=MIXTURE)
        report = evaluate_scene(scene, mode="iso2d")
        report.to_json(tmp_path / "report.json")
        text = (tmp_path / "report.json").read_text()
        assert '"mode": "iso2d"' in text
        assert '"cumulative"' in text

    def test_unknown_mode(self):
        scene = synth_multiview_scene(n_tracks=10, seed=4)
        with pytest.raises(ValueError):
            evaluate_scene(scene, mode="everything")
