import json

import pytest

from flat_tax_equilibrium.cli import main


@pytest.mark.integration
class TestCalibrateCommand:
    def test_outputs_are_reproducible(self, tmp_path):
        assert main(["--out", str(tmp_path), "--seed", "3", "calibrate"]) == 0
        first = (tmp_path / "calibration.json").read_bytes()
        first_manifest = (tmp_path / "manifest.json").read_bytes()

        assert main(["--out", str(tmp_path), "--seed", "3", "calibrate"]) == 0
        assert (tmp_path / "calibration.json").read_bytes() == first
        assert (tmp_path / "manifest.json").read_bytes() == first_manifest

    def test_artifact_traces_to_manifest(self, tmp_path):
        assert main(["--out", str(tmp_path), "--set", "entrepreneur_share=0.2", "calibrate"]) == 0

        manifest = json.loads((tmp_path / "manifest.json").read_text())
        calibration = json.loads((tmp_path / "calibration.json").read_text())
        assert calibration["manifest_hash"] == manifest["manifest_hash"]
        assert manifest["overrides"] == [["entrepreneur_share", "0.2"]]
        assert sum(calibration["process"]["stationary_dist"][1:]) == pytest.approx(0.2, abs=1e-6)

    def test_infeasible_moments_exit_code(self, tmp_path):
        assert main(["--out", str(tmp_path), "--set", "kurtosis=12", "calibrate"]) == 3

        diagnostics = json.loads((tmp_path / "diagnostics.json").read_text())
        assert diagnostics["error"] == "InfeasibleMomentsError"
        assert diagnostics["gradient_norm"] > 0.0
