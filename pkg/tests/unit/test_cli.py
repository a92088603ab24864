import json

import pandas as pd
import pytest

from flat_tax_equilibrium import __version__
from flat_tax_equilibrium.artifacts import ArtifactStore, RunManifest
from flat_tax_equilibrium.cli import RunContext, _manifest_from_args, build_parser, main, run_command
from flat_tax_equilibrium.exceptions import InfeasibleTaxMixError, NonConvergenceError
from flat_tax_equilibrium.registry import CommandRegistry


@pytest.fixture
def stub_handler(mocker, monkeypatch):
    """Replace the calibrate handler with a mock for the duration of a test."""
    handler = mocker.Mock(return_value=0)
    monkeypatch.setitem(CommandRegistry._handlers, "calibrate", handler)
    return handler


@pytest.mark.unit
class TestParser:
    def test_global_options_and_manifest(self, tmp_path):
        args = build_parser().parse_args(
            ["--out", str(tmp_path), "--seed", "7", "--set", "gamma=4", "--threads", "2",
             "sweep", "--param", "gamma", "--from", "1", "--to", "5", "--step", "1"]
        )
        manifest = _manifest_from_args(args)

        assert manifest.command == "sweep"
        assert manifest.seed == 7
        assert manifest.threads == 2
        assert manifest.overrides == [("gamma", "4")]
        assert manifest.version == __version__
        assert manifest.args == {"param": "gamma", "start": 1.0, "stop": 5.0, "step": 1.0, "mode": "full"}

    def test_transition_rates(self):
        args = build_parser().parse_args(["transition", "--rates", "0.24,0,0.31", "--horizon", "50"])

        assert args.rates == (0.24, 0.0, 0.31)
        assert args.horizon == 50

    @pytest.mark.parametrize("rates", ["0.2,0.1", "a,b,c"])
    def test_malformed_rates(self, rates):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["transition", "--rates", rates])

    def test_sweep_requires_parameter(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["sweep", "--from", "1", "--to", "2", "--step", "1"])

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])

        assert info.value.code == 0
        assert __version__ in capsys.readouterr().out


@pytest.mark.unit
class TestExitCodes:
    def test_success_writes_manifest(self, tmp_path, stub_handler):
        assert main(["--out", str(tmp_path), "--set", "gamma=4", "calibrate"]) == 0

        (context,), _ = stub_handler.call_args
        assert isinstance(context, RunContext)
        assert context.config.gamma == 4.0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["manifest_hash"] == context.store.manifest_hash

    def test_failed_verification(self, tmp_path, stub_handler):
        stub_handler.return_value = 1

        assert main(["--out", str(tmp_path), "calibrate"]) == 1

    @pytest.mark.parametrize("override", ["gamma", "gama=3", "solver=1", "gamma=-2"])
    def test_config_errors(self, tmp_path, stub_handler, override):
        assert main(["--out", str(tmp_path), "--set", override, "calibrate"]) == 2
        stub_handler.assert_not_called()

    def test_missing_config_file(self, tmp_path, stub_handler):
        assert main(["--config", str(tmp_path / "absent.toml"), "--out", str(tmp_path), "calibrate"]) == 2

    def test_solver_failure_writes_diagnostics(self, tmp_path, stub_handler):
        stub_handler.side_effect = NonConvergenceError("Equilibrium did not converge", residual=0.3, iterations=40)

        assert main(["--out", str(tmp_path), "calibrate"]) == 3
        diagnostics = json.loads((tmp_path / "diagnostics.json").read_text())
        assert diagnostics["error"] == "NonConvergenceError"
        assert diagnostics["residual"] == 0.3
        assert diagnostics["iterations"] == 40

    def test_infeasible_tax_mix(self, tmp_path, stub_handler):
        stub_handler.side_effect = InfeasibleTaxMixError("No revenue-preserving tau_L", free_rate="tau_L", target=0.4)

        assert main(["--out", str(tmp_path), "calibrate"]) == 4
        diagnostics = json.loads((tmp_path / "diagnostics.json").read_text())
        assert diagnostics["free_rate"] == "tau_L"
        assert diagnostics["command"] == "calibrate"

    def test_unknown_command_in_manifest(self, tmp_path):
        assert run_command(RunManifest(command="nope", output_dir=str(tmp_path))) == 2


@pytest.mark.unit
class TestPlotCommand:
    def test_unknown_figure(self, tmp_path):
        assert main(["--out", str(tmp_path), "plot", "--figure", "fig99"]) == 2

    def test_unknown_figure_stops_before_building(self, tmp_path):
        earlier = ArtifactStore(tmp_path, RunManifest(command="equilibrium", output_dir=str(tmp_path)))
        earlier.write_csv("top_shares.csv", pd.DataFrame({"fraction": [0.01], "share": [0.357]}))

        assert main(["--out", str(tmp_path), "plot", "--figure", "fig2b", "--figure", "fig99"]) == 2
        assert not (tmp_path / "figures" / "fig2b.csv").exists()

    def test_all_without_artifacts(self, tmp_path):
        assert main(["--out", str(tmp_path), "plot"]) == 2

    def test_builds_available_figures(self, tmp_path):
        earlier = ArtifactStore(tmp_path, RunManifest(command="equilibrium", output_dir=str(tmp_path)))
        earlier.write_csv("top_shares.csv", pd.DataFrame({"fraction": [0.01, 0.5], "share": [0.357, 0.965]}))

        assert main(["--out", str(tmp_path), "plot"]) == 0

        written = ArtifactStore(tmp_path).read_csv("figures/fig2b.csv")
        assert written["fraction"].tolist() == [0.5, 0.01]
        assert not (tmp_path / "figures" / "fig2a.csv").exists()
