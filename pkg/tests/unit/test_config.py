import pytest

from flat_tax_equilibrium import constants as C
from flat_tax_equilibrium.config import (
    RunConfig,
    SolverSettings,
    apply_overrides,
    load_config,
    parse_override,
)
from flat_tax_equilibrium.exceptions import ConfigError
from flat_tax_equilibrium.key_path import coerce_override, walk_key_path


@pytest.mark.unit
class TestLoadConfig:
    def test_defaults_are_baseline(self):
        config = load_config()

        assert config.gamma == C.BASELINE_GAMMA
        assert config.tau_K == C.BASELINE_TAU_K
        assert config.solver == SolverSettings()
        assert config.params().rates.as_tuple() == (C.BASELINE_TAU_L, C.BASELINE_TAU_K, C.BASELINE_TAU_C)
        assert config.targets().entrepreneur_share == pytest.approx(C.BASELINE_ENTREPRENEUR_SHARE)

    def test_toml_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("gamma = 4.0\nsigma = 0.3\n\n[solver]\ngrid_points = 1024\nvalue_tol = 1e-10\n")

        config = load_config(path)
        assert config.gamma == 4.0
        assert config.sigma == 0.3
        assert config.solver.grid_points == 1024
        assert config.solver.value_tol == 1e-10
        assert config.solver.grid_spec().n_points == 1024

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("gamma: 2.5\nsolver:\n  transition_horizon: 40\n")

        config = load_config(path)
        assert config.gamma == 2.5
        assert config.solver.transition_horizon == 40

    def test_entrepreneur_share_in_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("entrepreneur_share = 0.2\npi_ew = 0.03\n")

        config = load_config(path)
        assert config.pi_we == pytest.approx(0.2 * 0.03 / 0.8)
        assert config.targets().entrepreneur_share == pytest.approx(0.2)

    def test_share_and_pi_we_conflict(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("entrepreneur_share = 0.2\npi_we = 0.01\n")

        with pytest.raises(ConfigError, match="either pi_we or entrepreneur_share"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.toml")

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{}")

        with pytest.raises(ConfigError, match="Unsupported config format"):
            load_config(path)

    def test_unparseable_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("gamma = = 3\n")

        with pytest.raises(ConfigError, match="Cannot parse"):
            load_config(path)

    def test_non_table_yaml(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")

        with pytest.raises(ConfigError, match="table of keys"):
            load_config(path)

    @pytest.mark.parametrize(
        "overrides",
        [
            [("gamma", "-1")],
            [("tau_L", "1.5")],
            [("kurtosis", "0.5")],
            [("solver.grid_points", "8")],
        ],
    )
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError, match="Invalid configuration"):
            load_config(overrides=overrides)

    def test_unknown_top_level_key_in_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("gama = 3.0\n")

        with pytest.raises(ConfigError, match="Invalid configuration"):
            load_config(path)


@pytest.mark.unit
class TestOverrides:
    def test_override_scalars_and_nested(self):
        config = load_config(overrides=[("gamma", "4.5"), ("solver.grid_points", "8192")])

        assert config.gamma == 4.5
        assert config.solver.grid_points == 8192

    def test_exponent_without_dot_coerced_by_field(self):
        config = load_config(overrides=[("solver.value_tol", "1e-10")])

        assert config.solver.value_tol == 1e-10

    def test_override_beats_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("gamma = 4.0\n")

        assert load_config(path, [("gamma", "5")]).gamma == 5.0

    def test_entrepreneur_share_replaces_pi_we(self):
        data = apply_overrides({"pi_we": 0.01}, [("entrepreneur_share", "0.25")])

        assert "pi_we" not in data
        config = RunConfig.model_validate(data)
        assert config.targets().entrepreneur_share == pytest.approx(0.25)

    def test_overrides_do_not_mutate_input(self):
        data = {"solver": {"grid_points": 1024}}
        apply_overrides(data, [("solver.grid_points", "2048")])

        assert data == {"solver": {"grid_points": 1024}}

    @pytest.mark.parametrize(
        "key, error_pattern",
        [
            ("gama", "Unknown config key 'gama'"),
            ("solver.grid", "Unknown config key 'solver.grid'"),
            ("solver", "is a table"),
            ("gamma.value", "'gamma' is not a table"),
            ("solver..grid_points", "Empty segment"),
        ],
    )
    def test_invalid_paths(self, key, error_pattern):
        with pytest.raises(ConfigError, match=error_pattern):
            load_config(overrides=[(key, "1")])

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("gamma=4", ("gamma", "4")),
            (" solver.value_tol = 1e-9 ", ("solver.value_tol", "1e-9")),
            ("a=b=c", ("a", "b=c")),
        ],
    )
    def test_parse_override(self, text, expected):
        assert parse_override(text) == expected

    @pytest.mark.parametrize("text", ["gamma", "=4", ""])
    def test_parse_override_rejects_malformed(self, text):
        with pytest.raises(ConfigError, match="key=value"):
            parse_override(text)


@pytest.mark.unit
class TestKeyPath:
    def test_leaf_field(self):
        field = walk_key_path(RunConfig, ["solver", "value_tol"])

        assert field.annotation is float

    def test_empty_path(self):
        with pytest.raises(ConfigError, match="Empty segment"):
            walk_key_path(RunConfig, [])

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("4", 4),
            ("4.5", 4.5),
            ("true", True),
            ("1e-10", "1e-10"),
            ("", ""),
        ],
    )
    def test_coerce_override(self, text, expected):
        assert coerce_override(text) == expected

    def test_coerce_rejects_collections(self):
        with pytest.raises(ConfigError, match="must be a scalar"):
            coerce_override("[1, 2]")
