import pandas as pd
import pytest

import flat_tax_equilibrium  # noqa: F401  (registers the default commands and figures)
from flat_tax_equilibrium.exceptions import ConfigError
from flat_tax_equilibrium.plot_data import frontier_panel, sweep_panel, transition_panel
from flat_tax_equilibrium.registry import CommandRegistry, FigureRegistry


def _stub_command(context):
    return 0


def _stub_figure(store, figure_id):
    return pd.DataFrame()


def test_registry_singleton():
    """Test that both registries are singletons."""
    assert CommandRegistry() is CommandRegistry()
    assert FigureRegistry() is FigureRegistry()


def test_default_commands_registered():
    names = [name for name, _ in CommandRegistry.commands()]

    assert names == ["calibrate", "equilibrium", "frontier", "optimize", "sweep", "transition", "verify", "plot"]
    assert all(help_text for _, help_text in CommandRegistry.commands())


def test_register_command():
    """Test registering and replacing a command handler."""
    original_handlers = CommandRegistry._handlers.copy()
    original_help = CommandRegistry._help.copy()

    try:
        CommandRegistry.register_command("stub", _stub_command, "Stub command")

        assert CommandRegistry.get_handler("stub") is _stub_command
        assert ("stub", "Stub command") in CommandRegistry.commands()

        def replacement(context):
            return 1

        CommandRegistry.register_command("stub", replacement)
        assert CommandRegistry.get_handler("stub") is replacement
    finally:
        CommandRegistry._handlers = original_handlers
        CommandRegistry._help = original_help


def test_unknown_command():
    with pytest.raises(ConfigError, match="Unknown command 'nope'"):
        CommandRegistry.get_handler("nope")


@pytest.mark.parametrize(
    "figure_id, builder",
    [
        ("fig4a", frontier_panel),
        ("fig4f", frontier_panel),
        ("fig5", sweep_panel),
        ("fig10", sweep_panel),
        ("fig11c", transition_panel),
    ],
)
def test_default_figure_builders(figure_id, builder):
    assert FigureRegistry.get_builder(figure_id) is builder


def test_figure_ids_cover_every_panel():
    figure_ids = FigureRegistry.figure_ids()

    for expected in ["fig2a", "fig2b", "fig4a", "fig4f", "fig5", "fig6", "fig7c", "fig8", "fig9", "fig10", "fig11f"]:
        assert expected in figure_ids
    assert len(figure_ids) == len(set(figure_ids))


@pytest.mark.parametrize("figure_id", ["fig4g", "fig1", "fig11", "fig3a"])
def test_unknown_figure(figure_id):
    with pytest.raises(ConfigError, match="Unknown figure"):
        FigureRegistry.get_builder(figure_id)
    assert FigureRegistry.find_builder(figure_id) is None


def test_exact_id_takes_precedence_over_predicate():
    """Test that an exact registration wins over a predicate family."""
    original_builders = FigureRegistry._builders.copy()
    original_ids = FigureRegistry._figure_ids.copy()

    try:
        FigureRegistry.register_figure("fig4a", _stub_figure)

        assert FigureRegistry.get_builder("fig4a") is _stub_figure
        assert FigureRegistry.get_builder("fig4b") is frontier_panel
    finally:
        FigureRegistry._builders = original_builders
        FigureRegistry._figure_ids = original_ids


def test_register_figure_with_predicate():
    original_predicates = FigureRegistry._predicate_builders.copy()
    original_ids = FigureRegistry._figure_ids.copy()

    try:
        FigureRegistry.register_figure_with_predicate(
            lambda figure_id: figure_id.startswith("extra"), _stub_figure, ["extra1", "extra2"]
        )

        assert FigureRegistry.get_builder("extra7") is _stub_figure
        assert FigureRegistry.figure_ids()[-2:] == ["extra1", "extra2"]
    finally:
        FigureRegistry._predicate_builders = original_predicates
        FigureRegistry._figure_ids = original_ids
