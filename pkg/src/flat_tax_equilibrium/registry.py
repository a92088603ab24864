from logging import getLogger
from typing import Any, Callable, ClassVar, Dict, List, Optional, Tuple

from flat_tax_equilibrium.exceptions import ConfigError

logger = getLogger(__name__)


class CommandRegistry:
    """
    Registry of CLI command handlers

    A handler takes the run context and returns an exit status. It uses a
    singleton pattern so the CLI and tests see the same registrations.
    """

    _instance = None

    _handlers: ClassVar[Dict[str, Callable[..., int]]] = {}
    _help: ClassVar[Dict[str, str]] = {}

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    @classmethod
    def register_command(cls, name: str, handler: Callable[..., int], help_text: str = "") -> None:
        """Register a handler for a command name"""
        if name in cls._handlers and cls._handlers[name] is not handler:
            logger.debug(f"Replacing handler for command '{name}'")
        cls._handlers[name] = handler
        cls._help[name] = help_text

    @classmethod
    def get_handler(cls, name: str) -> Callable[..., int]:
        try:
            return cls._handlers[name]
        except KeyError:
            known = ", ".join(sorted(cls._handlers))
            raise ConfigError(f"Unknown command '{name}' (known commands: {known})") from None

    @classmethod
    def commands(cls) -> List[Tuple[str, str]]:
        """(name, help) pairs in registration order"""
        return [(name, cls._help[name]) for name in cls._handlers]


class FigureRegistry:
    """
    Registry of figure-table builders

    Builders are looked up by exact figure id first, then by predicate
    (e.g. one builder for every panel ``fig4a`` .. ``fig4f``).
    """

    _instance = None

    _builders: ClassVar[Dict[str, Any]] = {}
    _predicate_builders: ClassVar[List[Tuple[Callable[[str], bool], Any]]] = []
    _figure_ids: ClassVar[List[str]] = []

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    @classmethod
    def register_figure(cls, figure_id: str, builder: Any) -> None:
        """Register a builder for one figure id"""
        cls._builders[figure_id] = builder
        if figure_id not in cls._figure_ids:
            cls._figure_ids.append(figure_id)

    @classmethod
    def register_figure_with_predicate(
        cls, predicate: Callable[[str], bool], builder: Any, figure_ids: List[str]
    ) -> None:
        """
        Register a builder with a predicate on the figure id

        ``figure_ids`` lists the ids the predicate accepts, so that
        ``figure_ids()`` can enumerate every known figure.
        """
        cls._predicate_builders.append((predicate, builder))
        for figure_id in figure_ids:
            if figure_id not in cls._figure_ids:
                cls._figure_ids.append(figure_id)

    @classmethod
    def get_builder(cls, figure_id: str) -> Any:
        """
        Get the builder for a figure

        Args:
            figure_id: Figure id like "fig2a" or "fig11c"

        Returns:
            The builder callable

        Raises:
            ConfigError: if no builder matches
        """
        if figure_id in cls._builders:
            return cls._builders[figure_id]
        for predicate, builder in cls._predicate_builders:
            if predicate(figure_id):
                return builder
        raise ConfigError(f"Unknown figure '{figure_id}' (known figures: {', '.join(cls._figure_ids)})")

    @classmethod
    def figure_ids(cls) -> List[str]:
        return list(cls._figure_ids)

    @classmethod
    def find_builder(cls, figure_id: str) -> Optional[Any]:
        try:
            return cls.get_builder(figure_id)
        except ConfigError:
            return None
