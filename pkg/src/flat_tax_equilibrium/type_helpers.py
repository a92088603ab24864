# Explicit exports for public API
__all__ = [
    "FloatArray",
    "FrozenModel",
    "ArrayModel",
    "BorrowingRegime",
    "FreeRate",
    "SweepParameter",
    "ShareEntry",
    "ChangeEntry",
    "ChangesDict",
    "DistributionSource",
    "as_float_array",
    "is_probability_vector",
]

import logging
from enum import Enum
from typing import Annotated, Any, Literal, TypedDict

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, PlainSerializer

logger = logging.getLogger(__name__)


def as_float_array(value: Any) -> np.ndarray:
    """Copy ``value`` into a read-only float64 array."""
    array = np.array(value, dtype=float)
    array.flags.writeable = False
    return array


def _array_to_list(array: np.ndarray) -> list:
    return np.asarray(array, dtype=float).tolist()


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(as_float_array),
    PlainSerializer(_array_to_list, return_type=list),
]


class FrozenModel(BaseModel):
    """Immutable pydantic model shared by the domain types."""

    model_config = ConfigDict(frozen=True, extra="forbid")


class ArrayModel(BaseModel):
    """Immutable model that may carry numpy arrays and other non-pydantic objects."""

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)


class BorrowingRegime(str, Enum):
    """Whether the natural borrowing limit binds on a state's portfolio choice."""

    STRICTLY_BINDING = "strictly_binding"
    BARELY_BINDING = "barely_binding"
    SLACK = "slack"


class DistributionSource(str, Enum):
    INVERSION = "inversion"
    EXTRAPOLATION = "extrapolation"


FreeRate = Literal["tau_L", "tau_K", "tau_C"]
SweepParameter = Literal["gamma", "sigma"]


class ShareEntry(TypedDict):
    """One row of a wealth-share table."""

    group: Literal["top", "bottom"]
    fraction: float
    share: float


class ChangeEntry(TypedDict, total=False):
    """Level of one quantity in two regimes and the relative change"""

    old: float
    new: float
    change: float  # new / old - 1, or new - old for rates
    comment: str


# Keys are dotted names like "consumption.workers"
ChangesDict = dict[str, ChangeEntry]


def is_probability_vector(vector: np.ndarray, tol: float = 1e-12) -> bool:
    vector = np.asarray(vector, dtype=float)
    return bool(
        vector.ndim == 1 and np.all(vector >= -tol) and abs(vector.sum() - 1.0) <= tol
    )
