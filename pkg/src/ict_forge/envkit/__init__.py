"""Task families, episodes, and the remote-environment bridge."""

from __future__ import annotations

from ict_forge.envkit import housetext, verbgrid
from ict_forge.envkit.base import (
    DEFAULT_STEP_LIMIT,
    INVALID_ACTION,
    VALIDATION_SIZE,
    EnvError,
    EnvironmentHandle,
    SeedRangeError,
    StepOutcome,
    TaskFamily,
    TaskMismatchError,
    TerminalStepError,
    Transition,
    derive_seed,
    family_ids,
    parse_family_ref,
    solve,
)
from ict_forge.envkit.bridge import BridgeError, RemoteTaskFamily, bridge_connect
from ict_forge.envkit.verbgrid import render_grid

BUILTIN_FAMILIES: dict[str, TaskFamily] = {**verbgrid.FAMILIES, **housetext.FAMILIES}

# Meta-train / meta-test partition by task type.
FAMILY_SETS: dict[str, dict[str, tuple[str, ...]]] = {
    "verbgrid": {"meta_train": verbgrid.META_TRAIN, "meta_test": verbgrid.META_TEST},
    "housetext": {"meta_train": housetext.META_TRAIN, "meta_test": housetext.META_TEST},
}

_registry: dict[str, TaskFamily] = dict(BUILTIN_FAMILIES)


def get_family(ref: str) -> TaskFamily:
    family_id = parse_family_ref(ref)
    try:
        return _registry[family_id]
    except KeyError:
        raise KeyError(f"unknown task family {ref!r}; known: {sorted(_registry)}") from None


def register_family(family: TaskFamily) -> TaskFamily:
    _registry[family.family_id] = family
    return family


def solver_filter_for(family: TaskFamily):
    return housetext.solver_filter if isinstance(family, housetext.HouseTextFamily) else None


__all__ = [
    "BUILTIN_FAMILIES",
    "BridgeError",
    "DEFAULT_STEP_LIMIT",
    "EnvError",
    "EnvironmentHandle",
    "FAMILY_SETS",
    "INVALID_ACTION",
    "RemoteTaskFamily",
    "SeedRangeError",
    "StepOutcome",
    "TaskFamily",
    "TaskMismatchError",
    "TerminalStepError",
    "Transition",
    "VALIDATION_SIZE",
    "bridge_connect",
    "derive_seed",
    "family_ids",
    "get_family",
    "parse_family_ref",
    "register_family",
    "render_grid",
    "solve",
    "solver_filter_for",
]
