"""Deterministic scripted actor whose behaviour depends on the prompt only via directives.

Baseline behaviour on VerbGrid: walk to a visible target, pick the item up when
standing on it, otherwise explore toward the nearest cell not currently in
view. Baseline exploration has no memory, so dark rooms can make it oscillate.
Directives change this:

    apply-verb:V   once holding the item, try V (verbs tried in directive order)
    avoid-revisit  remember every cell seen so far and never target it again

On HouseText the baseline visits receptacles in list order, takes the target
object when it is in sight, knows the sink and microwave for cleaning and
heating, and places the object in the first receptacle of the requested type.
It does not open closed receptacles while searching and does not know where
to cool things:

    open-before-search  open closed receptacles before leaving them
    check:fridge        search the fridge first and cool objects there
"""

from __future__ import annotations

from collections import deque
from typing import Optional, Sequence

from ict_forge.actors.directives import DirectiveSet
from ict_forge.envkit import housetext, verbgrid
from ict_forge.envkit.bridge import RemoteState
from ict_forge.envkit.housetext import APPLIANCES, LAMP_AT, RECEPTACLES, TASK_TYPES, HouseState, kind_of
from ict_forge.envkit.verbgrid import CURATED_ACTIONS, DIRECTIONS, GridState

History = Sequence[tuple[object, str]]
STEP_ACTIONS = [a for a in CURATED_ACTIONS if a.startswith("step ")]


def _visible_cells(state: GridState) -> set[tuple[int, int]]:
    return {
        (r, c)
        for r in range(verbgrid.SIZE)
        for c in range(verbgrid.SIZE)
        if verbgrid.visible(state, (r, c))
    }


def first_step_toward(start: tuple[int, int], goals: set[tuple[int, int]]) -> Optional[str]:
    """First step action of a shortest 8-connected path to the nearest goal.

    Neighbours expand in curated-list order, so ties go to the earlier action.
    """
    if not goals or start in goals:
        return None
    seen = {start}
    queue: deque = deque()
    for action in STEP_ACTIONS:
        dr, dc = DIRECTIONS[action.split()[1]]
        nxt = (start[0] + dr, start[1] + dc)
        if verbgrid.in_bounds(nxt) and nxt not in seen:
            if nxt in goals:
                return action
            seen.add(nxt)
            queue.append((nxt, action))
    while queue:
        cell, first = queue.popleft()
        for action in STEP_ACTIONS:
            dr, dc = DIRECTIONS[action.split()[1]]
            nxt = (cell[0] + dr, cell[1] + dc)
            if verbgrid.in_bounds(nxt) and nxt not in seen:
                if nxt in goals:
                    return first
                seen.add(nxt)
                queue.append((nxt, first))
    return None


def grid_policy(directives: DirectiveSet, state: GridState, history: History) -> str:
    if state.held:
        tried = {action for _, action in history}
        for verb in directives.verbs:
            if verb not in tried:
                return verb
        return CURATED_ACTIONS[0]
    if state.target is not None and state.target == state.agent:
        return "pickup"
    in_view = _visible_cells(state)
    if state.target is not None and state.target in in_view:
        return first_step_toward(state.agent, {state.target}) or CURATED_ACTIONS[0]
    known = set(in_view)
    if "avoid-revisit" in directives:
        for past, _ in history:
            known |= _visible_cells(past)
    unexplored = {
        (r, c) for r in range(verbgrid.SIZE) for c in range(verbgrid.SIZE) if (r, c) not in known
    }
    return first_step_toward(state.agent, unexplored) or CURATED_ACTIONS[0]


def _segment(state: HouseState, history: History) -> list[HouseState]:
    """Past states since the inventory last changed."""
    out = []
    for past, _ in reversed(history):
        if past.held != state.held:
            break
        out.append(past)
    return out


def _search_order(directives: DirectiveSet) -> list[str]:
    order = list(RECEPTACLES)
    if "check:fridge" in directives:
        order.remove("fridge 1")
        order.insert(0, "fridge 1")
    return order


def house_policy(directives: DirectiveSet, state: HouseState, history: History) -> str:
    available = housetext.FAMILIES[f"housetext-{state.goal}"].actions(state)
    visited = {s.loc for s in _segment(state, history)} | {state.loc}
    loc = state.loc
    order = _search_order(directives)

    def explore() -> str:
        for r in order:
            if r not in visited:
                return f"go to {r}"
        return available[0]

    held = state.held
    if held is not None and kind_of(held) == state.target_kind:
        transform = TASK_TYPES[state.goal][2]
        if transform and state.adjective(held) != APPLIANCES[transform][1]:
            appliance = APPLIANCES[transform][0]
            if loc == appliance:
                return f"{transform} {held} with {appliance}"
            if transform != "cool" or "check:fridge" in directives:
                return f"go to {appliance}"
            return explore()
        if state.goal == "examine":
            return "use desklamp 1" if loc == LAMP_AT else f"go to {LAMP_AT}"
        if loc is not None and kind_of(loc) == state.target_receptacle:
            if not state.is_open(loc):
                return f"open {loc}"
            return f"put {held} in/on {loc}"
        for r in RECEPTACLES:
            if kind_of(r) == state.target_receptacle:
                return f"go to {r}"
    if held is not None:
        # carrying something useless: drop it where we stand
        action = f"put {held} in/on {loc}"
        return action if action in available else explore()
    if loc is not None:
        if state.is_open(loc) and kind_of(loc) != state.target_receptacle:
            for obj in state.contents(loc):
                if kind_of(obj) == state.target_kind:
                    return f"take {obj} from {loc}"
        if not state.is_open(loc) and "open-before-search" in directives:
            return f"open {loc}"
    return explore()


def scripted_policy(directives: DirectiveSet, env_state, history: History) -> str:
    """Next action for a live episode; pure in (directives, state, history)."""
    if isinstance(env_state, GridState):
        return grid_policy(directives, env_state, history)
    if isinstance(env_state, HouseState):
        return house_policy(directives, env_state, history)
    if isinstance(env_state, RemoteState) and env_state.available_actions:
        return env_state.available_actions[0]
    raise TypeError(f"no scripted policy for state {type(env_state).__name__}")
