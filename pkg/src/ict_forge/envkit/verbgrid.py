"""VerbGrid: 5x5 ASCII rooms where the agent finds an item and applies a verb.

Eight families. ``navigate`` and ``dark`` ask the agent to reach the staircase
(``>``), the dark room only showing cells within Chebyshev radius 1. The
other six place one item; the task is done once the item is picked up and the
family's verb is applied to it. Reward is terminal 0/1.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Mapping, Optional

from ict_forge.core import Task
from ict_forge.envkit.base import TaskFamily, Transition, derive_seed
from ict_forge.prompts import load_text

SIZE = 5
DARK_RADIUS = 1
FLOOR, AGENT, UNSEEN, STAIRS = ".", "@", " ", ">"

DIRECTIONS: dict[str, tuple[int, int]] = {
    "n": (-1, 0),
    "s": (1, 0),
    "e": (0, 1),
    "w": (0, -1),
    "ne": (-1, 1),
    "nw": (-1, -1),
    "se": (1, 1),
    "sw": (1, -1),
}
DIRECTION_NAMES = {
    "n": "north", "s": "south", "e": "east", "w": "west",
    "ne": "northeast", "nw": "northwest", "se": "southeast", "sw": "southwest",
}
VERBS = ("read", "eat", "puton", "zap", "wield", "wear")

CURATED_ACTIONS: tuple[str, ...] = (
    *(f"step {d}" for d in DIRECTIONS),
    *(f"run {d}" for d in DIRECTIONS),
    *VERBS,
    "pickup",
)


@dataclass(frozen=True)
class ItemKind:
    verb: str
    noun: str
    glyph: str
    past: str  # "You {past} the {noun}."

    @property
    def with_article(self) -> str:
        return ("an " if self.noun[0] in "aeiou" else "a ") + self.noun


ITEMS: dict[str, ItemKind] = {
    "read": ItemKind("read", "scroll", "?", "read"),
    "eat": ItemKind("eat", "apple", "%", "eat"),
    "wield": ItemKind("wield", "dagger", ")", "wield"),
    "wear": ItemKind("wear", "cloak", "[", "put on"),
    "puton": ItemKind("puton", "ring", "=", "slip on"),
    "zap": ItemKind("zap", "wand", "/", "zap"),
}
NOUN_TO_VERB = {kind.noun: verb for verb, kind in ITEMS.items()}


@dataclass(frozen=True)
class GridState:
    agent: tuple[int, int]
    # Floor position of the staircase or item; None once the item is held.
    target: Optional[tuple[int, int]]
    held: bool = False
    verb: str = ""  # "" for the staircase families
    dark: bool = False

    @property
    def glyph(self) -> str:
        return ITEMS[self.verb].glyph if self.verb else STAIRS


def chebyshev(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def in_bounds(cell: tuple[int, int]) -> bool:
    return 0 <= cell[0] < SIZE and 0 <= cell[1] < SIZE


def visible(state: GridState, cell: tuple[int, int]) -> bool:
    return not state.dark or chebyshev(state.agent, cell) <= DARK_RADIUS


def render_grid(
    agent: tuple[int, int],
    items: Mapping[tuple[int, int], str] | None = None,
    *,
    dark: bool = False,
    radius: int = DARK_RADIUS,
) -> str:
    """Five lines of five glyphs; unseen cells in a dark room render as spaces."""
    items = items or {}
    rows = []
    for r in range(SIZE):
        row = []
        for c in range(SIZE):
            if dark and chebyshev(agent, (r, c)) > radius:
                row.append(UNSEEN)
            elif (r, c) == agent:
                row.append(AGENT)
            else:
                row.append(items.get((r, c), FLOOR))
        rows.append("".join(row))
    return "\n".join(rows)


def render_state(state: GridState) -> str:
    items = {state.target: state.glyph} if state.target is not None else {}
    return render_grid(state.agent, items, dark=state.dark)


def _cell(text: str) -> tuple[int, int]:
    r, c = text.split(",")
    return int(r), int(c)


class VerbGridFamily(TaskFamily):
    announce_task = True
    curated_actions = CURATED_ACTIONS

    def __init__(self, name: str, verb: str = "", dark: bool = False):
        self.name = name
        self.family_id = f"verbgrid-{name}"
        self.display_name = f"VerbGrid-{name.capitalize()}-v0"
        self.verb = verb
        self.dark = dark
        if verb:
            self.description = f"Find the {ITEMS[verb].noun}, pick it up and {verb} it."
        else:
            self.description = "Reach the staircase down" + (" in a dark room." if dark else ".")
        self.initial_prompt = load_text("actor_verbgrid.txt")

    def generate(self, seed: int) -> dict[str, str]:
        rng = random.Random(derive_seed(self.family_id, seed))
        cells = [(r, c) for r in range(SIZE) for c in range(SIZE)]
        agent = rng.choice(cells)
        target = rng.choice([cell for cell in cells if cell != agent])
        return {"agent": f"{agent[0]},{agent[1]}", "target": f"{target[0]},{target[1]}"}

    def initial_state(self, task: Task) -> GridState:
        self.check_task(task)
        return GridState(_cell(task.params["agent"]), _cell(task.params["target"]), verb=self.verb, dark=self.dark)

    def intro(self, task: Task, state: GridState) -> str:
        room = "a small dark room" if self.dark else "a small room"
        if self.verb:
            return f"You are in {room}. Somewhere in the room there is an item for you to make use of."
        return f"You are in {room}. Find the staircase down (>)."

    def observe(self, state: GridState, message: str) -> str:
        return f"{message}\n\n{render_state(state)}"

    def _arrive(self, state: GridState, moved: GridState, how: str) -> Transition:
        if moved.target == moved.agent:
            if not self.verb:
                return Transition(moved, "You reach the staircase down. Task complete!", 1.0, True)
            return Transition(moved, f"{how} You see here {ITEMS[self.verb].with_article}.")
        return Transition(moved, how)

    def transition(self, state: GridState, action: str) -> Optional[Transition]:
        parts = action.split()
        if len(parts) == 2 and parts[0] in ("step", "run") and parts[1] in DIRECTIONS:
            mode, d = parts
            dr, dc = DIRECTIONS[d]
            nxt = (state.agent[0] + dr, state.agent[1] + dc)
            if not in_bounds(nxt):
                return Transition(state, "You cannot move there.")
            pos = nxt
            if mode == "run":
                while pos != state.target and in_bounds((pos[0] + dr, pos[1] + dc)):
                    pos = (pos[0] + dr, pos[1] + dc)
            verb = "run" if mode == "run" else "move"
            return self._arrive(state, replace(state, agent=pos), f"You {verb} {DIRECTION_NAMES[d]}.")
        if action == "pickup":
            if self.verb and not state.held and state.target == state.agent:
                return Transition(replace(state, held=True, target=None), f"You pick up {ITEMS[self.verb].with_article}.")
            return Transition(state, "There is nothing here to pick up.")
        if action in VERBS:
            shown = "put on" if action == "puton" else action
            if not state.held:
                return Transition(state, f"You have nothing to {shown}.")
            kind = ITEMS[self.verb]
            if action != self.verb:
                return Transition(state, f"That is a silly thing to {shown}.")
            return Transition(state, f"You {kind.past} the {kind.noun}. Task complete!", 1.0, True)
        return None


FAMILIES: dict[str, VerbGridFamily] = {
    f.family_id: f
    for f in (
        VerbGridFamily("navigate"),
        VerbGridFamily("eat", "eat"),
        VerbGridFamily("wield", "wield"),
        VerbGridFamily("wear", "wear"),
        VerbGridFamily("puton", "puton"),
        VerbGridFamily("zap", "zap"),
        VerbGridFamily("read", "read"),
        VerbGridFamily("dark", dark=True),
    )
}
META_TRAIN = ("verbgrid-navigate", "verbgrid-eat", "verbgrid-wield", "verbgrid-wear")
META_TEST = ("verbgrid-puton", "verbgrid-zap", "verbgrid-read", "verbgrid-dark")
