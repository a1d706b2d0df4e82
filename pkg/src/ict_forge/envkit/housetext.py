"""HouseText: a single fixed room of receptacles with household task types.

Objects sit in receptacles, some of which are closed. Task types:

    pick_and_place  put a {obj} in {receptacle type}.
    examine         look at {obj} under the desklamp.
    clean / heat / cool
                    put a clean/hot/cool {obj} in {receptacle type}.
    pick_two        put two {obj} in {receptacle type}.

The available-action list is contextual and alphabetically sorted. Only listed
actions are accepted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional

from ict_forge.core import Task
from ict_forge.envkit.base import TaskFamily, Transition, derive_seed
from ict_forge.prompts import load_text

RECEPTACLES: tuple[str, ...] = (
    "cabinet 1",
    "cabinet 2",
    "cabinet 3",
    "countertop 1",
    "countertop 2",
    "desk 1",
    "drawer 1",
    "drawer 2",
    "fridge 1",
    "garbagecan 1",
    "microwave 1",
    "shelf 1",
    "sidetable 1",
    "sinkbasin 1",
    "stoveburner 1",
)
OPENABLE = frozenset({"cabinet 1", "cabinet 2", "cabinet 3", "drawer 1", "drawer 2", "fridge 1", "microwave 1"})
# transform verb -> (appliance receptacle, resulting adjective)
APPLIANCES = {"clean": ("sinkbasin 1", "clean"), "heat": ("microwave 1", "hot"), "cool": ("fridge 1", "cool")}
LAMP_AT = "desk 1"
DISTRACTORS = ("bowl", "candle", "knife", "mug", "peppershaker", "saltshaker", "soapbar", "vase")

# family -> (object pool, target receptacle types, transform verb or "")
TASK_TYPES: dict[str, tuple[tuple[str, ...], tuple[str, ...], str]] = {
    "pick_and_place": (("book", "cd", "keychain", "pencil", "spraybottle"), ("countertop", "desk", "shelf", "sidetable", "cabinet", "drawer"), ""),
    "examine": (("alarmclock", "book", "cd", "pencil"), (), ""),
    "clean": (("cloth", "mug", "plate", "spoon"), ("cabinet", "countertop", "shelf", "sidetable"), "clean"),
    "heat": (("apple", "egg", "mug", "potato"), ("countertop", "garbagecan", "shelf", "sidetable"), "heat"),
    "cool": (("apple", "plate", "potato", "tomato"), ("countertop", "garbagecan", "shelf", "sidetable"), "cool"),
    "pick_two": (("book", "cd", "pencil", "spoon"), ("cabinet", "countertop", "drawer", "shelf", "sidetable"), ""),
}
HELP = (
    "Available commands: look, inventory, go to (receptacle), open (receptacle), close (receptacle), "
    "take (object) from (receptacle), put (object) in/on (receptacle), examine (receptacle), "
    "use (object), heat/cool/clean (object) with (receptacle)"
)


def kind_of(name: str) -> str:
    """'cabinet 2' -> 'cabinet', 'spoon 1' -> 'spoon'."""
    return name.rsplit(" ", 1)[0]


def _listing(names) -> str:
    names = [f"a {n}" for n in names]
    if not names:
        return "nothing"
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + ", and " + names[-1]


@dataclass(frozen=True)
class HouseState:
    loc: Optional[str]
    opened: frozenset
    # (object name, receptacle or "" when held, adjective or "")
    objects: tuple[tuple[str, str, str], ...]
    held: Optional[str]
    goal: str
    target_kind: str
    target_receptacle: str  # receptacle type; "" for examine
    placed: int = 0

    def contents(self, receptacle: str) -> list[str]:
        return [name for name, where, _ in self.objects if where == receptacle]

    def is_open(self, receptacle: str) -> bool:
        return receptacle not in OPENABLE or receptacle in self.opened

    def adjective(self, name: str) -> str:
        for obj, _, adj in self.objects:
            if obj == name:
                return adj
        return ""

    def statement(self) -> str:
        if self.goal == "examine":
            return f"look at {self.target_kind} under the desklamp."
        if self.goal == "pick_two":
            return f"put two {self.target_kind} in {self.target_receptacle}."
        transform = TASK_TYPES[self.goal][2]
        adj = f"{APPLIANCES[transform][1]} " if transform else ""
        return f"put a {adj}{self.target_kind} in {self.target_receptacle}."


class HouseTextFamily(TaskFamily):
    def __init__(self, goal: str):
        self.goal = goal
        self.family_id = f"housetext-{goal}"
        self.display_name = f"HouseText-{goal}"
        self.description = f"Household task type {goal!r}."
        self.initial_prompt = load_text("actor_housetext.txt")
        self.curated_actions = ("help", "inventory", "look")

    def generate(self, seed: int) -> dict[str, str]:
        rng = random.Random(derive_seed(self.family_id, seed))
        pool, targets, transform = TASK_TYPES[self.goal]
        kind = rng.choice(pool)
        target = rng.choice(targets) if targets else ""
        appliance = APPLIANCES[transform][0] if transform else ""
        spots = [r for r in RECEPTACLES if kind_of(r) != target and r != appliance]
        count = 2 if self.goal == "pick_two" else 1
        placement = [f"{kind} {i + 1}@{rng.choice(spots)}" for i in range(count)]
        for d in rng.sample([d for d in DISTRACTORS if d != kind], 3):
            placement.append(f"{d} 1@{rng.choice(RECEPTACLES)}")
        return {"object": kind, "receptacle": target, "placement": ";".join(placement)}

    def initial_state(self, task: Task) -> HouseState:
        self.check_task(task)
        objects = []
        for item in task.params["placement"].split(";"):
            name, where = item.split("@")
            objects.append((name, where, ""))
        return HouseState(
            loc=None,
            opened=frozenset(),
            objects=tuple(sorted(objects)),
            held=None,
            goal=self.goal,
            target_kind=task.params["object"],
            target_receptacle=task.params["receptacle"],
        )

    def intro(self, task: Task, state: HouseState) -> str:
        return (
            "You are in the middle of a room. Looking quickly around you, you see "
            f"{_listing(RECEPTACLES)}.\nYour task is to: {state.statement()}"
        )

    def actions(self, state: HouseState) -> list[str]:
        acts = {"help", "inventory", "look"}
        acts.update(f"go to {r}" for r in RECEPTACLES if r != state.loc)
        loc = state.loc
        if loc is not None:
            acts.add(f"examine {loc}")
            if loc in OPENABLE:
                acts.add(f"close {loc}" if loc in state.opened else f"open {loc}")
            if state.is_open(loc):
                if state.held is None:
                    acts.update(f"take {o} from {loc}" for o in state.contents(loc))
                else:
                    acts.add(f"put {state.held} in/on {loc}")
            if state.held is not None:
                for verb, (appliance, _) in APPLIANCES.items():
                    if loc == appliance:
                        acts.add(f"{verb} {state.held} with {appliance}")
            if loc == LAMP_AT:
                acts.add("use desklamp 1")
        return sorted(acts)

    def _describe(self, state: HouseState, receptacle: str) -> str:
        if not state.is_open(receptacle):
            return f"The {receptacle} is closed."
        if receptacle in OPENABLE:
            return f"The {receptacle} is open. In it, you see {_listing(state.contents(receptacle))}."
        return f"On the {receptacle}, you see {_listing(state.contents(receptacle))}."

    def _move_object(self, state: HouseState, name: str, where: str, adj: Optional[str] = None) -> tuple:
        objs = []
        for obj, loc, a in state.objects:
            if obj == name:
                objs.append((obj, where, a if adj is None else adj))
            else:
                objs.append((obj, loc, a))
        return tuple(objs)

    def _goal_met(self, state: HouseState, name: str, receptacle: str) -> bool:
        if kind_of(name) != state.target_kind or kind_of(receptacle) != state.target_receptacle:
            return False
        transform = TASK_TYPES[state.goal][2]
        if transform and state.adjective(name) != APPLIANCES[transform][1]:
            return False
        if state.goal == "pick_two":
            return state.placed >= 2
        return True

    def transition(self, state: HouseState, action: str) -> Optional[Transition]:
        if action not in self.actions(state):
            return None
        loc = state.loc
        if action == "help":
            return Transition(state, HELP)
        if action == "inventory":
            carrying = f"You are carrying: a {state.held}." if state.held else "You are not carrying anything."
            return Transition(state, carrying)
        if action == "look":
            where = f"facing the {loc}" if loc else "in the middle of a room"
            return Transition(state, f"You are {where}. Next to it, you see nothing.")
        if action.startswith("go to "):
            target = action[len("go to "):]
            moved = replace(state, loc=target)
            return Transition(moved, f"You arrive at {target}. {self._describe(moved, target)}")
        if action.startswith("examine "):
            return Transition(state, self._describe(state, loc))
        if action.startswith("open "):
            opened = replace(state, opened=state.opened | {loc})
            return Transition(opened, f"You open the {loc}. {self._describe(opened, loc)}")
        if action.startswith("close "):
            return Transition(replace(state, opened=state.opened - {loc}), f"You close the {loc}.")
        if action.startswith("take "):
            name = action[len("take "):action.rindex(" from ")]
            placed = state.placed
            if kind_of(name) == state.target_kind and kind_of(loc) == state.target_receptacle:
                placed -= 1
            taken = replace(state, held=name, objects=self._move_object(state, name, ""), placed=placed)
            return Transition(taken, f"You pick up the {name} from the {loc}.")
        if action.startswith("put "):
            name = state.held
            placed = state.placed
            if kind_of(name) == state.target_kind and kind_of(loc) == state.target_receptacle:
                placed += 1
            put = replace(state, held=None, objects=self._move_object(state, name, loc), placed=placed)
            message = f"You put the {name} in/on the {loc}."
            if self._goal_met(put, name, loc):
                return Transition(put, message + " Task complete!", 1.0, True)
            return Transition(put, message)
        if action == "use desklamp 1":
            message = "You turn on the desklamp 1."
            if state.goal == "examine" and state.held and kind_of(state.held) == state.target_kind:
                return Transition(state, message + " Task complete!", 1.0, True)
            return Transition(state, message)
        verb = action.split(" ", 1)[0]
        if verb in APPLIANCES:
            appliance, adj = APPLIANCES[verb]
            name = state.held
            changed = replace(state, objects=self._move_object(state, name, "", adj))
            return Transition(changed, f"You {verb} the {name} using the {appliance}.")
        return None


FAMILIES: dict[str, HouseTextFamily] = {
    f.family_id: f for f in (HouseTextFamily(goal) for goal in TASK_TYPES)
}
META_TRAIN = ("housetext-pick_and_place", "housetext-examine", "housetext-clean", "housetext-heat")
META_TEST = ("housetext-cool", "housetext-pick_two")


def solver_filter(state: HouseState, action: str) -> bool:
    """Prune actions that never shorten a solution (for the reachability oracle)."""
    head = action.split(" ", 1)[0]
    if head in ("help", "inventory", "look", "examine", "close"):
        return False
    if head == "take":
        return kind_of(action[len("take "):action.rindex(" from ")]) == state.target_kind
    if head == "put":
        return kind_of(state.loc) == state.target_receptacle
    if action.startswith("go to "):
        # The oracle sees the full state, so it only visits receptacles that matter.
        dest = action[len("go to "):]
        useful = {where for name, where, _ in state.objects if kind_of(name) == state.target_kind}
        transform = TASK_TYPES[state.goal][2]
        if transform:
            useful.add(APPLIANCES[transform][0])
        if state.goal == "examine":
            useful.add(LAMP_AT)
        return dest in useful or kind_of(dest) == state.target_receptacle
    return True
