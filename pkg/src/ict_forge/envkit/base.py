"""Episodic environment contract shared by built-in and remote task families."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from ict_forge.core import Split, Task

DEFAULT_STEP_LIMIT = 25
VALIDATION_SIZE = 32
TRAIN_SEEDS = (0, 1_000_000)
VALIDATION_SEEDS = (1_000_000, 1_000_000 + VALIDATION_SIZE)
INVALID_ACTION = "Invalid action."


class EnvError(Exception):
    pass


class SeedRangeError(EnvError, ValueError):
    pass


class TaskMismatchError(EnvError, ValueError):
    pass


class TerminalStepError(EnvError, RuntimeError):
    """A step was submitted to an episode that already ended."""


@dataclass(frozen=True)
class StepOutcome:
    observation: str
    reward: float
    done: bool
    truncated: bool = False

    def __post_init__(self):
        if self.truncated and not self.done:
            raise ValueError("truncated implies done")


@dataclass(frozen=True)
class Transition:
    """Result of one pure family transition, before step-limit accounting."""

    state: Any
    message: str
    reward: float = 0.0
    done: bool = False
    truncated: bool = False


def derive_seed(*parts: Any) -> int:
    """Stable 64-bit integer from arbitrary parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(":".join(str(p) for p in parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class TaskFamily:
    """A parameterized generator of similar tasks plus their transition rules.

    Subclasses implement ``generate``, ``initial_state``, ``transition``,
    ``actions`` and ``observe``. States must be hashable and immutable so the
    breadth-first solver can walk the state graph.
    """

    family_id: str = ""
    display_name: str = ""
    description: str = ""
    success_threshold: float = 1.0
    reward_scale: float = 1.0
    curated_actions: tuple[str, ...] = ()
    initial_prompt: str = ""
    # Grid families prefix the actor message with "Task: play {name}".
    announce_task: bool = False
    seeded_reset: bool = True
    train_seeds: tuple[int, int] = TRAIN_SEEDS
    validation_seeds_range: tuple[int, int] = VALIDATION_SEEDS

    # -- task sampling ---------------------------------------------------
    def seed_range(self, split: Split | str) -> tuple[int, int]:
        return self.train_seeds if Split(split) is Split.TRAIN else self.validation_seeds_range

    def make_task(self, seed: int, split: Split | str = Split.TRAIN) -> Task:
        split = Split(split)
        lo, hi = self.seed_range(split)
        if not lo <= seed < hi:
            raise SeedRangeError(f"seed {seed} outside {split.value} range [{lo}, {hi}) for {self.family_id}")
        return Task(self.family_id, seed, split, self.generate(seed))

    def validation_tasks(self) -> list[Task]:
        lo, hi = self.validation_seeds_range
        return [self.make_task(s, Split.VALIDATION) for s in range(lo, hi)]

    def generate(self, seed: int) -> dict[str, str]:
        raise NotImplementedError

    # -- transitions -----------------------------------------------------
    def initial_state(self, task: Task) -> Any:
        raise NotImplementedError

    def intro(self, task: Task, state: Any) -> str:
        return ""

    def transition(self, state: Any, action: str) -> Optional[Transition]:
        """Next state for a recognized action, ``None`` for an unrecognized one."""
        raise NotImplementedError

    def actions(self, state: Any) -> list[str]:
        return list(self.curated_actions)

    def observe(self, state: Any, message: str) -> str:
        return message

    def is_goal(self, state: Any) -> bool:
        return False

    # -- episodes --------------------------------------------------------
    def check_task(self, task: Task) -> None:
        if task.family_id != self.family_id:
            raise TaskMismatchError(f"task of family {task.family_id!r} given to {self.family_id!r}")

    def reset(self, task: Task, step_limit: int = DEFAULT_STEP_LIMIT) -> tuple[EnvironmentHandle, str]:
        self.check_task(task)
        state = self.initial_state(task)
        env = EnvironmentHandle(self, task, state, step_limit=step_limit)
        return env, self.observe(state, self.intro(task, state))

    def metadata(self) -> dict[str, Any]:
        return {
            "family_id": self.family_id,
            "display_name": self.display_name,
            "success_threshold": self.success_threshold,
            "reward_scale": self.reward_scale,
            "train_seeds": list(self.train_seeds),
            "validation_seeds": list(self.validation_seeds_range),
        }

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.family_id!r})"


class EnvironmentHandle:
    """A live episode. Single owner; not shared across threads."""

    def __init__(self, family: TaskFamily, task: Task, state: Any, step_limit: int = DEFAULT_STEP_LIMIT):
        if step_limit < 1:
            raise ValueError("step_limit must be >= 1")
        self.family = family
        self.task = task
        self.state = state
        self.step_limit = step_limit
        self.step_count = 0
        self.terminal = False

    @property
    def family_id(self) -> str:
        return self.family.family_id

    def available_actions(self) -> list[str]:
        if self.terminal:
            raise TerminalStepError("episode is over")
        return self.family.actions(self.state)

    def step(self, action: str) -> StepOutcome:
        if self.terminal:
            raise TerminalStepError(f"step {action!r} after episode end")
        self.step_count += 1
        result = self.family.transition(self.state, action.strip())
        if result is None:
            observation, reward, done = INVALID_ACTION, 0.0, False
        else:
            self.state = result.state
            observation = self.family.observe(result.state, result.message)
            reward, done = float(result.reward), result.done
        truncated = result is not None and result.truncated
        if not done and self.step_count >= self.step_limit:
            done = truncated = True
        self.terminal = done
        return StepOutcome(observation, reward, done, truncated)


def solve(
    family: TaskFamily,
    task: Task,
    max_depth: int = DEFAULT_STEP_LIMIT,
    action_filter=None,
) -> Optional[list[str]]:
    """Shortest action sequence reaching the goal, by breadth-first search.

    ``action_filter(state, action) -> bool`` may prune actions; any path found
    under pruning is still a real path, so it remains an upper bound.
    """
    from collections import deque

    start = family.initial_state(task)
    if family.is_goal(start):
        return []
    parents: dict[Any, tuple[Any, str]] = {start: (None, "")}
    frontier = deque([(start, 0)])
    while frontier:
        state, depth = frontier.popleft()
        if depth >= max_depth:
            continue
        for action in family.actions(state):
            if action_filter is not None and not action_filter(state, action):
                continue
            result = family.transition(state, action)
            if result is None:
                continue
            if result.done and result.reward >= family.success_threshold:
                path = [action]
                cursor = state
                while parents[cursor][0] is not None:
                    prev, act = parents[cursor]
                    path.append(act)
                    cursor = prev
                return path[::-1]
            if result.done or result.state in parents:
                continue
            parents[result.state] = (state, action)
            frontier.append((result.state, depth + 1))
    return None


def parse_family_ref(ref: str) -> str:
    """Accept ``verbgrid:read`` or ``verbgrid-read`` and return the family id."""
    return ref.strip().replace(":", "-", 1)


def family_ids(refs: Sequence[str] | str) -> list[str]:
    if isinstance(refs, str):
        refs = [r for r in refs.split(",") if r.strip()]
    return [parse_family_ref(r) for r in refs]
