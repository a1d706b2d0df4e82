"""Shared data model: tasks, trajectories, prompts, meta-observations and run records.

Every type here is a frozen dataclass with ``to_dict``/``from_dict`` so that run
records and datasets can be written as plain JSON.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

SCHEMA_VERSION = 1


class SchemaVersionError(ValueError):
    """A persisted document carries a schema version this code cannot read."""

    def __init__(self, found: Any, expected: int = SCHEMA_VERSION):
        super().__init__(f"unsupported schema_version {found!r} (expected {expected})")
        self.found = found
        self.expected = expected


class Split(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"


class PromptOrigin(str, enum.Enum):
    INITIAL = "initial"
    REFLECTOR = "reflector"
    RULE = "rule"


def check_schema_version(data: Mapping[str, Any]) -> None:
    found = data.get("schema_version")
    if found != SCHEMA_VERSION:
        raise SchemaVersionError(found)


@dataclass(frozen=True)
class Task:
    """One seeded instance of a task family.

    ``(family_id, instance_seed)`` identifies the instance; ``params`` is the
    family generator's output for that seed and is excluded from hashing.
    """

    family_id: str
    instance_seed: int
    split: Split = Split.TRAIN
    params: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not 0 <= self.instance_seed < 2**64:
            raise ValueError(f"instance_seed out of u64 range: {self.instance_seed}")
        object.__setattr__(self, "split", Split(self.split))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def key(self) -> tuple[str, int]:
        return (self.family_id, self.instance_seed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "family_id": self.family_id,
            "instance_seed": self.instance_seed,
            "split": self.split.value,
            "params": dict(sorted(self.params.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Task:
        return cls(
            family_id=data["family_id"],
            instance_seed=int(data["instance_seed"]),
            split=Split(data["split"]),
            params={str(k): str(v) for k, v in data.get("params", {}).items()},
        )


@dataclass(frozen=True)
class Step:
    observation: str
    available_actions: tuple[str, ...]
    action: str
    thought: Optional[str] = None
    step_reward: float = 0.0

    def __post_init__(self):
        if not self.action:
            raise ValueError("step action must be non-empty")
        if not self.available_actions:
            raise ValueError("available_actions must be non-empty")
        object.__setattr__(self, "available_actions", tuple(self.available_actions))
        object.__setattr__(self, "step_reward", float(self.step_reward))

    def to_dict(self) -> dict[str, Any]:
        return {
            "observation": self.observation,
            "available_actions": list(self.available_actions),
            "thought": self.thought,
            "action": self.action,
            "step_reward": self.step_reward,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Step:
        return cls(
            observation=data["observation"],
            available_actions=tuple(data["available_actions"]),
            thought=data.get("thought"),
            action=data["action"],
            step_reward=float(data.get("step_reward", 0.0)),
        )


@dataclass(frozen=True)
class Trajectory:
    """A finalized single-attempt episode.

    ``final_observation`` is the observation returned after the last action;
    ``error`` is set when the episode was cut short by infrastructure failure
    (endpoint or bridge), in which case the trajectory counts as failed.
    """

    task: Task
    steps: tuple[Step, ...] = ()
    success: bool = False
    total_reward: float = 0.0
    truncated: bool = False
    final_observation: str = ""
    error: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        # ints would serialize differently from their float round trip
        object.__setattr__(self, "total_reward", float(self.total_reward))
        if self.truncated and self.success:
            raise ValueError("a truncated trajectory cannot be successful")
        summed = math.fsum(s.step_reward for s in self.steps)
        if not math.isclose(summed, self.total_reward, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"total_reward {self.total_reward} != sum of step rewards {summed}")

    @classmethod
    def failed(cls, task: Task, error: str, steps: Sequence[Step] = ()) -> Trajectory:
        steps = tuple(steps)
        return cls(
            task=task,
            steps=steps,
            success=False,
            total_reward=math.fsum(s.step_reward for s in steps),
            truncated=False,
            error=error,
        )

    def pretty_print(self) -> str:
        return trajectory_pretty_print(self)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task": self.task.to_dict(),
            "steps": [s.to_dict() for s in self.steps],
            "success": self.success,
            "total_reward": self.total_reward,
            "truncated": self.truncated,
            "final_observation": self.final_observation,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Trajectory:
        return cls(
            task=Task.from_dict(data["task"]),
            steps=tuple(Step.from_dict(s) for s in data["steps"]),
            success=bool(data["success"]),
            total_reward=float(data["total_reward"]),
            truncated=bool(data["truncated"]),
            final_observation=data.get("final_observation", ""),
            error=data.get("error"),
        )


def normalize_prompt_text(text: str) -> str:
    return text.strip()


def make_prompt_id(run_id: str, turn_index: int, suffix: str = "") -> str:
    return f"{run_id}/sp{turn_index}{suffix}"


@dataclass(frozen=True)
class SystemPrompt:
    text: str
    prompt_id: str
    origin: PromptOrigin = PromptOrigin.INITIAL
    turn_index: int = 0
    run_id: str = ""

    def __post_init__(self):
        text = normalize_prompt_text(self.text)
        if not text:
            raise ValueError("system prompt text must be non-empty")
        if self.turn_index < 0:
            raise ValueError("turn_index must be >= 0")
        object.__setattr__(self, "text", text)
        object.__setattr__(self, "origin", PromptOrigin(self.origin))

    @classmethod
    def initial(cls, text: str, run_id: str = "") -> SystemPrompt:
        return cls(text=text, prompt_id=make_prompt_id(run_id, 0), origin=PromptOrigin.INITIAL, run_id=run_id)

    def restamp(self, run_id: str, turn_index: int, suffix: str = "") -> SystemPrompt:
        """Same text under a new identity (run, turn)."""
        return replace(
            self, run_id=run_id, turn_index=turn_index, prompt_id=make_prompt_id(run_id, turn_index, suffix)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "prompt_id": self.prompt_id,
            "origin": self.origin.value,
            "turn_index": self.turn_index,
            "run_id": self.run_id,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SystemPrompt:
        return cls(
            text=data["text"],
            prompt_id=data["prompt_id"],
            origin=PromptOrigin(data["origin"]),
            turn_index=int(data["turn_index"]),
            run_id=data.get("run_id", ""),
        )


@dataclass(frozen=True)
class MetaObservation:
    """The batch of k trajectories collected under one system prompt."""

    trajectories: tuple[Trajectory, ...]
    batch_tasks: tuple[Task, ...]
    produced_under: str

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        object.__setattr__(self, "batch_tasks", tuple(self.batch_tasks))
        if len(self.trajectories) != len(self.batch_tasks):
            raise ValueError("trajectories and batch_tasks differ in length")
        if not self.trajectories:
            raise ValueError("a meta-observation needs at least one trajectory")
        for j, (traj, task) in enumerate(zip(self.trajectories, self.batch_tasks)):
            if traj.task != task:
                raise ValueError(f"trajectory {j} belongs to {traj.task.key}, expected {task.key}")

    @property
    def k(self) -> int:
        return len(self.trajectories)

    @property
    def rewards(self) -> list[float]:
        return [t.total_reward for t in self.trajectories]

    def to_dict(self) -> dict[str, Any]:
        return {
            "produced_under": self.produced_under,
            "trajectories": [t.to_dict() for t in self.trajectories],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetaObservation:
        trajectories = tuple(Trajectory.from_dict(t) for t in data["trajectories"])
        return cls(
            trajectories=trajectories,
            batch_tasks=tuple(t.task for t in trajectories),
            produced_under=data["produced_under"],
        )


def trajectory_is_success(traj: Trajectory, threshold: float = 1.0) -> bool:
    return traj.error is None and traj.total_reward >= threshold


def format_reward(value: float) -> str:
    """Integers print bare, anything else with two decimals."""
    if float(value).is_integer():
        return str(int(value))
    return f"{value:.2f}"


def render_episode(traj: Trajectory, index: int, *, with_thoughts: bool = False) -> str:
    """Episode block in the reflector layout, without trailing separator."""
    lines = [f"=== Episode {index} ===", f"Success: {'Yes' if traj.success else 'No'}", ""]
    for t, step in enumerate(traj.steps, start=1):
        lines.append(f"--- Step {t} ---")
        lines.append(f"Observation: {step.observation}")
        if with_thoughts and step.thought:
            lines.append(f"Thought: {step.thought}")
        lines.append(f"Action: {step.action}")
        lines.append("")
    if not traj.success and traj.truncated:
        lines.append("Step limit reached.")
    lines.append(f"Total reward: {format_reward(traj.total_reward)}")
    return "\n".join(lines)


def trajectory_pretty_print(traj: Trajectory) -> str:
    header = f"Task: {traj.task.family_id} (seed {traj.task.instance_seed}, {traj.task.split.value})"
    parts = [header, render_episode(traj, 1, with_thoughts=True)]
    if traj.final_observation:
        parts.append(f"Final observation: {traj.final_observation}")
    if traj.error:
        parts.append(f"Error: {traj.error}")
    return "\n".join(parts) + "\n"


@dataclass(frozen=True)
class TurnEntry:
    """One meta-turn: the prompt, its rollout batch and its validation result.

    Turn 0 holds the initial prompt and its batch; its validation fields are
    only filled when the initial prompt was evaluated for reporting.
    """

    turn: int
    prompt: SystemPrompt
    observation: MetaObservation
    validation_score: Optional[float] = None
    validation_success_rate: Optional[float] = None
    analysis: str = ""
    parse_ok: Optional[bool] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn": self.turn,
            "prompt": self.prompt.to_dict(),
            "observation": self.observation.to_dict(),
            "validation_score": self.validation_score,
            "validation_success_rate": self.validation_success_rate,
            "analysis": self.analysis,
            "parse_ok": self.parse_ok,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TurnEntry:
        return cls(
            turn=int(data["turn"]),
            prompt=SystemPrompt.from_dict(data["prompt"]),
            observation=MetaObservation.from_dict(data["observation"]),
            validation_score=data.get("validation_score"),
            validation_success_rate=data.get("validation_success_rate"),
            analysis=data.get("analysis", ""),
            parse_ok=data.get("parse_ok"),
        )


def select_best(turns: Iterable[TurnEntry]) -> tuple[str, float]:
    """(best_prompt_id, best_score) with score* starting at 0 and strict improvement.

    Turn 0 never competes. When nothing beats 0 the initial prompt wins.
    """
    turns = list(turns)
    if not turns:
        return "", 0.0
    best_id, best_score = turns[0].prompt.prompt_id, 0.0
    for entry in turns[1:]:
        if entry.validation_score is not None and entry.validation_score > best_score:
            best_id, best_score = entry.prompt.prompt_id, float(entry.validation_score)
    return best_id, best_score


@dataclass(frozen=True)
class ICTRunRecord:
    run_id: str
    config: Mapping[str, Any]
    turns: tuple[TurnEntry, ...]
    best_prompt_id: str
    best_score: float
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        for expected, entry in enumerate(self.turns):
            if entry.turn != expected:
                raise ValueError(f"turns must be contiguous from 0; got {entry.turn} at position {expected}")

    @classmethod
    def from_turns(cls, run_id: str, config: Mapping[str, Any], turns: Sequence[TurnEntry], meta=None) -> ICTRunRecord:
        best_id, best_score = select_best(turns)
        return cls(run_id, dict(config), tuple(turns), best_id, best_score, dict(meta or {}))

    def prompt(self, prompt_id: str) -> SystemPrompt:
        for entry in self.turns:
            if entry.prompt.prompt_id == prompt_id:
                return entry.prompt
        raise KeyError(prompt_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "config": self.config,
            "turns": [t.to_dict() for t in self.turns],
            "best_prompt_id": self.best_prompt_id,
            "best_score": self.best_score,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ICTRunRecord:
        check_schema_version(data)
        return cls(
            run_id=data["run_id"],
            config=data["config"],
            turns=tuple(TurnEntry.from_dict(t) for t in data["turns"]),
            best_prompt_id=data["best_prompt_id"],
            best_score=float(data["best_score"]),
            meta=data.get("meta", {}),
        )


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def hashed_region(record_dict: Mapping[str, Any]) -> bytes:
    """Canonical bytes of a run record minus its ``meta`` block (timestamps, hosts)."""
    return canonical_json({k: v for k, v in record_dict.items() if k != "meta"}).encode("utf-8")


def record_digest(record: ICTRunRecord | Mapping[str, Any]) -> str:
    data = record.to_dict() if isinstance(record, ICTRunRecord) else record
    return hashlib.sha256(hashed_region(data)).hexdigest()


def dump_record(record: ICTRunRecord, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def load_record(path: str | Path) -> ICTRunRecord:
    return ICTRunRecord.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def record_round_trip(record: ICTRunRecord) -> ICTRunRecord:
    return ICTRunRecord.from_dict(json.loads(json.dumps(record.to_dict())))
