"""Training data for the reflector: recorded turn tuples, replay scoring and group advantages.

A dataset tuple is (prompt, rollout batch, tasks) for one turn of one loop.
A candidate prompt is scored by replaying that same batch of tasks under it
with the frozen actor; the candidates for one tuple form a group whose rewards
are normalized into advantages for an external policy-gradient trainer.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from ict_forge.actors import make_actor
from ict_forge.core import (
    SCHEMA_VERSION,
    MetaObservation,
    SystemPrompt,
    Task,
    check_schema_version,
)
from ict_forge.envkit import TaskFamily, get_family
from ict_forge.ict import ICTConfig, run_ict
from ict_forge.llm import ChatClient
from ict_forge.metaenv import rollout_reward, run_episodes
from ict_forge.reflectors import LLMReflector, Reflection, make_reflector, render_reflection_request

logger = logging.getLogger(__name__)

# Reference values for the external trainer; nothing here consumes them.
TRAINER_DEFAULTS: dict[str, Any] = {
    "algorithm": "grpo",
    "learning_rate": 3e-6,
    "train_batch_size": 16,
    "ppo_mini_batch_size": 16,
    "ppo_epochs": 2,
    "rollout_n": 8,
    "kl_loss_coef": 0.001,
    "max_prompt_length": 8192,
    "max_response_length": 2048,
}


@dataclass(frozen=True)
class DatasetTuple:
    loop_id: str
    turn: int
    sp: SystemPrompt
    obs: MetaObservation

    def __post_init__(self):
        if self.obs.produced_under != self.sp.prompt_id:
            raise ValueError(f"observation produced under {self.obs.produced_under!r}, not {self.sp.prompt_id!r}")
        if self.turn < 1:
            raise ValueError("dataset tuples start at turn 1")

    @property
    def batch_tasks(self) -> tuple[Task, ...]:
        return self.obs.batch_tasks

    @property
    def k(self) -> int:
        return self.obs.k

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "loop_id": self.loop_id,
            "turn": self.turn,
            "prompt": self.sp.to_dict(),
            "observation": self.obs.to_dict(),
            "tasks": [t.to_dict() for t in self.batch_tasks],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DatasetTuple:
        check_schema_version(data)
        obs = MetaObservation.from_dict(data["observation"])
        tasks = tuple(Task.from_dict(t) for t in data["tasks"])
        if tasks != obs.batch_tasks:
            raise ValueError("tuple tasks disagree with the observation's trajectories")
        return cls(data["loop_id"], int(data["turn"]), SystemPrompt.from_dict(data["prompt"]), obs)


@dataclass(frozen=True)
class DatasetConfig:
    base: ICTConfig
    loops: int = 4
    master_seed: int = 0

    def __post_init__(self):
        if self.loops < 1:
            raise ValueError("loops must be >= 1")

    @property
    def turns(self) -> int:
        return self.base.turns

    def loop_config(self, loop: int) -> ICTConfig:
        """The base ICT config with a loop-specific task stream."""
        seed = (self.master_seed * 1_000_003 + loop) % 2**64
        return replace(self.base, meta_env=replace(self.base.meta_env, master_seed=seed))

    def to_dict(self) -> dict[str, Any]:
        return {"base": self.base.to_dict(), "loops": self.loops, "master_seed": self.master_seed}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DatasetConfig:
        return cls(ICTConfig.from_dict(data["base"]), int(data.get("loops", 4)), int(data.get("master_seed", 0)))


@dataclass
class DatasetBuild:
    tuples: list[DatasetTuple]
    failed_loops: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tuples)

    def __iter__(self) -> Iterator[DatasetTuple]:
        return iter(self.tuples)


def build_dataset(
    cfg: DatasetConfig,
    *,
    families: Optional[Mapping[str, TaskFamily]] = None,
    actor=None,
    reflector=None,
    client: Optional[ChatClient] = None,
    path: str | Path | None = None,
) -> DatasetBuild:
    """Run r loops of N turns and keep one tuple per (loop, turn) for turns 1..N."""
    known = dict(families or {})
    for ref in cfg.base.meta_env.families:
        family = known.get(ref) or get_family(ref)
        if not family.seeded_reset:
            raise ValueError(f"family {ref!r} cannot replay seeded tasks; refusing to build a dataset from it")
    build = DatasetBuild([])
    for loop in range(cfg.loops):
        loop_cfg = cfg.loop_config(loop)
        loop_id = f"{loop_cfg.run_id()}-l{loop}"
        try:
            record = run_ict(
                loop_cfg, families=families, actor=actor, reflector=reflector, client=client,
                run_id=loop_id, validate=False,
            )
        except Exception as exc:
            logger.exception("dataset loop %d failed", loop)
            build.failed_loops[loop_id] = f"{type(exc).__name__}: {exc}"
            continue
        build.tuples.extend(DatasetTuple(loop_id, e.turn, e.prompt, e.observation) for e in record.turns[1:])
    logger.info("dataset: %d tuples, %d failed loops", len(build.tuples), len(build.failed_loops))
    if path is not None:
        write_dataset(build.tuples, path)
    return build


def write_dataset(
    tuples: Iterable[DatasetTuple], path: str | Path, *, config: Optional[Mapping[str, Any]] = None
) -> int:
    """One tuple per line; ``config`` (the producing settings) is embedded in every line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for tup in tuples:
            line = tup.to_dict()
            if config is not None:
                line["config"] = dict(config)
            fh.write(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_dataset(path: str | Path) -> list[DatasetTuple]:
    with Path(path).open(encoding="utf-8") as fh:
        return [DatasetTuple.from_dict(json.loads(line)) for line in fh if line.strip()]


# --- replay scoring -------------------------------------------------------


@dataclass(frozen=True)
class ReplayResult:
    mean_reward: float
    per_task: tuple[float, ...]
    errors: tuple[Optional[str], ...]


def _families_for(tasks: Iterable[Task], families: Optional[Mapping[str, TaskFamily]]) -> dict[str, TaskFamily]:
    known = dict(families or {})
    return {t.family_id: known.get(t.family_id) or get_family(t.family_id) for t in tasks}


def replay_score(
    candidate: SystemPrompt,
    tup: DatasetTuple,
    actor,
    *,
    families: Optional[Mapping[str, TaskFamily]] = None,
    max_parallel: int = 4,
) -> ReplayResult:
    """Mean reward of ``candidate`` over the tuple's own task batch.

    A rollout that fails on infrastructure scores 0 and keeps its error message.
    """
    fams = _families_for(tup.batch_tasks, families)
    trajectories = run_episodes(actor, fams, [(t, candidate) for t in tup.batch_tasks], max_parallel)
    per_task = tuple(rollout_reward(t) for t in trajectories)
    return ReplayResult(math.fsum(per_task) / len(per_task), per_task, tuple(t.error for t in trajectories))


# below this spread the std is rounding noise rather than signal
ADVANTAGE_EPS = 1e-12


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """(r - mean) / population std; all zeros when the rewards are (numerically) equal."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ValueError("a group needs at least two rewards")
    std = r.std()
    if r.max() == r.min() or std < ADVANTAGE_EPS:
        return [0.0] * r.size
    return ((r - r.mean()) / std).tolist()


@dataclass(frozen=True)
class CandidateScoreGroup:
    loop_id: str
    turn: int
    request_system: str
    request_user: str
    candidates: tuple[SystemPrompt, ...]
    responses: tuple[str, ...]
    rewards: tuple[tuple[float, ...], ...]
    mean_rewards: tuple[float, ...]
    advantages: tuple[float, ...]

    def __post_init__(self):
        g = len(self.candidates)
        if not (len(self.responses) == len(self.rewards) == len(self.mean_rewards) == len(self.advantages) == g):
            raise ValueError("group fields must all have G entries")

    @property
    def size(self) -> int:
        return len(self.candidates)

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": {"loop_id": self.loop_id, "turn": self.turn},
            "request": {"system": self.request_system, "user": self.request_user},
            "candidates": [
                {
                    "response_text": resp,
                    "prompt": cand.to_dict(),
                    "per_task_rewards": list(rew),
                    "mean_reward": mean,
                    "advantage": adv,
                }
                for cand, resp, rew, mean, adv in zip(
                    self.candidates, self.responses, self.rewards, self.mean_rewards, self.advantages
                )
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CandidateScoreGroup:
        cands = data["candidates"]
        return cls(
            loop_id=data["source"]["loop_id"],
            turn=int(data["source"]["turn"]),
            request_system=data["request"]["system"],
            request_user=data["request"]["user"],
            candidates=tuple(SystemPrompt.from_dict(c["prompt"]) for c in cands),
            responses=tuple(c["response_text"] for c in cands),
            rewards=tuple(tuple(float(x) for x in c["per_task_rewards"]) for c in cands),
            mean_rewards=tuple(float(c["mean_reward"]) for c in cands),
            advantages=tuple(float(c["advantage"]) for c in cands),
        )


def _sample_reflections(reflector, tup: DatasetTuple, group_size: int) -> list[Reflection]:
    if isinstance(reflector, LLMReflector):
        # independent samples; the endpoint's temperature provides the diversity
        with ThreadPoolExecutor(max_workers=min(group_size, 8)) as pool:
            return list(pool.map(lambda _: reflector.reflect(tup.sp, tup.obs), range(group_size)))
    return [reflector.reflect(tup.sp, tup.obs) for _ in range(group_size)]


def score_group(
    tup: DatasetTuple,
    reflector,
    group_size: int,
    actor,
    *,
    families: Optional[Mapping[str, TaskFamily]] = None,
    max_parallel: int = 4,
) -> CandidateScoreGroup:
    """Sample G reflections for the tuple and replay each on the tuple's tasks."""
    if group_size < 2:
        raise ValueError("group size must be >= 2")
    if isinstance(reflector, LLMReflector):
        system_text, user_text = reflector.request(tup.sp, tup.obs)
    else:
        system_text, user_text = render_reflection_request(tup.sp, tup.obs)
    reflections = _sample_reflections(reflector, tup, group_size)
    candidates = tuple(
        r.improved_prompt.restamp(tup.loop_id, tup.turn + 1, f"-c{g}") for g, r in enumerate(reflections)
    )
    fams = _families_for(tup.batch_tasks, families)
    jobs = [(task, cand) for cand in candidates for task in tup.batch_tasks]
    trajectories = run_episodes(actor, fams, jobs, max_parallel)
    k = tup.k
    rewards = tuple(
        tuple(rollout_reward(t) for t in trajectories[g * k : (g + 1) * k]) for g in range(group_size)
    )
    means = tuple(math.fsum(row) / k for row in rewards)
    return CandidateScoreGroup(
        loop_id=tup.loop_id,
        turn=tup.turn,
        request_system=system_text,
        request_user=user_text,
        candidates=candidates,
        responses=tuple(r.raw_response for r in reflections),
        rewards=rewards,
        mean_rewards=means,
        advantages=tuple(group_advantages(means)),
    )


def score_dataset(
    tuples: Sequence[DatasetTuple],
    reflector,
    group_size: int,
    actor,
    **kwargs,
) -> list[CandidateScoreGroup]:
    return [score_group(t, reflector, group_size, actor, **kwargs) for t in tuples]


def export_training_records(
    groups: Sequence[CandidateScoreGroup],
    path: str | Path,
    *,
    config: Optional[Mapping[str, Any]] = None,
    trainer: Optional[Mapping[str, Any]] = None,
) -> int:
    """Write one JSON line per group; returns the number of lines written."""
    if not groups:
        raise ValueError("nothing to export: empty group list")
    metadata = {"config": dict(config or {}), "trainer": {**TRAINER_DEFAULTS, **(trainer or {})}}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for group in groups:
            line = {"schema_version": SCHEMA_VERSION, **group.to_dict(), "metadata": metadata}
            fh.write(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n")
    return len(groups)


def read_training_records(path: str | Path) -> list[tuple[CandidateScoreGroup, dict[str, Any]]]:
    """Groups and their metadata, in file order."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            check_schema_version(data)
            out.append((CandidateScoreGroup.from_dict(data), data.get("metadata", {})))
    return out


def make_scoring_parts(cfg: ICTConfig, client: Optional[ChatClient] = None):
    """(actor, reflector) built from an ICT config, for command-line scoring."""
    return make_actor(cfg.meta_env.actor, client), make_reflector(cfg.reflector, client)


__all__ = [
    "CandidateScoreGroup",
    "DatasetBuild",
    "DatasetConfig",
    "DatasetTuple",
    "ReplayResult",
    "TRAINER_DEFAULTS",
    "build_dataset",
    "export_training_records",
    "group_advantages",
    "read_dataset",
    "read_training_records",
    "replay_score",
    "score_dataset",
    "score_group",
    "write_dataset",
]
