"""The meta-environment: actions are system prompts, observations are rollout batches."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from ict_forge.actors import ActorConfig, make_actor
from ict_forge.core import MetaObservation, Split, SystemPrompt, Task, Trajectory
from ict_forge.envkit import TaskFamily, derive_seed, get_family, parse_family_ref
from ict_forge.llm import ChatClient

logger = logging.getLogger(__name__)


class MetaEnvError(RuntimeError):
    """Every rollout of a batch failed on infrastructure. ``obs`` holds the failed batch."""

    def __init__(self, message: str, obs: Optional[MetaObservation] = None):
        super().__init__(message)
        self.obs = obs


@dataclass(frozen=True)
class MetaEnvConfig:
    families: tuple[str, ...]
    k: int = 3
    actor: ActorConfig = field(default_factory=ActorConfig)
    master_seed: int = 0
    max_parallel_rollouts: int = 4
    # None: every family's fixed validation seeds, in family order
    validation: Optional[tuple[Task, ...]] = None

    def __post_init__(self):
        if not self.families:
            raise ValueError("at least one task family is required")
        object.__setattr__(self, "families", tuple(parse_family_ref(f) for f in self.families))
        if self.k < 1:
            raise ValueError("batch size k must be >= 1")
        if self.max_parallel_rollouts < 1:
            raise ValueError("max_parallel_rollouts must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in u64")
        if self.validation is not None:
            object.__setattr__(self, "validation", tuple(self.validation))

    def to_dict(self) -> dict[str, Any]:
        return {
            "families": list(self.families),
            "k": self.k,
            "actor": self.actor.to_dict(),
            "master_seed": self.master_seed,
            "max_parallel_rollouts": self.max_parallel_rollouts,
            "validation": [t.to_dict() for t in self.validation] if self.validation is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetaEnvConfig:
        validation = data.get("validation")
        return cls(
            families=tuple(data["families"]),
            k=int(data.get("k", 3)),
            actor=ActorConfig.from_dict(data.get("actor", {})),
            master_seed=int(data.get("master_seed", 0)),
            max_parallel_rollouts=int(data.get("max_parallel_rollouts", 4)),
            validation=tuple(Task.from_dict(t) for t in validation) if validation is not None else None,
        )


@dataclass(frozen=True)
class MetaStepResult:
    obs: MetaObservation
    batch_mean_reward: float
    done: bool = False
    info: Mapping[str, Any] = field(default_factory=dict)


def batch_mean_reward(obs: MetaObservation, families: Mapping[str, TaskFamily]) -> float:
    """Mean of per-trajectory rewards clipped to, and divided by, the family's reward scale."""
    clipped = []
    for traj in obs.trajectories:
        scale = families[traj.task.family_id].reward_scale
        clipped.append(min(max(rollout_reward(traj), 0.0), scale) / scale)
    return math.fsum(clipped) / obs.k


def rollout_reward(traj: Trajectory) -> float:
    """Reward credited to a rollout; infrastructure failures count as 0."""
    return 0.0 if traj.error else traj.total_reward


def _episode(actor, families: Mapping[str, TaskFamily], task: Task, sp: SystemPrompt) -> Trajectory:
    try:
        return actor.run_episode(families[task.family_id], task, sp)
    except Exception as exc:  # the loop has no abort path; a broken rollout scores 0
        logger.exception("rollout of %s failed", task.key)
        return Trajectory.failed(task, f"{type(exc).__name__}: {exc}")


def run_episodes(
    actor, families: Mapping[str, TaskFamily], jobs: Sequence[tuple[Task, SystemPrompt]], max_parallel: int
) -> list[Trajectory]:
    """Run (task, prompt) jobs with at most ``max_parallel`` in flight; output follows job order."""
    jobs = list(jobs)
    if not jobs:
        raise ValueError("need at least one task")
    workers = min(max_parallel, len(jobs))
    if workers == 1:
        return [_episode(actor, families, t, sp) for t, sp in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: _episode(actor, families, *job), jobs))


class MetaEnv:
    def __init__(
        self,
        cfg: MetaEnvConfig,
        *,
        families: Optional[Mapping[str, TaskFamily]] = None,
        actor=None,
        client: Optional[ChatClient] = None,
    ):
        self.cfg = cfg
        known = dict(families or {})
        self.families: dict[str, TaskFamily] = {f: known.get(f) or get_family(f) for f in cfg.families}
        self.actor = actor or make_actor(cfg.actor, client)
        self.validation: tuple[Task, ...] = cfg.validation if cfg.validation is not None else tuple(
            t for fam in self.families.values() for t in fam.validation_tasks()
        )
        if not self.validation:
            raise ValueError("validation set must be non-empty")
        for task in self.validation:
            fam = self.families.get(task.family_id) or get_family(task.family_id)
            self.families.setdefault(task.family_id, fam)
            lo, hi = fam.train_seeds
            if lo <= task.instance_seed < hi:
                raise ValueError(f"validation task {task.key} overlaps the train seed range")
        self._draws = 0
        self._issued: set[tuple[str, int]] = set()
        self.drawn: list[tuple[str, int]] = []

    # -- task sampling -------------------------------------------------------
    def _draw(self) -> Task:
        """Next unseen train task from the (master_seed, draw_index) stream."""
        names = self.cfg.families
        while True:
            h = derive_seed("draw", self.cfg.master_seed, self._draws)
            self._draws += 1
            family = self.families[names[h % len(names)]]
            lo, hi = family.train_seeds
            seed = lo + (h // len(names)) % (hi - lo)
            if (family.family_id, seed) not in self._issued:
                self._issued.add((family.family_id, seed))
                self.drawn.append((family.family_id, seed))
                return family.make_task(seed, Split.TRAIN)

    def sample_batch(self) -> list[Task]:
        return [self._draw() for _ in range(self.cfg.k)]

    # -- rollouts ------------------------------------------------------------
    def run_batch(self, tasks: Sequence[Task], sp: SystemPrompt) -> list[Trajectory]:
        """One episode per task, returned in task order."""
        return run_episodes(self.actor, self.families, [(t, sp) for t in tasks], self.cfg.max_parallel_rollouts)

    def _collect(self, sp: SystemPrompt) -> MetaStepResult:
        started = time.perf_counter()
        tasks = self.sample_batch()
        trajectories = self.run_batch(tasks, sp)
        obs = MetaObservation(tuple(trajectories), tuple(tasks), sp.prompt_id)
        info = {
            "seeds": [t.instance_seed for t in tasks],
            "families": [t.family_id for t in tasks],
            "per_task_rewards": [rollout_reward(t) for t in trajectories],
            "errors": [t.error for t in trajectories],
            "elapsed_s": time.perf_counter() - started,
        }
        if all(t.error for t in trajectories):
            raise MetaEnvError(f"all {len(tasks)} rollouts failed: {trajectories[0].error}", obs)
        return MetaStepResult(obs, batch_mean_reward(obs, self.families), False, info)

    def meta_reset(self, sp0: SystemPrompt) -> tuple[MetaObservation, dict[str, Any]]:
        self._draws = 0
        self._issued.clear()
        self.drawn.clear()
        result = self._collect(sp0)
        return result.obs, dict(result.info)

    def meta_step(self, sp: SystemPrompt) -> MetaStepResult:
        return self._collect(sp)

    def evaluate_on_validation(self, sp: SystemPrompt) -> tuple[float, float]:
        """(sum of rewards, success rate) over the fixed validation tasks."""
        trajectories = self.run_batch(self.validation, sp)
        score = math.fsum(rollout_reward(t) for t in trajectories)
        rate = sum(1 for t in trajectories if t.success) / len(trajectories)
        return float(score), rate
