"""Actors: run one single-attempt episode of a task under a system prompt."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from ict_forge.actors.directives import DirectiveSet, parse_directives
from ict_forge.actors.react import ReactParseError, match_action, parse_react, render_actor_message
from ict_forge.actors.scripted import scripted_policy
from ict_forge.core import Step, SystemPrompt, Task, Trajectory, trajectory_is_success
from ict_forge.envkit import DEFAULT_STEP_LIMIT, EnvError, TaskFamily
from ict_forge.llm import ChatClient, ChatError, ChatMessage, EndpointConfig

logger = logging.getLogger(__name__)

NO_ACTION = "(no action)"


@dataclass(frozen=True)
class ActorConfig:
    kind: str = "scripted"
    llm: Optional[EndpointConfig] = field(default=None, compare=False)
    step_limit: int = DEFAULT_STEP_LIMIT
    max_reply_retries: int = 2

    def __post_init__(self):
        if self.kind not in ("scripted", "llm"):
            raise ValueError(f"unknown actor kind {self.kind!r}")
        if self.kind == "llm" and self.llm is None:
            raise ValueError("an llm actor needs endpoint settings")
        if self.step_limit < 1:
            raise ValueError("step_limit must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "llm": self.llm.to_dict() if self.llm else None,
            "step_limit": self.step_limit,
            "max_reply_retries": self.max_reply_retries,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ActorConfig:
        llm = data.get("llm")
        return cls(
            kind=data.get("kind", "scripted"),
            llm=EndpointConfig.from_dict(llm) if llm else None,
            step_limit=int(data.get("step_limit", DEFAULT_STEP_LIMIT)),
            max_reply_retries=int(data.get("max_reply_retries", 2)),
        )


def _finish(task: Task, family: TaskFamily, steps, outcome, final_obs: str) -> Trajectory:
    total = math.fsum(s.step_reward for s in steps)
    draft = Trajectory(task=task, steps=tuple(steps), total_reward=total)
    success = trajectory_is_success(draft, family.success_threshold)
    return Trajectory(
        task=task,
        steps=tuple(steps),
        success=success,
        total_reward=total,
        truncated=bool(outcome is not None and outcome.truncated and not success),
        final_observation=final_obs,
    )


class ScriptedActor:
    """LLM-free actor driven by ``scripted_policy``."""

    kind = "scripted"

    def __init__(self, config: ActorConfig = ActorConfig()):
        self.config = config

    def run_episode(self, family: TaskFamily, task: Task, sp: SystemPrompt) -> Trajectory:
        directives = parse_directives(sp)
        steps: list[Step] = []
        history: list[tuple[object, str]] = []
        try:
            env, obs = family.reset(task, step_limit=self.config.step_limit)
            outcome = None
            while not env.terminal:
                available = env.available_actions()
                before = env.state
                action = scripted_policy(directives, before, history)
                outcome = env.step(action)
                steps.append(Step(obs, tuple(available), action, None, outcome.reward))
                history.append((before, action))
                obs = outcome.observation
        except EnvError as exc:
            return Trajectory.failed(task, f"environment: {exc}", steps)
        return _finish(task, family, steps, outcome, obs)


class LLMActor:
    """ReAct actor backed by a chat endpoint; the conversation accumulates per step."""

    kind = "llm"

    def __init__(self, config: ActorConfig, client: Optional[ChatClient] = None):
        if config.llm is None and client is None:
            raise ValueError("LLMActor needs endpoint settings or a client")
        self.config = config
        self.client = client or ChatClient(config.llm)

    def _reply(self, messages: list[ChatMessage]) -> tuple[str, Optional[str], Optional[str]]:
        """(raw reply, thought, action); action is None when every attempt was malformed."""
        reply = ""
        for _ in range(self.config.max_reply_retries + 1):
            reply = self.client.chat(messages)
            try:
                thought, action = parse_react(reply)
            except ReactParseError:
                continue
            return reply, thought, action
        return reply, None, None

    def run_episode(self, family: TaskFamily, task: Task, sp: SystemPrompt) -> Trajectory:
        steps: list[Step] = []
        messages = [ChatMessage("system", sp.text)]
        task_name = family.display_name if family.announce_task else None
        try:
            env, obs = family.reset(task, step_limit=self.config.step_limit)
            outcome = None
            while not env.terminal:
                available = env.available_actions()
                messages.append(ChatMessage("user", render_actor_message(obs, available, task_name)))
                reply, thought, action = self._reply(messages)
                messages.append(ChatMessage("assistant", reply))
                if action is None:
                    action = reply.strip() or NO_ACTION
                else:
                    action = match_action(action, available)
                outcome = env.step(action)
                steps.append(Step(obs, tuple(available), action, thought, outcome.reward))
                obs = outcome.observation
        except ChatError as exc:
            logger.warning("episode %s aborted: %s", task.key, exc)
            return Trajectory.failed(task, f"endpoint: {exc}", steps)
        except EnvError as exc:
            return Trajectory.failed(task, f"environment: {exc}", steps)
        return _finish(task, family, steps, outcome, obs)


def make_actor(config: ActorConfig, client: Optional[ChatClient] = None):
    if config.kind == "scripted":
        return ScriptedActor(config)
    return LLMActor(config, client)


def run_episode(actor: ActorConfig | ScriptedActor | LLMActor, family: TaskFamily, task: Task, sp: SystemPrompt) -> Trajectory:
    if isinstance(actor, ActorConfig):
        actor = make_actor(actor)
    return actor.run_episode(family, task, sp)


__all__ = [
    "ActorConfig",
    "DirectiveSet",
    "LLMActor",
    "ReactParseError",
    "ScriptedActor",
    "make_actor",
    "match_action",
    "parse_directives",
    "parse_react",
    "render_actor_message",
    "run_episode",
    "scripted_policy",
]
