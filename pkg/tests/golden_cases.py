"""Fixtures behind the golden files. Run this module to regenerate them.

The episodes come from fixed action scripts on the built-in environments, so
the golden texts depend only on environment dynamics and the renderers.
"""

from __future__ import annotations

import sys
from pathlib import Path

from ict_forge.actors.react import render_actor_message
from ict_forge.core import MetaObservation, Step, SystemPrompt, Trajectory
from ict_forge.envkit import get_family
from ict_forge.reflectors import render_reflection_request

GOLDEN = Path(__file__).parent / "golden"


def scripted_episode(family_ref: str, seed: int, actions: list[str], step_limit: int = 25) -> Trajectory:
    family = get_family(family_ref)
    task = family.make_task(seed)
    env, obs = family.reset(task, step_limit=step_limit)
    steps = []
    outcome = None
    for action in actions:
        available = env.available_actions()
        outcome = env.step(action)
        steps.append(Step(obs, tuple(available), action, None, outcome.reward))
        obs = outcome.observation
        if outcome.done:
            break
    total = sum(s.step_reward for s in steps)
    success = total >= family.success_threshold
    return Trajectory(task, tuple(steps), success, total, bool(outcome.truncated and not success), obs)


def success_episode() -> Trajectory:
    return scripted_episode("verbgrid-read", 1, ["run w", "pickup", "read"])


def truncated_episode() -> Trajectory:
    return scripted_episode("verbgrid-read", 2, ["step n", "step n", "pickup"], step_limit=3)


def reflection_case() -> tuple[SystemPrompt, MetaObservation]:
    prev = SystemPrompt.initial(get_family("verbgrid-read").initial_prompt, "golden")
    trajs = (success_episode(), truncated_episode())
    return prev, MetaObservation(trajs, tuple(t.task for t in trajs), prev.prompt_id)


def actor_message_case() -> str:
    family = get_family("verbgrid-read")
    env, obs = family.reset(family.make_task(1))
    return render_actor_message(obs, env.available_actions(), family.display_name)


def render_all() -> dict[str, str]:
    system_text, user_text = render_reflection_request(*reflection_case())
    return {
        "reflection_system.txt": system_text,
        "reflection_user.txt": user_text,
        "actor_message.txt": actor_message_case(),
        "trajectory_pretty.txt": truncated_episode().pretty_print(),
    }


if __name__ == "__main__":
    GOLDEN.mkdir(exist_ok=True)
    for name, text in render_all().items():
        (GOLDEN / name).write_bytes(text.encode("utf-8"))
        print(f"wrote {GOLDEN / name}", file=sys.stderr)
