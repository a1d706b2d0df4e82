"""Drive an external environment server over JSON/HTTP.

Wire protocol::

    POST /reset {"family_id", "seed", "params"}
        -> {"observation", "available_actions": [...], "episode_id"?}
    POST /step  {"episode_id", "action"}
        -> {"observation", "reward", "done", "truncated", "available_actions": [...]}

When the server omits ``episode_id`` from the reset reply, ``"{family_id}:{seed}"``
is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import httpx

from ict_forge.core import Task
from ict_forge.envkit.base import DEFAULT_STEP_LIMIT, EnvError, EnvironmentHandle, TaskFamily, Transition

DEFAULT_TIMEOUT = 60.0


class BridgeError(EnvError):
    """Transport failure or malformed reply from a remote environment."""


@dataclass(frozen=True)
class RemoteState:
    episode_id: str
    available_actions: tuple[str, ...]


class RemoteTaskFamily(TaskFamily):
    """A task family whose transitions happen on a remote server.

    Tasks carry no generated params; the seed is sent to the server, which is
    expected to reproduce the same instance for the same seed when
    ``seeded_reset`` is true.
    """

    def __init__(
        self,
        endpoint: str,
        family_id: str,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        seeded_reset: bool = False,
        client: Optional[httpx.Client] = None,
        initial_prompt: str = "You are an intelligent agent. Complete the task using the available actions.",
    ):
        self.endpoint = endpoint.rstrip("/")
        self.family_id = family_id
        self.display_name = family_id
        self.description = f"remote family {family_id} at {self.endpoint}"
        self.timeout = timeout
        self.seeded_reset = seeded_reset
        self.initial_prompt = initial_prompt
        self._client = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, route: str, payload: dict[str, Any]) -> dict[str, Any]:
        try:
            resp = self._client.post(f"{self.endpoint}{route}", json=payload, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise BridgeError(f"{route} failed: {exc}") from exc
        if resp.status_code >= 400:
            raise BridgeError(f"{route} returned HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise BridgeError(f"{route} returned non-JSON body: {resp.text[:200]!r}") from exc
        if not isinstance(data, dict) or "observation" not in data:
            raise BridgeError(f"{route} reply lacks 'observation': {data!r}")
        return data

    def generate(self, seed: int) -> dict[str, str]:
        return {}

    def reset(self, task: Task, step_limit: int = DEFAULT_STEP_LIMIT) -> tuple[EnvironmentHandle, str]:
        self.check_task(task)
        data = self._post("/reset", {"family_id": self.family_id, "seed": task.instance_seed, "params": dict(task.params)})
        state = RemoteState(
            episode_id=str(data.get("episode_id") or f"{self.family_id}:{task.instance_seed}"),
            available_actions=tuple(data.get("available_actions") or ()),
        )
        return EnvironmentHandle(self, task, state, step_limit=step_limit), str(data["observation"])

    def initial_state(self, task: Task) -> RemoteState:
        raise BridgeError("remote families have no local state graph")

    def actions(self, state: RemoteState) -> list[str]:
        return list(state.available_actions)

    def transition(self, state: RemoteState, action: str) -> Transition:
        data = self._post("/step", {"episode_id": state.episode_id, "action": action})
        nxt = RemoteState(state.episode_id, tuple(data.get("available_actions") or ()))
        truncated = bool(data.get("truncated", False))
        done = bool(data.get("done", False)) or truncated
        return Transition(nxt, str(data["observation"]), float(data.get("reward", 0.0)), done, truncated)

    def metadata(self) -> dict[str, Any]:
        meta = super().metadata()
        meta.update(endpoint=self.endpoint, seeded_reset=self.seeded_reset)
        return meta


def bridge_connect(
    endpoint: str,
    family_id: str,
    *,
    timeout: float = DEFAULT_TIMEOUT,
    seeded_reset: bool = False,
) -> RemoteTaskFamily:
    """Probe ``endpoint`` and return a family that delegates to it.

    Any HTTP answer to the probe counts as reachable; connection failures and
    timeouts raise ``BridgeError``.
    """
    client = httpx.Client(timeout=timeout)
    try:
        client.get(endpoint.rstrip("/") + "/", timeout=min(timeout, 10.0))
    except httpx.HTTPError as exc:
        client.close()
        raise BridgeError(f"cannot reach {endpoint}: {exc}") from exc
    return RemoteTaskFamily(endpoint, family_id, timeout=timeout, seeded_reset=seeded_reset, client=client)
