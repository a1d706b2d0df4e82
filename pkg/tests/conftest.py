from __future__ import annotations

import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Optional

import pytest

from ict_forge.core import MetaObservation, Split, Step, SystemPrompt, Task, Trajectory

# --- acceptance summary -------------------------------------------------------

_acceptance: dict[str, list[tuple[str, str]]] = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _acceptance[str(marker.args[0])].append((item.name, status))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_acceptance, key=lambda c: int(c) if c.isdigit() else 99):
        results = _acceptance[criterion]
        statuses = {s for _, s in results}
        overall = "FAIL" if "FAIL" in statuses else ("SKIP" if statuses == {"SKIP"} else "PASS")
        names = ", ".join(n for n, _ in results)
        terminalreporter.write_line(f"criterion {criterion}: {overall}  ({names})")


# --- fixture builders ---------------------------------------------------------


def make_task(seed: int = 0, family: str = "verbgrid-read", split: Split = Split.TRAIN) -> Task:
    return Task(family, seed, split)


def make_traj(
    task: Task,
    actions: list[str],
    rewards: Optional[list[float]] = None,
    *,
    success: bool = False,
    truncated: bool = False,
    observations: Optional[list[str]] = None,
    error: Optional[str] = None,
) -> Trajectory:
    rewards = rewards or [0.0] * len(actions)
    observations = observations or [f"obs {i}" for i in range(len(actions))]
    steps = tuple(
        Step(o, ("north", "south", actions[i]), actions[i], None, r)
        for i, (o, r) in enumerate(zip(observations, rewards))
    )
    return Trajectory(task, steps, success, sum(rewards), truncated, "", error)


def make_obs(trajectories: list[Trajectory], produced_under: str = "r/sp0") -> MetaObservation:
    return MetaObservation(tuple(trajectories), tuple(t.task for t in trajectories), produced_under)


@pytest.fixture
def sp0() -> SystemPrompt:
    return SystemPrompt.initial("You are a careful agent.", "r")


# --- fake HTTP servers --------------------------------------------------------


@dataclass
class FakeServer:
    url: str
    requests: list[dict[str, Any]] = field(default_factory=list)
    max_concurrent: int = 0


Handler = Callable[[str, dict], tuple[int, Any]]


def _serve(handler: Handler):
    server_state = {"active": 0}
    lock = threading.Lock()
    fake: FakeServer

    class H(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _reply(self, status: int, body: Any) -> None:
            raw = body.encode() if isinstance(body, str) else json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def do_GET(self):
            self._reply(200, {"ok": True})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length) or b"{}")
            with lock:
                server_state["active"] += 1
                fake.max_concurrent = max(fake.max_concurrent, server_state["active"])
                fake.requests.append({"path": self.path, "body": body, "headers": dict(self.headers)})
            try:
                status, payload = handler(self.path, body)
            finally:
                with lock:
                    server_state["active"] -= 1
            self._reply(status, payload)

    server = ThreadingHTTPServer(("127.0.0.1", 0), H)
    fake = FakeServer(f"http://127.0.0.1:{server.server_address[1]}")
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
    thread.start()
    return server, fake


@pytest.fixture
def http_server():
    """Factory: start a local JSON server around ``handler(path, body) -> (status, payload)``."""
    servers = []

    def start(handler: Handler) -> FakeServer:
        server, fake = _serve(handler)
        servers.append(server)
        return fake

    yield start
    for s in servers:
        s.shutdown()
        s.server_close()


def completion(content: str) -> dict:
    return {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}


@pytest.fixture
def chat_server(http_server):
    """Chat endpoint whose replies come from ``reply(body) -> str`` (or a status, payload pair)."""

    def start(reply) -> FakeServer:
        def handler(path, body):
            out = reply(body)
            if isinstance(out, tuple):
                return out
            return 200, completion(out)

        return http_server(handler)

    return start


class CounterGame:
    """Remote toy game: say "go" ``need`` times to win; "wait" does nothing."""

    def __init__(self, need: int = 2):
        self.need = need
        self.episodes: dict[str, int] = {}
        self.lock = threading.Lock()

    def __call__(self, path: str, body: dict):
        if path == "/reset":
            eid = f"{body['family_id']}:{body['seed']}:{len(self.episodes)}"
            with self.lock:
                self.episodes[eid] = 0
            return 200, {"episode_id": eid, "observation": "Say go.", "available_actions": ["go", "wait"]}
        if path == "/step":
            eid = body["episode_id"]
            if eid not in self.episodes:
                return 404, {"error": "unknown episode"}
            if body["action"] == "go":
                self.episodes[eid] += 1
            done = self.episodes[eid] >= self.need
            return 200, {
                "observation": "You win." if done else f"Count {self.episodes[eid]}.",
                "reward": 1.0 if done else 0.0,
                "done": done,
                "truncated": False,
                "available_actions": ["go", "wait"],
            }
        return 404, {"error": "no route"}


@pytest.fixture
def env_server(http_server):
    game = CounterGame()
    fake = http_server(game)
    fake.game = game
    return fake
