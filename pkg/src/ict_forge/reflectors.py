"""Reflectors map (previous prompt, rollout batch) to an improved prompt.

Two kinds: an LLM reflector that sends the canonical reflection request to a
chat endpoint, and a deterministic rule reflector that appends directive
phrases when simple predicates over the batch fire.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

from ict_forge.actors.directives import BY_TOKEN
from ict_forge.core import MetaObservation, PromptOrigin, SystemPrompt, Trajectory, render_episode
from ict_forge.envkit.verbgrid import NOUN_TO_VERB, SIZE, VERBS
from ict_forge.llm import ChatClient, ChatError, ChatMessage, EndpointConfig
from ict_forge.prompts import load_override

logger = logging.getLogger(__name__)

SYSTEM_ASSET = "reflector_system.txt"
USER_ASSET = "reflector_user.txt"
EPISODE_SEPARATOR = "\n\n\n"
_PLACEHOLDER = re.compile(r"\{(previous_prompt|episodes)\}")

_ANALYSIS = re.compile(r"^[ \t]*(?:ANALYSIS:|===\s*ANALYSIS\s*===)[ \t]*", re.MULTILINE)
_IMPROVED = re.compile(r"^[ \t]*(?:IMPROVED PROMPT:|===\s*IMPROVED PROMPT\s*===)[ \t]*", re.MULTILINE)


@dataclass(frozen=True)
class Reflection:
    analysis: str
    improved_prompt: SystemPrompt
    raw_response: str
    parse_ok: bool


def render_reflection_request(
    prev: SystemPrompt,
    obs: MetaObservation,
    *,
    system_path: str | Path | None = None,
    user_path: str | Path | None = None,
) -> tuple[str, str]:
    """(system_text, user_text) for one reflection call. Episodes follow batch order."""
    system_text = load_override(system_path, SYSTEM_ASSET)
    template = load_override(user_path, USER_ASSET)
    episodes = "".join(
        render_episode(traj, j) + EPISODE_SEPARATOR for j, traj in enumerate(obs.trajectories, start=1)
    )
    # one pass, so placeholder-like text inside prompts or observations stays literal
    values = {"previous_prompt": prev.text, "episodes": episodes}
    user_text = _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)
    return system_text, user_text


def parse_reflection(response: str, fallback: SystemPrompt) -> Reflection:
    """Split a reflector reply into analysis and improved prompt; never raises.

    Without an improved-prompt marker, or with nothing after it, the result
    carries ``fallback`` itself and ``parse_ok=False``.
    """
    text = response or ""
    improved = list(_IMPROVED.finditer(text))
    if not improved:
        return Reflection("", fallback, text, False)
    marker = improved[-1]
    prompt_text = text[marker.end():].strip()
    head = text[: marker.start()]
    analysis_m = list(_ANALYSIS.finditer(head))
    analysis = head[analysis_m[-1].end():].strip() if analysis_m else head.strip()
    if not prompt_text:
        return Reflection(analysis, fallback, text, False)
    prompt = SystemPrompt(
        text=prompt_text,
        prompt_id=fallback.prompt_id,
        origin=PromptOrigin.REFLECTOR,
        turn_index=fallback.turn_index,
        run_id=fallback.run_id,
    )
    return Reflection(analysis, prompt, text, True)


# --- rule reflector -------------------------------------------------------

Predicate = Callable[[MetaObservation], bool]


@dataclass(frozen=True)
class Rule:
    rule_id: str
    predicate: Predicate = field(compare=False)
    directive: str

    def __post_init__(self):
        if self.directive not in BY_TOKEN:
            raise ValueError(f"rule {self.rule_id!r} names unregistered directive {self.directive!r}")

    @property
    def phrase(self) -> str:
        return BY_TOKEN[self.directive].phrase


@dataclass(frozen=True)
class RuleTable:
    rules: tuple[Rule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def select(self, rule_ids: Sequence[str]) -> RuleTable:
        by_id = {r.rule_id: r for r in self.rules}
        missing = [r for r in rule_ids if r not in by_id]
        if missing:
            raise KeyError(f"unknown rule ids {missing}; known: {sorted(by_id)}")
        return RuleTable(tuple(by_id[r] for r in rule_ids))

    @property
    def ids(self) -> list[str]:
        return [r.rule_id for r in self.rules]


_PICKUP = re.compile(r"You pick up an? (\w+)\.")


def _texts(traj: Trajectory) -> list[str]:
    return [s.observation for s in traj.steps] + [traj.final_observation]


def _failed(obs: MetaObservation) -> list[Trajectory]:
    return [t for t in obs.trajectories if not t.success]


def picked_up_without_verb(verb: str) -> Predicate:
    """A failed episode picked up the item that takes ``verb`` but applied no verb at all."""

    def predicate(obs: MetaObservation) -> bool:
        for traj in _failed(obs):
            nouns = {m.group(1) for text in _texts(traj) for m in _PICKUP.finditer(text)}
            used_verb = any(s.action in VERBS for s in traj.steps)
            if not used_verb and any(NOUN_TO_VERB.get(n) == verb for n in nouns):
                return True
        return False

    return predicate


def _agent_cell(observation: str) -> Optional[tuple[int, int]]:
    rows = observation.split("\n")[-SIZE:]
    for r, row in enumerate(rows):
        c = row.find("@")
        if c >= 0:
            return (r, c)
    return None


def revisits(threshold: int = 3) -> Predicate:
    """A failed grid episode stood on the same cell at least ``threshold`` times."""

    def predicate(obs: MetaObservation) -> bool:
        for traj in _failed(obs):
            cells = Counter(c for s in traj.steps if (c := _agent_cell(s.observation)) is not None)
            if cells and max(cells.values()) >= threshold:
                return True
        return False

    return predicate


def saw_closed_never_opened(obs: MetaObservation) -> bool:
    for traj in _failed(obs):
        saw = any(" is closed." in text for text in _texts(traj))
        opened = any(s.action.startswith("open ") for s in traj.steps)
        if saw and not opened:
            return True
    return False


_COOL_TASK = re.compile(r"Your task is to: .*\bcool\b")


def failed_cooling(obs: MetaObservation) -> bool:
    return any(traj.steps and _COOL_TASK.search(traj.steps[0].observation) for traj in _failed(obs))


DEFAULT_RULES = RuleTable(
    tuple(Rule(f"pickup-no-verb:{v}", picked_up_without_verb(v), f"apply-verb:{v}") for v in VERBS)
    + (
        Rule("revisit", revisits(3), "avoid-revisit"),
        Rule("closed-unopened", saw_closed_never_opened, "open-before-search"),
        Rule("failed-cooling", failed_cooling, "check:fridge"),
    )
)


def _format_raw(analysis: str, prompt: str) -> str:
    return f"ANALYSIS:\n{analysis}\n\nIMPROVED PROMPT:\n{prompt}"


def rule_reflect(rules: RuleTable, prev: SystemPrompt, obs: MetaObservation) -> Reflection:
    """Append the phrase of every firing rule not already present in the prompt."""
    text = prev.text
    fired = []
    for rule in rules.rules:
        if rule.phrase in text or not rule.predicate(obs):
            continue
        text = f"{text}\n{rule.phrase}"
        fired.append(rule.rule_id)
    analysis = f"Fired rules: {', '.join(fired)}." if fired else "No rule fired; prompt kept unchanged."
    origin = PromptOrigin.RULE if fired else prev.origin
    prompt = SystemPrompt(text, prev.prompt_id, origin, prev.turn_index, prev.run_id)
    return Reflection(analysis, prompt, _format_raw(analysis, text), True)


# --- reflector objects ----------------------------------------------------


@dataclass(frozen=True)
class ReflectorConfig:
    kind: str = "rule"
    rules: Optional[tuple[str, ...]] = None  # rule ids; None means every default rule
    llm: Optional[EndpointConfig] = field(default=None, compare=False)
    transport_retries: int = 2
    system_prompt_path: Optional[str] = None
    user_template_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("rule", "llm"):
            raise ValueError(f"unknown reflector kind {self.kind!r}")
        if self.kind == "llm" and self.llm is None:
            raise ValueError("an llm reflector needs endpoint settings")
        if self.rules is not None:
            object.__setattr__(self, "rules", tuple(self.rules))
            try:
                DEFAULT_RULES.select(self.rules)
            except KeyError as exc:
                raise ValueError(exc.args[0]) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "rules": list(self.rules) if self.rules is not None else None,
            "llm": self.llm.to_dict() if self.llm else None,
            "transport_retries": self.transport_retries,
            "system_prompt_path": self.system_prompt_path,
            "user_template_path": self.user_template_path,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ReflectorConfig:
        llm = data.get("llm")
        rules = data.get("rules")
        return cls(
            kind=data.get("kind", "rule"),
            rules=tuple(rules) if rules is not None else None,
            llm=EndpointConfig.from_dict(llm) if llm else None,
            transport_retries=int(data.get("transport_retries", 2)),
            system_prompt_path=data.get("system_prompt_path"),
            user_template_path=data.get("user_template_path"),
        )


class RuleReflector:
    kind = "rule"

    def __init__(self, rules: RuleTable = DEFAULT_RULES):
        self.rules = rules

    def reflect(self, prev: SystemPrompt, obs: MetaObservation) -> Reflection:
        return rule_reflect(self.rules, prev, obs)


class LLMReflector:
    kind = "llm"

    def __init__(self, config: ReflectorConfig, client: Optional[ChatClient] = None):
        if config.llm is None and client is None:
            raise ValueError("LLMReflector needs endpoint settings or a client")
        self.config = config
        self.client = client or ChatClient(config.llm)

    def request(self, prev: SystemPrompt, obs: MetaObservation) -> tuple[str, str]:
        return render_reflection_request(
            prev, obs, system_path=self.config.system_prompt_path, user_path=self.config.user_template_path
        )

    def reflect(self, prev: SystemPrompt, obs: MetaObservation) -> Reflection:
        system_text, user_text = self.request(prev, obs)
        messages = [ChatMessage("system", system_text), ChatMessage("user", user_text)]
        last = ""
        for attempt in range(self.config.transport_retries + 1):
            try:
                response = self.client.chat(messages)
            except ChatError as exc:
                last = str(exc)
                logger.warning("reflection attempt %d failed: %s", attempt + 1, exc)
                continue
            return parse_reflection(response, prev)
        return Reflection(f"reflector unavailable: {last}", prev, "", False)


def make_reflector(config: ReflectorConfig, client: Optional[ChatClient] = None):
    if config.kind == "rule":
        table = DEFAULT_RULES if config.rules is None else DEFAULT_RULES.select(config.rules)
        return RuleReflector(table)
    return LLMReflector(config, client)


def reflect(reflector, prev: SystemPrompt, obs: MetaObservation) -> Reflection:
    """Dispatch to a reflector object or a ``RuleTable``."""
    if isinstance(reflector, RuleTable):
        return rule_reflect(reflector, prev, obs)
    if isinstance(reflector, ReflectorConfig):
        reflector = make_reflector(reflector)
    return reflector.reflect(prev, obs)
