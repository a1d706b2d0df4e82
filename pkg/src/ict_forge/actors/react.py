"""ReAct reply parsing and the per-step actor user message."""

from __future__ import annotations

from typing import Optional, Sequence

THOUGHT_MARKER = "Thought:"
ACTION_MARKER = "Action:"
CLOSING_QUESTION = "What is your next thought and action?"


class ReactParseError(ValueError):
    pass


def parse_react(response: str) -> tuple[Optional[str], str]:
    """Split a reply into (thought, action).

    The action is the first line after the last ``Action:`` marker; the thought
    is whatever follows the last ``Thought:`` before it. A reply with no
    ``Action:`` marker is taken whole as the action candidate.
    """
    text = (response or "").strip()
    if not text:
        raise ReactParseError("empty response")
    idx = text.rfind(ACTION_MARKER)
    if idx < 0:
        return None, text
    rest = text[idx + len(ACTION_MARKER):].strip()
    action = rest.splitlines()[0].strip() if rest else ""
    if not action:
        raise ReactParseError("empty action after 'Action:' marker")
    before = text[:idx]
    t = before.rfind(THOUGHT_MARKER)
    thought = before[t + len(THOUGHT_MARKER):].strip() if t >= 0 else ""
    return (thought or None), action


def match_action(candidate: str, available: Sequence[str]) -> str:
    """Exact match, then case-insensitive match, else the trimmed candidate."""
    if not available:
        raise ValueError("available actions must be non-empty")
    cand = candidate.strip()
    if cand in available:
        return cand
    folded = cand.casefold()
    for action in available:
        if action.casefold() == folded:
            return action
    return cand


def render_actor_message(observation: str, available: Sequence[str], task_name: Optional[str] = None) -> str:
    head = f"Task: play {task_name}\n" if task_name else ""
    return f"{head}{observation}\n\nAvailable actions:\n{', '.join(available)}\n\n{CLOSING_QUESTION}"
