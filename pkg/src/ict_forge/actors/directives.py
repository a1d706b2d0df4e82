"""Closed vocabulary of behavioural directives the scripted actor can follow.

A directive is recognised in prompt text through trigger patterns. This is how
prompt wording reaches the scripted policy; LLM actors ignore it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from ict_forge.core import SystemPrompt


@dataclass(frozen=True)
class Directive:
    token: str
    triggers: tuple[str, ...]
    # Canonical sentence the rule reflector appends; must match a trigger.
    phrase: str

    def first_match(self, text: str) -> Optional[int]:
        hits = [m.start() for p in self.triggers if (m := re.search(p, text, re.IGNORECASE))]
        return min(hits) if hits else None


def _verb(verb: str, nouns: str, phrase_tail: Optional[str] = None) -> Directive:
    triggers = [rf"\b{verb} (it|them|the (item|object|{nouns}))\b"]
    if verb == "puton":
        triggers.append(r"\bput (it|them|the (item|ring)) on\b")
    return Directive(f"apply-verb:{verb}", tuple(triggers), f"After picking up an item, {phrase_tail or verb + ' it'}.")


VERBGRID_DIRECTIVES: tuple[Directive, ...] = (
    _verb("read", "scroll"),
    _verb("eat", "apple|food"),
    _verb("wield", "dagger|weapon"),
    _verb("wear", "cloak|armou?r"),
    _verb("puton", "ring", "put it on"),
    _verb("zap", "wand"),
    Directive(
        "avoid-revisit",
        (r"\b(avoid|do not|don't|never|stop) revisit(ing)?\b",),
        "Avoid revisiting cells you have already explored.",
    ),
)
HOUSETEXT_DIRECTIVES: tuple[Directive, ...] = (
    Directive(
        "open-before-search",
        (r"\bopen (any |all |every )?(closed )?(receptacles?|containers?|cabinets?|drawers?)\b",),
        "Open closed receptacles before moving on to search elsewhere.",
    ),
    Directive(
        "check:fridge",
        (r"\bfridges?\b",),
        "If an object needs to be cooled, consider locations such as the fridge first.",
    ),
)
REGISTRIES: dict[str, tuple[Directive, ...]] = {
    "verbgrid": VERBGRID_DIRECTIVES,
    "housetext": HOUSETEXT_DIRECTIVES,
}
VOCABULARY: tuple[Directive, ...] = VERBGRID_DIRECTIVES + HOUSETEXT_DIRECTIVES
BY_TOKEN: dict[str, Directive] = {d.token: d for d in VOCABULARY}


@dataclass(frozen=True)
class DirectiveSet:
    tokens: tuple[str, ...] = ()

    def __post_init__(self):
        seen: list[str] = []
        for tok in self.tokens:
            if tok not in BY_TOKEN:
                raise ValueError(f"unregistered directive {tok!r}")
            if tok not in seen:
                seen.append(tok)
        object.__setattr__(self, "tokens", tuple(seen))

    @classmethod
    def of(cls, *tokens: str) -> DirectiveSet:
        return cls(tuple(tokens))

    def __contains__(self, token: object) -> bool:
        return token in self.tokens

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def verbs(self) -> list[str]:
        return [t.split(":", 1)[1] for t in self.tokens if t.startswith("apply-verb:")]


def parse_directives(prompt: SystemPrompt | str, vocabulary: Optional[Sequence[Directive]] = None) -> DirectiveSet:
    """Registered directives mentioned in the prompt, ordered by first occurrence."""
    text = prompt.text if isinstance(prompt, SystemPrompt) else prompt
    found = []
    for rank, directive in enumerate(vocabulary or VOCABULARY):
        pos = directive.first_match(text)
        if pos is not None:
            found.append((pos, rank, directive.token))
    return DirectiveSet(tuple(tok for _, _, tok in sorted(found)))


def phrases_for(tokens: Iterable[str]) -> list[str]:
    return [BY_TOKEN[t].phrase for t in tokens]
