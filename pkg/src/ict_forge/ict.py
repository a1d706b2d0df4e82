"""The in-context training loop: reflect, validate, roll out, keep the best prompt."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ict_forge.core import (
    ICTRunRecord,
    MetaObservation,
    SystemPrompt,
    TurnEntry,
    canonical_json,
    dump_record,
)
from ict_forge.envkit import TaskFamily, get_family
from ict_forge.llm import ChatClient
from ict_forge.metaenv import MetaEnv, MetaEnvConfig, MetaEnvError
from ict_forge.reflectors import ReflectorConfig, make_reflector, reflect

logger = logging.getLogger(__name__)

STATS_HEADER = ("turn", "val_score", "val_rate", "best_so_far")


@dataclass(frozen=True)
class ICTConfig:
    meta_env: MetaEnvConfig
    reflector: ReflectorConfig = field(default_factory=ReflectorConfig)
    turns: int = 10
    # None: the first family's shipped initial prompt
    initial_prompt: Optional[str] = None
    eval_initial: bool = False

    def __post_init__(self):
        if self.turns < 1:
            raise ValueError("turns must be >= 1")

    def resolved_initial_prompt(self) -> str:
        if self.initial_prompt is not None:
            return self.initial_prompt
        return get_family(self.meta_env.families[0]).initial_prompt

    def to_dict(self) -> dict[str, Any]:
        return {
            "meta_env": self.meta_env.to_dict(),
            "reflector": self.reflector.to_dict(),
            "turns": self.turns,
            "initial_prompt": self.initial_prompt,
            "eval_initial": self.eval_initial,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ICTConfig:
        return cls(
            meta_env=MetaEnvConfig.from_dict(data["meta_env"]),
            reflector=ReflectorConfig.from_dict(data.get("reflector", {})),
            turns=int(data.get("turns", 10)),
            initial_prompt=data.get("initial_prompt"),
            eval_initial=bool(data.get("eval_initial", False)),
        )

    def run_id(self) -> str:
        digest = hashlib.blake2b(canonical_json(self.to_dict()).encode("utf-8"), digest_size=6).hexdigest()
        return f"ict-{digest}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _batch(env: MetaEnv, sp: SystemPrompt, first: bool) -> MetaObservation:
    try:
        if first:
            return env.meta_reset(sp)[0]
        return env.meta_step(sp).obs
    except MetaEnvError as exc:
        # degrade to the all-failed batch rather than abort the loop
        logger.error("%s", exc)
        assert exc.obs is not None
        return exc.obs


def run_ict(
    cfg: ICTConfig,
    *,
    families: Optional[Mapping[str, TaskFamily]] = None,
    actor=None,
    reflector=None,
    client: Optional[ChatClient] = None,
    output: str | Path | None = None,
    run_id: Optional[str] = None,
    validate: bool = True,
) -> ICTRunRecord:
    """Run N meta-turns and return the full record; also written to ``output`` when given.

    ``validate=False`` skips validation scoring (used when only rollout batches
    are wanted); the record then keeps the initial prompt as its best.
    """
    run_id = run_id or cfg.run_id()
    env = MetaEnv(cfg.meta_env, families=families, actor=actor, client=client)
    reflector = reflector or make_reflector(cfg.reflector, client)
    started = time.perf_counter()
    meta: dict[str, Any] = {"started_at": _now(), "turn_seconds": [], "raw_responses": []}

    sp0 = SystemPrompt.initial(cfg.resolved_initial_prompt(), run_id)
    best_id, best_score = sp0.prompt_id, 0.0
    obs = _batch(env, sp0, first=True)
    score0 = rate0 = None
    if cfg.eval_initial:
        score0, rate0 = env.evaluate_on_validation(sp0)
    turns = [TurnEntry(0, sp0, obs, score0, rate0)]

    prev = sp0
    for i in range(1, cfg.turns + 1):
        t0 = time.perf_counter()
        reflection = reflect(reflector, prev, obs)
        sp = reflection.improved_prompt.restamp(run_id, i)
        score = rate = None
        if validate:
            score, rate = env.evaluate_on_validation(sp)
        if score is not None and score > best_score:
            best_id, best_score = sp.prompt_id, score
        obs = _batch(env, sp, first=False)
        turns.append(TurnEntry(i, sp, obs, score, rate, reflection.analysis, reflection.parse_ok))
        meta["turn_seconds"].append(round(time.perf_counter() - t0, 4))
        meta["raw_responses"].append(reflection.raw_response)
        logger.info("turn %d: score %s rate %s best %.1f", i, score, rate, best_score)
        prev = sp

    meta["finished_at"] = _now()
    meta["elapsed_s"] = round(time.perf_counter() - started, 4)
    meta["drawn_tasks"] = [list(d) for d in env.drawn]
    record = ICTRunRecord.from_turns(run_id, cfg.to_dict(), turns, meta)
    if (record.best_prompt_id, record.best_score) != (best_id, best_score):
        raise AssertionError("best-prompt tracking diverged from the record scan")
    if output is not None:
        dump_record(record, output)
    return record


def best_prompt(record: ICTRunRecord) -> tuple[SystemPrompt, float]:
    return record.prompt(record.best_prompt_id), record.best_score


@dataclass(frozen=True)
class TurnStat:
    turn: int
    val_score: float
    val_rate: float
    best_so_far: float


def turn_stats(record: ICTRunRecord) -> list[TurnStat]:
    """Per reflected turn: validation score, rate and the running max of the rate."""
    rows = []
    best = float("-inf")
    for entry in record.turns[1:]:
        rate = float(entry.validation_success_rate or 0.0)
        best = max(best, rate)
        rows.append(TurnStat(entry.turn, float(entry.validation_score or 0.0), rate, best))
    return rows


def stats_csv(rows: Sequence[TurnStat]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_HEADER)
    for r in rows:
        writer.writerow([r.turn, repr(r.val_score), repr(r.val_rate), repr(r.best_so_far)])
    return buf.getvalue()


def write_stats_csv(record: ICTRunRecord, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(stats_csv(turn_stats(record)), encoding="utf-8")
    return path


AGGREGATE_HEADER = ("turn", "runs", "best_so_far_mean", "best_so_far_std", "val_rate_mean", "val_rate_std")


def aggregate_turn_stats(records: Sequence[ICTRunRecord]) -> list[dict[str, float]]:
    """Mean and population std of best-so-far and validation rate across runs, per turn."""
    if not records:
        raise ValueError("need at least one run record")
    tables = [turn_stats(r) for r in records]
    horizon = min(len(t) for t in tables)
    out = []
    for idx in range(horizon):
        best = np.array([t[idx].best_so_far for t in tables])
        rate = np.array([t[idx].val_rate for t in tables])
        out.append(
            {
                "turn": tables[0][idx].turn,
                "runs": len(tables),
                "best_so_far_mean": float(best.mean()),
                "best_so_far_std": float(best.std()),
                "val_rate_mean": float(rate.mean()),
                "val_rate_std": float(rate.std()),
            }
        )
    return out


def aggregate_csv(rows: Sequence[Mapping[str, float]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=AGGREGATE_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
