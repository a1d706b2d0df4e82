"""Invariants checked over generated inputs."""

from __future__ import annotations

import math
import statistics

from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_obs, make_task, make_traj
from golden_cases import scripted_episode
from ict_forge.actors import ReactParseError, parse_react
from ict_forge.core import ICTRunRecord, SystemPrompt, TurnEntry, record_digest, record_round_trip, select_best
from ict_forge.metaenv import MetaEnv, MetaEnvConfig
from ict_forge.reflectors import DEFAULT_RULES, parse_reflection, rule_reflect
from ict_forge.traindata import group_advantages

FALLBACK = SystemPrompt.initial("fallback", "p")
rewards = st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=2, max_size=16)


@given(rewards)
def test_advantages_are_centred_and_scaled(r):
    adv = group_advantages(r)
    assert len(adv) == len(r)
    assert abs(math.fsum(adv)) <= 1e-6 * len(r)
    if statistics.pstdev(r) >= 1e-9:
        var = math.fsum(a * a for a in adv) / len(adv)
        assert abs(var - 1.0) < 1e-6
    elif max(r) == min(r):
        assert adv == [0.0] * len(r)
    assert all(math.isfinite(a) for a in adv)


@given(rewards)
def test_advantages_preserve_order(r):
    adv = group_advantages(r)
    for i in range(len(r)):
        for j in range(len(r)):
            if r[i] < r[j]:
                assert adv[i] <= adv[j]


@given(st.text())
def test_reflection_parse_never_raises(text):
    r = parse_reflection(text, FALLBACK)
    if r.parse_ok:
        assert r.improved_prompt.text.strip()
    else:
        assert r.improved_prompt is FALLBACK


@given(st.text(min_size=1), st.text())
def test_reflection_round_trip(prompt, analysis):
    prompt = prompt.strip()
    if not prompt or "IMPROVED PROMPT" in prompt or "ANALYSIS" in prompt:
        return
    r = parse_reflection(f"ANALYSIS:\n{analysis}\n\nIMPROVED PROMPT:\n{prompt}", FALLBACK)
    assert r.parse_ok and r.improved_prompt.text == prompt


@given(st.text())
def test_react_parse_total(text):
    try:
        thought, action = parse_react(text)
    except ReactParseError:
        return
    assert action and action == action.strip()


actions = st.lists(st.sampled_from(["step n", "step s", "step w", "step e", "pickup", "read", "eat"]), max_size=8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 20), actions)
def test_rule_reflection_is_idempotent(seed, acts):
    traj = scripted_episode("verbgrid-read", seed, acts or ["look"], step_limit=max(1, len(acts)))
    obs = make_obs([traj])
    once = rule_reflect(DEFAULT_RULES, FALLBACK, obs)
    twice = rule_reflect(DEFAULT_RULES, once.improved_prompt, obs)
    assert twice.improved_prompt.text == once.improved_prompt.text
    assert once.improved_prompt.text.startswith(FALLBACK.text)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 8), st.integers(1, 5))
def test_sampling_never_repeats(seed, k, steps):
    env = MetaEnv(MetaEnvConfig(("verbgrid-read", "verbgrid-eat"), k=k, master_seed=seed))
    keys = [t.key for _ in range(steps) for t in env.sample_batch()]
    assert len(keys) == len(set(keys)) == k * steps
    val = {t.key for t in env.validation}
    assert not val & set(keys)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.one_of(st.none(), st.integers(0, 32)), min_size=1, max_size=6), st.text(min_size=1))
def test_record_round_trip_and_best(scores, text):
    if not text.strip():
        return
    sp0 = SystemPrompt.initial(text, "r")
    turns = [TurnEntry(0, sp0, make_obs([make_traj(make_task(0), [])], produced_under=sp0.prompt_id))]
    for i, s in enumerate(scores, start=1):
        sp = sp0.restamp("r", i)
        obs = make_obs([make_traj(make_task(i), ["a"], [0.5])], produced_under=sp.prompt_id)
        turns.append(TurnEntry(i, sp, obs, None if s is None else float(s), None if s is None else s / 32))
    rec = ICTRunRecord.from_turns("r", {"x": 1}, turns)
    back = record_round_trip(rec)
    assert back == rec and record_digest(back) == record_digest(rec)
    best_id, best = select_best(turns)
    numeric = [s for s in scores if s is not None]
    assert best == max([0.0] + [float(s) for s in numeric])
    if not numeric or max(numeric) == 0:
        assert best_id == sp0.prompt_id
    else:
        first = scores.index(max(numeric)) + 1
        assert best_id == turns[first].prompt.prompt_id
