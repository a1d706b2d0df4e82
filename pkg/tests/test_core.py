from __future__ import annotations

import json

import pytest

from conftest import make_obs, make_task, make_traj
from ict_forge.core import (
    ICTRunRecord,
    MetaObservation,
    PromptOrigin,
    SchemaVersionError,
    Split,
    Step,
    SystemPrompt,
    Task,
    Trajectory,
    TurnEntry,
    dump_record,
    format_reward,
    hashed_region,
    load_record,
    record_digest,
    record_round_trip,
    render_episode,
    select_best,
    trajectory_is_success,
)


def _turns(scores, run="r"):
    sp = SystemPrompt.initial("base", run)
    turns = [TurnEntry(0, sp, make_obs([make_traj(make_task(0), ["a"])], sp.prompt_id))]
    for i, score in enumerate(scores, start=1):
        p = sp.restamp(run, i)
        obs = make_obs([make_traj(make_task(i), ["a"])], p.prompt_id)
        turns.append(TurnEntry(i, p, obs, score, score / 32))
    return turns


class TestTask:
    def test_key_and_round_trip(self):
        t = Task("verbgrid-read", 7, Split.VALIDATION, {"agent": "1,2"})
        assert t.key == ("verbgrid-read", 7)
        assert Task.from_dict(json.loads(json.dumps(t.to_dict()))) == t

    def test_seed_must_fit_u64(self):
        with pytest.raises(ValueError):
            Task("f", -1)
        with pytest.raises(ValueError):
            Task("f", 2**64)

    def test_params_do_not_affect_hash(self):
        assert hash(Task("f", 1, params={"a": "1"})) == hash(Task("f", 1, params={"a": "2"}))


class TestTrajectory:
    def test_truncated_success_rejected(self):
        with pytest.raises(ValueError):
            Trajectory(make_task(), (), success=True, truncated=True)

    def test_total_must_match_steps(self):
        step = Step("o", ("a",), "a", None, 1.0)
        with pytest.raises(ValueError):
            Trajectory(make_task(), (step,), total_reward=0.0)

    def test_empty_action_rejected(self):
        with pytest.raises(ValueError):
            Step("o", ("a",), "")

    def test_failed_counts_as_not_success(self):
        traj = Trajectory.failed(make_task(), "endpoint down")
        assert not traj.success and traj.error == "endpoint down"
        assert not trajectory_is_success(traj)

    def test_round_trip(self):
        traj = make_traj(make_task(3), ["step n", "read"], [0.0, 1.0], success=True)
        assert Trajectory.from_dict(json.loads(json.dumps(traj.to_dict()))) == traj


class TestSystemPrompt:
    def test_whitespace_is_trimmed(self):
        assert SystemPrompt("  hi \n", "x").text == "hi"

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            SystemPrompt("   ", "x")

    def test_restamp_keeps_text(self):
        sp = SystemPrompt.initial("text", "run")
        new = sp.restamp("run", 3, "-c1")
        assert new.text == sp.text and new.prompt_id == "run/sp3-c1" and new.turn_index == 3

    def test_origin_coerced(self):
        assert SystemPrompt("t", "x", "rule").origin is PromptOrigin.RULE


class TestMetaObservation:
    def test_task_mismatch_rejected(self):
        traj = make_traj(make_task(1), ["a"])
        with pytest.raises(ValueError):
            MetaObservation((traj,), (make_task(2),), "p")

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            MetaObservation((), (), "p")

    def test_round_trip(self):
        obs = make_obs([make_traj(make_task(1), ["a"]), make_traj(make_task(2), ["b"], [1.0], success=True)])
        back = MetaObservation.from_dict(json.loads(json.dumps(obs.to_dict())))
        assert back == obs and back.rewards == [0.0, 1.0]


class TestRendering:
    def test_format_reward(self):
        assert format_reward(1.0) == "1"
        assert format_reward(0) == "0"
        assert format_reward(0.5) == "0.50"
        assert format_reward(2 / 3) == "0.67"

    def test_empty_episode_still_has_header_and_total(self):
        text = render_episode(Trajectory(make_task()), 1)
        assert text.startswith("=== Episode 1 ===\nSuccess: No\n")
        assert text.endswith("Total reward: 0")

    def test_step_limit_line_only_when_failed_and_truncated(self):
        truncated = make_traj(make_task(), ["a"], truncated=True)
        assert "Step limit reached." in render_episode(truncated, 1)
        failed = make_traj(make_task(), ["a"])
        assert "Step limit reached." not in render_episode(failed, 1)

    def test_thoughts_only_when_requested(self):
        step = Step("o", ("a",), "a", "thinking", 0.0)
        traj = Trajectory(make_task(), (step,))
        assert "Thought: thinking" not in render_episode(traj, 1)
        assert "Thought: thinking" in render_episode(traj, 1, with_thoughts=True)

    def test_pretty_print_mentions_task_and_error(self):
        text = Trajectory.failed(make_task(5), "boom").pretty_print()
        assert text.startswith("Task: verbgrid-read (seed 5, train)\n")
        assert "Error: boom" in text and text.endswith("\n")


class TestBestSelection:
    def test_earliest_of_ties_wins(self):
        best_id, score = select_best(_turns([2, 5, 5, 3]))
        assert (best_id, score) == ("r/sp2", 5.0)

    def test_all_zero_keeps_initial(self):
        assert select_best(_turns([0, 0])) == ("r/sp0", 0.0)

    def test_single_max(self):
        assert select_best(_turns([0, 4])) == ("r/sp2", 4.0)

    def test_turn_zero_never_competes(self):
        turns = _turns([1])
        turns[0] = TurnEntry(0, turns[0].prompt, turns[0].observation, 30.0, 0.9)
        assert select_best(turns) == ("r/sp1", 1.0)


class TestRunRecord:
    def test_turns_must_be_contiguous(self):
        turns = _turns([1, 2])
        with pytest.raises(ValueError):
            ICTRunRecord("r", {}, (turns[0], turns[2]), "r/sp0", 0.0)

    def test_round_trip_and_file(self, tmp_path):
        rec = ICTRunRecord.from_turns("r", {"k": 1}, _turns([1, 3]), {"started_at": "now"})
        assert record_round_trip(rec) == rec
        path = dump_record(rec, tmp_path / "run.json")
        assert load_record(path) == rec

    def test_meta_outside_hashed_region(self):
        a = ICTRunRecord.from_turns("r", {}, _turns([1]), {"t": 1})
        b = ICTRunRecord.from_turns("r", {}, _turns([1]), {"t": 2})
        assert hashed_region(a.to_dict()) == hashed_region(b.to_dict())
        assert record_digest(a) == record_digest(b)

    def test_schema_version_checked(self):
        data = ICTRunRecord.from_turns("r", {}, _turns([1])).to_dict()
        data["schema_version"] = 99
        with pytest.raises(SchemaVersionError):
            ICTRunRecord.from_dict(data)

    def test_prompt_lookup(self):
        rec = ICTRunRecord.from_turns("r", {}, _turns([1]))
        assert rec.prompt("r/sp1").turn_index == 1
        with pytest.raises(KeyError):
            rec.prompt("nope")
