"""Command-line entry point: run, dataset, score, eval and replay.

Settings come from built-in defaults, then an optional JSON ``--config`` file,
then flags. Flags may appear before or after the subcommand.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from ict_forge import __version__
from ict_forge.actors import ActorConfig, make_actor
from ict_forge.core import SystemPrompt, dump_record, load_record
from ict_forge.envkit import DEFAULT_STEP_LIMIT, family_ids, get_family
from ict_forge.ict import ICTConfig, aggregate_csv, aggregate_turn_stats, run_ict, write_stats_csv
from ict_forge.llm import EndpointConfig
from ict_forge.metaenv import MetaEnv, MetaEnvConfig, rollout_reward, run_episodes
from ict_forge.reflectors import ReflectorConfig, make_reflector
from ict_forge.traindata import (
    DatasetConfig,
    build_dataset,
    export_training_records,
    read_dataset,
    score_group,
    write_dataset,
)

logger = logging.getLogger("ict_forge")

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2

DEFAULTS: dict[str, Any] = {
    "families": "verbgrid:read",
    "family": None,
    "actor": "scripted",
    "reflector": "rule",
    "rules": None,
    "k": 3,
    "turns": 10,
    "loops": 1,
    "group_size": 4,
    "seed": 0,
    "endpoint": None,
    "model": "default",
    "temperature": 0.7,
    "max_tokens": 512,
    "out": None,
    "max_parallel": 4,
    "eval_initial": False,
    "step_limit": DEFAULT_STEP_LIMIT,
    "prompt": None,
    "dataset": None,
    "record": None,
    "turn": None,
    "verbose": False,
}


class ConfigError(Exception):
    pass


def _flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps unset flags out of the namespace so config-file values survive
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", metavar="PATH", help="JSON settings file; flags override its values")
    p.add_argument("--families", metavar="LIST", help="comma-separated task families, e.g. verbgrid:read")
    p.add_argument("--family", metavar="NAME", help="single family (eval)")
    p.add_argument("--actor", choices=("scripted", "llm"))
    p.add_argument("--reflector", choices=("rule", "llm"))
    p.add_argument("--rules", metavar="LIST", help="comma-separated rule ids for the rule reflector")
    p.add_argument("--k", type=int, help="rollout batch size per turn")
    p.add_argument("--turns", type=int, help="number of prompt-rewriting turns")
    p.add_argument("--loops", type=int, help="independent loops (dataset) or seeds (run)")
    p.add_argument("--group-size", dest="group_size", type=int, help="candidates per group (score)")
    p.add_argument("--seed", type=int, help="master seed for task sampling")
    p.add_argument("--endpoint", metavar="URL", help="OpenAI-compatible base URL")
    p.add_argument("--model", metavar="NAME")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--max-parallel", dest="max_parallel", type=int, help="concurrent rollouts")
    p.add_argument("--eval-initial", dest="eval_initial", action="store_true", help="also score the initial prompt for reporting")
    p.add_argument("--step-limit", dest="step_limit", type=int)
    p.add_argument("--prompt", metavar="PATH", help="prompt text file (eval; initial prompt for run)")
    p.add_argument("--dataset", metavar="PATH", help="dataset JSONL (score)")
    p.add_argument("--record", metavar="PATH", help="run record JSON (replay)")
    p.add_argument("--turn", type=int, help="recorded turn to replay")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    flags = _flags()
    parser = argparse.ArgumentParser(prog="ict-forge", parents=[flags], description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the prompt-rewriting loop and write a run record",
        "dataset": "run several loops and write dataset tuples as JSONL",
        "score": "score reflector candidates on dataset tuples",
        "eval": "score a prompt file on a family's validation tasks",
        "replay": "re-run a recorded turn's batch and compare rewards",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[flags], help=text)
    return parser


def merge_settings(ns: argparse.Namespace) -> dict[str, Any]:
    settings = dict(DEFAULTS)
    given = vars(ns).copy()
    command = given.pop("command")
    config_path = given.pop("config", None)
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        settings.update(data)
    settings.update(given)
    settings["given"] = sorted(set(given) | set(data if config_path else ()))
    settings["command"] = command
    settings["config_file"] = config_path
    return settings


def _split(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [v for v in (s.strip() for s in value.split(",")) if v]
    return list(value)


def _endpoint(s: Mapping[str, Any]) -> Optional[EndpointConfig]:
    if not s["endpoint"]:
        return None
    return EndpointConfig(
        base_url=s["endpoint"],
        model=s["model"],
        temperature=float(s["temperature"]),
        max_tokens=int(s["max_tokens"]),
        max_in_flight=max(1, int(s["max_parallel"])),
    )


def _read_prompt(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read prompt file {path}: {exc}") from exc


@dataclass(frozen=True)
class Built:
    ict: ICTConfig
    endpoint: Optional[EndpointConfig]


def build_configs(s: Mapping[str, Any], families: Optional[Sequence[str]] = None) -> Built:
    endpoint = _endpoint(s)
    if "llm" in (s["actor"], s["reflector"]) and endpoint is None:
        raise ConfigError("an llm actor or reflector needs --endpoint")
    refs = list(families or _split(s["families"]))
    if not refs:
        raise ConfigError("no task families given")
    try:
        refs = family_ids(refs)
        for ref in refs:
            get_family(ref)
        actor = ActorConfig(s["actor"], endpoint if s["actor"] == "llm" else None, int(s["step_limit"]))
        rules = _split(s["rules"]) if s["rules"] is not None else None
        reflector = ReflectorConfig(s["reflector"], tuple(rules) if rules is not None else None,
                                    endpoint if s["reflector"] == "llm" else None)
        meta_env = MetaEnvConfig(tuple(refs), int(s["k"]), actor, int(s["seed"]), int(s["max_parallel"]))
        initial = _read_prompt(s["prompt"]) if s["prompt"] else None
        ict = ICTConfig(meta_env, reflector, int(s["turns"]), initial, bool(s["eval_initial"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return Built(ict, endpoint)


def _require(s: Mapping[str, Any], *keys: str) -> None:
    missing = [f"--{k.replace('_', '-')}" for k in keys if s.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"{s['command']} needs {', '.join(missing)}")


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _cli_meta(s: Mapping[str, Any], argv: Sequence[str]) -> dict[str, Any]:
    return {"argv": list(argv), "settings": {k: v for k, v in s.items()}}


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def cmd_run(s: Mapping[str, Any], argv: Sequence[str]) -> int:
    _require(s, "out")
    built = build_configs(s)
    out = Path(s["out"])
    loops = int(s["loops"])
    if loops < 1:
        raise ConfigError("--loops must be >= 1")
    records = []
    for n in range(loops):
        cfg = built.ict
        path = out
        if loops > 1:
            cfg = replace(cfg, meta_env=replace(cfg.meta_env, master_seed=int(s["seed"]) + n))
            path = _sibling(out, f".r{n}.json")
        record = run_ict(cfg)
        record = replace(record, meta={**record.meta, "cli": _cli_meta(s, argv)})
        dump_record(record, path)
        write_stats_csv(record, _sibling(path, ".turns.csv"))
        records.append(record)
        best = next(e for e in record.turns if e.prompt.prompt_id == record.best_prompt_id)
        rate = best.validation_success_rate
        print(f"{path}: best_score={record.best_score:g} best_rate={'n/a' if rate is None else f'{rate:.4f}'}"
              f" best_prompt={record.best_prompt_id}")
    if loops > 1:
        agg = _sibling(out, ".aggregate.csv")
        agg.write_text(aggregate_csv(aggregate_turn_stats(records)), encoding="utf-8")
        print(f"aggregate over {loops} runs: {agg}")
    return EXIT_OK


def cmd_dataset(s: Mapping[str, Any], argv: Sequence[str]) -> int:
    _require(s, "out")
    built = build_configs(s)
    try:
        cfg = DatasetConfig(built.ict, int(s["loops"]), int(s["seed"]))
        build = build_dataset(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    n = write_dataset(build.tuples, s["out"], config={"dataset": cfg.to_dict(), "cli": _cli_meta(s, argv)})
    for loop_id, err in build.failed_loops.items():
        print(f"loop {loop_id} failed: {err}", file=sys.stderr)
    print(f"wrote {n} tuples to {s['out']}")
    return EXIT_OK if n or not build.failed_loops else EXIT_MISMATCH


def cmd_score(s: Mapping[str, Any], argv: Sequence[str]) -> int:
    _require(s, "dataset", "out")
    try:
        tuples = read_dataset(_require_file(s["dataset"], "dataset"))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"unreadable dataset {s['dataset']}: {exc}") from exc
    if not tuples:
        raise ConfigError(f"dataset {s['dataset']} is empty")
    families = sorted({t.family_id for tup in tuples for t in tup.batch_tasks})
    built = build_configs(s, families=families)
    actor = make_actor(built.ict.meta_env.actor)
    reflector = make_reflector(built.ict.reflector)
    groups, failures = [], 0
    for tup in tuples:
        try:
            groups.append(score_group(tup, reflector, int(s["group_size"]), actor, max_parallel=int(s["max_parallel"])))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        except Exception as exc:
            failures += 1
            print(f"tuple {tup.loop_id}/{tup.turn} failed: {exc}", file=sys.stderr)
    if not groups:
        print("no group could be scored", file=sys.stderr)
        return EXIT_MISMATCH
    n = export_training_records(groups, s["out"], config={"ict": built.ict.to_dict(), "cli": _cli_meta(s, argv)})
    print(f"wrote {n} groups to {s['out']}" + (f" ({failures} failed)" if failures else ""))
    return EXIT_OK


def cmd_eval(s: Mapping[str, Any], argv: Sequence[str]) -> int:
    _require(s, "prompt")
    refs = [s["family"]] if s["family"] else _split(s["families"])
    built = build_configs({**s, "prompt": None}, families=refs)
    text = _read_prompt(s["prompt"])
    try:
        sp = SystemPrompt.initial(text, "eval")
    except ValueError as exc:
        raise ConfigError(f"prompt file {s['prompt']} is empty") from exc
    env = MetaEnv(built.ict.meta_env)
    score, rate = env.evaluate_on_validation(sp)
    print(f"score_sum={score:g} success_rate={rate:.4f} tasks={len(env.validation)}")
    if s["out"]:
        result = {"score_sum": score, "success_rate": rate, "prompt": sp.text,
                  "config": built.ict.meta_env.to_dict(), "cli": _cli_meta(s, argv)}
        Path(s["out"]).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_replay(s: Mapping[str, Any], argv: Sequence[str]) -> int:
    _require(s, "record", "turn")
    try:
        record = load_record(_require_file(s["record"], "run record"))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"unreadable run record {s['record']}: {exc}") from exc
    turn = int(s["turn"])
    if not 0 <= turn < len(record.turns):
        raise ConfigError(f"record has turns 0..{len(record.turns) - 1}, not {turn}")
    entry = record.turns[turn]
    recorded_env = MetaEnvConfig.from_dict(record.config["meta_env"])
    actor_cfg = recorded_env.actor
    if "actor" in s["given"]:
        endpoint = _endpoint(s)
        if s["actor"] == "llm" and endpoint is None:
            raise ConfigError("an llm actor needs --endpoint")
        actor_cfg = ActorConfig(s["actor"], endpoint, actor_cfg.step_limit, actor_cfg.max_reply_retries)
    actor = make_actor(actor_cfg)
    tasks = entry.observation.batch_tasks
    families = {t.family_id: get_family(t.family_id) for t in tasks}
    trajectories = run_episodes(actor, families, [(t, entry.prompt) for t in tasks], int(s["max_parallel"]))
    replayed = [rollout_reward(t) for t in trajectories]
    recorded = [rollout_reward(t) for t in entry.observation.trajectories]
    matches = sum(a == b for a, b in zip(replayed, recorded))
    print(f"turn {turn}: recorded={recorded} replayed={replayed} match={matches}/{len(tasks)}")
    return EXIT_OK if matches == len(tasks) else EXIT_MISMATCH


COMMANDS = {"run": cmd_run, "dataset": cmd_dataset, "score": cmd_score, "eval": cmd_eval, "replay": cmd_replay}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = merge_settings(ns)
    except ConfigError as exc:
        print(f"ict-forge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if settings["verbose"] else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[settings["command"]](settings, argv)
    except ConfigError as exc:
        print(f"ict-forge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
