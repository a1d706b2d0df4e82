# %% [markdown]
# # Replay scoring and group advantages
#
# The reflector training data is built from recorded loop turns. For each
# recorded turn we ask for G candidate prompts, replay the exact task batch of
# that turn under each candidate, and normalize the G mean rewards into
# advantages. Here the candidates come from a fixed list so the spread is easy
# to read.

# %%
import itertools

from ict_forge.actors import ScriptedActor
from ict_forge.core import SystemPrompt
from ict_forge.ict import ICTConfig
from ict_forge.metaenv import MetaEnvConfig
from ict_forge.reflectors import Reflection
from ict_forge.traindata import DatasetConfig, build_dataset, score_group

build = build_dataset(DatasetConfig(ICTConfig(MetaEnvConfig(("verbgrid-read",), k=3), turns=2), loops=2))
print(len(build), "tuples")
for tup in build:
    seeds = [t.instance_seed for t in tup.batch_tasks]
    print(f"  {tup.loop_id} turn {tup.turn}: seeds {seeds}")

# %%
CANDIDATES = [
    "Explore the room.",
    "After picking up an item, read it.",
    "Eat whatever you find.",
    "Avoid revisiting places. After picking up an item, read it.",
]


class ListReflector:
    """Hands out the candidate texts in order, one per request."""

    def __init__(self, texts):
        self._texts = itertools.cycle(texts)

    def reflect(self, prev, obs):
        text = next(self._texts)
        return Reflection("", SystemPrompt(text, prev.prompt_id, prev.origin, prev.turn_index, prev.run_id), text, True)


group = score_group(build.tuples[0], ListReflector(CANDIDATES), len(CANDIDATES), ScriptedActor())
for cand, rewards, mean, adv in zip(group.candidates, group.rewards, group.mean_rewards, group.advantages):
    print(f"{mean:.3f}  adv={adv:+.3f}  rewards={list(rewards)}  {cand.text!r}")

# %% [markdown]
# Candidates that teach reading get the positive advantage; the others share
# the negative side. A group where every candidate scores the same carries no
# signal and gets all-zero advantages.
