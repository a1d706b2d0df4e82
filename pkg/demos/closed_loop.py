# %% [markdown]
# # Closed-loop prompt rewriting on the read family
#
# The scripted actor only reads a scroll when its system prompt tells it to.
# The rule reflector watches failed episodes, notices that the scroll was
# picked up but never read, and appends the matching directive. Validation
# success should jump from 0 to (nearly) 1 within a couple of turns.

# %%
from ict_forge.core import render_episode
from ict_forge.ict import ICTConfig, best_prompt, run_ict, turn_stats
from ict_forge.metaenv import MetaEnvConfig

cfg = ICTConfig(MetaEnvConfig(("verbgrid-read",), k=3, master_seed=11), turns=5, eval_initial=True)
record = run_ict(cfg)
print("run id:", record.run_id)

# %% [markdown]
# One episode from the first batch, rendered the way the reflector sees it.

# %%
print(render_episode(record.turns[0].observation.trajectories[0], 1))

# %% [markdown]
# Per-turn validation over the 32 fixed seeds. Turn 0 is the starting prompt,
# scored for reference only; it never competes for the best prompt.

# %%
print(f"turn 0  rate={record.turns[0].validation_success_rate:.3f}  (initial)")
for row, entry in zip(turn_stats(record), record.turns[1:]):
    print(f"turn {row.turn}  rate={row.val_rate:.3f}  best={row.best_so_far:.3f}  {entry.analysis}")

# %%
sp, score = best_prompt(record)
print(f"best prompt ({score:g}/32), first reached at turn {sp.turn_index}:\n")
print(sp.text)
