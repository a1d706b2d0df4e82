# %% [markdown]
# # A tour of the built-in task families
#
# Each family has 32 fixed validation seeds. The scripted actor stands in for
# an instruction-following model: the directive phrases it recognises in its
# prompt change how it acts. Comparing the shipped initial prompt with one that
# carries the helpful directives shows how much room a reflector has.

# %%
from ict_forge.actors import ScriptedActor
from ict_forge.actors.directives import phrases_for
from ict_forge.core import SystemPrompt
from ict_forge.envkit import BUILTIN_FAMILIES, get_family

HELPFUL = {
    "verbgrid": lambda fam: [f"apply-verb:{fam.verb}"] if fam.verb else ["avoid-revisit"],
    "housetext": lambda fam: ["open-before-search", "check:fridge", "avoid-revisit"],
}


def successes(fam, text):
    sp = SystemPrompt.initial(text, "tour")
    actor = ScriptedActor()
    return sum(actor.run_episode(fam, t, sp).success for t in fam.validation_tasks())


print(f"{'family':28s} baseline  tuned")
for ref in BUILTIN_FAMILIES:
    fam = get_family(ref)
    tokens = HELPFUL[ref.split("-")[0]](fam)
    tuned = fam.initial_prompt + "\n" + "\n".join(phrases_for(tokens))
    print(f"{ref:28s} {successes(fam, fam.initial_prompt):5d}/32  {successes(fam, tuned):3d}/32")

# %% [markdown]
# The first observation of a household task, as the actor receives it.

# %%
fam = get_family("housetext-cool")
state, obs = fam.reset(fam.make_task(3))
print(obs)
