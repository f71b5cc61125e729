# %% [markdown]
# # LOS/NLOS traces from the two-state Markov chain
#
# Each elevation angle has a pair of per-step transition probabilities:
# `g` (NLOS to LOS) and `b` (LOS to NLOS).  This script shows the built-in
# table, the long-run LOS share each chain settles to, and what a generated
# trace looks like.

# %%
import numpy as np

from losgen.channel import (
    EXPERIMENT_ANGLES,
    LOS,
    builtin_table,
    generate_dataset,
    generate_trace,
    params_for,
    stationary_los_probability,
    transition_matrix,
)

for p in builtin_table():
    print(f"{p.angle_deg:>3}°  g={p.g:.3e}  b={p.b:.3e}  P(LOS)={stationary_los_probability(p):.5f}")

# %% [markdown]
# The transition matrix rows are indexed (LOS, NLOS).

# %%
print(transition_matrix(params_for(45)).as_array())

# %% [markdown]
# ## A single trace
#
# States are encoded `+1` (LOS) and `-1` (NLOS).  Sojourns are long: at 45°
# a LOS stretch lasts about `1/b` = 13 000 steps on average.

# %%
trace = generate_trace(params_for(45), 200_000, seed=0)
change = np.flatnonzero(np.diff(trace)) + 1
bounds = np.concatenate([[0], change, [trace.size]])
runs = np.diff(bounds)
print("LOS fraction:", np.mean(trace == LOS))
print("number of sojourns:", runs.size, "longest:", runs.max())

# %% [markdown]
# ## Why one trace is a noisy estimate
#
# Consecutive steps are strongly correlated, so the LOS fraction of a trace
# varies much more than a coin-flip estimate of the same length would.  The
# spread across independent traces matches the two-state chain formula
# `p(1-p)(1+lam)/((1-lam) n)` with `lam = 1 - g - b`.

# %%
p = params_for(45)
pi = stationary_los_probability(p)
lam = 1 - p.g - p.b
n = 100_000
fractions = np.array([np.mean(generate_trace(p, n, seed=s) == LOS) for s in range(200)])
print(f"empirical sd of LOS fraction: {fractions.std():.4f}")
print(f"chain formula:                {np.sqrt(pi * (1 - pi) * (1 + lam) / ((1 - lam) * n)):.4f}")
print(f"independent-steps formula:    {np.sqrt(pi * (1 - pi) / n):.4f}")

# %% [markdown]
# ## Datasets
#
# A dataset holds one column per angle; column `i` comes from its own
# random substream, so adding or dropping columns never changes the others.

# %%
ds = generate_dataset(EXPERIMENT_ANGLES, 100_000, seed=0)
print(ds.columns, ds.cells.shape)
print(ds.los_fraction())
