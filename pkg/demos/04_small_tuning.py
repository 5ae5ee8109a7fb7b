# %% [markdown]
# # Tuning with the whale optimizer
#
# A deliberately small budget so this finishes in a minute or so. The full
# runs in the acceptance suite use 30 whales for 100 iterations.

# %%
import numpy as np

from mmc_fofpi import Scenario, TuningSpec, tune

sc = Scenario(duration=0.2, vdc_profile=[(0.0, 450.0)])

def show(it, best, mean, elapsed):
    print(f"iter {it:3d}  best {best:.4g}  mean {mean:.4g}  {elapsed:.1f} s")

result, ctrl = tune(TuningSpec("fopi", sc), progress_sink=show, pop_size=8, max_iter=10, seed=1)
print(np.round(result.best_x, 3))
print(ctrl.fopi_d, ctrl.fopi_q, sep="\n")

# %% [markdown]
# The fuzzy controller has 38 parameters: membership functions, two 3x3
# consequent tables, the blend weight and the integral order.

# %%
result, ctrl = tune(TuningSpec("fofpi", sc), pop_size=8, max_iter=10, seed=1)
print(result.best_f, ctrl.alpha)
print(ctrl.fis_d.theta_kp.reshape(3, 3))
