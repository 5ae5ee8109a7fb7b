# %% [markdown]
# # Interval type-2 gain scheduling
#
# The scheduler maps the current error and its rate of change to a pair of PI
# gains. Each input has three Gaussian sets with an uncertain width; the
# footprint between the narrow and wide curve is what makes it "type-2".

# %%
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from mmc_fofpi import default_fis, infer

fis = default_fis(kp=30.0, ki=3000.0)
print(fis.centers, fis.sigma_lower, fis.sigma_upper, sep="\n")

# %% [markdown]
# Evaluate both consequent tables on a grid of normalized inputs.

# %%
x = np.linspace(-1, 1, 61)
kp = np.array([[infer(fis, (e, de), fis.theta_kp) for e in x] for de in x])
ki = np.array([[infer(fis, (e, de), fis.theta_ki) for e in x] for de in x])

fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, z, name in zip(axes, (kp, ki), ("kp", "ki")):
    im = ax.contourf(x, x, z, 20)
    ax.set_xlabel("error (scaled)")
    ax.set_ylabel("error rate (scaled)")
    ax.set_title(name)
    fig.colorbar(im, ax=ax)
fig.tight_layout()
fig.savefig("fis_surfaces.png", dpi=120)

# %% [markdown]
# Large errors push kp up and ki down, small errors the reverse. The blend
# weight moves the output between the lower and upper firing strengths:

# %%
from dataclasses import replace

for m in (0.0, 0.5, 1.0):
    print(m, infer(replace(fis, blend_m=m), (0.6, -0.2), fis.theta_kp))
