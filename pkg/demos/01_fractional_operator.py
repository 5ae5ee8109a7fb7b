# %% [markdown]
# # Fractional operators from first-order sections
#
# `s^alpha` has no finite-order transfer function, so we fit it with a chain of
# zero/pole pairs spaced geometrically over a frequency band. Inside the band
# the magnitude slope is 20*alpha dB/decade and the phase sits near 90*alpha.

# %%
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from mmc_fofpi import design_oustaloup, discretize, filter_signal, frequency_response

# %%
w = np.logspace(-4, 4, 400)
fig, (ax_m, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
for alpha in (-0.5, 0.3, 0.7, 1.0):
    g = frequency_response(design_oustaloup(alpha), w)
    ax_m.semilogx(w, 20 * np.log10(np.abs(g)), label=f"alpha={alpha}")
    ax_p.semilogx(w, np.degrees(np.angle(g)))
ax_m.set_ylabel("|G| [dB]")
ax_p.set_ylabel("phase [deg]")
ax_p.set_xlabel("omega [rad/s]")
ax_m.legend()
fig.savefig("fractional_bode.png", dpi=120)

# %% [markdown]
# Phase drifts toward zero near the band edges. That is the price of a finite
# band, and it is why the controller band reaches well past the grid frequency.

# %%
g = frequency_response(design_oustaloup(0.5), np.array([1e-2, 1.0, 1e2]))
print(np.round(np.degrees(np.angle(g)), 2))

# %% [markdown]
# ## Discrete realization
#
# Each section is discretized with the bilinear map and run as a cascade. A
# unit step into the half integrator should grow like sqrt(t)/Gamma(1.5).

# %%
from math import gamma

dt = 1e-3
op = design_oustaloup(-0.5)
y = filter_signal(discretize(op, dt), np.ones(5000))
t = dt * np.arange(1, 5001)
print("t=1 s:", y[999], "vs", np.sqrt(1.0) / gamma(1.5))
print("t=5 s:", y[-1], "vs", np.sqrt(5.0) / gamma(1.5))
