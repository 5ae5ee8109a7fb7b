"""Reference-frame transforms, current references and harmonic analysis.

Park convention: amplitude invariant, d axis on the grid angle, q axis
lagging d by 90 degrees::

    d = 2/3 * (xa cos(th) + xb cos(th - 2pi/3) + xc cos(th + 2pi/3))
    q = 2/3 * (xa sin(th) + xb sin(th - 2pi/3) + xc sin(th + 2pi/3))

so ``xa = A cos(th)`` maps to ``(A, 0)`` and ``xa = A sin(th)`` (a set
lagging the d axis) maps to ``(0, A)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import AnalysisError, ReferenceFault

_SHIFT = 2.0 * np.pi / 3.0


@numba.njit(cache=True, nogil=True)
def park(xa, xb, xc, theta):
    ca = math.cos(theta)
    cb = math.cos(theta - 2.0943951023931953)
    cc = math.cos(theta + 2.0943951023931953)
    sa = math.sin(theta)
    sb = math.sin(theta - 2.0943951023931953)
    sc = math.sin(theta + 2.0943951023931953)
    d = (2.0 / 3.0) * (xa * ca + xb * cb + xc * cc)
    q = (2.0 / 3.0) * (xa * sa + xb * sb + xc * sc)
    return d, q


@numba.njit(cache=True, nogil=True)
def inverse_park(d, q, theta, out):
    out[0] = d * math.cos(theta) + q * math.sin(theta)
    out[1] = d * math.cos(theta - 2.0943951023931953) + q * math.sin(theta - 2.0943951023931953)
    out[2] = d * math.cos(theta + 2.0943951023931953) + q * math.sin(theta + 2.0943951023931953)


def abc_to_dq(x_abc, theta):
    """Amplitude-invariant Park transform; broadcasts over trailing samples."""
    xa, xb, xc = np.asarray(x_abc, dtype=float)
    theta = np.asarray(theta, dtype=float)
    angles = theta + np.array([0.0, -_SHIFT, _SHIFT]).reshape((3,) + (1,) * theta.ndim)
    x = np.stack(np.broadcast_arrays(xa, xb, xc))
    d = (2.0 / 3.0) * np.sum(x * np.cos(angles), axis=0)
    q = (2.0 / 3.0) * np.sum(x * np.sin(angles), axis=0)
    if d.ndim == 0:
        return float(d), float(q)
    return d, q


def dq_to_abc(dq, theta):
    d, q = (np.asarray(v, dtype=float) for v in dq)
    theta = np.asarray(theta, dtype=float)
    out = np.stack([d * np.cos(theta + s) + q * np.sin(theta + s)
                    for s in (0.0, -_SHIFT, _SHIFT)])
    return out


def power_to_current_refs(p_ref, q_ref, v_d, v_min=1.0):
    """dq current references for active power ``p_ref`` (W, delivered to the
    grid) and reactive power ``q_ref`` (var, absorbed from the grid)."""
    if not abs(v_d) > v_min:
        raise ReferenceFault(f"|v_d| = {abs(v_d):.3g} V below {v_min} V")
    return (2.0 / 3.0) * p_ref / v_d, -(2.0 / 3.0) * q_ref / v_d


@dataclass(frozen=True)
class ThdReport:
    fundamental_amplitude: float
    harmonic_amplitudes: np.ndarray
    thd: float
    f0: float
    n_periods: int = 0

    @property
    def thd_percent(self) -> float:
        return 100.0 * self.thd

    def harmonic(self, h) -> float:
        return float(self.harmonic_amplitudes[h - 2])

    def as_dict(self) -> dict:
        return {"thd": self.thd, "thd_percent": self.thd_percent, "f0_hz": self.f0,
                "fundamental_amplitude": self.fundamental_amplitude,
                "n_periods": self.n_periods,
                "harmonic_amplitudes": [float(a) for a in self.harmonic_amplitudes]}


def thd(samples, sample_rate, f0, max_harmonic=50, floor=1e-9) -> ThdReport:
    """THD from exact harmonic bins of the trailing whole-period window.

    Harmonics above Nyquist are dropped from the sum.
    """
    x = np.asarray(samples, dtype=float)
    per_period = sample_rate / f0
    n_periods = int(np.floor(len(x) / per_period + 1e-9))
    if n_periods < 2:
        raise AnalysisError(f"need at least 2 whole periods, got {len(x) / per_period:.3g}")
    n = int(round(n_periods * per_period))
    if abs(n - n_periods * per_period) > 1e-6 * per_period:
        raise AnalysisError("sample_rate/f0 does not give a whole-sample window")
    spec = np.fft.rfft(x[-n:])
    amps = 2.0 * np.abs(spec) / n
    fundamental = amps[n_periods]
    if not fundamental > floor * max(1.0, np.max(np.abs(x))):
        raise AnalysisError("fundamental amplitude below numerical floor")
    bins = n_periods * np.arange(2, max_harmonic + 1)
    harmonics = np.where(bins < n / 2, amps[np.minimum(bins, len(amps) - 1)], 0.0)
    return ThdReport(float(fundamental), harmonics,
                     float(np.sqrt(np.sum(harmonics ** 2)) / fundamental), float(f0), n_periods)
