"""Interval type-2 fuzzy inference used to schedule PI gains.

Two inputs (error and error derivative, both normalized to [-1, 1]) with a
grid rule base: rule ``j = k0 * n_mf + k1`` fires on MF ``k0`` of the error
and MF ``k1`` of the derivative. Antecedents are Gaussians with an uncertain
width (``sigma_lower <= sigma_upper``); consequents are crisp centres. The
type-reduced output is a fixed blend of the upper and lower normalized
firing vectors:

    y = m * theta . xi_upper + (1 - m) * theta . xi_lower
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError

N_INPUTS = 2
_TINY = np.finfo(float).tiny


class FiringUnderflowWarning(RuntimeWarning):
    """All rule firings underflowed; uniform firing strengths were used."""


@dataclass(frozen=True)
class It2Gaussian:
    center: float
    sigma_lower: float
    sigma_upper: float

    def __post_init__(self):
        if not 0 < self.sigma_lower <= self.sigma_upper:
            raise ConfigurationError(
                f"need 0 < sigma_lower <= sigma_upper, got "
                f"{self.sigma_lower}, {self.sigma_upper}")


def grade(mf: It2Gaussian, x):
    """Lower and upper membership grades of ``x``."""
    z = x - mf.center
    lower = np.exp(-0.5 * (z / mf.sigma_lower) ** 2)
    upper = np.exp(-0.5 * (z / mf.sigma_upper) ** 2)
    return lower, upper


@dataclass
class It2Fis:
    """Grid rule base over two inputs.

    ``centers``, ``sigma_lower`` and ``sigma_upper`` have shape
    ``(2, n_mf)``; ``theta_kp`` and ``theta_ki`` have length ``n_mf**2``.
    """

    centers: np.ndarray
    sigma_lower: np.ndarray
    sigma_upper: np.ndarray
    theta_kp: np.ndarray
    theta_ki: np.ndarray
    blend_m: float = 0.5
    input_scales: np.ndarray = None

    def __post_init__(self):
        self.centers = np.array(self.centers, dtype=float)
        self.sigma_lower = np.array(self.sigma_lower, dtype=float)
        self.sigma_upper = np.array(self.sigma_upper, dtype=float)
        self.theta_kp = np.array(self.theta_kp, dtype=float).ravel()
        self.theta_ki = np.array(self.theta_ki, dtype=float).ravel()
        if self.input_scales is None:
            self.input_scales = np.ones(N_INPUTS)
        self.input_scales = np.array(self.input_scales, dtype=float)
        self.validate()

    @property
    def n_mf(self) -> int:
        return self.centers.shape[1]

    @property
    def n_rules(self) -> int:
        return self.n_mf ** N_INPUTS

    def validate(self):
        shape = self.centers.shape
        if len(shape) != 2 or shape[0] != N_INPUTS or shape[1] < 1:
            raise ConfigurationError(f"centers must have shape (2, n_mf), got {shape}")
        if self.sigma_lower.shape != shape or self.sigma_upper.shape != shape:
            raise ConfigurationError("sigma arrays must match centers in shape")
        if not (np.all(self.sigma_lower > 0) and np.all(self.sigma_lower <= self.sigma_upper)):
            raise ConfigurationError("need 0 < sigma_lower <= sigma_upper for every MF")
        for name in ("theta_kp", "theta_ki"):
            theta = getattr(self, name)
            if theta.shape != (self.n_rules,):
                raise ConfigurationError(
                    f"{name} must have {self.n_rules} entries, got {theta.shape[0]}")
            if np.any(theta < 0) or not np.all(np.isfinite(theta)):
                raise ConfigurationError(f"{name} entries must be finite and >= 0")
        if not 0.0 <= self.blend_m <= 1.0:
            raise ConfigurationError(f"blend_m must lie in [0, 1], got {self.blend_m}")
        if self.input_scales.shape != (N_INPUTS,):
            raise ConfigurationError("input_scales must hold one gain per input")

    def mf(self, i, k) -> It2Gaussian:
        return It2Gaussian(self.centers[i, k], self.sigma_lower[i, k], self.sigma_upper[i, k])

    def to_vector(self) -> np.ndarray:
        """Flat parameters: per input, per MF (center, sigma_lower, sigma_upper)
        in ascending centre order, then theta_kp, theta_ki, blend_m."""
        order = np.argsort(self.centers, axis=1, kind="stable")
        mfs = []
        for i in range(N_INPUTS):
            for k in order[i]:
                mfs += [self.centers[i, k], self.sigma_lower[i, k], self.sigma_upper[i, k]]
        return np.concatenate([mfs, self.theta_kp, self.theta_ki, [self.blend_m]])

    @classmethod
    def from_vector(cls, vec, n_mf=3, input_scales=None) -> "It2Fis":
        vec = np.asarray(vec, dtype=float)
        expected = vector_size(n_mf)
        if vec.shape != (expected,):
            raise ConfigurationError(f"FIS vector must have {expected} entries, got {vec.shape}")
        mfs = vec[:3 * N_INPUTS * n_mf].reshape(N_INPUTS, n_mf, 3)
        m = n_mf ** N_INPUTS
        off = 3 * N_INPUTS * n_mf
        return cls(mfs[..., 0], mfs[..., 1], mfs[..., 2], vec[off:off + m],
                   vec[off + m:off + 2 * m], float(vec[-1]), input_scales)

    def kernel_args(self):
        return (self.centers, self.sigma_lower, self.sigma_upper, self.theta_kp,
                self.theta_ki, float(self.blend_m), self.input_scales)


def vector_size(n_mf=3) -> int:
    return 3 * N_INPUTS * n_mf + 2 * n_mf ** N_INPUTS + 1


def default_fis(i_rated=10.0, dt=1e-4, kp=2.0, ki=200.0) -> It2Fis:
    """Three Gaussians per input at {-1, 0, 1}; consequents shaped so that a
    large error raises kp and lowers ki while a small error does the opposite."""
    centers = np.tile([-1.0, 0.0, 1.0], (N_INPUTS, 1))
    shape_kp = np.array([[1.5, 1.25, 1.5], [1.25, 1.0, 1.25], [1.5, 1.25, 1.5]])
    shape_ki = np.array([[0.5, 0.75, 0.5], [0.75, 1.0, 0.75], [0.5, 0.75, 0.5]])
    return It2Fis(centers, np.full_like(centers, 0.36), np.full_like(centers, 0.6),
                  kp * shape_kp.ravel(), ki * shape_ki.ravel(), 0.5,
                  default_input_scales(i_rated, dt))


def default_input_scales(i_rated, dt):
    return np.array([1.0 / i_rated, dt / (0.1 * i_rated)])


@numba.njit(cache=True, nogil=True)
def firing_kernel(centers, sigma_lower, sigma_upper, x0, x1, xi_upper, xi_lower):
    """Fill the normalized firing vectors; returns True on underflow fallback."""
    n = centers.shape[1]
    su = 0.0
    sl = 0.0
    for k0 in range(n):
        z0 = x0 - centers[0, k0]
        u0 = math.exp(-0.5 * (z0 / sigma_upper[0, k0]) ** 2)
        l0 = math.exp(-0.5 * (z0 / sigma_lower[0, k0]) ** 2)
        for k1 in range(n):
            z1 = x1 - centers[1, k1]
            j = k0 * n + k1
            xi_upper[j] = u0 * math.exp(-0.5 * (z1 / sigma_upper[1, k1]) ** 2)
            xi_lower[j] = l0 * math.exp(-0.5 * (z1 / sigma_lower[1, k1]) ** 2)
            su += xi_upper[j]
            sl += xi_lower[j]
    m = n * n
    underflow = False
    if su < 2.2250738585072014e-308:
        underflow = True
        for j in range(m):
            xi_upper[j] = 1.0 / m
    else:
        for j in range(m):
            xi_upper[j] /= su
    if sl < 2.2250738585072014e-308:
        underflow = True
        for j in range(m):
            xi_lower[j] = 1.0 / m
    else:
        for j in range(m):
            xi_lower[j] /= sl
    return underflow


@numba.njit(cache=True, nogil=True)
def blend_kernel(theta, xi_upper, xi_lower, blend_m):
    # Offsetting by min(theta) keeps the result inside [min, max] and returns
    # the constant exactly when all consequents are equal.
    lo = theta[0]
    for j in range(theta.shape[0]):
        if theta[j] < lo:
            lo = theta[j]
    yu = 0.0
    yl = 0.0
    for j in range(theta.shape[0]):
        d = theta[j] - lo
        yu += d * xi_upper[j]
        yl += d * xi_lower[j]
    return lo + (blend_m * yu + (1.0 - blend_m) * yl)


@numba.njit(cache=True, nogil=True)
def schedule_kernel(centers, sigma_lower, sigma_upper, theta_kp, theta_ki, blend_m,
                    input_scales, e, de, xi_upper, xi_lower):
    x0 = min(max(e * input_scales[0], -1.0), 1.0)
    x1 = min(max(de * input_scales[1], -1.0), 1.0)
    underflow = firing_kernel(centers, sigma_lower, sigma_upper, x0, x1, xi_upper, xi_lower)
    kp = blend_kernel(theta_kp, xi_upper, xi_lower, blend_m)
    ki = blend_kernel(theta_ki, xi_upper, xi_lower, blend_m)
    return kp, ki, underflow


def firing_strengths(fis: It2Fis, inputs):
    """Normalized upper and lower firing vectors for already-scaled inputs."""
    x0, x1 = (float(v) for v in inputs)
    xi_u = np.empty(fis.n_rules)
    xi_l = np.empty(fis.n_rules)
    if firing_kernel(fis.centers, fis.sigma_lower, fis.sigma_upper, x0, x1, xi_u, xi_l):
        warnings.warn("rule firings underflowed; using uniform strengths",
                      FiringUnderflowWarning, stacklevel=2)
    return xi_u, xi_l


def infer(fis: It2Fis, inputs, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (fis.n_rules,):
        raise ConfigurationError(f"theta must have {fis.n_rules} entries, got {theta.shape}")
    xi_u, xi_l = firing_strengths(fis, inputs)
    return blend_kernel(theta, xi_u, xi_l, fis.blend_m)


def schedule_gains(fis: It2Fis, e, de):
    """Scale and saturate ``(e, de)`` into [-1, 1] and return ``(kp, ki)``."""
    xi_u = np.empty(fis.n_rules)
    xi_l = np.empty(fis.n_rules)
    kp, ki, underflow = schedule_kernel(*fis.kernel_args(), float(e), float(de), xi_u, xi_l)
    if underflow:
        warnings.warn("rule firings underflowed; using uniform strengths",
                      FiringUnderflowWarning, stacklevel=2)
    return kp, ki
