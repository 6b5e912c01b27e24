"""Closed-form asymptotic constants for nearest-neighbor reweighting.

The expected transport cost of the 1-NN reweighting decays like m^{-q/d}
with limiting constant Gamma(1+q/d) / v_d^{q/d} * E[1/p_{X'}(X)^{q/d}];
this module evaluates that constant and its ingredients, plus the
associated k-NN inflation factor and distribution-design quantities.
All checks are advisory diagnostics, never hard failures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DEFAULT_NORM, InvalidInputError, Norm, NumericalError
from .rng import stream

__all__ = [
    "RateConstant",
    "unit_ball_volume",
    "rate_constant",
    "cdq",
    "gaussian_moment_check",
    "zador_exponent",
    "inv_density_moment",
]


@dataclass(frozen=True)
class RateConstant:
    """Limiting constant of m^{q/d} * expected 1-NN transport cost."""

    q: float
    d: int
    v_d: float
    inv_density_moment: float
    value: float


def unit_ball_volume(d: int, norm: Norm = DEFAULT_NORM) -> float:
    """Volume of the unit ball of R^d for the given norm."""
    d = int(d)
    if d < 1:
        raise InvalidInputError("d must be a positive integer")
    if norm is Norm.L2:
        return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    if norm is Norm.L1:
        return 2.0**d / math.factorial(d)
    return 2.0**d


def _check_q(q: float) -> float:
    q = float(q)
    if not (q >= 1.0 and math.isfinite(q)):
        raise InvalidInputError(f"q must be a finite real >= 1, got {q}")
    return q


def rate_constant(
    q: float, d: int, norm: Norm = DEFAULT_NORM, inv_density_moment: float = 1.0
) -> RateConstant:
    """Constant Gamma(1+q/d)/v_d^{q/d} * moment, homogeneous in the moment."""
    q = _check_q(q)
    moment = float(inv_density_moment)
    if moment <= 0.0:
        raise InvalidInputError("inv_density_moment must be positive")
    v_d = unit_ball_volume(d, norm)
    value = math.gamma(1.0 + q / d) / v_d ** (q / d) * moment
    return RateConstant(q=q, d=int(d), v_d=v_d, inv_density_moment=moment, value=value)


def cdq(q: float, d: int, k_limit) -> float:
    """Inflation factor of the k-NN transport-cost rate; always > 1.

    Finite k: (2^{q/d+1}/k) * sum_{l=1}^{k} (l/k)^{q/d}.
    k -> infinity: 2^{q/d+1} / (q/d + 1).
    """
    q = _check_q(q)
    d = int(d)
    if d < 1:
        raise InvalidInputError("d must be a positive integer")
    alpha = q / d
    if k_limit is None or k_limit == math.inf:
        return 2.0 ** (alpha + 1.0) / (alpha + 1.0)
    k = int(k_limit)
    if k < 1:
        raise InvalidInputError("k_limit must be a positive integer or infinity")
    grid = np.arange(1, k + 1, dtype=np.float64) / k
    return float(2.0 ** (alpha + 1.0) / k * np.sum(grid**alpha))


def gaussian_moment_check(sigma: float, sigma_prime: float, q: float, d: int) -> bool:
    """Moment condition for centered isotropic Gaussians: sigma'^2 > sigma^2 q/d (strict)."""
    sigma = float(sigma)
    sigma_prime = float(sigma_prime)
    if sigma <= 0.0 or sigma_prime <= 0.0:
        raise InvalidInputError("scales must be positive")
    q = _check_q(q)
    return sigma_prime**2 > sigma**2 * q / int(d)


def zador_exponent(q: float, d: int) -> float:
    """Exponent d/(q+d): the variance-minimizing synthetic density is p_X^{d/(q+d)}."""
    q = _check_q(q)
    d = int(d)
    if d < 1:
        raise InvalidInputError("d must be a positive integer")
    return d / (q + d)


def inv_density_moment(
    x_sampler: Callable[[np.random.Generator, int], np.ndarray],
    log_density_xp: Callable[[np.ndarray], np.ndarray],
    q: float,
    d: int,
    n_draws: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo estimate of E[1/p_{X'}(X)^{q/d}] with its standard error.

    Draws X from ``x_sampler`` and averages exp(-(q/d) * log p_{X'}(X));
    the density must be positive on the support of X.
    """
    q = _check_q(q)
    d = int(d)
    if d < 1 or n_draws < 1:
        raise InvalidInputError("d and n_draws must be positive")
    gen = stream(seed, 0)
    x = np.asarray(x_sampler(gen, n_draws), dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    logs = np.asarray(log_density_xp(x), dtype=np.float64).reshape(-1)
    vals = np.exp(-(q / d) * logs)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite density evaluation in moment estimate")
    est = math.fsum(vals) / n_draws
    if n_draws > 1:
        var = math.fsum((v - est) ** 2 for v in vals) / (n_draws - 1)
        stderr = math.sqrt(var / n_draws)
    else:
        stderr = math.inf
    return est, stderr
