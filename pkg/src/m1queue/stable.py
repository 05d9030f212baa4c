"""Alpha-stable Levy motion on a time grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma
from scipy.stats import levy_stable

from .paths import CadlagPath

__all__ = ["StableLevyConfig", "pareto_tail_scale", "simulate_stable_levy", "stable_increments"]


@dataclass(frozen=True)
class StableLevyConfig:
    """Parameters of a zero-mean alpha-stable Levy motion.

    ``scale`` is the scale of the increment over unit time; an increment
    over ``dt`` has scale ``scale * dt**(1/alpha)``.
    """

    alpha: float
    scale: float = 1.0
    skew: float = -1.0
    step: float = 1e-2

    def __post_init__(self):
        if not 1 < self.alpha < 2:
            raise ValueError("alpha must lie in (1, 2)")
        if not self.scale >= 0 or not math.isfinite(self.scale):
            raise ValueError("scale must be a finite nonnegative number")
        if not -1 <= self.skew <= 1:
            raise ValueError("skew must lie in [-1, 1]")
        if not self.step > 0:
            raise ValueError("grid step must be positive")


def pareto_tail_scale(alpha: float, mean: float = 1.0) -> float:
    """Stable scale of centred sums of Pareto variables with the given mean.

    For ``P(X > x) = (x_m / x)**alpha`` the sum of ``k`` centred copies,
    divided by ``k**(1/alpha)``, tends to a stable law with skew 1 and
    ``scale**alpha = x_m**alpha * Gamma(2 - alpha) / (alpha - 1) * |cos(pi alpha / 2)|``.
    """
    if not 1 < alpha < 2:
        raise ValueError("alpha must lie in (1, 2)")
    xm = mean * (alpha - 1) / alpha
    s_alpha = xm**alpha * gamma(2 - alpha) / (alpha - 1) * abs(math.cos(math.pi * alpha / 2))
    return float(s_alpha ** (1 / alpha))


def stable_increments(
    alpha: float, scale: float, skew: float, size, rng: np.random.Generator
) -> np.ndarray:
    """Zero-mean stable variates (Chambers-Mallows-Stuck, via scipy)."""
    if scale == 0:
        return np.zeros(size)
    # scipy's S0 form is shifted by skew * scale * tan(pi alpha / 2) from the zero-mean S1 form
    loc = 0.0
    if getattr(levy_stable, "parameterization", "S1") == "S0":
        loc = skew * scale * math.tan(math.pi * alpha / 2)
    return levy_stable.rvs(alpha, skew, loc=loc, scale=scale, size=size, random_state=rng)


def simulate_stable_levy(
    cfg: StableLevyConfig, T: float, seed: int | np.random.SeedSequence | np.random.Generator | None
) -> CadlagPath:
    """Step path with independent stable increments on the grid ``k * cfg.step``.

    The last grid cell is shortened to end at ``T``; the path is zero at 0.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    grid = np.arange(0.0, T, cfg.step)
    grid = np.append(grid, T)
    if grid.size > 2 and T - grid[-2] < 1e-12 * T:
        grid = np.delete(grid, -2)
    dt = np.diff(grid)
    inc = stable_increments(cfg.alpha, 1.0, cfg.skew, dt.size, rng) * cfg.scale * dt ** (1 / cfg.alpha)
    vals = np.concatenate(([0.0], np.cumsum(inc)))
    left = np.concatenate(([0.0], vals[:-1]))
    return CadlagPath(T, "step", grid, left, vals)
