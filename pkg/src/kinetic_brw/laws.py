"""Velocity laws: a characteristic function plus an optional sampler."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import charfn


class MissingSampler(RuntimeError):
    """The law has no sampler but the operation needs draws."""


@dataclass(frozen=True)
class VelocityLaw:
    char_fn: charfn.CharFn
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is None:
            raise MissingSampler(f"{self.char_fn.description} has no sampler")
        return self.sampler(rng, size)


def positive_stable(beta: float, rng: np.random.Generator, size) -> np.ndarray:
    """Positive stable A with E exp(-s A) = exp(-s^beta), 0 < beta <= 1.

    Kanter's representation with U uniform on (0, pi) and E ~ Exp(1).
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if beta == 1:
        return np.ones(size)
    u = rng.uniform(0, np.pi, size)
    e = rng.standard_exponential(size)
    a = np.sin(beta * u) / np.sin(u) ** (1 / beta)
    b = (np.sin((1 - beta) * u) / e) ** ((1 - beta) / beta)
    return a * b


def isotropic_stable(alpha: float, sigma: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """3-vectors with characteristic function exp(-sigma |xi|^alpha).

    Sub-Gaussian form sigma^(1/alpha) sqrt(2A) G, A positive (alpha/2)-stable.
    """
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    a = positive_stable(alpha / 2, rng, size)
    g = rng.standard_normal((size, 3))
    return (sigma ** (1 / alpha) * np.sqrt(2 * a))[:, None] * g


def gaussian_law(variance: float = 1.0) -> VelocityLaw:
    sd = float(np.sqrt(variance))
    return VelocityLaw(charfn.gaussian(variance), lambda rng, n: sd * rng.standard_normal((n, 3)))


def stable_law(alpha: float, sigma: float = 1.0) -> VelocityLaw:
    return VelocityLaw(charfn.stable(alpha, sigma), lambda rng, n: isotropic_stable(alpha, sigma, rng, n))


def empirical_cf(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """mean over draws of exp(i <xi, X>), for each row of ``xi``."""
    xi = np.atleast_2d(xi)
    return np.exp(1j * (x @ xi.T)).mean(axis=0)


def sampler_cf_gap(law: VelocityLaw, points, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Largest |empirical CF - char_fn| over ``points`` and the 4/sqrt(n) budget."""
    xi = np.array([p.xi for p in points])
    emp = empirical_cf(law.sample(rng, n), xi)
    exact = law.char_fn(xi)
    return float(np.max(np.abs(emp - exact))), 4.0 / np.sqrt(n)
