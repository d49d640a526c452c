"""How flat is t^a P(|X| > t) on the tail grid, in binomial SE units?

Uses the exact radial series, so it measures the finite-t curvature a tail
flatness gate would have to tolerate for a given scale and sample size.

Usage: python scripts/pilot_tail_flatness.py [alpha] [n_samples]
"""

import sys

import numpy as np

from kinetic_brw.stationary import stable_radial_tail

T_GRID = np.array([1.0, 4.0, 16.0, 64.0])


def main(alpha: float = 0.5, n: int = 1_000_000) -> None:
    for sigma in (1.0, 0.1, 0.01, 0.001):
        # X = sigma^(1/a) X_1 for the CF exp(-sigma |xi|^a)
        p = stable_radial_tail(T_GRID * sigma ** (-1 / alpha), alpha)
        scaled = T_GRID**alpha * p
        se = T_GRID**alpha * np.sqrt(p * (1 - p) / n)
        z = (scaled - np.average(scaled, weights=se**-2)) / se
        print(f"sigma={sigma:g}: scaled={np.round(scaled, 6)} max |z|={np.abs(z).max():.2f}", flush=True)


if __name__ == "__main__":
    a = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 1_000_000
    main(a, n)
