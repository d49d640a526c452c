"""Pass rate of the stationary fixed-point gate over a panel of seeds.

Usage: python scripts/pilot_fixed_point.py [n_seeds]
"""

import sys
import time

import numpy as np

from kinetic_brw.group import default_grid
from kinetic_brw.kernels import IndependentUniformKernel
from kinetic_brw.rng import NodeStream
from kinetic_brw.stationary import fixed_point_residual, stable_mixture


def main(n_seeds: int = 10) -> None:
    model = IndependentUniformKernel(1.5)
    grid = default_grid()
    ratios = []
    for seed in range(n_seeds):
        t0 = time.perf_counter()
        st = NodeStream(1000 + seed)
        sol = stable_mixture(model, 1.5, 1.0, 12, 1000, st.child(20))
        rep = fixed_point_residual(sol, model, grid, 50_000, st.generator(21))
        worst = float(np.max(rep.gaps / rep.bounds))
        ratios.append(worst)
        print(f"seed {1000 + seed}: pass={rep.passed} max gap/bound={worst:.3f} ({time.perf_counter() - t0:.1f} s)", flush=True)
    print(f"pass rate {np.mean(np.array(ratios) <= 1):.2f}, median ratio {np.median(ratios):.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10)
