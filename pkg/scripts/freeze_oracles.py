"""Recompute the oracle constants the tests compare against and freeze them.

Usage: python scripts/freeze_oracles.py [--check]

Every value comes from tests/oracles.py or from the lattice-kernel reference
solution; none goes through the Monte-Carlo paths under test.  With --check
the frozen file is compared instead of rewritten.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import (  # noqa: E402
    gaussian_lattice_phi,
    iid_uniform_variance,
    planar_angle_cos_mean,
    quasi_grid_median_rhs,
    spine_median_threshold,
    stable_tail_constant,
)

from kinetic_brw import charfn  # noqa: E402
from kinetic_brw.group import DEFAULT_RADII  # noqa: E402
from kinetic_brw.solver import calibrate_ode_allowance  # noqa: E402

FROZEN = ROOT / "tests" / "fixtures" / "frozen.json"


def compute() -> dict:
    return {
        "ode_c": calibrate_ode_allowance(charfn.gaussian(1.0), 1.0, list(DEFAULT_RADII), 0.5, 0.05),
        "spine_median_c": spine_median_threshold(4, 1.0),
        "quasi_grid_rhs": quasi_grid_median_rhs(4, 20, seed=1),
        "planar_cos_mean_n4": planar_angle_cos_mean(4, 1_000_000, np.random.default_rng(1)),
        "tail_constant_a05_s001": stable_tail_constant(0.5, 0.01),
        "lattice_phi_t1": {str(r): gaussian_lattice_phi(1.0, r) for r in (0.5, 1.0, 2.0)},
        "iid_uniform_variance": {str(n): iid_uniform_variance(2 / 3, n) for n in (1, 4, 8, 9, 12)},
    }


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args()
    values = compute()
    if args.check:
        old = json.loads(FROZEN.read_text())
        bad = [k for k in values if json.dumps(values[k], sort_keys=True) != json.dumps(old.get(k), sort_keys=True)]
        print("frozen values match" if not bad else f"changed: {bad}", flush=True)
        return 1 if bad else 0
    FROZEN.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")
    print(json.dumps(values, indent=2, sort_keys=True), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
