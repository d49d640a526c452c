"""Checks of the standing assumptions on a collision kernel.

A1 is handled by :func:`kernels.solve_alpha`.  A2 is a derivative sign,
A3 a two-sample test in six dimensions, and A5 a heuristic witness search
over sampled tree weights (it can confirm, never refute).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .branching import simulate_generation
from .group import E3, haar_rotation, planar_rotation
from .kernels import ConfigKernel, KernelModel
from .rng import as_stream
from .stats import EstimateWithError, energy_test


def _fd_samples(model, alpha, h, n, rng):
    s = model.sample(rng, n, rotations=False)
    f = lambda g: np.power(s.r1, g) + np.power(s.r2, g)
    return (f(alpha + h) - f(alpha - h)) / (2 * h), (f(alpha + 2 * h) - f(alpha - 2 * h)) / (4 * h)


def check_A2(model: KernelModel, alpha: float, h: float = 1e-3, n: int = 100_000, rng=None, mode: str = "auto") -> EstimateWithError:
    """m'(alpha): exact when available, else a common-random-number central difference.

    The finite-difference error folds in a Richardson estimate of the O(h^2)
    truncation, |D(h) - D(2h)| / 3, so a zero-variance kernel still gets an
    honest error bar.
    """
    if alpha - 2 * h <= 0:
        raise ValueError("need alpha - 2h > 0")
    if mode == "auto":
        mode = "exact" if model.exact_m_prime(alpha) is not None else "mc"
    if mode == "exact":
        return EstimateWithError.exact(float(model.exact_m_prime(alpha)))
    if rng is None:
        raise ValueError("Monte-Carlo mode needs an rng")
    d1, d2 = _fd_samples(model, alpha, h, n, rng)
    est = EstimateWithError.from_samples(d1)
    trunc = abs(d1.mean() - d2.mean()) / 3.0
    return EstimateWithError(est.mean, float(np.hypot(est.std_error, trunc)), n)


@dataclass(frozen=True)
class A3Report:
    statistic: float
    p_value: float
    pathwise_gap: float
    significance: float
    o: np.ndarray
    u: np.ndarray

    @property
    def passed(self) -> bool:
        return self.p_value > self.significance


def a3_frames(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random o, u with o e3 = u e3: a Haar frame times two planar rotations."""
    f = haar_rotation(rng)
    a, b = rng.uniform(0, 2 * np.pi, 2)
    return f @ planar_rotation(a), f @ planar_rotation(b)


def _six(model, frame, s):
    v1 = s.r1[:, None] * (frame @ s.o1 @ E3)
    v2 = s.r2[:, None] * (frame @ s.o2 @ E3)
    return np.hstack([v1, v2])


def check_A3(
    model: KernelModel,
    n: int = 1000,
    significance: float = 0.01,
    rng: np.random.Generator | None = None,
    o: np.ndarray | None = None,
    u: np.ndarray | None = None,
    n_perm: int = 200,
) -> A3Report:
    """Energy-distance test of (oR1O1e3, oR2O2e3) against (uR1O1e3, uR2O2e3).

    The two samples use independent kernel draws.  ``pathwise_gap`` is the
    largest difference when both frames act on the same draws; it is 0 for
    kernels with planar rotations.
    """
    if n < 1000:
        raise ValueError("n must be >= 1000")
    rng = np.random.default_rng(0) if rng is None else rng
    if o is None or u is None:
        o, u = a3_frames(rng)
    if not np.allclose(o @ E3, u @ E3, atol=1e-12):
        raise ValueError("o e3 and u e3 must coincide")
    sx = model.sample(rng, n)
    sy = model.sample(rng, n)
    x, y = _six(model, o, sx), _six(model, u, sy)
    gap = float(np.abs(x - _six(model, u, sx)).max())
    rep = energy_test(x, y, n_perm=n_perm, rng=rng)
    return A3Report(rep.statistic, rep.p_value, gap, significance, o, u)


def adversarial_a3_kernel() -> ConfigKernel:
    """R1 = 1, O1 = I; O2 tilts e3 onto e1, so frames sharing o e3 disagree."""
    tilt = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
    atoms = [{"r1": 1.0, "r2": r, "p": 1.0, "o1": "identity", "o2": {"matrix": tilt.tolist()}} for r in (0.25, 0.5, 0.75)]
    return ConfigKernel(atoms=atoms, name="adversarial_a3")


@dataclass(frozen=True)
class A5Report:
    found: bool
    witness: tuple | None
    n_points: int


def check_A5(
    model: KernelModel,
    n: int,
    stream,
    k: int = 4,
    rot_tol: float = 1e-6,
    scale_tol: float = 1e-6,
    neighbours: int = 16,
) -> A5Report:
    """Search generation 0..k weights of ``n`` trees for (s, u), (s', u) with s != s'.

    Heuristic: a witness confirms the assumption, its absence proves nothing.
    """
    if n < 1 or k > 4 or k < 0:
        raise ValueError("need n >= 1 and 0 <= k <= 4")
    sl = simulate_generation(model, k, as_stream(stream), np.arange(n), keep_levels=True)
    L = np.concatenate([lv[0].reshape(-1) for lv in sl.levels])
    U = np.concatenate([lv[1].reshape(-1, 9) for lv in sl.levels])
    keep = L > 0
    L, U = L[keep], U[keep]
    key = np.round(np.column_stack([np.log(L), U]), 12)
    _, first = np.unique(key, axis=0, return_index=True)
    L, U = L[first], U[first]
    if L.size < 2:
        return A5Report(False, None, int(L.size))
    tree = cKDTree(U)
    kk = min(neighbours, L.size)
    dist, idx = tree.query(U, k=list(range(1, kk + 1)), distance_upper_bound=rot_tol, p=np.inf)
    lim = np.log1p(scale_tol)
    rows = np.arange(L.size)[:, None]
    ok = np.isfinite(dist) & (idx != rows)
    jj = np.where(ok, idx, 0)
    hit = ok & (np.abs(np.log(L)[:, None] - np.log(L)[jj]) > lim)
    if np.any(hit):
        i, c = np.argwhere(hit)[0]
        j = jj[i, c]
        return A5Report(True, ((L[i], U[i].reshape(3, 3)), (L[j], U[j].reshape(3, 3))), int(L.size))
    return A5Report(False, None, int(L.size))
