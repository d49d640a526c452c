"""Stationary solutions as stable and Gaussian mixtures driven by W_infinity.

Mixture characteristic functions average over a frozen sample of
finite-depth proxies W_{n_big}, so they are deterministic functions once
built.  The bias from n_big < infinity is measured against the same trees
at depth n_big - 2 and reported as an allowance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from . import charfn
from .branching import PairedEstimate, simulate_generation
from .charfn import CharFn
from .group import FourierPoint, haar_rotation
from .io import write_csv
from .kernels import KernelModel, estimate_m
from .laws import MissingSampler, VelocityLaw, isotropic_stable
from .martingales import DisintegrationReport, WProxies, composite_check, sample_W_infinity
from .rng import as_stream
from .solver import ResidualReport, _as_points, _report, q_plus
from .stats import EstimateWithError, ks_two_sample


class AlphaOutOfScope(ValueError):
    """The requested exponent lies outside the covered range."""


@dataclass(frozen=True)
class InvariantK:
    """K(r, o) with K(0, o) = 0; ``func`` is vectorised over r and o."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    alpha: float
    description: str = "K"

    def __call__(self, r, o) -> np.ndarray:
        return self.func(np.asarray(r, dtype=float), np.asarray(o, dtype=float))


def power_K(sigma: float, alpha: float) -> InvariantK:
    """The isotropic family sigma r^alpha."""
    return InvariantK(lambda r, o: sigma * np.power(r, alpha), alpha, f"{sigma:g} r^{alpha:g}")


@dataclass
class StationarySolution:
    char_fn: CharFn
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None
    meta: dict
    proxies: WProxies | None = None
    char_fn_previous: CharFn | None = None

    @property
    def law(self) -> VelocityLaw:
        return VelocityLaw(self.char_fn, self.sampler)

    def sample(self, rng, size: int) -> np.ndarray:
        if self.sampler is None:
            raise MissingSampler("solution has no sampler")
        return self.sampler(rng, size)


def _proxies(model, alpha, n_big, n_W, stream):
    m_alpha = model.exact_m(alpha)
    return sample_W_infinity(model, alpha, n_big, n_W, as_stream(stream), 1.0 if m_alpha is None else m_alpha)


def _log_kernel(meta: dict):
    if meta["kind"] == "stable":
        sigma, alpha = meta["sigma"], meta["alpha"]
        return lambda r, wk: -sigma * wk * np.power(r, alpha)
    c = meta["c"]
    return lambda r, wk: -0.5 * c * wk * np.square(r)


def from_proxies(meta: dict, w: WProxies) -> StationarySolution:
    """Mixture CF and sampler for frozen proxies; ``meta['kind']`` is stable or gaussian."""
    log_k = _log_kernel(meta)
    if meta["kind"] == "stable":
        alpha, sigma = meta["alpha"], meta["sigma"]
        label = f"stable_mixture(alpha={alpha:g}, sigma={sigma:g})"

        def sampler(rng, size):
            wk = w.values[rng.integers(0, w.values.size, size)]
            return (wk ** (1 / alpha))[:, None] * isotropic_stable(alpha, sigma, rng, size)

    elif meta["kind"] == "gaussian":
        c = meta["c"]
        label = f"gaussian_mixture(c={c:g})"

        def sampler(rng, size):
            wk = w.values[rng.integers(0, w.values.size, size)]
            return np.sqrt(c * wk)[:, None] * rng.standard_normal((size, 3))

    else:
        raise ValueError(f"unknown mixture kind {meta['kind']!r}")
    cf = charfn.radial_mixture(w.values, log_k, label, meta)
    prev = charfn.radial_mixture(w.previous, log_k, "previous", meta)
    return StationarySolution(cf, sampler, dict(meta), w, prev)


def stable_mixture(model: KernelModel, alpha: float, sigma: float, n_big: int, n_W: int, stream) -> StationarySolution:
    """phi(r o e3) = mean_k exp(-sigma W_k r^alpha) over frozen proxies W_k."""
    if not 0 < alpha < 2 or alpha == 1:
        raise AlphaOutOfScope(f"stable mixtures need alpha in (0, 2) without 1, got {alpha}")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    w = _proxies(model, alpha, n_big, n_W, stream)
    meta = {"kind": "stable", "alpha": alpha, "sigma": sigma, "n_big": n_big, "n_W": n_W}
    return from_proxies(meta, w)


def gaussian_mixture(
    model: KernelModel,
    c: float,
    n_big: int,
    n_W: int,
    stream,
    alpha_tol: float = 1e-9,
    rng: np.random.Generator | None = None,
) -> StationarySolution:
    """phi(r o e3) = mean_k exp(-c W_k r^2 / 2): needs m(2) = 1."""
    if c <= 0:
        raise ValueError("c must be positive")
    m2 = model.exact_m(2.0)
    if m2 is not None:
        if abs(m2 - 1.0) > alpha_tol:
            raise AlphaOutOfScope(f"m(2) = {m2:.6g}, not 1")
    else:
        est = estimate_m(model, 2.0, 100_000, rng or np.random.default_rng(0))
        if not est.within(1.0):
            raise AlphaOutOfScope(f"m(2) = {est} is not 1 within 3 SE")
    w = _proxies(model, 2.0, n_big, n_W, stream)
    meta = {"kind": "gaussian", "alpha": 2.0, "c": c, "n_big": n_big, "n_W": n_W}
    return from_proxies(meta, w)


def save_solution(sol: StationarySolution, path) -> None:
    """JSON with the mixture parameters and both proxy samples (exact float repr)."""
    if sol.proxies is None:
        raise ValueError("only proxy-backed solutions can be saved")
    doc = {
        "meta": sol.meta,
        "values": [float(v) for v in sol.proxies.values],
        "previous": [float(v) for v in sol.proxies.previous],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_solution(path) -> StationarySolution:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    meta = doc["meta"]
    w = WProxies(np.array(doc["values"], dtype=float), np.array(doc["previous"], dtype=float), int(meta["n_big"]))
    return from_proxies(meta, w)


def _mixture_terms(sol: StationarySolution, r: np.ndarray) -> np.ndarray:
    """exp(-K_k(r)) per proxy k: shape r.shape + (n_W,)."""
    m = sol.meta
    w = sol.proxies.values
    if m["kind"] == "stable":
        return np.exp(-m["sigma"] * w * np.power(r[..., None], m["alpha"]))
    return np.exp(-0.5 * m["c"] * w * np.square(r[..., None]))


def fixed_point_residual(
    sol: StationarySolution,
    model: KernelModel,
    grid,
    n_mc: int,
    rng: np.random.Generator,
    k: float = 3.0,
    n_influence: int = 2000,
    atol: float = 1e-12,
) -> ResidualReport:
    """Q(phi, phi) - phi at each grid point.

    The lhs is a Monte-Carlo average over kernel draws.  The rhs is exact
    given the frozen proxies, but those are a finite sample, so it carries
    the standard error of the residual's first-order (influence) term in
    the proxy sample.  The allowance per point is |phi_{n_big} - phi_{n_big-2}|,
    a bound on the bias of depth-n_big proxies.
    """
    grid = _as_points(grid)
    lhs = q_plus(sol.char_fn, model, grid, n_mc, rng)
    rhs, allow = [], []
    s = model.sample(rng, n_influence, rotations=False) if sol.proxies is not None else None
    for p in grid:
        val = sol.char_fn.at(p)
        se = 0.0
        if s is not None and p.r > 0 and np.ptp(sol.proxies.values) > 0:
            f1, f2 = _mixture_terms(sol, p.r * s.r1), _mixture_terms(sol, p.r * s.r2)
            g = (f1 * f2.mean(axis=1, keepdims=True) + f1.mean(axis=1, keepdims=True) * f2).mean(axis=0)
            g = g - _mixture_terms(sol, np.array(p.r))
            se = float(g.std(ddof=1) / np.sqrt(g.size))
        rhs.append(EstimateWithError(complex(val), se, sol.proxies.values.size if sol.proxies is not None else 1))
        prev = sol.char_fn_previous.at(p) if sol.char_fn_previous is not None else val
        allow.append(abs(val - prev))
    return _report(grid, lhs, rhs, np.array(allow), k, atol, n_big=sol.meta.get("n_big"), n_W=sol.meta.get("n_W"))


def check_K_invariance(
    K: InvariantK,
    model: KernelModel,
    n_pairs: int,
    stream,
    depth: int = 3,
    tol: float = 1e-12,
    rng: np.random.Generator | None = None,
) -> ResidualReport:
    """|K(r, o) - s^-a K(r s, o u)| for (s, u) drawn from generation-``depth`` weights."""
    if n_pairs < 100:
        raise ValueError("n_pairs must be >= 100")
    rng = np.random.default_rng(0) if rng is None else rng
    sl = simulate_generation(model, depth, as_stream(stream), np.arange(n_pairs))
    pick = rng.integers(0, 1 << depth, n_pairs)
    s = sl.L[np.arange(n_pairs), pick]
    u = sl.U[np.arange(n_pairs), pick]
    keep = s > 0
    s, u = s[keep], u[keep]
    r = rng.uniform(0.05, 5.0, s.size)
    o = haar_rotation(rng, s.size)
    lhs = K(r, o)
    rhs = np.power(s, -K.alpha) * K(r * s, o @ u)
    pts = [FourierPoint(float(a), b) for a, b in zip(r, o)]
    report = _report(
        pts,
        [EstimateWithError.exact(complex(v)) for v in lhs],
        [EstimateWithError.exact(complex(v)) for v in rhs],
        0.0,
        0.0,
        tol,
        scales=s,
    )
    return report


def check_V_equation(form: str, model: KernelModel, alpha: float, n: int, n_big: int, n_seeds: int, stream, c: float = 1.0) -> DisintegrationReport:
    """V(o) = sum L(v)^2 [V]_v(o U(v)) for V = 0 or V = c W proxy (alpha = 2 only)."""
    if form == "zero":
        z = np.zeros(n_seeds)
        return _zero_report(z, n, n_big)
    if form != "cW":
        raise ValueError("V form is 'zero' or 'cW'")
    if abs(alpha - 2.0) > 1e-9:
        raise AlphaOutOfScope("V = c W needs alpha = 2")
    return composite_check(model, alpha, 2.0, n, n_big, n_seeds, stream, scale=c)


def check_Y_equation(
    form: str,
    model: KernelModel,
    alpha: float,
    n: int,
    n_big: int,
    n_seeds: int,
    stream,
    c: float = 1.0,
    out_of_theorem_scope: bool = False,
) -> DisintegrationReport:
    """Y(o) = sum L(v) [Y]_v(o U(v)) for Y = 0 or, gated, Y = c W proxy."""
    if form == "zero":
        return _zero_report(np.zeros(n_seeds), n, n_big)
    if form != "cW":
        raise ValueError("Y form is 'zero' or 'cW'")
    if not out_of_theorem_scope:
        raise AlphaOutOfScope("Y = c W is only meaningful at alpha = 1; pass out_of_theorem_scope=True")
    return composite_check(model, alpha, 1.0, n, n_big, n_seeds, stream, scale=c)


def _zero_report(z, n, n_big):
    e = EstimateWithError.exact(0.0, z.size)
    return DisintegrationReport(PairedEstimate(e, e), PairedEstimate(e, e), ks_two_sample(z, z), n, n_big, z, z.copy())


# -- tails -------------------------------------------------------------------------


@dataclass
class TailReport:
    t_grid: np.ndarray
    probs: np.ndarray
    scaled: np.ndarray
    scaled_se: np.ndarray
    C: float
    n_samples: int
    extra: dict = field(default_factory=dict)

    @property
    def sup(self) -> float:
        return float(self.scaled.max())

    @property
    def passed(self) -> bool:
        return bool(self.sup <= self.C)

    def flat(self, k: float = 3.0) -> bool:
        """Every scaled value within k binomial SE of the inverse-variance mean."""
        w = 1.0 / np.maximum(self.scaled_se, 1e-300) ** 2
        mean = float(np.sum(w * self.scaled) / np.sum(w))
        return bool(np.all(np.abs(self.scaled - mean) <= k * self.scaled_se))


def tail_check(
    sol,
    alpha: float,
    t_grid,
    n_samples: int,
    rng: np.random.Generator,
    C: float | None = None,
) -> TailReport:
    """t^alpha P(|X| > t) on a grid inside [1, 1e3].

    ``C`` defaults to twice the empirical value at the smallest t.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or t.min() < 1 or t.max() > 1e3:
        raise ValueError("t_grid must lie in [1, 1000]")
    sampler = getattr(sol, "sample", None)
    if sampler is None:
        raise MissingSampler("tail check needs a sampler")
    norms = np.linalg.norm(sol.sample(rng, n_samples), axis=1)
    p = (norms[:, None] > t[None, :]).mean(axis=0)
    scaled = t**alpha * p
    se = t**alpha * np.sqrt(p * (1 - p) / n_samples)
    if C is None:
        C = 2.0 * float(scaled[np.argmin(t)])
    return TailReport(t, p, scaled, se, float(C), n_samples)


def stable_radial_tail(x, alpha: float, terms: int = 400) -> np.ndarray:
    """P(|X| > x) for X in R^3 with CF exp(-|xi|^alpha), 0 < alpha < 1.

    Convergent series (2/pi) sum_n (-1)^(n+1) Gamma(n a + 2) sin(n pi a / 2) x^(-n a) / (n! n a).
    """
    if not 0 < alpha < 1:
        raise ValueError("series converges for 0 < alpha < 1")
    x = np.asarray(x, dtype=float)
    n = np.arange(1, terms + 1)[:, None]
    logmag = special.gammaln(n * alpha + 2) - special.gammaln(n + 1) - n * alpha * np.log(x.ravel()[None, :])
    sign = (-1.0) ** (n + 1) * np.sin(n * np.pi * alpha / 2)
    s = np.sum(sign * np.exp(logmag) / (n * alpha), axis=0)
    return (2 / np.pi * s).reshape(x.shape)


@dataclass
class LevyReport:
    r_grid: np.ndarray
    sums: np.ndarray
    sums_se: np.ndarray
    bounds: np.ndarray
    W_n: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.sums <= self.bounds + 3 * self.sums_se))


class EmpiricalTail:
    """Survival function of |X| from a large sample, with its sup t^a P(t)."""

    def __init__(self, norms: np.ndarray, alpha: float):
        self.norms = np.sort(np.asarray(norms, dtype=float))
        self.alpha = alpha
        n = self.norms.size
        # just below each order statistic the survival is (n - i) / n
        self.C = float(np.max(self.norms**alpha * (n - np.arange(n)) / n))

    @classmethod
    def from_law(cls, law: VelocityLaw, alpha: float, n: int, rng) -> "EmpiricalTail":
        return cls(np.linalg.norm(law.sample(rng, n), axis=1), alpha)

    def survival(self, y) -> np.ndarray:
        """Fraction of the sample with norm strictly above ``y``."""
        n = self.norms.size
        return (n - np.searchsorted(self.norms, np.asarray(y, dtype=float), side="right")) / n

    def count_moments(self, y) -> tuple[float, float]:
        """Mean and SE of c(X) = #{k : y_k < |X|} over the sample.

        With y sorted, c^2 = sum_k (2k - 1) 1{y_(k) < |X|}, so both moments
        need only one lookup per threshold.
        """
        p = self.survival(np.sort(np.asarray(y, dtype=float)))
        k = np.arange(1, p.size + 1)
        mean = float(p.sum())
        var = max(float(((2 * k - 1) * p).sum()) - mean * mean, 0.0)
        n = self.norms.size
        return mean, float(np.sqrt(var / max(n - 1, 1)))


def levy_tail_bound_check(tail: EmpiricalTail, L: np.ndarray, r_grid, alpha: float) -> LevyReport:
    """sum_v P(|X| > 1/(2 r L(v))) against 2^a C r^a W_n with W_n = sum L^a."""
    L = np.asarray(L, dtype=float).ravel()
    L = L[L > 0]
    r = np.asarray(r_grid, dtype=float)
    W = float(np.sum(L**alpha))
    sums, ses = zip(*(tail.count_moments(1.0 / (2.0 * rr * L)) for rr in r))
    bounds = 2**alpha * tail.C * r**alpha * W
    return LevyReport(r, np.array(sums), np.array(ses), bounds, W)


def dump_samples(sol: StationarySolution, rng, n: int, path) -> None:
    """``n`` sampler draws as a CSV of 3-vectors."""
    x = sol.sample(rng, n)
    write_csv(path, ["x", "y", "z"], x.tolist())
