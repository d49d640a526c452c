"""Additive and multiplicative martingales on generation slices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .branching import PairedEstimate, simulate_generation
from .charfn import CharFn
from .kernels import KernelModel, m_samples
from .rng import as_stream
from .stats import EstimateWithError, TwoSampleReport, ks_two_sample


def additive_W(L: np.ndarray, gamma: float, m_gamma: float) -> np.ndarray:
    """m^-n * sum L^gamma over the last axis, with n = log2 of its length."""
    if not m_gamma > 0:
        raise ValueError("m_gamma must be positive")
    L = np.asarray(L, dtype=float)
    n = int(np.log2(L.shape[-1]))
    return np.power(L, gamma).sum(axis=-1) / m_gamma**n


def w_paths(
    model: KernelModel,
    gamma: float,
    n_max: int,
    n_seeds: int,
    stream,
    m_gamma: float | None = None,
    block: int = 256,
    first_replica: int = 0,
) -> np.ndarray:
    """W_0..W_{n_max} along the same trees: array (n_seeds, n_max + 1)."""
    stream = as_stream(stream)
    m_gamma = _m_or_raise(model, gamma, m_gamma)
    out = np.empty((n_seeds, n_max + 1))
    for start in range(0, n_seeds, block):
        reps = np.arange(start, min(start + block, n_seeds)) + first_replica
        sl = simulate_generation(model, n_max, stream, reps, rotations=False, keep_levels=True)
        for k, (L, _) in enumerate(sl.levels):
            out[start : start + reps.size, k] = additive_W(L, gamma, m_gamma)
    return out


def _m_or_raise(model, gamma, m_gamma):
    if m_gamma is None:
        m_gamma = model.exact_m(gamma)
    if m_gamma is None:
        raise ValueError("pass m_gamma for kernels without a closed-form m")
    return float(m_gamma)


@dataclass(frozen=True)
class WProxies:
    """W_{n_big} per seed, plus W_{n_big - 2} on the same trees for bias checks."""

    values: np.ndarray
    previous: np.ndarray
    n_big: int

    @property
    def bias_diagnostic(self) -> float:
        return float(np.mean(np.abs(self.values - self.previous)))


def sample_W_infinity(
    model: KernelModel, alpha: float, n_big: int, n_seeds: int, stream, m_alpha: float = 1.0
) -> WProxies:
    """Finite-depth proxies W_{n_big}^(alpha) for the limit W_infinity."""
    paths = w_paths(model, alpha, n_big, n_seeds, stream, m_alpha)
    prev = paths[:, max(n_big - 2, 0)]
    return WProxies(paths[:, n_big], prev, n_big)


@dataclass(frozen=True)
class BigginsReport:
    gamma: float
    moment: EstimateWithError
    drift_margin: EstimateWithError
    moment_ok: bool
    drift_ok: bool


def biggins_conditions(model: KernelModel, gamma: float, n_mc: int, rng, k: float = 3.0) -> BigginsReport:
    """Monte-Carlo E[W_1 log+ W_1] and the drift margin m log m - gamma m'."""
    s = model.sample(rng, n_mc, rotations=False)
    x = m_samples(s, gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = sum(np.where(r > 0, np.power(r, gamma) * np.log(np.where(r > 0, r, 1.0)), 0.0) for r in (s.r1, s.r2))
    m, mp = x.mean(), y.mean()
    w1 = x / m
    moment = EstimateWithError.from_samples(w1 * np.log(np.maximum(w1, 1.0)))
    # delta method for g(m, m') = m log m - gamma m'
    infl = (np.log(m) + 1.0) * (x - m) - gamma * (y - mp)
    se = float(infl.std(ddof=1) / np.sqrt(n_mc))
    margin = EstimateWithError(float(m * np.log(m) - gamma * mp), se, n_mc)
    return BigginsReport(
        gamma,
        moment,
        margin,
        bool(np.isfinite(moment.mean)),
        bool(margin.mean > k * margin.se),
    )


def log_phi_products(phi: CharFn, L: np.ndarray, U: np.ndarray | None, r: float, o: np.ndarray) -> np.ndarray:
    """sum over the last node axis of log phi(r o L U e3)."""
    if phi.radial:
        return phi.log_at_radius(r * L).sum(axis=-1)
    if U is None:
        raise ValueError("non-radial CharFn needs rotations")
    xi = r * L[..., None] * (U[..., :, 2] @ np.asarray(o).T)
    return phi.log(xi).sum(axis=-1)


def multiplicative_M(sl, phi: CharFn, r: float, o: np.ndarray) -> np.ndarray:
    """prod over the slice of phi(r o L(v) U(v) e3); one value per replica."""
    if r == 0:
        return np.ones(sl.L.shape[:-1], dtype=complex)
    return np.exp(log_phi_products(phi, sl.L, sl.U, r, o))


def martingale_property_check(
    model: KernelModel,
    phi: CharFn,
    r: float,
    o: np.ndarray,
    n: int,
    n_seeds: int,
    stream,
    block: int = 256,
) -> PairedEstimate:
    """E M_{n+1}(r, o) against E M_n(r, o), on independent streams."""
    stream = as_stream(stream)
    rot = not phi.radial
    vals = []
    for depth, sub in ((n + 1, stream.child(1)), (n, stream.child(2))):
        acc = []
        for start in range(0, n_seeds, block):
            reps = np.arange(start, min(start + block, n_seeds))
            acc.append(multiplicative_M(simulate_generation(model, depth, sub, reps, rotations=rot), phi, r, o))
        vals.append(EstimateWithError.from_samples(np.concatenate(acc)))
    return PairedEstimate(vals[0], vals[1])


def variance_recursion(model: KernelModel, alpha: float, n: int) -> float:
    """Var W_n^(alpha) when m(alpha) = 1.

    Conditioning on the first split, W_{n+1} = R1^a W' + R2^a W'' with W', W''
    independent copies of W_n, so
    Var W_{n+1} = m(2a) (Var W_n + 1) + 2 E[R1^a R2^a] - 1.
    """
    m2 = model.exact_m(2 * alpha)
    cross = model.exact_cross_moment(alpha)
    if m2 is None or cross is None:
        raise ValueError("needs closed-form m(2 alpha) and E[R1^a R2^a]")
    v = 0.0
    for _ in range(n):
        v = m2 * (v + 1.0) + 2.0 * cross - 1.0
    return v


def variance_estimate(x: np.ndarray) -> EstimateWithError:
    """Sample variance with the large-sample SE sqrt((mu4 - s^4) / N)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    s2 = d.var(ddof=1)
    mu4 = np.mean(d**4)
    return EstimateWithError(float(s2), float(np.sqrt(max(mu4 - s2 * s2, 0.0) / n)), n)


@dataclass(frozen=True)
class DisintegrationReport:
    means: PairedEstimate
    variances: PairedEstimate
    ks: TwoSampleReport
    n: int
    n_big: int
    lhs: np.ndarray
    rhs: np.ndarray


def disintegration_check(
    model: KernelModel,
    alpha: float,
    n: int,
    n_big: int,
    n_seeds: int,
    stream,
    block: int = 64,
) -> DisintegrationReport:
    """Law of W_{n+n_big} against sum_{|v|=n} L(v)^a W^(v)_{n_big}.

    The W^(v) are independent depth-``n_big`` proxies, one fresh tree per
    (seed, v); the outer slice comes from a third stream.  For n = 0 the two
    sides are built from the same trees and coincide exactly.
    """
    return composite_check(model, alpha, alpha, n, n_big, n_seeds, stream, block=block)


def composite_check(
    model: KernelModel,
    alpha: float,
    exponent: float,
    n: int,
    n_big: int,
    n_seeds: int,
    stream,
    scale: float = 1.0,
    block: int = 64,
) -> DisintegrationReport:
    """c W_{n+n_big} against sum_{|v|=n} L(v)^exponent c W^(v)_{n_big}.

    With ``exponent == alpha`` this is the disintegration of W; other
    exponents probe equations the W-proxies do not solve.
    """
    stream = as_stream(stream)
    if n == 0:
        lhs = sample_W_infinity(model, alpha, n_big, n_seeds, stream.child(1)).values
        rhs = lhs.copy()
    else:
        lhs = sample_W_infinity(model, alpha, n + n_big, n_seeds, stream.child(1)).values
        outer = stream.child(2)
        inner = stream.child(3)
        width = 1 << n
        rhs = np.empty(n_seeds)
        for start in range(0, n_seeds, block):
            reps = np.arange(start, min(start + block, n_seeds))
            Ln = simulate_generation(model, n, outer, reps, rotations=False).L
            sub = (reps[:, None] * width + np.arange(width)[None, :]).ravel()
            Wv = additive_W(simulate_generation(model, n_big, inner, sub, rotations=False).L, alpha, 1.0)
            rhs[start : start + reps.size] = (np.power(Ln, exponent) * Wv.reshape(reps.size, width)).sum(axis=1)
    lhs, rhs = scale * lhs, scale * rhs
    means = PairedEstimate(EstimateWithError.from_samples(lhs), EstimateWithError.from_samples(rhs))
    variances = PairedEstimate(variance_estimate(lhs), variance_estimate(rhs))
    return DisintegrationReport(means, variances, ks_two_sample(lhs, rhs), n, n_big, lhs, rhs)
