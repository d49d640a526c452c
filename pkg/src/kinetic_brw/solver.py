"""Monte-Carlo solution of the Fourier-space kinetic equation.

phi_t(r o e3) is the expected product of phi_0(r o L(v) U(v) e3) over the
particles alive at time t.  Every replica simulates one population and
evaluates all Fourier points on it, so estimates at different points share
random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .branching import Frontier, Population, collision, simulate_alive_batch
from .charfn import CharFn
from .group import E3, FourierPoint
from .kernels import KernelModel
from .laws import VelocityLaw
from .parallel import DEFAULT_BLOCK, map_blocks
from .rng import as_stream
from .stats import EstimateWithError, Moments, merge_all


@dataclass
class ResidualReport:
    points: list
    lhs: list
    rhs: list
    gaps: np.ndarray
    allowance: float | np.ndarray = 0.0
    k: float = 3.0
    atol: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def max_abs_gap(self) -> float:
        return float(np.max(self.gaps)) if len(self.gaps) else 0.0

    @property
    def bounds(self) -> np.ndarray:
        se = np.array([np.hypot(a.se, b.se) for a, b in zip(self.lhs, self.rhs)])
        return self.k * se + np.asarray(self.allowance) + self.atol

    @property
    def per_point_pass(self) -> np.ndarray:
        return self.gaps <= self.bounds

    @property
    def passed(self) -> bool:
        return bool(np.all(self.per_point_pass))


def _report(points, lhs, rhs, allowance=0.0, k=3.0, atol=0.0, **extra) -> ResidualReport:
    gaps = np.array([abs(a.mean - b.mean) for a, b in zip(lhs, rhs)])
    return ResidualReport(list(points), list(lhs), list(rhs), gaps, allowance, k, atol, extra)


def _as_points(points) -> list[FourierPoint]:
    if isinstance(points, FourierPoint):
        return [points]
    return list(points)


def replica_products(phi: CharFn, pop: Population, points) -> np.ndarray:
    """Per-replica product over alive particles; shape (n_replicas, n_points)."""
    points = _as_points(points)
    idx = pop.replica - pop.replica_offset
    out = np.empty((pop.n_replicas, len(points)), dtype=complex)
    for j, p in enumerate(points):
        if p.r == 0:
            out[:, j] = 1.0
            continue
        if phi.radial:
            lg = phi.log_at_radius(p.r * pop.L)
        else:
            xi = p.r * pop.L[:, None] * (pop.U[:, :, 2] @ p.o.T)
            lg = phi.log(xi)
        re = np.bincount(idx, weights=lg.real, minlength=pop.n_replicas)
        im = np.bincount(idx, weights=lg.imag, minlength=pop.n_replicas)
        out[:, j] = np.exp(re + 1j * im)
    return out


def _estimates(parts: list[Moments]) -> list[EstimateWithError]:
    return merge_all(parts).estimates()


def solve_time(
    phi0: CharFn,
    model: KernelModel,
    t: float,
    points,
    n_replicas: int,
    stream,
    cap: int = 100_000,
    threads: int | None = None,
    block: int = DEFAULT_BLOCK,
) -> list[EstimateWithError]:
    """phi_t at each point, averaging the alive-set product over replicas."""
    points = _as_points(points)
    stream = as_stream(stream)
    if t == 0:
        # only the root is alive; averaging identical terms would add rounding
        return [EstimateWithError.exact(phi0.at(p), n_replicas) for p in points]

    def work(a, b):
        pop = simulate_alive_batch(model, t, stream, np.arange(a, b), cap, rotations=not phi0.radial)
        return Moments.of(replica_products(phi0, pop, points))

    return _estimates(map_blocks(work, n_replicas, block, threads))


def q_plus(phi: CharFn, model: KernelModel, points, n_mc: int, rng: np.random.Generator) -> list[EstimateWithError]:
    """E[phi(r o R1 O1 e3) phi(r o R2 O2 e3)] at each point (shared draws)."""
    if n_mc < 2:
        raise ValueError("n_mc must be >= 2")
    points = _as_points(points)
    s = model.sample(rng, n_mc, rotations=not phi.radial)
    vals = np.empty((n_mc, len(points)), dtype=complex)
    for j, p in enumerate(points):
        if phi.radial:
            lg = phi.log_at_radius(p.r * s.r1) + phi.log_at_radius(p.r * s.r2)
        else:
            x1 = p.r * s.r1[:, None] * (s.o1[:, :, 2] @ p.o.T)
            x2 = p.r * s.r2[:, None] * (s.o2[:, :, 2] @ p.o.T)
            lg = phi.log(x1) + phi.log(x2)
        vals[:, j] = np.exp(lg)
    return Moments.of(vals).estimates()


def _collision_frontier(model, stream, reps, rotations):
    """Children of a root that splits at time 0; they start living at 0."""
    s = collision(model, stream, reps, np.ones(reps.size, dtype=np.uint64), rotations)
    rep = np.repeat(reps, 2)
    ids = np.tile(np.array([2, 3], dtype=np.uint64), reps.size)
    L = np.stack([s.r1, s.r2], axis=1).ravel()
    U = np.stack([s.o1, s.o2], axis=1).reshape(-1, 3, 3) if rotations else None
    return Frontier(rep, ids, L, U, np.zeros(rep.size))


def ode_residual(
    phi0: CharFn,
    model: KernelModel,
    t: float,
    delta: float,
    points,
    n_replicas: int,
    stream,
    c_allowance: float = 0.0,
    k: float = 3.0,
    atol: float = 0.0,
    cap: int = 100_000,
    threads: int | None = None,
    block: int = DEFAULT_BLOCK,
) -> ResidualReport:
    """Central difference of phi_t against Q(phi_t, phi_t) - phi_t.

    lhs: the same trees observed at t - delta and t + delta.  rhs: per
    replica, a root forced to split at time 0 whose two subtrees evolve
    independently for time t (an unbiased product of two phi_t values),
    minus an independent phi_t replica.  Both sides are unbiased, the lhs up
    to the O(delta^2) difference error budgeted as ``c_allowance * delta**2``.
    """
    if not 0 < delta <= t:
        raise ValueError("need 0 < delta <= t")
    points = _as_points(points)
    stream = as_stream(stream)
    s_fd, s_q, s_phi = stream.child(1), stream.child(2), stream.child(3)
    rot = not phi0.radial

    def work(a, b):
        reps = np.arange(a, b)
        up = replica_products(phi0, simulate_alive_batch(model, t + delta, s_fd, reps, cap, rot), points)
        dn = replica_products(phi0, simulate_alive_batch(model, t - delta, s_fd, reps, cap, rot), points)
        fr = _collision_frontier(model, s_q, reps, rot)
        q = replica_products(phi0, simulate_alive_batch(model, t, s_q, cap=cap, rotations=rot, frontier=fr), points)
        ph = replica_products(phi0, simulate_alive_batch(model, t, s_phi, reps, cap, rot), points)
        return Moments.of((up - dn) / (2 * delta)), Moments.of(q - ph)

    parts = map_blocks(work, n_replicas, block, threads)
    lhs = _estimates([p[0] for p in parts])
    rhs = _estimates([p[1] for p in parts])
    return _report(points, lhs, rhs, c_allowance * delta**2, k, atol, t=t, delta=delta, c=c_allowance)


def _lattice_chain(phi0: CharFn, alpha: float, r: float, t_eval, depth: int = 80) -> np.ndarray:
    # y_k(t) = phi_t(r 2^(-k/alpha)) solves y_k' = y_{k+1}^2 - y_k
    if not phi0.radial:
        raise ValueError("lattice reference needs a radial datum")
    radii = r * 2.0 ** (-np.arange(depth + 1) / alpha)
    y0 = np.exp(phi0.log_radial(radii))
    tail = y0[-1]

    def rhs(_, y):
        nxt = np.append(y[1:], tail)
        return nxt * nxt - y

    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    t_end = float(t_eval.max())
    if t_end == 0:
        return np.repeat(y0[:, None], t_eval.size, axis=1)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", dense_output=True, rtol=1e-12, atol=1e-14)
    return sol.sol(t_eval)


def lattice_reference(phi0: CharFn, alpha: float, r: float, t_eval, depth: int = 80) -> np.ndarray:
    """Exact phi_t(r) for the kernel R1 = R2 = 2^(-1/alpha), O = I, radial phi0.

    The chain over r 2^(-k/alpha) is cut at ``depth``, where the datum is
    1 to machine precision.
    """
    return _lattice_chain(phi0, alpha, r, t_eval, depth)[0]


def calibrate_ode_allowance(
    phi0: CharFn, alpha: float, radii, t: float, delta: float, safety: float = 2.0, n_t: int = 21
) -> float:
    """c such that the central-difference error stays below c delta^2.

    Measured on the lattice kernel, where phi_t is known to ODE precision,
    over the given radii and centre times in [delta, t + delta]; ``safety``
    scales the largest observed ratio.
    """
    ts = np.linspace(delta, t + delta, n_t)
    grid = np.concatenate([ts - delta, ts, ts + delta])
    worst = 0.0
    for r in radii:
        y = _lattice_chain(phi0, alpha, float(r), grid)
        lo, mid, hi = y[:, :n_t], y[:, n_t : 2 * n_t], y[:, 2 * n_t :]
        fd = (hi[0] - lo[0]) / (2 * delta)
        exact = mid[1] ** 2 - mid[0]
        worst = max(worst, float(np.max(np.abs(fd - exact))) / delta**2)
    return safety * worst


def semigroup_check(
    phi0: CharFn,
    model: KernelModel,
    t: float,
    h: float,
    points,
    n_replicas: int,
    stream,
    k: float = 3.0,
    cap: int = 100_000,
    threads: int | None = None,
    block: int = DEFAULT_BLOCK,
) -> ResidualReport:
    """phi_{t+h} against E prod over w alive at h of phi_t(r o L(w) U(w) e3).

    Each outer particle gets one independent phi_t surrogate: a fresh
    subtree (new stream) run for time t from that particle.  Given the outer
    population the product of these surrogates is unbiased for the product
    of phi_t values.
    """
    if t < 0 or h < 0:
        raise ValueError("t and h must be >= 0")
    points = _as_points(points)
    stream = as_stream(stream)
    s_lhs, s_outer, s_inner = stream.child(1), stream.child(2), stream.child(3)
    rot = not phi0.radial

    def work(a, b):
        reps = np.arange(a, b)
        lhs = replica_products(phi0, simulate_alive_batch(model, t + h, s_lhs, reps, cap, rot), points)
        outer = simulate_alive_batch(model, h, s_outer, reps, cap, rot)
        fr = Frontier(outer.replica, outer.ids, outer.L, outer.U, np.zeros(len(outer)))
        inner = simulate_alive_batch(model, t, s_inner, cap=cap, rotations=rot, frontier=fr)
        return Moments.of(lhs), Moments.of(replica_products(phi0, inner, points))

    parts = map_blocks(work, n_replicas, block, threads)
    return _report(points, _estimates([p[0] for p in parts]), _estimates([p[1] for p in parts]), 0.0, k, t=t, h=h)


# -- matrix embedding -----------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingSample:
    matrix_form: np.ndarray
    product_form: np.ndarray

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.matrix_form - self.product_form)))


def _directions(L, U):
    # L(v) U(v) e3 per node
    return L[..., None] * (U @ E3)


def embedded_matrix_cf(
    law: VelocityLaw | None,
    L: np.ndarray,
    U: np.ndarray,
    point: FourierPoint,
    rng: np.random.Generator | None = None,
    X: np.ndarray | None = None,
) -> EmbeddingSample:
    """exp(i tr((r o)^T sum_v Xt(v) (L(v) U(v))^T)) next to the per-node product.

    ``Xt(v)`` holds X(v) in its third column.  ``X`` may be passed with shape
    (..., n_nodes, 3); otherwise one draw per node comes from ``law``.
    """
    L = np.asarray(L, dtype=float)
    if X is None:
        if law is None:
            raise ValueError("need a law or explicit draws")
        X = law.sample(rng, L.size).reshape(L.shape + (3,))
    Xt = np.zeros(X.shape + (3,))
    Xt[..., :, 2] = X
    S = (Xt @ np.swapaxes(L[..., None, None] * U, -1, -2)).sum(axis=-3)
    ro = point.r * point.o
    matrix = np.exp(1j * np.trace(np.swapaxes(ro, -1, -2) @ S, axis1=-2, axis2=-1))
    proj = np.einsum("...vi,...vi->...v", _directions(L, U) @ ro.T, X)
    product = np.prod(np.exp(1j * proj), axis=-1)
    return EmbeddingSample(matrix, product)


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vec over the last two axes."""
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (9,))


def Yn(l: np.ndarray, u: np.ndarray, X: np.ndarray) -> np.ndarray:
    """sum_v l(v) vec(Xt(v) u(v)^T) for draws X of shape (..., n_nodes, 3)."""
    Xt = np.zeros(X.shape + (3,))
    Xt[..., :, 2] = X
    return vec(l[..., None, None] * (Xt @ np.swapaxes(u, -1, -2))).sum(axis=-2)


def vectorized_Yn_check(
    law: VelocityLaw,
    l: np.ndarray,
    u: np.ndarray,
    points,
    n_mc: int,
    rng: np.random.Generator,
    shared: bool = False,
    k: float = 3.0,
    block: int = 20_000,
) -> ResidualReport:
    """CF of Y_n(l) at r vec(o) against M_n(r, o, l) for frozen weights.

    Shared mode compares the two algebraic forms on common draws (``extra``
    records the largest per-sample gap); otherwise the rhs is the exact
    product of ``law.char_fn`` values.
    """
    points = _as_points(points)
    l = np.asarray(l, dtype=float)
    lhs_m, rhs_m = [], []
    max_gap = 0.0
    for a in range(0, n_mc, block):
        m = min(block, n_mc - a)
        X = law.sample(rng, m * l.size).reshape(m, l.size, 3)
        Y = Yn(l, u, X)
        z = np.empty((m, len(points)), dtype=complex)
        p_form = np.empty_like(z)
        for j, p in enumerate(points):
            z[:, j] = np.exp(1j * (Y @ vec(p.r * p.o)))
            if shared:
                proj = np.einsum("vi,mvi->mv", _directions(l, u) @ (p.r * p.o).T, X)
                p_form[:, j] = np.prod(np.exp(1j * proj), axis=-1)
        lhs_m.append(Moments.of(z))
        if shared:
            rhs_m.append(Moments.of(p_form))
            max_gap = max(max_gap, float(np.abs(z - p_form).max()))
    lhs = _estimates(lhs_m)
    if shared:
        rhs = _estimates(rhs_m)
    else:
        rhs = []
        for p in points:
            xi = p.r * _directions(l, u) @ p.o.T
            rhs.append(EstimateWithError.exact(complex(np.exp(law.char_fn.log(xi).sum())), n_mc))
    return _report(points, lhs, rhs, 0.0, k, max_sample_gap=max_gap, shared=shared)
