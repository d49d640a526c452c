"""Weighted branching process: alive sets, generation slices and the spine.

Nodes are numbered heap-style: the root is 1 and the children of ``h`` are
``2h`` (first child) and ``2h + 1`` (second child).  Node ``h`` owns two
blocks of counter-based uniforms: its exponential lifetime and the collision
that produces its children.  Because every draw is a function of
(seed, replica, node), the event-queue and level-synchronous simulators
below build the same tree.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .group import IDENTITY
from .kernels import KernelModel
from .rng import TAG_KERNEL, TAG_LIFETIME, NodeStream, as_stream
from .stats import EstimateWithError, TwoSampleReport, chisquare_gof, count_homogeneity

MAX_GENERATION = 24
_MAX_HEAP_DEPTH = 62


class CapExceeded(RuntimeError):
    """The alive population outgrew the configured cap."""


class DepthExceeded(ValueError):
    """A requested depth is beyond what the engine materialises."""


def node_path(h: int) -> tuple[int, ...]:
    """Child indices (1 or 2) from the root down to heap node ``h``."""
    h = int(h)
    if h < 1:
        raise ValueError("heap ids start at 1")
    bits = bin(h)[3:]
    return tuple(1 + int(b) for b in bits)


def node_id(path) -> int:
    h = 1
    for j in path:
        if j not in (1, 2):
            raise ValueError("child indices are 1 or 2")
        h = 2 * h + (j - 1)
    return h


def generation_of(h) -> np.ndarray:
    """Depth of heap ids (vectorised)."""
    h = np.asarray(h, dtype=np.uint64)
    out = np.zeros(h.shape, dtype=np.int64)
    x = h.copy()
    while np.any(x > 1):
        more = x > 1
        out[more] += 1
        x = np.where(more, x >> np.uint64(1), x)
    return out


def lifetimes(stream: NodeStream, replica, ids) -> np.ndarray:
    u = stream.uniforms(replica, ids, 1, tag=TAG_LIFETIME)[..., 0]
    return -np.log1p(-u)


def collision(model: KernelModel, stream: NodeStream, replica, ids, rotations: bool = True):
    k = model.n_uniforms if rotations else model.n_scale_uniforms
    u = stream.uniforms(replica, ids, max(k, 1), tag=TAG_KERNEL)
    if not rotations and u.shape[-1] < model.n_uniforms:
        pad = np.full(u.shape[:-1] + (model.n_uniforms - u.shape[-1],), 0.5)
        u = np.concatenate([u[..., : model.n_scale_uniforms], pad], axis=-1)
    return model.from_uniforms(u, rotations=rotations)


# -- alive sets ---------------------------------------------------------------


@dataclass(frozen=True)
class Particle:
    id: int
    L: float
    U: np.ndarray
    birth: float
    death: float

    @property
    def path(self) -> tuple[int, ...]:
        return node_path(self.id)


@dataclass
class Population:
    """Alive particles at time ``t`` for one or many replicas (flat arrays).

    ``U`` is ``None`` when rotations were not simulated.
    """

    t: float
    replica: np.ndarray
    ids: np.ndarray
    L: np.ndarray
    U: np.ndarray | None
    birth: np.ndarray
    death: np.ndarray
    n_replicas: int
    replica_offset: int = 0

    def __len__(self):
        return int(self.ids.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.replica - self.replica_offset, minlength=self.n_replicas)

    @property
    def particles(self) -> list[Particle]:
        order = np.lexsort((self.ids, self.replica))
        return [
            Particle(int(self.ids[i]), float(self.L[i]), None if self.U is None else self.U[i],
                     float(self.birth[i]), float(self.death[i]))
            for i in order
        ]


def simulate_alive(
    model: KernelModel,
    t: float,
    stream,
    replica: int = 0,
    cap: int = 1_000_000,
    rotations: bool = True,
) -> Population:
    """Event-queue simulation of one replica's alive set at time ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    stream = as_stream(stream)
    d0 = float(lifetimes(stream, replica, 1))
    queue = [(d0, 1, 1.0, IDENTITY.copy(), 0.0)]
    alive = []
    while queue:
        death, h, L, U, birth = heapq.heappop(queue)
        if death > t:
            alive.append((h, L, U, birth, death))
            continue
        if h >= 1 << _MAX_HEAP_DEPTH:
            raise DepthExceeded("alive-set tree deeper than the heap numbering supports")
        s = collision(model, stream, replica, h, rotations)
        for j, (r, o) in enumerate(((s.r1, s.o1), (s.r2, s.o2))):
            c = 2 * h + j
            dc = death + float(lifetimes(stream, replica, c))
            heapq.heappush(queue, (dc, c, L * float(r), U @ o if rotations else U, death))
        if len(queue) + len(alive) > cap:
            raise CapExceeded(f"alive count exceeds cap={cap} at time {death:.4g}")
    alive.sort(key=lambda p: p[0])
    n = len(alive)
    return Population(
        t=float(t),
        replica=np.full(n, replica, dtype=np.int64),
        ids=np.array([p[0] for p in alive], dtype=np.uint64),
        L=np.array([p[1] for p in alive]),
        U=np.array([p[2] for p in alive]) if rotations else None,
        birth=np.array([p[3] for p in alive]),
        death=np.array([p[4] for p in alive]),
        n_replicas=1,
        replica_offset=replica,
    )


@dataclass
class Frontier:
    """Starting particles for a batch simulation (relative to time 0)."""

    replica: np.ndarray
    ids: np.ndarray
    L: np.ndarray
    U: np.ndarray | None
    birth: np.ndarray

    @classmethod
    def roots(cls, replicas: np.ndarray, rotations: bool = True) -> "Frontier":
        replicas = np.asarray(replicas, dtype=np.int64)
        n = replicas.size
        return cls(
            replicas,
            np.ones(n, dtype=np.uint64),
            np.ones(n),
            np.broadcast_to(IDENTITY, (n, 3, 3)).copy() if rotations else None,
            np.zeros(n),
        )


def simulate_alive_batch(
    model: KernelModel,
    t: float,
    stream,
    replicas=None,
    cap: int = 1_000_000,
    rotations: bool = True,
    frontier: Frontier | None = None,
) -> Population:
    """Alive sets of many replicas, expanded generation by generation.

    Builds the same trees as :func:`simulate_alive`.  ``cap`` bounds each
    replica's population; ``frontier`` replaces the default roots (its
    ``birth`` times are honoured and new lifetimes are drawn per node).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    stream = as_stream(stream)
    if frontier is None:
        replicas = np.arange(1) if replicas is None else np.asarray(replicas, dtype=np.int64)
        frontier = Frontier.roots(replicas, rotations)
    rep, ids, L, U, birth = frontier.replica, frontier.ids, frontier.L, frontier.U, frontier.birth
    offset = int(rep.min()) if rep.size else 0
    n_rep = int(rep.max()) - offset + 1 if rep.size else 0
    out = {k: [] for k in ("rep", "ids", "L", "U", "birth", "death")}
    n_alive = np.zeros(n_rep, dtype=np.int64)
    while ids.size:
        death = birth + lifetimes(stream, rep, ids)
        keep = death > t
        if np.any(keep):
            out["rep"].append(rep[keep])
            out["ids"].append(ids[keep])
            out["L"].append(L[keep])
            out["birth"].append(birth[keep])
            out["death"].append(death[keep])
            if rotations:
                out["U"].append(U[keep])
            n_alive += np.bincount(rep[keep] - offset, minlength=n_rep)
        split = ~keep
        if not np.any(split):
            break
        rep, ids, L, birth = rep[split], ids[split], L[split], death[split]
        U = U[split] if rotations else None
        if np.any(ids >= np.uint64(1 << _MAX_HEAP_DEPTH)):
            raise DepthExceeded("alive-set tree deeper than the heap numbering supports")
        pending = np.bincount(rep - offset, minlength=n_rep)
        # every pending split leaves at least two alive descendants
        if np.any(n_alive + 2 * pending > cap):
            raise CapExceeded(f"alive count exceeds cap={cap}")
        s = collision(model, stream, rep, ids, rotations)
        rep = np.repeat(rep, 2)
        ids = np.stack([2 * ids, 2 * ids + np.uint64(1)], axis=1).ravel()
        L = np.stack([L * s.r1, L * s.r2], axis=1).ravel()
        birth = np.repeat(birth, 2)
        if rotations:
            U = np.stack([U @ s.o1, U @ s.o2], axis=1).reshape(-1, 3, 3)
    cat = lambda k, dt=float: np.concatenate(out[k]) if out[k] else np.zeros(0, dtype=dt)
    return Population(
        t=float(t),
        replica=cat("rep", np.int64),
        ids=cat("ids", np.uint64),
        L=cat("L"),
        U=(np.concatenate(out["U"]) if out["U"] else np.zeros((0, 3, 3))) if rotations else None,
        birth=cat("birth"),
        death=cat("death"),
        n_replicas=n_rep,
        replica_offset=offset,
    )


# -- generation slices ----------------------------------------------------------


@dataclass
class GenerationSlice:
    """All 2**n nodes of generation ``n``, in heap order.

    Arrays may carry leading replica axes: ``L`` has shape ``(..., 2**n)``
    and ``U`` shape ``(..., 2**n, 3, 3)`` (``None`` if not simulated).
    ``levels`` optionally holds the ancestors' ``(L, U)`` at depths 0..n.
    """

    n: int
    L: np.ndarray
    U: np.ndarray | None
    levels: list | None = None

    @property
    def ids(self) -> np.ndarray:
        return np.arange(1 << self.n, 2 << self.n, dtype=np.uint64)

    def __len__(self):
        return 1 << self.n

    def entries(self):
        """``(path, L, U)`` triples of a single-replica slice."""
        if self.L.ndim != 1:
            raise ValueError("entries() needs a single-replica slice")
        return [
            (node_path(h), float(self.L[i]), None if self.U is None else self.U[i])
            for i, h in enumerate(self.ids)
        ]


def _expand(model, stream, replica, ids, L, U, k, rotations, keep_levels):
    levels = [(L, U)] if keep_levels else None
    for _ in range(k):
        s = collision(model, stream, replica, ids, rotations)
        ids = np.stack([2 * ids, 2 * ids + np.uint64(1)], axis=-1).reshape(ids.shape[:-1] + (-1,))
        L = np.stack([L * s.r1, L * s.r2], axis=-1).reshape(L.shape[:-1] + (-1,))
        if rotations:
            U = np.stack([U @ s.o1, U @ s.o2], axis=-3).reshape(U.shape[:-3] + (-1, 3, 3))
        if keep_levels:
            levels.append((L, U))
    return ids, L, U, levels


def _check_depth(n):
    if n < 0:
        raise ValueError("generation must be >= 0")
    if n > MAX_GENERATION:
        raise DepthExceeded(f"generation {n} > {MAX_GENERATION}")


def simulate_generation(
    model: KernelModel,
    n: int,
    stream,
    replicas=0,
    rotations: bool = True,
    keep_levels: bool = False,
) -> GenerationSlice:
    """Generation ``n`` of the tree(s); ``replicas`` may be an int or array."""
    _check_depth(n)
    stream = as_stream(stream)
    rep = np.asarray(replicas, dtype=np.int64)
    shape = rep.shape
    rep_b = rep[..., None]
    ids = np.ones(shape + (1,), dtype=np.uint64)
    L = np.ones(shape + (1,))
    U = np.broadcast_to(IDENTITY, shape + (1, 3, 3)).copy() if rotations else None
    _, L, U, levels = _expand(model, stream, rep_b, ids, L, U, n, rotations, keep_levels)
    return GenerationSlice(n, L, U, levels)


def shifted_slice(
    sl: GenerationSlice, k: int, model: KernelModel, stream, replicas=0
) -> GenerationSlice:
    """Extend every node of ``sl`` by ``k`` generations.

    Descendants draw from ``stream`` under their absolute heap ids, so
    passing the stream that built ``sl`` reproduces the original tree and a
    different stream grafts independent subtrees.
    """
    if k == 0:
        return sl
    _check_depth(sl.n + k)
    stream = as_stream(stream)
    rep = np.asarray(replicas, dtype=np.int64)[..., None]
    ids = np.broadcast_to(sl.ids, sl.L.shape)
    rotations = sl.U is not None
    _, L, U, _ = _expand(model, stream, rep, ids, sl.L, sl.U, k, rotations, False)
    return GenerationSlice(sl.n + k, L, U)


_RECORD = struct.Struct("<Qd9d")


def dump_slice(sl: GenerationSlice, path) -> None:
    """Little-endian records: u64 heap id, f64 L, 9 f64 of U (row-major)."""
    if sl.L.ndim != 1 or sl.U is None:
        raise ValueError("dump needs a single-replica slice with rotations")
    with open(path, "wb") as fh:
        for h, L, U in zip(sl.ids, sl.L, sl.U):
            fh.write(_RECORD.pack(int(h), float(L), *map(float, U.ravel())))


def load_slice(path) -> GenerationSlice:
    data = open(path, "rb").read()
    recs = list(_RECORD.iter_unpack(data))
    ids = np.array([r[0] for r in recs], dtype=np.uint64)
    n = int(np.log2(len(recs)))
    if len(recs) != 1 << n or not np.array_equal(ids, np.arange(1 << n, 2 << n, dtype=np.uint64)):
        raise ValueError("not a complete generation dump")
    L = np.array([r[1] for r in recs])
    U = np.array([r[2:] for r in recs]).reshape(-1, 3, 3)
    return GenerationSlice(n, L, U)


# -- spine / many-to-one ---------------------------------------------------------


@dataclass(frozen=True)
class WeightedSpineStep:
    L_step: np.ndarray
    U_step: np.ndarray | None
    weight: np.ndarray


def spine_step(model: KernelModel, gamma: float, m_gamma: float, rng, size=None, rotations=True) -> WeightedSpineStep:
    """(R_J, O_J) with J uniform on {1, 2} and weight 2 R_J^gamma / m(gamma)."""
    if not (m_gamma > 0 and np.isfinite(m_gamma)):
        raise ValueError("m_gamma must be positive and finite")
    s = model.sample(rng, size, rotations=rotations)
    pick = rng.random(np.shape(s.r1)) < 0.5
    r = np.where(pick, s.r2, s.r1)
    o = np.where(pick[..., None, None], s.o2, s.o1) if rotations else None
    return WeightedSpineStep(r, o, 2.0 * np.power(r, gamma) / m_gamma)


def spine_paths(model, gamma, m_gamma, n, n_walks, rng, rotations=True):
    """Walk ``n`` spine steps; returns prefix paths and product weights."""
    Lp = np.ones((n_walks, n + 1))
    Up = np.broadcast_to(IDENTITY, (n_walks, n + 1, 3, 3)).copy() if rotations else None
    w = np.ones(n_walks)
    for k in range(n):
        st = spine_step(model, gamma, m_gamma, rng, n_walks, rotations)
        Lp[:, k + 1] = Lp[:, k] * st.L_step
        if rotations:
            Up[:, k + 1] = Up[:, k] @ st.U_step
        w *= st.weight
    return Lp, Up, w


def _leaf_paths(levels, n):
    """Ancestor (L, U) along each leaf's path: shapes (..., 2**n, n+1)."""
    j = np.arange(1 << n)
    Lp = np.stack([levels[k][0][..., j >> (n - k)] for k in range(n + 1)], axis=-1)
    if levels[0][1] is None:
        return Lp, None
    Up = np.stack([levels[k][1][..., j >> (n - k), :, :] for k in range(n + 1)], axis=-3)
    return Lp, Up


@dataclass(frozen=True)
class PairedEstimate:
    lhs: EstimateWithError
    rhs: EstimateWithError
    k: float = 3.0

    @property
    def gap(self) -> float:
        return abs(self.lhs.mean - self.rhs.mean)

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.lhs.se, self.rhs.se))

    @property
    def agree(self) -> bool:
        return self.gap <= self.k * self.combined_se + 1e-12


PathFunctional = Callable[[np.ndarray, np.ndarray | None], np.ndarray]


def many_to_one_check(
    model: KernelModel,
    gamma: float,
    n: int,
    h: PathFunctional,
    budget: int,
    stream,
    m_gamma: float | None = None,
    rotations: bool = True,
    block: int = 2048,
) -> PairedEstimate:
    """Spine (lhs) versus branching sum (rhs) for a path functional ``h``.

    ``h(Lp, Up)`` receives prefix scales of shape (..., n+1) and rotations of
    shape (..., n+1, 3, 3) and returns values of shape (...).
    """
    stream = as_stream(stream)
    if m_gamma is None:
        m_gamma = model.exact_m(gamma)
        if m_gamma is None:
            raise ValueError("pass m_gamma for kernels without a closed-form m")
    rng = stream.generator(0xA11CE)
    lhs_vals = []
    for start in range(0, budget, block):
        k = min(block, budget - start)
        Lp, Up, w = spine_paths(model, gamma, m_gamma, n, k, rng, rotations)
        lhs_vals.append(w * h(Lp, Up))
    lhs = EstimateWithError.from_samples(np.concatenate(lhs_vals))
    tree = stream.child(0xB0B)
    rhs_vals = []
    for start in range(0, budget, block):
        reps = np.arange(start, min(start + block, budget))
        sl = simulate_generation(model, n, tree, reps, rotations=rotations, keep_levels=True)
        Lp, Up = _leaf_paths(sl.levels, n)
        rhs_vals.append((np.power(sl.L, gamma) * h(Lp, Up)).sum(axis=-1) / m_gamma**n)
    rhs = EstimateWithError.from_samples(np.concatenate(rhs_vals))
    return PairedEstimate(lhs, rhs)


# -- branching property ------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Product region A x B: ``L in (a_lo, a_hi]`` and ``B(U)`` true."""

    a_lo: float = 0.0
    a_hi: float = np.inf
    rotation_test: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "all"

    def count(self, pop: Population) -> np.ndarray:
        inside = (pop.L > self.a_lo) & (pop.L <= self.a_hi)
        if self.rotation_test is not None:
            inside &= self.rotation_test(pop.U)
        return np.bincount(pop.replica[inside] - pop.replica_offset, minlength=pop.n_replicas)


def upper_hemisphere(U: np.ndarray) -> np.ndarray:
    return U[..., 2, 2] >= 0


def first_quadrant_angle(U: np.ndarray) -> np.ndarray:
    return np.arctan2(U[..., 1, 0], U[..., 0, 0]) >= 0


@dataclass(frozen=True)
class BranchingReport:
    regions: list
    reports: list
    identical: bool

    @property
    def min_p(self) -> float:
        return min(r.p_value for r in self.reports)


def branching_property_check(
    model: KernelModel,
    t: float,
    h: float,
    regions: list[Region],
    n_seeds: int,
    stream,
    coupled: bool = False,
    cap: int = 100_000,
) -> BranchingReport:
    """Law of Z_{t+h}(A,B) against sum over w alive at t of [Z_h]_w(L(w)^-1 A, U(w)^-1 B).

    The composed side restarts an independent process at each particle alive
    at ``t`` (lifetimes are memoryless) and reads counts in absolute
    coordinates.  With ``coupled`` the outer population shares the stream of
    the direct side, so h = 0 gives identical samples.
    """
    stream = as_stream(stream)
    direct_stream = stream.child(1)
    outer_stream = direct_stream if coupled else stream.child(2)
    inner_stream = stream.child(3)
    rot = any(r.rotation_test is not None for r in regions)
    reps = np.arange(n_seeds)
    direct = simulate_alive_batch(model, t + h, direct_stream, reps, cap, rot)
    outer = simulate_alive_batch(model, t, outer_stream, reps, cap, rot)
    if h == 0:
        composed = outer
    else:
        # one fresh sub-process per outer particle, keyed by a global index
        idx = np.arange(len(outer), dtype=np.int64)
        fr = Frontier(idx, np.ones(idx.size, dtype=np.uint64), outer.L, outer.U, np.zeros(idx.size))
        inner = simulate_alive_batch(model, h, inner_stream, cap=cap, rotations=rot, frontier=fr)
        composed = Population(
            t + h, outer.replica[inner.replica], inner.ids, inner.L, inner.U,
            inner.birth + t, inner.death + t, outer.n_replicas, outer.replica_offset,
        )
    reports, identical = [], True
    for reg in regions:
        a, b = reg.count(direct), reg.count(composed)
        identical &= bool(np.array_equal(a, b))
        reports.append(count_homogeneity(a, b))
    return BranchingReport(list(regions), reports, identical)


def yule_pmf(t: float, kmax: int) -> np.ndarray:
    """P(|alive at t| = k) for k = 0..kmax (geometric on 1, 2, ...)."""
    p = np.exp(-t)
    k = np.arange(kmax + 1)
    out = p * (1 - p) ** np.maximum(k - 1, 0)
    out[0] = 0.0
    return out


def yule_law_test(counts: np.ndarray, t: float) -> TwoSampleReport:
    kmax = int(max(counts.max(), 1))
    return chisquare_gof(counts, yule_pmf(t, kmax))
