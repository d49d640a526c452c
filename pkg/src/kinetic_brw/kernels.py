"""Laws of the collision tuple (R1, O1, R2, O2) and the spectral function m.

A kernel turns a row of independent uniforms into one collision sample.
The first ``n_scale_uniforms`` columns drive (R1, R2) and the remaining
columns drive (O1, O2), so scale-only simulations can skip rotation
randomness without shifting the scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .group import IDENTITY, check_orthogonal, haar_from_uniforms, planar_rotation
from .stats import EstimateWithError, NonFinite


@dataclass(frozen=True)
class CollisionSample:
    """Collision tuples, batched over leading axes (``()`` for a single draw)."""

    r1: np.ndarray
    r2: np.ndarray
    o1: np.ndarray | None = None
    o2: np.ndarray | None = None

    def __len__(self):
        return int(np.size(self.r1))


class KernelModel:
    """Base class for collision kernels.

    Subclasses set ``name``, ``n_scale_uniforms``, ``n_rotation_uniforms``
    and implement ``scales`` and ``rotations``.  ``exact_m`` /
    ``exact_m_prime`` return ``None`` when no closed form is known.
    """

    name = "kernel"
    n_scale_uniforms = 0
    n_rotation_uniforms = 0
    alpha_hint: float | None = None

    @property
    def n_uniforms(self) -> int:
        return self.n_scale_uniforms + self.n_rotation_uniforms

    def scales(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def rotations(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def from_uniforms(self, u: np.ndarray, rotations: bool = True) -> CollisionSample:
        u = np.asarray(u, dtype=float)
        r1, r2 = self.scales(u[..., : self.n_scale_uniforms])
        if not rotations:
            return CollisionSample(r1, r2)
        o1, o2 = self.rotations(u[..., self.n_scale_uniforms : self.n_uniforms])
        return CollisionSample(r1, r2, o1, o2)

    def sample(self, rng: np.random.Generator, size=None, rotations: bool = True) -> CollisionSample:
        shape = () if size is None else tuple(np.atleast_1d(size))
        k = self.n_uniforms if rotations else self.n_scale_uniforms
        u = rng.random(shape + (max(k, 1),))
        # open interval: uniforms feed logs and negative powers
        u = np.where(u == 0.0, 0.5 * 2.0**-53, u)
        pad = np.full(shape + (self.n_uniforms - u.shape[-1],), 0.5) if not rotations else None
        if pad is not None and pad.shape[-1] > 0:
            u = np.concatenate([u[..., : self.n_scale_uniforms], pad], axis=-1)
        return self.from_uniforms(u, rotations=rotations)

    def exact_m(self, gamma: float) -> float | None:
        return None

    def exact_m_prime(self, gamma: float) -> float | None:
        return None

    def exact_cross_moment(self, gamma: float) -> float | None:
        """E[R1^gamma R2^gamma] when known in closed form."""
        return None

    @property
    def has_exact_m(self) -> bool:
        return self.exact_m(1.0) is not None

    def describe(self) -> dict:
        return {"name": self.name}


def _planar_pair(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return planar_rotation(2 * np.pi * u[..., 0]), planar_rotation(2 * np.pi * u[..., 1])


def _power_law_m(alpha: float, gamma: float) -> float:
    # m(gamma) = 2 E U^(gamma/alpha) = 2 alpha / (gamma + alpha)
    return 2.0 * alpha / (gamma + alpha)


def _power_law_m_prime(alpha: float, gamma: float) -> float:
    return -2.0 * alpha / (gamma + alpha) ** 2


class DirichletScalarKernel(KernelModel):
    """R1 = U^(1/a), R2 = (1-U)^(1/a): R1^a + R2^a = 1 on every draw.

    Rotations are independent uniform planar rotations.
    """

    n_scale_uniforms = 1
    n_rotation_uniforms = 2

    def __init__(self, alpha: float):
        if not 0 < alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        self.alpha = float(alpha)
        self.alpha_hint = self.alpha
        self.name = f"dirichlet(alpha={self.alpha:g})"

    def scales(self, u):
        w = u[..., 0]
        return w ** (1.0 / self.alpha), (1.0 - w) ** (1.0 / self.alpha)

    def rotations(self, u):
        return _planar_pair(u)

    def exact_m(self, gamma):
        return _power_law_m(self.alpha, gamma)

    def exact_m_prime(self, gamma):
        return _power_law_m_prime(self.alpha, gamma)

    def exact_cross_moment(self, gamma):
        # E[U^p (1-U)^p] = B(p+1, p+1)
        p = gamma / self.alpha
        return float(special.beta(p + 1, p + 1))

    def describe(self):
        return {"name": "dirichlet", "alpha": self.alpha}


class IndependentUniformKernel(KernelModel):
    """R_j = U_j^(1/a) with U1, U2 i.i.d. uniform; planar rotations."""

    n_scale_uniforms = 2
    n_rotation_uniforms = 2

    def __init__(self, alpha: float):
        if not 0 < alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        self.alpha = float(alpha)
        self.alpha_hint = self.alpha
        self.name = f"independent_uniform(alpha={self.alpha:g})"

    def scales(self, u):
        p = 1.0 / self.alpha
        return u[..., 0] ** p, u[..., 1] ** p

    def rotations(self, u):
        return _planar_pair(u)

    def exact_m(self, gamma):
        return _power_law_m(self.alpha, gamma)

    def exact_m_prime(self, gamma):
        return _power_law_m_prime(self.alpha, gamma)

    def exact_cross_moment(self, gamma):
        return (self.alpha / (gamma + self.alpha)) ** 2

    def describe(self):
        return {"name": "independent_uniform", "alpha": self.alpha}


class IsotropicKernel(KernelModel):
    """Scales of ``base`` with Haar rotations (independent, or one shared)."""

    def __init__(self, base: KernelModel, shared: bool = False):
        self.base = base
        self.shared = bool(shared)
        self.n_scale_uniforms = base.n_scale_uniforms
        self.n_rotation_uniforms = 4 if shared else 8
        self.alpha_hint = base.alpha_hint
        self.name = f"isotropic({base.name}, shared={self.shared})"

    def scales(self, u):
        return self.base.scales(u)

    def rotations(self, u):
        if self.shared:
            o = haar_from_uniforms(u[..., :4])
            return o, o
        return haar_from_uniforms(u[..., :4]), haar_from_uniforms(u[..., 4:8])

    def exact_m(self, gamma):
        return self.base.exact_m(gamma)

    def exact_m_prime(self, gamma):
        return self.base.exact_m_prime(gamma)

    def exact_cross_moment(self, gamma):
        return self.base.exact_cross_moment(gamma)

    def describe(self):
        return {"name": "isotropic", "base": self.base.describe(), "shared": self.shared}


# -- configurable kernels ---------------------------------------------------

_ROT_UNIFORMS = {"identity": 0, "planar_uniform": 1, "haar": 4}


@dataclass(frozen=True)
class RotationLaw:
    """Law of one rotation: a fixed matrix, uniform planar, or Haar."""

    kind: str
    matrix: np.ndarray = field(default_factory=lambda: IDENTITY)

    @classmethod
    def parse(cls, spec) -> "RotationLaw":
        if spec is None or spec == "identity":
            return cls("identity")
        if spec in ("planar_uniform", "haar"):
            return cls(spec)
        if isinstance(spec, dict) and "planar" in spec:
            return cls("fixed", planar_rotation(float(spec["planar"])))
        if isinstance(spec, dict) and "matrix" in spec:
            return cls("fixed", check_orthogonal(np.array(spec["matrix"], dtype=float), tol=1e-9))
        raise ValueError(f"unknown rotation spec {spec!r}")

    @property
    def n_uniforms(self) -> int:
        return _ROT_UNIFORMS.get(self.kind, 0)

    def draw(self, u: np.ndarray) -> np.ndarray:
        shape = u.shape[:-1]
        if self.kind == "planar_uniform":
            return planar_rotation(2 * np.pi * u[..., 0])
        if self.kind == "haar":
            return haar_from_uniforms(u[..., :4])
        return np.broadcast_to(self.matrix, shape + (3, 3))


class ConfigKernel(KernelModel):
    """User kernel from an atom table or a parametric scale family.

    Atom tables have a finite-sum m, which is reported as exact.  Parametric
    families run every check in Monte-Carlo mode.
    """

    def __init__(self, atoms=None, scales=None, rotations="planar_uniform", name="config"):
        self.name = name
        self._spec = {"atoms": atoms, "scales": scales, "rotations": rotations}
        if (atoms is None) == (scales is None):
            raise ValueError("give exactly one of 'atoms' or 'scales'")
        if atoms is not None:
            self._init_atoms(atoms, rotations)
        else:
            self._init_family(scales, rotations)
        self.alpha_hint = None

    def _init_atoms(self, atoms, default_rot):
        if not atoms:
            raise ValueError("empty atom table")
        p = np.array([float(a.get("p", 1.0)) for a in atoms])
        if np.any(p < 0) or p.sum() <= 0:
            raise ValueError("atom weights must be nonnegative with positive sum")
        self.p = p / p.sum()
        self.cdf = np.cumsum(self.p)
        self.r = np.array([[float(a["r1"]), float(a["r2"])] for a in atoms])
        if np.any(self.r < 0) or not np.all(np.isfinite(self.r)):
            raise ValueError("atom scales must be finite and nonnegative")
        self.rot_laws = [
            (RotationLaw.parse(a.get("o1", default_rot)), RotationLaw.parse(a.get("o2", default_rot)))
            for a in atoms
        ]
        self.n_scale_uniforms = 1
        self._rot_width = max(max(l1.n_uniforms, l2.n_uniforms) for l1, l2 in self.rot_laws)
        self.n_rotation_uniforms = 2 * self._rot_width
        self._family = None

    def _init_family(self, scales, default_rot):
        fam = dict(scales)
        kind = fam.get("family")
        if kind not in ("power_uniform", "beta"):
            raise ValueError(f"unknown scale family {kind!r}")
        self._family = fam
        self.coupling = fam.get("coupling", "independent")
        if self.coupling not in ("independent", "dirichlet"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        self.n_scale_uniforms = 1 if self.coupling == "dirichlet" else 2
        law = RotationLaw.parse(default_rot)
        self.rot_laws = None
        self._rot = (law, law)
        self._rot_width = law.n_uniforms
        self.n_rotation_uniforms = 2 * law.n_uniforms

    def _quantile(self, u):
        fam = self._family
        if fam["family"] == "power_uniform":
            return u ** (1.0 / float(fam["a"]))
        return special.betaincinv(float(fam["a"]), float(fam["b"]), u)

    def scales(self, u):
        if self._family is None:
            idx = np.searchsorted(self.cdf, u[..., 0] * self.cdf[-1], side="right")
            idx = np.minimum(idx, len(self.p) - 1)
            return self.r[idx, 0], self.r[idx, 1]
        if self.coupling == "dirichlet":
            return self._quantile(u[..., 0]), self._quantile(1.0 - u[..., 0])
        return self._quantile(u[..., 0]), self._quantile(u[..., 1])

    def rotations(self, u):
        w = self._rot_width
        shape = u.shape[:-1]
        if self._family is not None:
            l1, l2 = self._rot
            return l1.draw(u[..., :w]), l2.draw(u[..., w : 2 * w])
        raise RuntimeError("atom kernels draw rotations jointly with the atom index")

    def from_uniforms(self, u, rotations=True):
        if self._family is not None:
            return super().from_uniforms(u, rotations)
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.cdf, u[..., 0] * self.cdf[-1], side="right")
        idx = np.minimum(idx, len(self.p) - 1)
        r1, r2 = self.r[idx, 0], self.r[idx, 1]
        if not rotations:
            return CollisionSample(r1, r2)
        w = self._rot_width
        ru = u[..., 1 : 1 + 2 * w]
        o1 = np.empty(idx.shape + (3, 3))
        o2 = np.empty(idx.shape + (3, 3))
        for k, (l1, l2) in enumerate(self.rot_laws):
            sel = idx == k
            if not np.any(sel):
                continue
            o1[sel] = l1.draw(ru[sel][..., :w])
            o2[sel] = l2.draw(ru[sel][..., w : 2 * w])
        return CollisionSample(r1, r2, o1, o2)

    def exact_m(self, gamma):
        if self._family is not None:
            return None
        return float(np.sum(self.p * (self.r[:, 0] ** gamma + self.r[:, 1] ** gamma)))

    def exact_m_prime(self, gamma):
        if self._family is not None:
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.r**gamma * np.where(self.r > 0, np.log(np.where(self.r > 0, self.r, 1.0)), 0.0)
        return float(np.sum(self.p * t.sum(axis=1)))

    def exact_cross_moment(self, gamma):
        if self._family is not None:
            return None
        return float(np.sum(self.p * self.r[:, 0] ** gamma * self.r[:, 1] ** gamma))

    def describe(self):
        return {"name": "config", **{k: v for k, v in self._spec.items() if v is not None}}


def deterministic_kernel(r1: float, r2: float, o1=None, o2=None) -> ConfigKernel:
    """Single-atom kernel: (r1, o1, r2, o2) almost surely."""
    atom = {"r1": r1, "r2": r2, "o1": _as_rot_spec(o1), "o2": _as_rot_spec(o2)}
    return ConfigKernel(atoms=[atom], name=f"deterministic(r1={r1:g}, r2={r2:g})")


def _as_rot_spec(o):
    if o is None:
        return "identity"
    if isinstance(o, (str, dict)):
        return o
    return {"matrix": np.asarray(o, dtype=float).tolist()}


def kernel_from_config(block: dict) -> KernelModel:
    """Build a kernel from a JSON config block."""
    if not isinstance(block, dict) or "name" not in block:
        raise ValueError("kernel block needs a 'name'")
    name = block["name"]
    if name == "dirichlet":
        return DirichletScalarKernel(float(block["alpha"]))
    if name == "independent_uniform":
        return IndependentUniformKernel(float(block["alpha"]))
    if name == "isotropic":
        return IsotropicKernel(kernel_from_config(block["base"]), bool(block.get("shared", False)))
    if name == "config":
        return ConfigKernel(
            atoms=block.get("atoms"),
            scales=block.get("scales"),
            rotations=block.get("rotations", "planar_uniform"),
        )
    raise ValueError(f"unknown kernel name {name!r}")


# -- spectral function ------------------------------------------------------


def _powers(r: np.ndarray, gamma: float) -> np.ndarray:
    # 0**0 is 1 in numpy, matching m(0) = 2
    return np.power(r, gamma)


def m_samples(sample: CollisionSample, gamma: float) -> np.ndarray:
    x = _powers(sample.r1, gamma) + _powers(sample.r2, gamma)
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"non-finite R^gamma at gamma={gamma}")
    return x


def estimate_m(model: KernelModel, gamma: float, n: int, rng: np.random.Generator) -> EstimateWithError:
    """Sample mean of R1^gamma + R2^gamma."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    s = model.sample(rng, n, rotations=False)
    return EstimateWithError.from_samples(m_samples(s, gamma))


class NoBracket(ValueError):
    """m does not cross 1 downward on the bracket."""


class Inconclusive(RuntimeError):
    """Monte-Carlo noise cannot resolve m(mid) against 1 within budget."""

    def __init__(self, msg, bracket=None, estimate=None):
        super().__init__(msg)
        self.bracket = bracket
        self.estimate = estimate


@dataclass(frozen=True)
class AlphaRoot:
    """Root of m(alpha) = 1; ``lo``/``hi`` bracket it (a CI in MC mode)."""

    alpha: float
    lo: float
    hi: float
    mode: str
    evaluations: int

    def __float__(self):
        return float(self.alpha)


def _sequential_sign(model, gamma, rng, budget, z, first_batch=10_000):
    """+1 if m(gamma) > 1, -1 if < 1, 0 if unresolved within budget."""
    n = 0
    s = s2 = 0.0
    batch = min(first_batch, budget)
    while n < budget:
        k = min(batch, budget - n)
        x = m_samples(model.sample(rng, k, rotations=False), gamma)
        s += x.sum()
        s2 += (x * x).sum()
        n += k
        mean = s / n
        var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
        se = np.sqrt(var / n)
        if abs(mean - 1.0) > z * se:
            return (1 if mean > 1 else -1), n
        batch *= 2
    return 0, n


def solve_alpha(
    model: KernelModel,
    bracket: tuple[float, float] = (0.05, 2.0),
    tol: float = 1e-12,
    rng: np.random.Generator | None = None,
    mode: str = "auto",
    budget: int = 1_000_000,
    z: float = 3.0,
) -> AlphaRoot:
    """Solve m(alpha) = 1 on a bracket where m crosses 1 downward.

    Exact mode bisects the closed-form m until |m(alpha) - 1| <= tol.  Monte
    Carlo mode bisects with sequential sampling at each midpoint (batches
    doubling up to ``budget`` draws, decision at ``z`` standard errors) and
    stops once the bracket is narrower than ``tol``.
    """
    lo, hi = map(float, bracket)
    if not 0 < lo < hi <= 2:
        raise ValueError("need 0 < lo < hi <= 2")
    if mode == "auto":
        mode = "exact" if model.has_exact_m else "mc"
    if mode == "exact":
        m = model.exact_m
        f_lo, f_hi = m(lo) - 1.0, m(hi) - 1.0
        if min(abs(f_lo), abs(f_hi)) <= tol:
            root = lo if abs(f_lo) <= tol else hi
            return AlphaRoot(root, root, root, "exact", 2)
        if not (f_lo > 0 > f_hi):
            raise NoBracket(f"m({lo})={m(lo):.6g}, m({hi})={m(hi):.6g}: no downward crossing of 1")
        evals = 2
        mid = 0.5 * (lo + hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f = m(mid) - 1.0
            evals += 1
            if abs(f) <= tol and hi - lo < 1e-6:
                break
            if f > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4 * np.finfo(float).eps * hi:
                mid = 0.5 * (lo + hi)
                break
        return AlphaRoot(mid, lo, hi, "exact", evals)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("Monte-Carlo mode needs an rng")
    s_lo, _ = _sequential_sign(model, lo, rng, budget, z)
    s_hi, _ = _sequential_sign(model, hi, rng, budget, z)
    evals = 2
    if s_lo == -1 or s_hi == 1 or (s_lo == 0 and s_hi == 0):
        raise NoBracket(f"Monte-Carlo signs at bracket ends: {s_lo}, {s_hi}")
    if s_lo == 0 or s_hi == 0:
        raise Inconclusive("bracket endpoint not resolved against 1", bracket=(lo, hi))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s, _ = _sequential_sign(model, mid, rng, budget, z)
        evals += 1
        if s == 0:
            raise Inconclusive(
                f"m({mid:.6g}) indistinguishable from 1 with {budget} draws; bracket [{lo:.6g}, {hi:.6g}]",
                bracket=(lo, hi),
                estimate=mid,
            )
        if s > 0:
            lo = mid
        else:
            hi = mid
    return AlphaRoot(0.5 * (lo + hi), lo, hi, "mc", evals)
