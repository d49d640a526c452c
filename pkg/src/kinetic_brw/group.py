"""O(3), the similarity group R_> x O(3), and Fourier-point frames."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-12
E3 = np.array([0.0, 0.0, 1.0])
IDENTITY = np.eye(3)
IDENTITY.setflags(write=False)


class NotOrthogonal(ValueError):
    pass


def orthogonality_residual(o: np.ndarray) -> np.ndarray:
    """max-norm of O^T O - I, batched over leading axes."""
    o = np.asarray(o, dtype=float)
    gram = np.swapaxes(o, -1, -2) @ o
    return np.abs(gram - np.eye(3)).max(axis=(-2, -1))


def check_orthogonal(o: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    """Return ``o`` unchanged, raising if it is not orthogonal within ``tol``.

    Never re-orthonormalises: drift in long products must surface.
    """
    o = np.asarray(o, dtype=float)
    if o.shape[-2:] != (3, 3):
        raise NotOrthogonal(f"expected (..., 3, 3), got {o.shape}")
    res = orthogonality_residual(o)
    if np.any(res > tol):
        raise NotOrthogonal(f"orthogonality residual {float(np.max(res)):.3e} > {tol:.1e}")
    det = np.linalg.det(o)
    if np.any(np.abs(np.abs(det) - 1.0) > tol):
        raise NotOrthogonal("determinant not in {-1, +1}")
    return o


@dataclass(frozen=True)
class Similarity:
    """Element (s, u) of the similarity group; acts on R^3 as x -> s u x."""

    scale: float
    rotation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        rot = check_orthogonal(np.array(self.rotation, dtype=float))
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def identity(cls) -> "Similarity":
        return cls(1.0, IDENTITY)

    def inverse(self) -> "Similarity":
        return Similarity(1.0 / self.scale, self.rotation.T)

    def __matmul__(self, other: "Similarity") -> "Similarity":
        return compose(self, other)

    def matrix(self) -> np.ndarray:
        return self.scale * self.rotation


def compose(a: Similarity, b: Similarity) -> Similarity:
    return Similarity(a.scale * b.scale, a.rotation @ b.rotation)


def planar_rotation(theta) -> np.ndarray:
    """Rotation by ``theta`` in the (e1, e2)-plane; fixes e3 exactly.

    Vectorised: an array of angles gives a stack of matrices.
    """
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (w, x, y, z) along the last axis to rotation matrices."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - z * w)
    out[..., 0, 2] = 2 * (x * z + y * w)
    out[..., 1, 0] = 2 * (x * y + z * w)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - x * w)
    out[..., 2, 0] = 2 * (x * z - y * w)
    out[..., 2, 1] = 2 * (y * z + x * w)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def haar_from_normals(g: np.ndarray) -> np.ndarray:
    """Haar rotations from 4 standard normals per draw (last axis)."""
    g = np.asarray(g, dtype=float)
    q = g / np.linalg.norm(g, axis=-1, keepdims=True)
    return quaternion_to_matrix(q)


def normals_from_uniforms(u: np.ndarray) -> np.ndarray:
    """Box-Muller on consecutive pairs of the last axis (even length)."""
    u1, u2 = u[..., 0::2], u[..., 1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    out = np.empty_like(u)
    out[..., 0::2] = rad * np.cos(ang)
    out[..., 1::2] = rad * np.sin(ang)
    return out


def haar_from_uniforms(u: np.ndarray) -> np.ndarray:
    """Haar rotations from 4 uniforms per draw."""
    return haar_from_normals(normals_from_uniforms(u))


def haar_rotation(rng: np.random.Generator, size=None) -> np.ndarray:
    shape = () if size is None else tuple(np.atleast_1d(size))
    return haar_from_normals(rng.standard_normal(shape + (4,)))


def _rodrigues_to(d: np.ndarray) -> np.ndarray:
    # proper rotation about e3 x d taking e3 to d; needs d[2] >= 0 for stability
    k1, k2, c = -d[1], d[0], d[2]
    kx = np.array([[0.0, 0.0, k2], [0.0, 0.0, -k1], [-k2, k1, 0.0]])
    return np.eye(3) + kx + (kx @ kx) / (1.0 + c)


_FLIP = np.diag([1.0, -1.0, -1.0])  # rotation by pi about e1


@dataclass(frozen=True)
class FourierPoint:
    """The Fourier argument r * o * e3."""

    r: float
    o: np.ndarray

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"r must be nonnegative, got {self.r}")
        o = check_orthogonal(np.array(self.o, dtype=float))
        o.setflags(write=False)
        object.__setattr__(self, "o", o)

    @property
    def xi(self) -> np.ndarray:
        return self.r * self.o[:, 2]

    def key(self) -> str:
        """Short stable hash of the frame, used in CSV output."""
        data = np.ascontiguousarray(self.o, dtype="<f8").tobytes()
        return hashlib.sha1(data).hexdigest()[:12]


def frame_from_direction(xi) -> FourierPoint:
    """Canonical (r, o) with r o e3 = xi.

    Deterministic and direction-only.  For xi[2] >= 0 the Rodrigues rotation
    about e3 x xi is used (identity at e3); otherwise the problem is reflected
    through a half-turn about e1 first so the formula stays well conditioned.
    Always returns a proper rotation.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (3,) or not np.all(np.isfinite(xi)):
        raise ValueError("xi must be a finite 3-vector")
    r = float(np.linalg.norm(xi))
    if r == 0.0:
        return FourierPoint(0.0, IDENTITY)
    d = xi / r
    if d[2] >= 0:
        o = _rodrigues_to(d)
    else:
        o = _FLIP @ _rodrigues_to(_FLIP @ d)
    return FourierPoint(r, o)


def default_frames(seed: int = 20260101, n_haar: int = 3) -> list[np.ndarray]:
    """Identity plus ``n_haar`` fixed Haar draws."""
    rng = np.random.default_rng(seed)
    return [IDENTITY.copy()] + list(haar_rotation(rng, n_haar))


DEFAULT_RADII = (0.25, 0.5, 1.0, 2.0, 4.0)


def default_grid(radii=DEFAULT_RADII, frames=None) -> list[FourierPoint]:
    frames = default_frames() if frames is None else frames
    return [FourierPoint(float(r), o) for o in frames for r in radii]
