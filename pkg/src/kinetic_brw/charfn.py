"""Characteristic functions evaluated at Fourier arguments.

A ``CharFn`` maps arrays of 3-vectors xi (last axis) to complex values.
Radial ones also carry ``log_radial(r)``, which lets products over many
tree nodes be accumulated as sums without underflow and without ever
materialising the rotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .group import FourierPoint


@dataclass(frozen=True)
class CharFn:
    func: Callable[[np.ndarray], np.ndarray]
    description: str
    log_radial: Callable[[np.ndarray], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def radial(self) -> bool:
        return self.log_radial is not None

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.radial:
            return np.exp(self.log_radial(np.linalg.norm(xi, axis=-1))).astype(complex)
        return np.asarray(self.func(xi), dtype=complex)

    def eval(self, r: float, o: np.ndarray) -> complex:
        return complex(self(r * np.asarray(o)[:, 2]))

    def at(self, point: FourierPoint) -> complex:
        return complex(self(point.xi))

    def log(self, xi) -> np.ndarray:
        """Principal log of the value (``-inf`` where it vanishes)."""
        xi = np.asarray(xi, dtype=float)
        if self.radial:
            return self.log_radial(np.linalg.norm(xi, axis=-1)).astype(complex)
        return _safe_log(self.func(xi))

    def log_at_radius(self, r) -> np.ndarray:
        if not self.radial:
            raise ValueError(f"{self.description} is not radial")
        return self.log_radial(np.asarray(r, dtype=float)).astype(complex)


def _safe_log(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    out = np.full(v.shape, -np.inf + 0j)
    nz = v != 0
    out[nz] = np.log(v[nz])
    return out


def constant_one() -> CharFn:
    return CharFn(lambda xi: np.ones(np.shape(xi)[:-1], dtype=complex), "constant_one",
                  lambda r: np.zeros(np.shape(r)), {"kind": "constant_one"})


def gaussian(variance: float = 1.0) -> CharFn:
    """Centred isotropic normal with per-coordinate ``variance``."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    v = float(variance)
    return CharFn(None, f"gaussian(variance={v:g})", lambda r: -0.5 * v * np.square(r),
                  {"kind": "gaussian", "variance": v})


def stable(alpha: float, sigma: float = 1.0) -> CharFn:
    """exp(-sigma |xi|^alpha): isotropic symmetric alpha-stable."""
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    a, s = float(alpha), float(sigma)
    return CharFn(None, f"stable(alpha={a:g}, sigma={s:g})", lambda r: -s * np.power(r, a),
                  {"kind": "stable", "alpha": a, "sigma": s})


def radial_mixture(weights: np.ndarray, log_kernel: Callable, description: str, meta=None) -> CharFn:
    """mean_k exp(log_kernel(r, w_k)): a finite mixture, evaluated in log space."""
    w = np.asarray(weights, dtype=float)
    log_n = np.log(w.size)

    def log_radial(r):
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        out = np.empty(flat.size)
        step = max(1, 2**21 // w.size)
        for i in range(0, flat.size, step):
            lk = log_kernel(flat[i : i + step, None], w[None, :])
            mean = np.exp(lk).mean(axis=1)
            with np.errstate(divide="ignore"):
                part = np.log(mean)
            low = mean < 1e-280
            if np.any(low):
                part[low] = logsumexp(lk[low], axis=1) - log_n
            out[i : i + step] = part
        return out.reshape(r.shape)

    return CharFn(None, description, log_radial, dict(meta or {}))


def from_config(block: dict) -> CharFn:
    kind = block.get("kind", block.get("name"))
    if kind == "constant_one":
        return constant_one()
    if kind == "gaussian":
        return gaussian(float(block.get("variance", block.get("scale", 1.0))))
    if kind == "stable":
        return stable(float(block["alpha"]), float(block.get("sigma", 1.0)))
    raise ValueError(f"unknown initial datum {kind!r}")
