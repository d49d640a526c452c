"""Monte-Carlo estimates, mergeable moments and two-sample tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps
from scipy.spatial.distance import pdist, squareform


class NonFinite(ArithmeticError):
    """A Monte-Carlo draw produced inf or nan."""


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte-Carlo mean with its standard error.

    For complex means ``std_error`` is the SE of the real part and
    ``std_error_imag`` that of the imaginary part.
    """

    mean: complex | float
    std_error: float
    n_samples: int
    std_error_imag: float = 0.0

    def __post_init__(self):
        if self.std_error < 0 or self.std_error_imag < 0:
            raise ValueError("standard errors must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    @property
    def se(self) -> float:
        """Combined scale: hypot of the componentwise errors."""
        return float(np.hypot(self.std_error, self.std_error_imag))

    @classmethod
    def from_samples(cls, x) -> "EstimateWithError":
        x = np.asarray(x)
        n = x.size
        if n < 1:
            raise ValueError("no samples")
        if not np.all(np.isfinite(x)):
            raise NonFinite("non-finite sample")
        mean = x.mean()
        if n == 1:
            se_re = se_im = 0.0
        elif np.iscomplexobj(x):
            se_re = float(x.real.std(ddof=1) / np.sqrt(n))
            se_im = float(x.imag.std(ddof=1) / np.sqrt(n))
        else:
            se_re, se_im = float(x.std(ddof=1) / np.sqrt(n)), 0.0
        if np.iscomplexobj(x):
            return cls(complex(mean), se_re, n, se_im)
        return cls(float(mean), se_re, n)

    @classmethod
    def exact(cls, value, n_samples: int = 1) -> "EstimateWithError":
        return cls(value, 0.0, n_samples, 0.0)

    def within(self, target, k: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.mean - target) <= k * self.se + atol

    def __str__(self):
        return f"{self.mean:.6g} ± {self.se:.2g} (n={self.n_samples})"


def agree(a: EstimateWithError, b: EstimateWithError, k: float = 3.0, atol: float = 0.0) -> bool:
    """|a - b| within k combined standard errors (independent estimates)."""
    return abs(a.mean - b.mean) <= k * float(np.hypot(a.se, b.se)) + atol


@dataclass
class Moments:
    """Streaming count/mean/M2 per coordinate, merged with Chan's formula.

    Merging blocks in a fixed order gives bit-identical results no matter
    which worker produced each block.
    """

    n: int
    mean: np.ndarray
    m2_re: np.ndarray
    m2_im: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        """Moments over axis 0 of ``x``."""
        x = np.asarray(x)
        n = x.shape[0]
        mean = x.mean(axis=0)
        d = x - mean
        return cls(n, mean, (d.real**2).sum(axis=0), (d.imag**2).sum(axis=0) if np.iscomplexobj(x) else np.zeros_like(mean, dtype=float))

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        w = self.n * other.n / n
        m2_re = self.m2_re + other.m2_re + delta.real**2 * w
        m2_im = self.m2_im + other.m2_im + (delta.imag**2 * w if np.iscomplexobj(delta) else 0.0)
        return Moments(n, mean, m2_re, m2_im)

    def estimates(self) -> list[EstimateWithError]:
        mean = np.atleast_1d(self.mean)
        if self.n > 1:
            se_re = np.sqrt(np.atleast_1d(self.m2_re) / (self.n - 1) / self.n)
            se_im = np.sqrt(np.atleast_1d(self.m2_im) / (self.n - 1) / self.n)
        else:
            se_re = se_im = np.zeros(mean.shape)
        out = []
        for m, a, b in zip(mean, se_re, se_im):
            if np.iscomplexobj(mean):
                out.append(EstimateWithError(complex(m), float(a), self.n, float(b)))
            else:
                out.append(EstimateWithError(float(m), float(a), self.n))
        return out


def merge_all(parts) -> Moments:
    parts = list(parts)
    acc = parts[0]
    for p in parts[1:]:
        acc = acc.merge(p)
    return acc


@dataclass(frozen=True)
class TwoSampleReport:
    statistic: float
    p_value: float
    n_x: int
    n_y: int
    method: str


def energy_statistic(x: np.ndarray, y: np.ndarray) -> float:
    """V-statistic energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'|."""
    z = np.vstack([x, y])
    d = squareform(pdist(z))
    n = len(x)
    lab = np.zeros(len(z), dtype=bool)
    lab[:n] = True
    return float(_energy_from_labels(d, lab[:, None].astype(float))[0])


def _energy_from_labels(d: np.ndarray, ind: np.ndarray) -> np.ndarray:
    # ind: (N, B) 0/1 indicator of sample x for B labellings
    nx = ind.sum(axis=0)
    ny = ind.shape[0] - nx
    jnd = 1.0 - ind
    dx = d @ ind
    sxx = (ind * dx).sum(axis=0)
    sxy = (jnd * dx).sum(axis=0)
    syy = (jnd * (d @ jnd)).sum(axis=0)
    return 2.0 * sxy / (nx * ny) - sxx / nx**2 - syy / ny**2


def energy_test(x, y, n_perm: int = 200, rng: np.random.Generator | None = None) -> TwoSampleReport:
    """Two-sample energy-distance permutation test (any dimension)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x, y = x[:, None], y[:, None]
    rng = np.random.default_rng(0) if rng is None else rng
    z = np.vstack([x, y])
    d = squareform(pdist(z))
    n = len(z)
    base = np.zeros(n)
    base[: len(x)] = 1.0
    observed = _energy_from_labels(d, base[:, None])[0]
    perms = np.stack([rng.permutation(base) for _ in range(n_perm)], axis=1)
    null = np.concatenate([_energy_from_labels(d, perms[:, i : i + 50]) for i in range(0, n_perm, 50)])
    p = (1.0 + np.sum(null >= observed - 1e-12 * max(abs(observed), 1.0))) / (n_perm + 1.0)
    return TwoSampleReport(float(observed), float(p), len(x), len(y), "energy-permutation")


def count_homogeneity(a, b, min_expected: float = 5.0) -> TwoSampleReport:
    """Chi-square test that two samples of counts share one law.

    Sparse upper bins are pooled until every expected cell count reaches
    ``min_expected``.
    """
    a = np.asarray(a, dtype=int)
    b = np.asarray(b, dtype=int)
    top = int(max(a.max(), b.max()))
    ca = np.bincount(a, minlength=top + 1).astype(float)
    cb = np.bincount(b, minlength=top + 1).astype(float)
    table = _pool_columns(np.vstack([ca, cb]), min_expected)
    if table.shape[1] < 2:
        return TwoSampleReport(0.0, 1.0, a.size, b.size, "chi2-homogeneity")
    res = sps.chi2_contingency(table, correction=False)
    return TwoSampleReport(float(res.statistic), float(res.pvalue), a.size, b.size, "chi2-homogeneity")


def _pool_columns(table: np.ndarray, min_expected: float) -> np.ndarray:
    total = table.sum()
    row = table.sum(axis=1, keepdims=True) / total
    cols = []
    acc = np.zeros(table.shape[0])
    for j in range(table.shape[1]):
        acc = acc + table[:, j]
        if (row[:, 0] * acc.sum()).min() >= min_expected:
            cols.append(acc)
            acc = np.zeros(table.shape[0])
    if acc.sum() > 0:
        if cols:
            cols[-1] = cols[-1] + acc
        else:
            cols.append(acc)
    return np.array(cols).T


def chisquare_gof(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> TwoSampleReport:
    """Goodness of fit of integer ``counts`` (values 0..K) to ``probs``.

    ``probs[k]`` is the model probability of value ``k``; mass beyond the
    last entry is added to a final tail cell.
    """
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    probs = np.asarray(probs, dtype=float)
    k = len(probs)
    obs = np.bincount(np.minimum(counts, k), minlength=k + 1).astype(float)
    exp = np.append(probs, max(0.0, 1.0 - probs.sum())) * n
    # pool from the right until every expected count is large enough
    o_cells, e_cells = [], []
    acc_o = acc_e = 0.0
    for oi, ei in zip(obs[::-1], exp[::-1]):
        acc_o += oi
        acc_e += ei
        if acc_e >= min_expected:
            o_cells.append(acc_o)
            e_cells.append(acc_e)
            acc_o = acc_e = 0.0
    if not o_cells:
        o_cells, e_cells = [acc_o], [acc_e]
    elif acc_e > 0 or acc_o > 0:
        o_cells[-1] += acc_o
        e_cells[-1] += acc_e
    o_cells = np.array(o_cells[::-1])
    e_cells = np.array(e_cells[::-1])
    if o_cells.size < 2:
        return TwoSampleReport(0.0, 1.0, n, n, "chi2-gof")
    e_cells *= o_cells.sum() / e_cells.sum()
    res = sps.chisquare(o_cells, e_cells)
    return TwoSampleReport(float(res.statistic), float(res.pvalue), n, n, "chi2-gof")


def ks_two_sample(x, y) -> TwoSampleReport:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(np.sort(x), np.sort(y)):
        return TwoSampleReport(0.0, 1.0, x.size, y.size, "ks")
    res = sps.ks_2samp(x, y)
    return TwoSampleReport(float(res.statistic), float(res.pvalue), x.size, y.size, "ks")
