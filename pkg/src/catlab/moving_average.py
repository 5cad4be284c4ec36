"""Two-sided matrix moving averages and their windowed partial sums.

A coefficient family assigns a d x d matrix to every integer lag.  Three
families are supported: an explicit finite map, a geometric envelope
``ratio**|i| * base``, and a polynomial envelope ``(1 + |i|)**(-s) * base``.
A model couples a family with a noise model and an explicit truncation policy:
lags beyond ``K`` are dropped, where ``K`` is the smallest lag making the
discarded norm mass at most ``truncation_rel_err`` times the total norm mass.

Window sums ``S_j = X_j + ... + X_{j+n-1}`` are computed once at the leftmost
window and then rolled: ``S_{j+1} = S_j + (X_{n+j} - X_j)``.  The path object
retains the driving noise so downstream cluster statistics never re-simulate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import zeta

from .errors import (AllocationBudgetExceeded, NotAbsolutelySummable,
                     ScanRangeTooShort, SingularAggregate, WindowTooShort)
from .tail_noise import NoiseModel, sample_noise_batch

DEFAULT_MAX_ENTRIES = 1 << 26          # noise-storage cap, in float64 entries


def operator_norm(m) -> float:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return float(np.linalg.svd(m, compute_uv=False)[0])


@dataclass(frozen=True, eq=False)
class CoefficientFamily:
    """Matrix coefficients indexed by integer lag."""

    kind: str                              # finite | geometric | polynomial
    dimension: int
    base: np.ndarray | None = None         # geometric / polynomial envelope
    rho: float | None = None               # geometric ratio in (0, 1)
    s: float | None = None                 # polynomial decay exponent
    lags: dict | None = None               # finite: {lag: (d, d) array}

    @staticmethod
    def finite(lags: dict, dimension: int | None = None) -> "CoefficientFamily":
        if not lags:
            raise ValueError("finite family needs at least one lag")
        cleaned = {}
        for lag, mat in lags.items():
            mat = np.atleast_2d(np.asarray(mat, dtype=float))
            cleaned[int(lag)] = mat
        d = dimension or next(iter(cleaned.values())).shape[0]
        for mat in cleaned.values():
            if mat.shape != (d, d):
                raise ValueError("all lag matrices must be square of equal size")
        return CoefficientFamily(kind="finite", dimension=d, lags=cleaned)

    @staticmethod
    def geometric(base, rho: float) -> "CoefficientFamily":
        base = np.atleast_2d(np.asarray(base, dtype=float))
        if not 0.0 < rho < 1.0:
            raise ValueError("geometric ratio must lie in (0, 1)")
        return CoefficientFamily(kind="geometric", dimension=base.shape[0],
                                 base=base, rho=float(rho))

    @staticmethod
    def polynomial(base, s: float) -> "CoefficientFamily":
        base = np.atleast_2d(np.asarray(base, dtype=float))
        return CoefficientFamily(kind="polynomial", dimension=base.shape[0],
                                 base=base, s=float(s))

    def matrix(self, lag: int) -> np.ndarray:
        """A_lag as a (d, d) array (zero outside a finite family's support)."""
        if self.kind == "finite":
            m = self.lags.get(int(lag))
            return np.zeros((self.dimension, self.dimension)) if m is None else m
        if self.kind == "geometric":
            return self.rho ** abs(lag) * self.base
        return (1.0 + abs(lag)) ** (-self.s) * self.base

    def norm_sum(self) -> float:
        """Total norm mass: sum over all lags of the operator norm of A_lag."""
        if self.kind == "finite":
            return float(sum(operator_norm(m) for m in self.lags.values()))
        if self.kind == "geometric":
            return operator_norm(self.base) * (1.0 + self.rho) / (1.0 - self.rho)
        if self.s <= 1.0:
            raise NotAbsolutelySummable(
                f"polynomial decay s = {self.s} gives a divergent norm sum")
        return operator_norm(self.base) * (2.0 * float(zeta(self.s, 1)) - 1.0)

    def aggregate(self) -> np.ndarray:
        """Sum of all coefficient matrices."""
        if self.kind == "finite":
            out = np.zeros((self.dimension, self.dimension))
            for m in self.lags.values():
                out = out + m
            return out
        if self.kind == "geometric":
            return (1.0 + self.rho) / (1.0 - self.rho) * self.base
        if self.s <= 1.0:
            raise NotAbsolutelySummable(
                f"polynomial decay s = {self.s} gives a divergent coefficient sum")
        return (2.0 * float(zeta(self.s, 1)) - 1.0) * self.base

    def norm_tail(self, trunc: int) -> float:
        """Norm mass beyond lag `trunc`: sum over |i| > trunc of |A_i|."""
        if self.kind == "finite":
            return float(sum(operator_norm(m) for lag, m in self.lags.items()
                             if abs(lag) > trunc))
        if self.kind == "geometric":
            return operator_norm(self.base) * 2.0 * self.rho ** (trunc + 1) / (1.0 - self.rho)
        if self.s <= 1.0:
            raise NotAbsolutelySummable(
                f"polynomial decay s = {self.s} gives a divergent norm sum")
        return operator_norm(self.base) * 2.0 * float(zeta(self.s, trunc + 2))

    def truncation_lag(self, rel_err: float) -> int:
        """Smallest K with norm_tail(K) <= rel_err * norm_sum()."""
        target = rel_err * self.norm_sum()
        if self.kind == "finite":
            return max(abs(lag) for lag in self.lags)
        if self.norm_tail(0) <= target:
            return 0
        if self.kind == "geometric":
            b = operator_norm(self.base)
            k = int(np.ceil(np.log(target * (1.0 - self.rho) / (2.0 * b))
                            / np.log(self.rho))) - 1
            k = max(k, 0)
            while self.norm_tail(k) > target:
                k += 1
            return k
        # polynomial: integral bound gives a sufficient K, then bisect down
        b = operator_norm(self.base)
        hi = int(np.ceil(np.exp(np.log(2.0 * b / ((self.s - 1.0) * target))
                                / (self.s - 1.0)))) + 1
        lo = 0
        while lo < hi:
            mid = (lo + hi) // 2
            if self.norm_tail(mid) <= target:
                hi = mid
            else:
                lo = mid + 1
        return lo

    def to_config_dict(self) -> dict:
        if self.kind == "finite":
            return {"kind": "finite",
                    "lags": [[lag, m.tolist()] for lag, m in sorted(self.lags.items())]}
        out = {"kind": self.kind, "B": self.base.tolist()}
        if self.kind == "geometric":
            out["rho"] = self.rho
        else:
            out["s"] = self.s
        return out

    @staticmethod
    def from_config_dict(d: dict) -> "CoefficientFamily":
        kind = d.get("kind")
        if kind == "finite":
            return CoefficientFamily.finite({int(lag): mat for lag, mat in d["lags"]})
        base = _parse_matrix(d["B"])
        if kind == "geometric":
            return CoefficientFamily.geometric(base, float(d["rho"]))
        if kind == "polynomial":
            return CoefficientFamily.polynomial(base, float(d["s"]))
        raise ValueError(f"unknown coefficient kind: {kind!r}")


def _parse_matrix(value) -> np.ndarray:
    """Accept a scalar, a flat row-major list, or a nested list of rows."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        d = int(round(arr.size ** 0.5))
        if d * d != arr.size:
            raise ValueError("flat matrix length is not a perfect square")
        return arr.reshape(d, d)
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Coefficient family + noise model + explicit truncation policy."""

    coeffs: CoefficientFamily
    noise: NoiseModel
    truncation_rel_err: float = 1e-8

    def __post_init__(self):
        if self.coeffs.dimension != self.noise.dimension:
            raise ValueError("coefficient and noise dimensions differ")
        if self.truncation_rel_err <= 0:
            raise ValueError("truncation_rel_err must be positive")

    @property
    def dimension(self) -> int:
        return self.coeffs.dimension

    @cached_property
    def trunc_lag(self) -> int:
        return self.coeffs.truncation_lag(self.truncation_rel_err)

    @cached_property
    def aggregate(self) -> np.ndarray:
        return self.coeffs.aggregate()

    def to_config_dict(self) -> dict:
        return {"coeffs": self.coeffs.to_config_dict(),
                "noise": self.noise.to_config_dict(),
                "truncation_rel_err": self.truncation_rel_err}

    @staticmethod
    def from_config_dict(d: dict) -> "ModelSpec":
        return ModelSpec(coeffs=CoefficientFamily.from_config_dict(d["coeffs"]),
                         noise=NoiseModel.from_config_dict(d["noise"]),
                         truncation_rel_err=float(d.get("truncation_rel_err", 1e-8)))


@dataclass(frozen=True)
class ModelReport:
    """Certified short-memory conditions for a model."""

    a_abs: float
    aggregate: np.ndarray
    min_singular_value: float
    trunc_lag: int


def validate_model(spec: ModelSpec) -> ModelReport:
    """Certify norm summability and aggregate invertibility, or raise."""
    a_abs = spec.coeffs.norm_sum()          # NotAbsolutelySummable when divergent
    agg = spec.coeffs.aggregate()
    svals = np.linalg.svd(np.atleast_2d(agg), compute_uv=False)
    if svals[0] == 0.0 or svals[-1] < 1e-10 * svals[0]:
        raise SingularAggregate(
            f"aggregate matrix is singular (smallest singular value {svals[-1]:.3e})")
    return ModelReport(a_abs=a_abs, aggregate=agg,
                       min_singular_value=float(svals[-1]),
                       trunc_lag=spec.trunc_lag)


# -- window weights -----------------------------------------------------------

def window_weight(spec: ModelSpec, i: int, n: int) -> np.ndarray:
    """Matrix weight of noise index `i` inside the window sum S_0 of length `n`.

    Equals the partial coefficient sum over lags ``k`` with ``-i <= k <= n-1-i``
    restricted to the truncated support; identically zero for ``i < -K`` and
    ``i >= n + K``.
    """
    if n < 1:
        raise ValueError("window length must be at least 1")
    K = spec.trunc_lag
    lo, hi = max(-i, -K), min(n - 1 - i, K)
    out = np.zeros((spec.dimension, spec.dimension))
    for k in range(lo, hi + 1):
        out = out + spec.coeffs.matrix(k)
    return out


def window_weight_stack(spec: ModelSpec, n: int,
                        max_entries: int = DEFAULT_MAX_ENTRIES) -> np.ndarray:
    """All window weights for i in [-K, n-1+K], shape (n + 2K, d, d)."""
    K = spec.trunc_lag
    d = spec.dimension
    if (n + 2 * K + 1) * d * d > max_entries:
        raise AllocationBudgetExceeded(
            f"window weight stack needs {(n + 2 * K) * d * d} entries")
    mats = np.stack([spec.coeffs.matrix(k) for k in range(-K, K + 1)])
    prefix = np.concatenate([np.zeros((1, d, d)), np.cumsum(mats, axis=0)])
    i = np.arange(-K, n + K)
    lo = np.maximum(-i, -K)
    hi = np.minimum(n - 1 - i, K)
    out = prefix[hi + K + 1] - prefix[lo + K]
    out[hi < lo] = 0.0
    return out


# -- window paths -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WindowPath:
    """Window sums over a contiguous range of starts, with the driving noise."""

    n: int
    j_min: int
    j_max: int
    sums: np.ndarray          # (j_max - j_min + 1, d); sums[j - j_min] = S_j
    xs: np.ndarray            # (j_max - j_min + n, d); xs[k - j_min] = X_k
    noise: np.ndarray         # (..., d); noise[i - noise_start] = Z_i
    noise_start: int
    trunc_lag: int

    def window_sum(self, j: int) -> np.ndarray:
        if not self.j_min <= j <= self.j_max:
            raise ScanRangeTooShort(
                f"window start {j} outside computed range [{self.j_min}, {self.j_max}]")
        return self.sums[j - self.j_min]

    def noise_value(self, i: int) -> np.ndarray:
        end = self.noise_start + self.noise.shape[0] - 1
        if not self.noise_start <= i <= end:
            raise WindowTooShort(f"noise index {i} outside [{self.noise_start}, {end}]")
        return self.noise[i - self.noise_start]

    def noise_block(self, i_lo: int, i_hi: int) -> np.ndarray:
        """Z_i for i in [i_lo, i_hi], inclusive."""
        end = self.noise_start + self.noise.shape[0] - 1
        if i_lo < self.noise_start or i_hi > end:
            raise WindowTooShort(
                f"noise range [{i_lo}, {i_hi}] outside [{self.noise_start}, {end}]")
        a = i_lo - self.noise_start
        return self.noise[a:a + (i_hi - i_lo + 1)]


def assemble_window_path(spec: ModelSpec, n: int, j_min: int, j_max: int,
                         noise: np.ndarray, noise_start: int) -> WindowPath:
    """Build the path from externally supplied noise (debug / planted draws).

    `noise` must cover exactly the indices [j_min - K, j_max + n - 1 + K].
    """
    K = spec.trunc_lag
    d = spec.dimension
    noise = np.asarray(noise, dtype=float).reshape(-1, d)
    need = (j_max + n - 1 + K) - (j_min - K) + 1
    if noise_start != j_min - K or noise.shape[0] != need:
        raise ValueError(f"noise must cover [{j_min - K}, {j_max + n - 1 + K}] exactly")
    xs = _convolve_coeffs(spec, noise)           # X_k for k in [j_min, j_max + n - 1]
    sums = _rolling_sums(xs, n, j_max - j_min + 1)
    return WindowPath(n=n, j_min=j_min, j_max=j_max, sums=sums, xs=xs,
                      noise=noise, noise_start=noise_start, trunc_lag=K)


def simulate_window_sums(spec: ModelSpec, n: int, j_min: int, j_max: int, rng,
                         max_entries: int = DEFAULT_MAX_ENTRIES) -> WindowPath:
    """Simulate fresh noise and compute all window sums S_j, j in [j_min, j_max]."""
    if n < 1:
        raise ValueError("window length must be at least 1")
    if not j_min <= 0 <= j_max:
        raise ValueError("window-start range must contain 0")
    K = spec.trunc_lag
    length = (j_max + n - 1 + K) - (j_min - K) + 1
    if length * spec.dimension > max_entries:
        raise AllocationBudgetExceeded(
            f"noise window of {length} x {spec.dimension} entries exceeds the "
            f"cap of {max_entries}")
    noise = sample_noise_batch(spec.noise, rng, (length,))
    return assemble_window_path(spec, n, j_min, j_max, noise, j_min - K)


def _convolve_coeffs(spec: ModelSpec, noise: np.ndarray) -> np.ndarray:
    """X_k = sum_i A_i Z_{k-i} over the truncated support, for every k whose
    full support lies inside the noise block."""
    K = spec.trunc_lag
    d = spec.dimension
    mats = np.stack([spec.coeffs.matrix(i) for i in range(-K, K + 1)])
    out_len = noise.shape[0] - 2 * K
    xs = np.zeros((out_len, d))
    # correlate(z, v)[q] = sum_j z[q+j] v[j] with v[j] = A_{K-j}
    for a in range(d):
        for c in range(d):
            xs[:, a] += np.correlate(noise[:, c], mats[::-1, a, c], mode="valid")
    return xs


def _rolling_sums(xs: np.ndarray, n: int, m: int) -> np.ndarray:
    """S at the leftmost window by one full sum; then S_{j+1} = S_j + (X_{n+j} - X_j)."""
    d = xs.shape[1]
    sums = np.empty((m, d))
    sums[0] = xs[:n].sum(axis=0)
    if d == 1:
        flat = xs[:, 0].tolist()
        s = float(sums[0, 0])
        out = sums[:, 0]
        for j in range(m - 1):
            s = s + (flat[n + j] - flat[j])
            out[j + 1] = s
    else:
        s = sums[0].copy()
        for j in range(m - 1):
            s = s + (xs[n + j] - xs[j])
            sums[j + 1] = s
    return sums
