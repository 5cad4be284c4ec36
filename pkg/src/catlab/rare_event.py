"""Conditioning engines and estimators for window-sum rare events.

The rare event of interest is ``S_0 in n * gamma_set`` where ``S_0`` is the
window sum of length ``n`` started at 0.  Two samplers target the conditional
law given that event:

* exact rejection: simulate, keep qualifying windows, count attempts;
* planted jump: place one noise vector drawn from its exact law conditioned on
  single-handedly causing the event, at a uniform window position -- an
  approximation that becomes exact in the large-window limit and is always
  membership-checked, never silently accepted.

The estimator suite covers five probabilities that the single-big-jump
mechanism makes asymptotically interchangeable, the symmetric difference
between the rare event and "some single noise vector is large enough", and
the relative weight of two-big-jump configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AcceptanceTooRare, NoAtomReachesFailureSet
from .failure_sets import FailureSet
from .moving_average import (ModelSpec, WindowPath, assemble_window_path,
                             window_weight_stack)
from .tail_noise import (pareto_section_mass, sample_noise_batch,
                         sample_pareto_in_sections, noise_norm_tail_prob)

REJECTION_BATCH = 64          # attempts simulated per vectorized block
CHUNK_TRIALS = 4096           # trials per estimator chunk


@dataclass(frozen=True, eq=False)
class ConditionedSample:
    """One replicate carrying the conditioning event on window 0."""

    spec: ModelSpec
    path: WindowPath
    n: int
    gamma: FailureSet
    attempts: int
    method: str                        # rejection | planted
    membership_ok: bool = True
    planted_index: int | None = None


@dataclass(frozen=True)
class IndexSet:
    """Descriptor for the index family inside the window: all of it, or a
    leading block of a fixed fraction."""

    kind: str = "full"                 # full | fraction
    beta: float = 1.0

    @staticmethod
    def full() -> "IndexSet":
        return IndexSet("full", 1.0)

    @staticmethod
    def fraction(beta: float) -> "IndexSet":
        if not 0.0 < beta <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        return IndexSet("fraction", beta)

    def size(self, n: int) -> int:
        if self.kind == "full":
            return n
        return max(1, int(math.floor(self.beta * n)))

    def describe(self) -> str:
        return "full" if self.kind == "full" else f"fraction:{self.beta:g}"

    @staticmethod
    def parse(text: str) -> "IndexSet":
        if text == "full":
            return IndexSet.full()
        if text.startswith("fraction:"):
            return IndexSet.fraction(float(text.split(":", 1)[1]))
        raise ValueError(f"unknown index-set descriptor {text!r}")


class WindowKit:
    """Precomputed per-(model, n) arrays shared by the samplers and estimators."""

    def __init__(self, spec: ModelSpec, n: int):
        self.spec = spec
        self.n = n
        self.K = spec.trunc_lag
        self.d = spec.dimension
        self.weights = window_weight_stack(spec, n)      # (n + 2K, d, d)

    def window0_sums(self, noise: np.ndarray) -> np.ndarray:
        """S_0 for a batch of noise blocks covering [-K, n-1+K]: (B, n+2K, d) -> (B, d)."""
        if self.d == 1:
            return noise[:, :, 0] @ self.weights[:, 0, 0][:, np.newaxis]
        return np.einsum("idc,bic->bd", self.weights, noise)


# -- single-vector event calculus ---------------------------------------------

def single_vector_sections(spec: ModelSpec, target: FailureSet, n: int):
    """Per-atom radial sections of {r : aggregate @ (r theta - offset) in n*target}."""
    agg = spec.aggregate
    model = spec.noise
    shift = -(agg @ model.mean_offset) / n
    out = []
    for direction, weight in model.spectral.atoms:
        v = (agg @ direction) / n
        out.append((weight, target.ray_sections(v, base=shift)))
    return out


def single_vector_event_prob(spec: ModelSpec, target: FailureSet, n: int) -> float:
    """Exact P(aggregate @ Z in n * target) for one noise vector Z."""
    model = spec.noise
    total = 0.0
    for weight, secs in single_vector_sections(spec, target, n):
        total += (weight / model.spectral.total_weight) * pareto_section_mass(
            model.alpha, model.scale, secs)
    return total


# -- conditioning -------------------------------------------------------------

def condition_by_rejection(spec: ModelSpec, gamma: FailureSet, n: int,
                           scan_range: tuple[int, int] | None = None,
                           max_attempts: int = 100_000, rng=None,
                           kit: WindowKit | None = None,
                           min_acceptance: float = 1e-5) -> ConditionedSample:
    """Exact conditional sampling of the window path given ``S_0 in n*gamma``.

    Only the noise that the event depends on is simulated per attempt; on
    acceptance the noise window is extended to cover `scan_range` and all
    window sums are computed and stored.
    """
    if rng is None:
        raise ValueError("an rng stream is required")
    if scan_range is None:
        scan_range = (-2 * n, 2 * n)
    j_min, j_max = scan_range
    if not j_min <= 0 <= j_max:
        raise ValueError("scan range must contain window start 0")
    kit = kit or WindowKit(spec, n)

    estimate = n * single_vector_event_prob(spec, gamma, n)
    if estimate < min_acceptance:
        raise AcceptanceTooRare(
            f"estimated acceptance {estimate:.3g} below floor {min_acceptance:.3g}",
            acceptance_estimate=estimate, attempts=0)

    K, d = kit.K, kit.d
    attempts = 0
    while attempts < max_attempts:
        block = min(REJECTION_BATCH, max_attempts - attempts)
        noise = sample_noise_batch(spec.noise, rng, (block, n + 2 * K))
        sums = kit.window0_sums(noise)
        member = np.asarray(gamma.contains(sums / n)).reshape(block)
        hit = int(np.argmax(member)) if member.any() else -1
        if hit < 0:
            attempts += block
            continue
        attempts += hit + 1
        core = noise[hit]                                   # covers [-K, n-1+K]
        left = sample_noise_batch(spec.noise, rng, (-j_min,)) if j_min < 0 \
            else np.empty((0, d))
        right = sample_noise_batch(spec.noise, rng, (j_max,)) if j_max > 0 \
            else np.empty((0, d))
        full = np.concatenate([left, core, right])
        path = assemble_window_path(spec, n, j_min, j_max, full, j_min - K)
        if not gamma.contains(path.window_sum(0) / n):
            # convolution round-off pushed a boundary case out; treat as a miss
            continue
        return ConditionedSample(spec=spec, path=path, n=n, gamma=gamma,
                                 attempts=attempts, method="rejection")
    raise AcceptanceTooRare(
        f"no acceptance in {max_attempts} attempts "
        f"(estimated acceptance {estimate:.3g})",
        acceptance_estimate=estimate, attempts=max_attempts)


def plant_single_jump(spec: ModelSpec, gamma: FailureSet, n: int,
                      scan_range: tuple[int, int] | None = None, rng=None,
                      kit: WindowKit | None = None) -> ConditionedSample:
    """Approximate conditional sampler: one exactly-conditioned noise vector at
    a uniform window position, everything else unconditional.

    The returned sample's ``membership_ok`` records whether the assembled path
    actually realizes the event; the failure fraction vanishes as ``n`` grows.
    """
    if rng is None:
        raise ValueError("an rng stream is required")
    if scan_range is None:
        scan_range = (-2 * n, 2 * n)
    j_min, j_max = scan_range
    if not j_min <= 0 <= j_max:
        raise ValueError("scan range must contain window start 0")
    kit = kit or WindowKit(spec, n)

    model = spec.noise
    per_atom = single_vector_sections(spec, gamma, n)
    masses = np.array([w * pareto_section_mass(model.alpha, model.scale, secs)
                       for w, secs in per_atom])
    if masses.sum() <= 0.0:
        raise NoAtomReachesFailureSet(
            "no spectral atom ray meets the target set at this window length")

    i_star = int(rng.integers(0, n))
    which = int(rng.choice(len(masses), p=masses / masses.sum())) \
        if len(masses) > 1 else 0
    radius = sample_pareto_in_sections(model.alpha, model.scale,
                                       per_atom[which][1], rng)
    direction = model.spectral.atoms[which][0]
    planted = radius * direction - model.mean_offset

    K = kit.K
    length = (j_max + n - 1 + K) - (j_min - K) + 1
    noise = sample_noise_batch(model, rng, (length,))
    noise[i_star - (j_min - K)] = planted
    path = assemble_window_path(spec, n, j_min, j_max, noise, j_min - K)
    ok = bool(gamma.contains(path.window_sum(0) / n))
    return ConditionedSample(spec=spec, path=path, n=n, gamma=gamma, attempts=1,
                             method="planted", membership_ok=ok,
                             planted_index=i_star)


# -- the five-quantity estimator suite ----------------------------------------

@dataclass(frozen=True)
class EquivalenceReport:
    """Estimates of the five interchangeable rare-event quantities.

    ``q2`` and ``q3`` are exact (no Monte Carlo); ``q1``, ``q4``, ``q5`` share
    one sample stream, so their empirical event nesting q5 <= q4 <= q3 holds
    replicate-by-replicate through ``q3_empirical`` (the same-stream estimate
    of the q3 event, reported alongside the exact value).
    """

    n: int
    index_set: str
    index_size: int
    M: float
    delta: float
    trials: int
    q1: tuple[float, float]
    q2: tuple[float, float]
    q3: tuple[float, float]
    q4: tuple[float, float]
    q5: tuple[float, float]
    q3_empirical: tuple[float, float]
    ratios: dict = field(default_factory=dict)     # "q2/q1" -> (value, std_error)


def equivalents_chunk_counts(kit: WindowKit, gamma: FailureSet, n: int,
                             index_size: int, M: float, delta: float,
                             trials: int, rng) -> np.ndarray:
    """Event counts (c1, c3, c4, c5, xor, trials) over one chunk of trials.

    ``xor`` counts the symmetric difference between the window event and the
    single-vector event over the full window (used by the theta = 0 ratio).
    """
    spec = kit.spec
    K, d = kit.K, kit.d
    mn = int(math.floor(M * n + 1e-9))
    lo = min(-K, -mn)
    hi = max(n - 1 + K, mn)
    length = hi - lo + 1
    agg = spec.aggregate
    c1 = c3 = c4 = c5 = cxor = 0
    done = 0
    while done < trials:
        b = min(CHUNK_TRIALS, trials - done)
        noise = sample_noise_batch(spec.noise, rng, (b, length))
        core = noise[:, -K - lo: -K - lo + n + 2 * K]
        s0 = kit.window0_sums(core)
        in_gamma = np.asarray(gamma.contains(s0 / n)).reshape(b)

        window = noise[:, -lo: -lo + n]                     # Z_0 .. Z_{n-1}
        hits = np.asarray(gamma.contains((window @ agg.T) / n)).reshape(b, n)
        hit_any = hits[:, :index_size].any(axis=1)

        norms = np.abs(noise[:, -mn - lo: mn - lo + 1, 0]) if d == 1 else \
            np.linalg.norm(noise[:, -mn - lo: mn - lo + 1], axis=2)
        big = norms > n * delta
        nbig = big.sum(axis=1)
        e5 = np.zeros(b, dtype=bool)
        none_big = nbig == 0
        e5[none_big] = hit_any[none_big]
        one_big = np.where(nbig == 1)[0]
        if one_big.size:
            pos = np.argmax(big[one_big], axis=1) - mn       # the lone big index
            in_idx = (pos >= 0) & (pos < index_size)
            sel = one_big[in_idx]
            e5[sel] = hits[sel, pos[in_idx]]

        full_any = hit_any if index_size == n else hits.any(axis=1)
        c1 += int(in_gamma.sum())
        c3 += int(hit_any.sum())
        c4 += int((in_gamma & hit_any).sum())
        c5 += int((in_gamma & e5).sum())
        cxor += int((in_gamma ^ full_any).sum())
        done += b
    return np.array([c1, c3, c4, c5, cxor, trials], dtype=np.int64)


def equivalents_report(spec: ModelSpec, gamma: FailureSet, n: int,
                       counts: np.ndarray, index_set: IndexSet,
                       M: float, delta: float) -> EquivalenceReport:
    """Assemble the report from merged chunk counts."""
    c1, c3e, c4, c5, _, trials = (int(x) for x in counts)
    size = index_set.size(n)
    frac = size / n
    p0 = single_vector_event_prob(spec, gamma, n)

    p1, p3e, p4, p5 = (c / trials for c in (c1, c3e, c4, c5))
    v1, v3e, v4, v5 = (p * (1 - p) / trials for p in (p1, p3e, p4, p5))

    q1 = (frac * p1, frac * math.sqrt(v1))
    q2 = (size * p0, 0.0)
    q3 = (1.0 - (1.0 - p0) ** size, 0.0)
    q4 = (p4, math.sqrt(v4))
    q5 = (p5, math.sqrt(v5))
    q3_emp = (p3e, math.sqrt(v3e))

    ratios = {}
    if p1 > 0:
        base = frac * p1
        for name, (val, _), cnum in (("q2/q1", q2, None), ("q3/q1", q3, None),
                                     ("q4/q1", q4, c4), ("q5/q1", q5, c5)):
            if cnum is None:
                ratio = val / base
                se = val * (frac * math.sqrt(v1)) / base ** 2
            else:
                pk = cnum / trials
                vk = pk * (1 - pk) / trials
                r = pk / p1
                cov = (pk - pk * p1) / trials          # nested events
                var = (vk - 2 * r * cov + r * r * v1) / (p1 * p1)
                ratio = r / frac
                se = math.sqrt(max(var, 0.0)) / frac
            ratios[name] = (ratio, se)
    return EquivalenceReport(n=n, index_set=index_set.describe(), index_size=size,
                             M=M, delta=delta, trials=trials,
                             q1=q1, q2=q2, q3=q3, q4=q4, q5=q5,
                             q3_empirical=q3_emp, ratios=ratios)


def estimate_equivalents(spec: ModelSpec, gamma: FailureSet, n: int,
                         index_set: IndexSet | None = None, M: float = 2.0,
                         delta: float | None = None, trials: int = 100_000,
                         rng=None) -> EquivalenceReport:
    """Single-stream estimate of the five quantities and their ratios."""
    if rng is None:
        raise ValueError("an rng stream is required")
    index_set = index_set or IndexSet.full()
    if delta is None:
        delta = 0.1 * gamma.delta0
    kit = WindowKit(spec, n)
    counts = equivalents_chunk_counts(kit, gamma, n, index_set.size(n),
                                      M, delta, trials, rng)
    return equivalents_report(spec, gamma, n, counts, index_set, M, delta)


# -- symmetric difference ------------------------------------------------------

def symdiff_chunk_counts(kit: WindowKit, gamma: FailureSet, n: int,
                         theta: float, trials: int, rng) -> np.ndarray:
    """Counts (xor, trials) for the window-block event against the
    single-vector event on the trailing index range."""
    spec = kit.spec
    K, d = kit.K, kit.d
    m = int(math.floor(n * theta + 1e-9))
    if not 0 <= m < n:
        raise ValueError("theta must lie in [0, 1)")
    agg = spec.aggregate
    length = (m + n - 1 + K) - (-K) + 1
    mats = np.stack([spec.coeffs.matrix(i) for i in range(-K, K + 1)])[::-1]
    cxor = 0
    done = 0
    while done < trials:
        b = min(CHUNK_TRIALS, trials - done)
        noise = sample_noise_batch(spec.noise, rng, (b, length))
        xs = _batch_convolve(noise, mats)                # X_k, k in [0, m+n-1]
        prefix = np.concatenate([np.zeros((b, 1, d)), np.cumsum(xs, axis=1)], axis=1)
        sums = prefix[:, n:n + m + 1] - prefix[:, 0:m + 1]   # S_j, j in [0, m]
        member = np.asarray(gamma.contains(sums / n)).reshape(b, m + 1)
        block_event = member.all(axis=1)
        tail_window = noise[:, K + m:K + n]               # Z_i, i in [m, n-1]
        hits = np.asarray(gamma.contains((tail_window @ agg.T) / n)).reshape(b, -1)
        cxor += int((block_event ^ hits.any(axis=1)).sum())
        done += b
    return np.array([cxor, trials], dtype=np.int64)


def symdiff_ratio_from_counts(spec: ModelSpec, gamma: FailureSet, n: int,
                              counts: np.ndarray) -> tuple[float, float]:
    cxor, trials = (int(x) for x in counts)
    p0 = single_vector_event_prob(spec, gamma, n)
    p = cxor / trials
    scale = n * p0
    return p / scale, math.sqrt(p * (1 - p) / trials) / scale


def symmetric_difference_ratio(spec: ModelSpec, gamma: FailureSet, n: int,
                               theta: float = 0.0, trials: int = 100_000,
                               rng=None) -> tuple[float, float]:
    """P(block event XOR trailing single-vector event) / (n P(single-vector event)).

    The block event holds when every window start in [0, n*theta] stays in the
    rare set; the reference event is a qualifying single noise vector in the
    trailing index range [n*theta, n-1].
    """
    if rng is None:
        raise ValueError("an rng stream is required")
    kit = WindowKit(spec, n)
    counts = symdiff_chunk_counts(kit, gamma, n, theta, trials, rng)
    return symdiff_ratio_from_counts(spec, gamma, n, counts)


def _batch_convolve(noise: np.ndarray, rev_mats: np.ndarray) -> np.ndarray:
    """Truncated coefficient convolution for a batch: (B, L, d) -> (B, L-2K, d).

    `rev_mats` is the coefficient stack in reversed lag order, so
    out[b, q, a] = sum_{j, c} noise[b, q+j, c] * A_{K-j}[a, c].
    """
    win = rev_mats.shape[0]
    sw = np.lib.stride_tricks.sliding_window_view(noise, win, axis=1)
    return np.einsum("bqcj,jac->bqa", sw, rev_mats)


# -- two-big-jump ratio ---------------------------------------------------------

def window_event_chunk_counts(kit: WindowKit, gamma: FailureSet, n: int,
                              trials: int, rng) -> np.ndarray:
    """Counts (hits, trials) of the bare window event S_0 in n*gamma."""
    spec = kit.spec
    K = kit.K
    count = 0
    done = 0
    while done < trials:
        b = min(CHUNK_TRIALS, trials - done)
        noise = sample_noise_batch(spec.noise, rng, (b, n + 2 * K))
        s0 = kit.window0_sums(noise)
        count += int(np.asarray(gamma.contains(s0 / n)).sum())
        done += b
    return np.array([count, trials], dtype=np.int64)


def window_event_prob_mc(spec: ModelSpec, gamma: FailureSet, n: int,
                         trials: int, rng,
                         kit: WindowKit | None = None) -> tuple[float, float]:
    """Monte Carlo P(S_0 in n*gamma) with standard error."""
    kit = kit or WindowKit(spec, n)
    count, trials = (int(x) for x in
                     window_event_chunk_counts(kit, gamma, n, trials, rng))
    p = count / trials
    return p, math.sqrt(p * (1 - p) / trials)


def two_jump_pair_sum(spec: ModelSpec, n: int, M: float, delta: float) -> float:
    """Exact sum over ordered index pairs in [-Mn, Mn] of
    P(|Z_i| > n delta) P(|Z_j| > n delta)."""
    mn = int(math.floor(M * n + 1e-9))
    m = 2 * mn + 1
    p = noise_norm_tail_prob(spec.noise, n * delta)
    return m * (m - 1) * p * p


def two_jump_ratio(spec: ModelSpec, gamma: FailureSet, n: int, M: float = 2.0,
                   delta: float | None = None, trials: int = 100_000,
                   rng=None) -> tuple[float, float]:
    """Two-big-jump pair mass over the Monte Carlo window-event probability."""
    if rng is None:
        raise ValueError("an rng stream is required")
    if delta is None:
        delta = 0.1 * gamma.delta0
    num = two_jump_pair_sum(spec, n, M, delta)
    den, den_se = window_event_prob_mc(spec, gamma, n, trials, rng)
    if den <= 0:
        return math.inf, math.inf
    ratio = num / den
    return ratio, num * den_se / (den * den)
