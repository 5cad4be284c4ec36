"""Cluster extents and dominant-point extraction for conditioned replicates.

Given a replicate conditioned on the window-0 rare event, the cluster extent
records how far the event persists when the window slides: the first forward
and backward window starts at which membership fails.  Scans run against the
conditioning set (forward scan strictly after 0) and against a second
reference set (forward scan from 0 inclusive, so a replicate that never
reaches the reference set reports extent 0 on both sides).  Scans that hit
the configured cap are censored, never clipped.

The dominant point is the largest noise vector in a symmetric window around
the event; its window position and rescaled image under the aggregate matrix
are the two marginals of the limiting single-point description.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ScanRangeTooShort
from .failure_sets import FailureSet
from .rare_event import ConditionedSample


@dataclass(frozen=True, eq=False)
class ClusterRecord:
    """Cluster extents, dominant point, and censoring state for one replicate."""

    n: int
    censor_cap: int
    j_plus: int | None                 # conditioning set, forward (j > 0 scan)
    j_minus: int | None                # conditioning set, backward (j < 0 scan)
    j_plus_psi: int | None             # reference set, forward (j >= 0 scan)
    j_minus_psi: int | None            # reference set, backward (j < 0 scan)
    dominant_index: int
    dominant_location: float           # dominant_index / n
    dominant_value: np.ndarray         # aggregate @ Z / n at the dominant index
    attempts: int
    method: str
    replicate: int | None = None

    @property
    def censored(self) -> bool:
        return any(v is None for v in (self.j_plus, self.j_minus,
                                       self.j_plus_psi, self.j_minus_psi))

    def with_replicate(self, index: int) -> "ClusterRecord":
        return replace(self, replicate=index)


def compute_cluster_extent(sample: ConditionedSample, psi: FailureSet,
                           censor_cap: int | None = None, M: float = 2.0,
                           psi_scan_from_zero: bool = True,
                           gamma_scan_from_zero: bool = False) -> ClusterRecord:
    """Scan the stored window sums for the first exits in both directions.

    The two `*_scan_from_zero` flags choose whether the forward scan may stop
    at the conditioning window itself (extent 0) or starts strictly after it.
    """
    path = sample.path
    n = sample.n
    if censor_cap is None:
        censor_cap = 2 * n
    if path.j_min > -censor_cap or path.j_max < censor_cap:
        raise ScanRangeTooShort(
            f"stored range [{path.j_min}, {path.j_max}] does not cover "
            f"[-{censor_cap}, {censor_cap}]")

    base = -censor_cap - path.j_min
    sums = path.sums[base: base + 2 * censor_cap + 1] / n
    in_gamma = np.asarray(sample.gamma.contains(sums)).reshape(-1)
    in_psi = np.asarray(psi.contains(sums)).reshape(-1)
    mid = censor_cap                    # array position of j = 0

    j_plus = _first_exit_forward(in_gamma, mid, censor_cap, gamma_scan_from_zero)
    j_minus = _first_exit_backward(in_gamma, mid, censor_cap)
    j_plus_psi = _first_exit_forward(in_psi, mid, censor_cap, psi_scan_from_zero)
    j_minus_psi = _first_exit_backward(in_psi, mid, censor_cap)

    loc, value, idx = extract_dominant_point(sample, M)
    return ClusterRecord(n=n, censor_cap=censor_cap,
                         j_plus=j_plus, j_minus=j_minus,
                         j_plus_psi=j_plus_psi, j_minus_psi=j_minus_psi,
                         dominant_index=idx, dominant_location=loc,
                         dominant_value=value,
                         attempts=sample.attempts, method=sample.method)


def _first_exit_forward(member: np.ndarray, mid: int, cap: int,
                        from_zero: bool) -> int | None:
    start = mid if from_zero else mid + 1
    misses = np.where(~member[start:])[0]
    if misses.size == 0:
        return None
    return int(misses[0]) + (0 if from_zero else 1)


def _first_exit_backward(member: np.ndarray, mid: int, cap: int) -> int | None:
    misses = np.where(~member[:mid][::-1])[0]
    if misses.size == 0:
        return None
    return -(int(misses[0]) + 1)


def extract_dominant_point(sample: ConditionedSample, M: float = 2.0):
    """Largest-norm noise vector over window positions [-M n, M n].

    Returns ``(location, value, index)`` with ``location = index / n`` and
    ``value`` the aggregate-transformed noise over ``n``.  Ties take the
    smallest index (they have probability zero for continuous radial laws).
    """
    n = sample.n
    mn = int(math.floor(M * n + 1e-9))
    block = sample.path.noise_block(-mn, mn)        # WindowTooShort if not covered
    norms = np.abs(block[:, 0]) if block.shape[1] == 1 else np.linalg.norm(block, axis=1)
    pos = int(np.argmax(norms))
    idx = pos - mn
    agg = np.atleast_2d(sample.spec.aggregate)
    value = agg @ block[pos] / n
    return idx / n, value, idx


def exceedance_count(sample: ConditionedSample, threshold: float,
                     M: float = 2.0) -> int:
    """Number of window positions in [-M n, M n] with noise norm above `threshold`."""
    n = sample.n
    mn = int(math.floor(M * n + 1e-9))
    block = sample.path.noise_block(-mn, mn)
    norms = np.abs(block[:, 0]) if block.shape[1] == 1 else np.linalg.norm(block, axis=1)
    return int((norms > threshold).sum())


def dominant_value_cdf(spec, gamma: FailureSet):
    """Limiting CDF of the dominant rescaled value for one-dimensional models.

    The limit law weights each part of the target set by the transformed tail
    measure; for a one-sided set on the positive axis it reduces to a Pareto
    law starting at the set's threshold.
    """
    if spec.dimension != 1:
        raise ValueError("closed-form dominant-value law implemented for d = 1")
    model = spec.noise
    alpha = model.alpha
    a = float(np.atleast_2d(spec.aggregate)[0, 0])
    wsum = model.spectral.total_weight
    per_atom = []
    total = 0.0
    for direction, weight in model.spectral.atoms:
        v = a * float(direction[0])
        secs = gamma.ray_sections(np.array([v]))
        mass = sum(lo ** -alpha - (0.0 if hi == math.inf else hi ** -alpha)
                   for lo, hi in secs)
        per_atom.append((weight / wsum, v, secs))
        total += (weight / wsum) * mass
    if total <= 0:
        raise ValueError("target set carries no tail-measure mass")

    def cdf(x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(xs.shape)
        for i, xv in enumerate(xs):
            acc = 0.0
            for wfrac, v, secs in per_atom:
                # radial interval where s * v <= xv
                if v > 0:
                    cut = [(0.0, xv / v)] if xv > 0 else []
                elif v < 0:
                    cut = [(max(xv / v, 0.0), math.inf)]
                else:
                    cut = [(0.0, math.inf)] if xv >= 0 else []
                for lo, hi in _intersect(secs, cut):
                    acc += wfrac * (lo ** -alpha -
                                    (0.0 if hi == math.inf else hi ** -alpha))
            out[i] = acc / total
        return out if np.ndim(x) else float(out[0])

    return cdf


def _intersect(a, b):
    from .failure_sets import intersect_sections
    return [iv for iv in intersect_sections(a, b) if iv[0] > 0]


CSV_HEADER = ["replicate", "n", "j_plus", "j_minus", "j_plus_psi", "j_minus_psi",
              "censored", "dominant_loc", "attempts", "method"]


def cluster_records_to_csv(records, path, dimension: int | None = None) -> None:
    """Write per-replicate records in the fixed column order.

    Censored extents serialize as empty fields; the dominant value expands to
    one ``dominant_val_k`` column per coordinate.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    d = dimension or records[0].dominant_value.shape[0]
    header = CSV_HEADER[:8] + [f"dominant_val_{k}" for k in range(d)] + CSV_HEADER[8:]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in records:
            row = [rec.replicate if rec.replicate is not None else "",
                   rec.n,
                   "" if rec.j_plus is None else rec.j_plus,
                   "" if rec.j_minus is None else rec.j_minus,
                   "" if rec.j_plus_psi is None else rec.j_plus_psi,
                   "" if rec.j_minus_psi is None else rec.j_minus_psi,
                   int(rec.censored),
                   repr(rec.dominant_location)]
            row += [repr(float(v)) for v in rec.dominant_value]
            row += [rec.attempts, rec.method]
            writer.writerow(row)


def cluster_records_from_csv(path) -> list[ClusterRecord]:
    """Parse records written by `cluster_records_to_csv`."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        val_cols = [c for c in reader.fieldnames if c.startswith("dominant_val_")]
        for row in reader:
            n = int(row["n"])
            loc = float(row["dominant_loc"])
            out.append(ClusterRecord(
                n=n, censor_cap=2 * n,
                j_plus=_opt_int(row["j_plus"]), j_minus=_opt_int(row["j_minus"]),
                j_plus_psi=_opt_int(row["j_plus_psi"]),
                j_minus_psi=_opt_int(row["j_minus_psi"]),
                dominant_index=int(round(loc * n)),
                dominant_location=loc,
                dominant_value=np.array([float(row[c]) for c in val_cols]),
                attempts=int(row["attempts"]), method=row["method"],
                replicate=_opt_int(row["replicate"])))
    return out


def _opt_int(text: str) -> int | None:
    return None if text == "" else int(text)
