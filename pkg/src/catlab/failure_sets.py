"""Geometric failure-set catalog: membership, origin-distance certificates,
radial ray sections, and the overlap functional between two sets.

Three set kinds are supported, all closed and all certified to stay a positive
distance ``delta0`` from the origin:

* ``half_space``       -- {y : <w, y> >= c} with |w| = 1 and c > 0,
* ``intersection``     -- a finite intersection of such half-spaces,
* ``ball_complement``  -- {y : |y - center| >= radius} with |center| < radius,
  so a neighborhood of the origin is removed.

Every kind can answer an exact *ray section* query: for a direction ``v`` and
base point ``b``, the set ``{s > 0 : b + s v in set}`` is a finite union of
closed intervals.  Ray sections are what make closed-form tail measures,
single-vector event probabilities, and exact conditional radial sampling
possible elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import SetTouchesOrigin, ZeroDenominator

INF = math.inf

# Intervals are (lo, hi) pairs with 0 < lo <= hi <= inf, closed on both ends.
Sections = list[tuple[float, float]]


def _as_unit(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    nw = float(np.linalg.norm(w))
    if nw <= 0:
        raise ValueError("half-space normal must be nonzero")
    return w / nw


@dataclass(frozen=True, eq=False)
class FailureSet:
    """One catalog set together with its distance-from-origin certificate."""

    kind: str                                  # half_space | intersection | ball_complement
    normals: np.ndarray | None = None          # (m, d) unit rows, half-space kinds
    offsets: np.ndarray | None = None          # (m,) positive thresholds
    center: np.ndarray | None = None           # (d,) ball_complement only
    radius: float | None = None
    delta0: float = field(default=0.0)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def half_space(w, c: float) -> "FailureSet":
        """{y : <w, y> >= c}.  `w` is normalized; `c` is rescaled to match."""
        w = np.asarray(w, dtype=float).reshape(-1)
        nw = float(np.linalg.norm(w))
        if nw <= 0:
            raise ValueError("half-space normal must be nonzero")
        c = float(c) / nw
        if c <= 0:
            raise SetTouchesOrigin("half-space threshold must be positive")
        return FailureSet(kind="half_space",
                          normals=np.array([w / nw]), offsets=np.array([c]),
                          delta0=c)

    @staticmethod
    def intersection(constraints) -> "FailureSet":
        """Intersection of half-spaces given as (w, c) pairs."""
        if not constraints:
            raise ValueError("intersection needs at least one half-space")
        ws, cs = [], []
        for w, c in constraints:
            u = _as_unit(w)
            c = float(c) / float(np.linalg.norm(np.asarray(w, dtype=float)))
            ws.append(u)
            cs.append(c)
        normals = np.asarray(ws)
        offsets = np.asarray(cs, dtype=float)
        if offsets.max() <= 0:
            raise SetTouchesOrigin("at least one threshold must be positive")
        _check_feasible(normals, offsets)
        return FailureSet(kind="intersection", normals=normals, offsets=offsets,
                          delta0=float(offsets.max()))

    @staticmethod
    def ball_complement(center, radius: float) -> "FailureSet":
        """{y : |y - center| >= radius}; the removed ball must cover the origin."""
        center = np.asarray(center, dtype=float).reshape(-1)
        radius = float(radius)
        if radius <= 0:
            raise ValueError("radius must be positive")
        gap = radius - float(np.linalg.norm(center))
        if gap <= 0:
            raise SetTouchesOrigin(
                "ball complement keeps the origin: need |center| < radius")
        return FailureSet(kind="ball_complement", center=center, radius=radius,
                          delta0=gap)

    # -- basic queries ------------------------------------------------------

    @property
    def dimension(self) -> int:
        if self.kind == "ball_complement":
            return self.center.shape[0]
        return self.normals.shape[1]

    def contains(self, y) -> np.ndarray | bool:
        """Exact membership.  Accepts a single point (d,) or a stack (..., d)."""
        y = np.asarray(y, dtype=float)
        scalar_in = y.ndim <= 1
        pts = np.atleast_2d(y)
        if pts.shape[-1] != self.dimension:
            raise ValueError(f"point dimension {pts.shape[-1]} != set dimension {self.dimension}")
        if self.kind == "ball_complement":
            out = np.linalg.norm(pts - self.center, axis=-1) >= self.radius
        else:
            out = (pts @ self.normals.T >= self.offsets).all(axis=-1)
        return bool(out[0]) if scalar_in else out

    def scaled(self, factor: float) -> "FailureSet":
        """The dilated set factor * {y in set}; factor > 0."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "ball_complement":
            return FailureSet.ball_complement(factor * self.center, factor * self.radius)
        if self.kind == "half_space":
            return FailureSet.half_space(self.normals[0], factor * self.offsets[0])
        return FailureSet.intersection(
            [(w, factor * c) for w, c in zip(self.normals, self.offsets)])

    # -- ray sections -------------------------------------------------------

    def ray_sections(self, v, base=None) -> Sections:
        """Intervals of {s > 0 : base + s v in set}, closed, sorted, disjoint."""
        v = np.asarray(v, dtype=float).reshape(-1)
        b = np.zeros_like(v) if base is None else np.asarray(base, dtype=float).reshape(-1)
        if self.kind == "ball_complement":
            return _ball_sections(v, b, self.center, self.radius)
        sections = [(0.0, INF)]
        for w, c in zip(self.normals, self.offsets):
            sections = _intersect_sections(sections, _halfspace_section(v, b, w, c))
            if not sections:
                return []
        # drop the open endpoint at 0: membership at s=0 is irrelevant (s > 0)
        return [(lo, hi) for lo, hi in sections if hi > 0]

    # -- serialization ------------------------------------------------------

    def to_config_dict(self) -> dict:
        if self.kind == "half_space":
            return {"kind": "half_space",
                    "w": self.normals[0].tolist(), "c": float(self.offsets[0])}
        if self.kind == "intersection":
            return {"kind": "intersection",
                    "w": self.normals.tolist(), "c": self.offsets.tolist()}
        return {"kind": "ball_complement",
                "center": self.center.tolist(), "radius": float(self.radius)}

    @staticmethod
    def from_config_dict(d: dict) -> "FailureSet":
        kind = d.get("kind")
        if kind == "half_space":
            return FailureSet.half_space(d["w"], d["c"])
        if kind == "intersection":
            return FailureSet.intersection(list(zip(d["w"], d["c"])))
        if kind == "ball_complement":
            return FailureSet.ball_complement(d["center"], d["radius"])
        raise ValueError(f"unknown failure-set kind: {kind!r}")


def _check_feasible(normals: np.ndarray, offsets: np.ndarray) -> None:
    """Reject empty half-space intersections.

    Fast path: a scaled farthest-constraint direction satisfies everything
    whenever all normals have positive inner product with it.  Otherwise fall
    back to a small feasibility LP.
    """
    far = normals[int(np.argmax(offsets))]
    dots = normals @ far
    if (dots > 0).all():
        return
    d = normals.shape[1]
    res = linprog(c=np.zeros(d), A_ub=-normals, b_ub=-offsets,
                  bounds=[(None, None)] * d, method="highs")
    if not res.success:
        raise ValueError("half-space intersection is empty")


def _halfspace_section(v, b, w, c) -> Sections:
    """{s > 0 : <w, b + s v> >= c} as intervals."""
    dv = float(w @ v)
    rhs = c - float(w @ b)
    if dv > 0:
        return [(max(rhs / dv, 0.0), INF)]
    if dv < 0:
        if rhs > 0:
            return []
        hi = rhs / dv            # >= 0
        return [(0.0, hi)] if hi > 0 else []
    return [(0.0, INF)] if rhs <= 0 else []


def _ball_sections(v, b, center, radius) -> Sections:
    """{s > 0 : |b + s v - center| >= radius} as intervals."""
    u = b - center
    a2 = float(v @ v)
    if a2 == 0.0:
        return [(0.0, INF)] if float(np.linalg.norm(u)) >= radius else []
    a1 = float(v @ u)
    a0 = float(u @ u) - radius * radius
    disc = a1 * a1 - a2 * a0
    if disc <= 0:
        return [(0.0, INF)]
    root = math.sqrt(disc)
    s1 = (-a1 - root) / a2
    s2 = (-a1 + root) / a2
    out: Sections = []
    if s1 > 0:
        out.append((0.0, s1))
    if s2 < INF:
        out.append((max(s2, 0.0), INF))
    return [iv for iv in out if iv[1] > 0]


def intersect_sections(a: Sections, b: Sections) -> Sections:
    """Intersection of two interval unions (public: used for set intersections)."""
    return _intersect_sections(a, b)


def _intersect_sections(a: Sections, b: Sections) -> Sections:
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo <= hi:
                out.append((lo, hi))
    out.sort()
    return out


def degenerate_atom_rays(aggregate, atoms, failure_set: FailureSet,
                         tol: float = 1e-9) -> list[int]:
    """Indices of spectral atoms whose transformed ray meets the set boundary
    degenerately (near-parallel to a defining hyperplane, or tangent to the
    removed ball).  Exactly orthogonal rays are harmless non-contributors and
    are not flagged."""
    A = np.atleast_2d(np.asarray(aggregate, dtype=float))
    bad = []
    for k, (direction, _) in enumerate(atoms):
        v = A @ np.asarray(direction, dtype=float)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            bad.append(k)
            continue
        if failure_set.kind == "ball_complement":
            a2 = nv * nv
            a1 = float(v @ -failure_set.center)
            a0 = float(failure_set.center @ failure_set.center) \
                - failure_set.radius ** 2
            disc = a1 * a1 - a2 * a0
            if abs(disc) <= tol * (nv * failure_set.radius) ** 2:
                bad.append(k)
            continue
        for w in failure_set.normals:
            dv = abs(float(w @ v))
            if 0.0 < dv <= tol * nv:
                bad.append(k)
                break
    return bad


def mu_overlap(noise, aggregate, gamma_set: FailureSet, psi_set: FailureSet,
               mc_samples: int = 0, rng=None, method: str = "auto"):
    """Overlap of `psi_set` with `gamma_set` under the transformed tail measure.

    Returns ``(mu, std_error)`` where ``mu`` is the tail-measure mass of
    ``aggregate^{-1}(psi ∩ gamma)`` divided by the mass of
    ``aggregate^{-1} gamma``; it is the limiting probability that a cluster
    measured against `psi_set` is nondegenerate.  Atomic spectral measures
    admit an exact evaluation (std_error 0); ``method="mc"`` forces the
    importance-sampling estimate with common random numbers across the
    numerator and denominator.
    """
    from .tail_noise import TailSetQuery, tail_measure, tail_measure_mc_pair

    if method not in ("auto", "exact", "mc"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "exact"):
        den = tail_measure(noise, TailSetQuery(gamma_set, aggregate))[0]
        if den <= 0:
            raise ZeroDenominator("gamma set has zero transformed tail measure")
        num = _intersection_measure(noise, aggregate, gamma_set, psi_set)
        return num / den, 0.0

    if rng is None or mc_samples <= 0:
        raise ValueError("mc method needs rng and mc_samples > 0")
    num, den, mu, se = tail_measure_mc_pair(noise, aggregate, gamma_set, psi_set,
                                            mc_samples, rng)
    if den[0] <= 3.0 * den[1]:
        raise ZeroDenominator(
            f"gamma tail-measure estimate {den[0]:.3g} is zero within 3 std errors")
    return mu, se


def _intersection_measure(noise, aggregate, gamma_set, psi_set) -> float:
    """Exact transformed tail measure of psi ∩ gamma via merged ray sections."""
    from .tail_noise import _sections_radial_mass

    A = np.asarray(aggregate, dtype=float)
    total = 0.0
    wsum = noise.spectral.total_weight
    for direction, weight in noise.spectral.atoms:
        v = A @ direction
        secs = intersect_sections(gamma_set.ray_sections(v),
                                  psi_set.ray_sections(v))
        total += (weight / wsum) * _sections_radial_mass(secs, noise.alpha)
    return noise.scale ** noise.alpha * total
