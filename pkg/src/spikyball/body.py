"""The random spiky ball conv({+-X_i} u (1/D) B) and its certificate events.

``E1`` fires when two spikes (or a spike and the reflection of another) are
angularly closer than pi - 2 alpha, where sin(alpha) = 1/D. ``E2'`` fires when
some net direction lies within alpha + delta of more than T = N theta p of
the signed spikes. If neither fires, every direction illuminates at most T
spikes and the illumination number is at least 2N/T = 2/(theta p).
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _io
from .caps import DomainError, PreconditionError, cap_measure
from .sphere import (NORM_TOL, DeltaNet, SeedSpec, UnitVector, angles_to, as_generator,
                     build_delta_net, net_from_centers, pairwise_angles, sample_uniform_many)

# Boundary ties on event comparisons are resolved toward "event occurred".
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpikyBody:
    """K = conv({+-X_i} u (1/D) B^d), or conv({+-X_i} u (1/D) core) for the polytopal variant.

    ``points`` stores X_1..X_N only; every consumer uses both signs.
    ``N = 0`` with ``D = 1`` is the unit ball itself.
    """

    points: np.ndarray
    D: float
    polytopal_core: np.ndarray | None = None
    seed: SeedSpec | None = None
    dim: int | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        d = self.dim if self.dim is not None else (pts.shape[1] if pts.ndim == 2 and pts.size else None)
        if d is None:
            raise DomainError("dimension is required for a body without spikes")
        pts = pts.reshape(-1, d)
        if d < 2:
            raise DomainError(f"dimension must be >= 2, got {d}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("spike coordinates must be finite")
        if len(pts) and np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) > NORM_TOL:
            raise DomainError("spikes must be unit vectors")
        if not self.D >= 1.0 or (self.D == 1.0 and len(pts)):
            raise DomainError(f"D must exceed 1 (D = 1 only for the bare unit ball), got {self.D!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dim", int(d))
        object.__setattr__(self, "D", float(self.D))
        if self.polytopal_core is not None:
            core = np.array(self.polytopal_core, dtype=float).reshape(-1, d)
            core.setflags(write=False)
            object.__setattr__(self, "polytopal_core", core)

    @property
    def dimension(self) -> int:
        return self.dim

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def inner_radius(self) -> float:
        return 1.0 / self.D

    @property
    def alpha(self) -> float:
        """arcsin(1/D): angular radius of the illuminating cap at each spike."""
        return math.asin(1.0 / self.D)

    @property
    def is_polytopal(self) -> bool:
        return self.polytopal_core is not None

    def signed_points(self) -> np.ndarray:
        """(2N, d) array: X_1..X_N followed by -X_1..-X_N."""
        return np.concatenate([self.points, -self.points])

    def spike(self, i: int, sign: int = 1) -> np.ndarray:
        return sign * self.points[i]

    def core_points(self) -> np.ndarray | None:
        """The scaled core (1/D) * core directions, or None for the ball core."""
        return None if self.polytopal_core is None else self.polytopal_core / self.D

    def fingerprint(self) -> int:
        """64-bit digest of spikes, D and core; seeds the oracle's random sweeps."""
        h = hashlib.sha256(self.points.tobytes())
        h.update(np.float64(self.D).tobytes())
        if self.polytopal_core is not None:
            h.update(self.polytopal_core.tobytes())
        return int.from_bytes(h.digest()[:8], "little")

    def to_json(self) -> dict:
        return {
            "schema": _io.schema_tag("spiky-body"),
            "dimension": self.dimension,
            "D": self.D,
            "points": self.points,
            "polytopal_core": self.polytopal_core,
            "seed": None if self.seed is None else self.seed.to_dict(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SpikyBody":
        _io.check_schema(doc, "spiky-body")
        return cls(points=np.asarray(doc["points"], dtype=float).reshape(-1, doc["dimension"]),
                   D=doc["D"], polytopal_core=doc["polytopal_core"],
                   seed=None if doc["seed"] is None else SeedSpec.from_dict(doc["seed"]),
                   dim=doc["dimension"])


def construct(d: int, N: int, D: float, seed) -> SpikyBody:
    """Draw N independent uniform spikes on S^{d-1}; deterministic in ``seed``."""
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if not D > 1.0:
        raise DomainError(f"D must exceed 1, got {D!r}")
    spec = seed if isinstance(seed, SeedSpec) else (SeedSpec(int(seed)) if isinstance(seed, int) else None)
    pts = sample_uniform_many(int(d), int(N), as_generator(seed, "spikes"))
    return SpikyBody(points=pts, D=float(D), seed=spec)


def unit_ball(d: int) -> SpikyBody:
    return SpikyBody(points=np.empty((0, d)), D=1.0, dim=d)


def from_points(points, D: float) -> SpikyBody:
    """Body with explicitly chosen spikes (rows are normalized)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return SpikyBody(points=pts / np.linalg.norm(pts, axis=1, keepdims=True), D=float(D))


# -- events -------------------------------------------------------------------


@dataclass
class EventReport:
    event_id: str
    occurred: bool
    witnesses: list
    threshold_used: float
    max_multiplicity: int | None = None
    argmax_center: int | None = None
    counts: np.ndarray | None = field(default=None, repr=False)


def e1_threshold(D: float) -> float:
    """pi - 2 alpha; E1 needs it in (0, pi/2), i.e. 1 < D < sqrt(2)."""
    if not (1.0 < D < math.sqrt(2.0)):
        raise PreconditionError(f"E1 is only meaningful for 1 < D < sqrt(2), got D={D!r}")
    return math.pi - 2.0 * math.asin(1.0 / D)


def check_e1(body: SpikyBody, chunk: int = 1024) -> EventReport:
    """Is there a pair i != j with angle(X_i, X_j) or angle(-X_i, X_j) below pi - 2 alpha?

    Both clauses collapse to |<X_i, X_j>| > cos(pi - 2 alpha). Ties within
    1e-12 count as occurrences. Witnesses are (i, j, angle) with i < j,
    sorted by index, where the angle is the smaller of the two clause angles.
    """
    thr = e1_threshold(body.D)
    pts = body.points
    witnesses = []
    for s in range(0, body.N, chunk):
        block = pts[s:s + chunk]
        ang = pairwise_angles(block, pts)
        folded = np.minimum(ang, math.pi - ang)
        rows, cols = np.nonzero(folded < thr + TIE_TOL)
        for r, c in zip(rows.tolist(), cols.tolist()):
            i = s + r
            if i < c:
                witnesses.append((i, c, float(folded[r, c])))
    witnesses.sort()
    return EventReport("E1", bool(witnesses), witnesses, thr)


def cap_probability(d: int, alpha: float, delta: float) -> float:
    """p = 2 * Omega(alpha + delta): chance a fixed direction is near +X or -X."""
    return 2.0 * cap_measure(d, alpha + delta)


def multiplicity_profile(body: SpikyBody, directions, radius: float, chunk: int = 4096) -> np.ndarray:
    """Number of signed spikes +-X_i within angle ``radius`` (inclusive) of each direction."""
    dirs = np.atleast_2d(np.asarray([np.asarray(u, dtype=float) for u in directions]
                                    if isinstance(directions, list) else directions, dtype=float))
    if body.N == 0:
        return np.zeros(len(dirs), dtype=np.int64)
    if dirs.shape[1] != body.dimension:
        raise DomainError(f"dimension mismatch: {dirs.shape[1]} vs {body.dimension}")
    signed = body.signed_points()
    out = np.empty(len(dirs), dtype=np.int64)
    for s in range(0, len(dirs), chunk):
        ang = pairwise_angles(dirs[s:s + chunk], signed)
        out[s:s + chunk] = (ang <= radius + TIE_TOL).sum(axis=1)
    return out


def check_e2_prime(body: SpikyBody, net: DeltaNet, theta: float, delta: float | None = None) -> EventReport:
    """Does some net center see more than T = N theta p signed spikes within alpha + delta?

    ``delta`` defaults to ``net.delta``; ``p = 2 cap_measure(d, alpha + delta)``.
    The comparison is the literal ``count > T`` with T kept real.
    """
    if net.dimension != body.dimension:
        raise DomainError(f"dimension mismatch: net {net.dimension} vs body {body.dimension}")
    delta = net.delta if delta is None else float(delta)
    if abs(delta - net.delta) > 1e-15:
        raise PreconditionError(f"planned delta {delta!r} does not match the net's delta {net.delta!r}")
    if theta < 6:
        warnings.warn(f"theta={theta} < 6: the Chernoff bound on P(E2') does not apply", stacklevel=2)
    radius = body.alpha + delta
    p = cap_probability(body.dimension, body.alpha, delta)
    T = body.N * theta * p
    counts = multiplicity_profile(body, net.centers, radius)
    bad = np.flatnonzero(counts > T)
    k = int(np.argmax(counts)) if len(counts) else None
    return EventReport(
        "E2PRIME", bool(len(bad)), [(int(i), int(counts[i])) for i in bad], T,
        max_multiplicity=int(counts[k]) if k is not None else 0, argmax_center=k, counts=counts,
    )


# -- certificates -------------------------------------------------------------


@dataclass
class Certificate:
    """Outcome of the two event checks and, when both are clean, i(K) >= 2/(theta p)."""

    body: SpikyBody
    net: DeltaNet
    alpha: float
    delta: float
    theta: float
    p: float
    T: float
    e1: EventReport
    e2prime: EventReport
    lower_bound: float | None
    coverage_confidence: float

    @property
    def N(self) -> int:
        return self.body.N

    @property
    def label(self) -> str:
        if self.lower_bound is None:
            return "no bound"
        return "certified" if self.coverage_confidence >= 1.0 else "probabilistically certified"

    def to_json(self, include_body: bool = True) -> dict:
        return {
            "schema": _io.schema_tag("certificate"),
            "body": self.body.to_json() if include_body else None,
            "net": self.net.to_json(),
            "alpha": self.alpha,
            "delta": self.delta,
            "theta": self.theta,
            "p": self.p,
            "N": self.N,
            "T": self.T,
            "e1": {"occurred": self.e1.occurred, "witnesses": [list(w) for w in self.e1.witnesses],
                   "threshold": self.e1.threshold_used},
            "e2prime": {"occurred": self.e2prime.occurred,
                        "witnesses": [list(w) for w in self.e2prime.witnesses],
                        "threshold": self.e2prime.threshold_used,
                        "max_multiplicity": self.e2prime.max_multiplicity,
                        "argmax_center": self.e2prime.argmax_center},
            "lower_bound": self.lower_bound,
            "coverage_confidence": self.coverage_confidence,
            "label": self.label,
        }


def certify(body: SpikyBody, net: DeltaNet, theta: float) -> Certificate:
    """Run both event checks; emit ``lower_bound = 2/(theta p)`` iff neither occurred.

    The bound is conditional on the net actually covering the sphere, which
    is why the net's coverage confidence travels with the certificate.
    """
    e1 = check_e1(body)
    e2 = check_e2_prime(body, net, theta)
    alpha = body.alpha
    p = cap_probability(body.dimension, alpha, net.delta)
    T = body.N * theta * p
    bound = None if (e1.occurred or e2.occurred) else 2.0 / (theta * p)
    return Certificate(body, net, alpha, net.delta, float(theta), p, T, e1, e2, bound,
                       float(net.coverage_confidence))


# -- polytopal variant --------------------------------------------------------


def polygon_core(core_density: float, phase: float = 0.0) -> np.ndarray:
    """Regular polygon whose arcs have covering radius <= core_density."""
    m = max(3, math.ceil(math.pi / core_density - 1e-12))
    t = phase + 2 * math.pi * np.arange(m) / m
    return np.column_stack([np.cos(t), np.sin(t)])


def polytopal_variant(body: SpikyBody, core_density: float, seed=0,
                      max_consecutive_rejections: int = 100_000) -> SpikyBody:
    """Replace the inner ball by (1/D) times a core_density-net of S^{d-1}.

    In the plane the net is an exact regular polygon; otherwise a greedy net.
    The spikes, hence both event checks, are untouched.
    """
    if not (0.0 < core_density < math.pi / 4):
        raise DomainError(f"core_density must lie in (0, pi/4), got {core_density!r}")
    if body.dimension == 2:
        core = polygon_core(core_density)
    else:
        core = build_delta_net(body.dimension, core_density, as_generator(seed, "polytopal-core"),
                               max_consecutive_rejections=max_consecutive_rejections).centers
    return SpikyBody(points=body.points, D=body.D, polytopal_core=core, seed=body.seed, dim=body.dimension)


def adversarial_body(x: np.ndarray, N: int, D: float) -> SpikyBody:
    """N copies of the same spike; used to force E1 and E2'."""
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    return SpikyBody(points=np.repeat(x[None, :], N, axis=0), D=D)


__all__ = [
    "SpikyBody", "EventReport", "Certificate", "construct", "unit_ball", "from_points", "check_e1",
    "check_e2_prime", "certify", "multiplicity_profile", "polytopal_variant", "cap_probability",
    "e1_threshold", "adversarial_body", "net_from_centers", "UnitVector", "angles_to",
]
