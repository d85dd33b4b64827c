"""Seeded sampling on S^{d-1}, stable angles, and greedy delta-nets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _io
from .caps import DomainError, net_size_bound

RNG_ALGORITHM = "numpy-philox4x64-10/seedsequence(entropy=master_seed,spawn_key=(stream_id,*purpose))"

# Unit-norm tolerance for UnitVector and for point arrays handed to the builders.
NORM_TOL = 1e-12


class NetSizeError(RuntimeError):
    """A greedy construction grew past its configured size cap."""


@dataclass(frozen=True)
class SeedSpec:
    """Address of a reproducible random stream.

    The same ``(master_seed, stream_id, purpose)`` always yields the same
    Philox stream, independent of process, thread or scheduling order.
    """

    master_seed: int
    stream_id: int = 0
    purpose: tuple = ()

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        if self.stream_id < 0:
            raise DomainError("stream_id must be non-negative")

    def child(self, *purpose) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_id, self.purpose + tuple(purpose))

    def generator(self) -> np.random.Generator:
        key = (int(self.stream_id),) + tuple(_purpose_word(p) for p in self.purpose)
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))

    def to_dict(self) -> dict:
        return {"master_seed": int(self.master_seed), "stream_id": int(self.stream_id),
                "purpose": [p if isinstance(p, (int, str)) else str(p) for p in self.purpose]}

    @classmethod
    def from_dict(cls, doc: dict) -> "SeedSpec":
        return cls(int(doc["master_seed"]), int(doc["stream_id"]), tuple(doc.get("purpose", ())))


def _purpose_word(p) -> int:
    if isinstance(p, (int, np.integer)):
        return int(p)
    # stable across runs, unlike hash()
    return int.from_bytes(str(p).encode()[:8].ljust(8, b"\0"), "little") ^ len(str(p))


def as_generator(seed, *purpose) -> np.random.Generator:
    """Turn a SeedSpec, an int master seed, or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.child(*purpose).generator() if purpose else seed.generator()
    if isinstance(seed, (int, np.integer)):
        return SeedSpec(int(seed), 0, tuple(purpose)).generator()
    raise TypeError(f"cannot derive a random stream from {type(seed).__name__}")


@dataclass(frozen=True, eq=False)
class UnitVector:
    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise DomainError("a unit vector needs a 1-d coordinate array of length >= 2")
        if not np.all(np.isfinite(c)):
            raise DomainError("coordinates must be finite")
        if abs(np.linalg.norm(c) - 1.0) > NORM_TOL:
            raise DomainError(f"norm {np.linalg.norm(c)!r} is not within {NORM_TOL} of 1")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def dimension(self) -> int:
        return self.coords.size

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)

    def __neg__(self):
        return UnitVector(-self.coords)

    def __eq__(self, other):
        return isinstance(other, UnitVector) and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())

    @classmethod
    def normalized(cls, x) -> "UnitVector":
        x = np.asarray(x, dtype=float)
        return cls(x / np.linalg.norm(x))

    @classmethod
    def basis(cls, d: int, i: int) -> "UnitVector":
        e = np.zeros(d)
        e[i] = 1.0
        return cls(e)


def normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sample_uniform_many(d: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` independent uniform points of S^{d-1} as an (m, d) array."""
    if d < 2:
        raise DomainError(f"dimension must be >= 2, got {d}")
    x = rng.standard_normal((m, d))
    norms = np.linalg.norm(x, axis=1)
    # an all-zero Gaussian draw has probability zero; redraw just in case
    while np.any(bad := norms < 1e-300):
        x[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(x, axis=1)
    return x / norms[:, None]


def sample_uniform(d: int, seed) -> UnitVector:
    return UnitVector(sample_uniform_many(d, 1, as_generator(seed))[0])


def _as_array(u) -> np.ndarray:
    return np.asarray(u.coords if isinstance(u, UnitVector) else u, dtype=float)


def angle(u, v) -> float:
    """Angle between two nonzero vectors via atan2(|orthogonal part|, dot).

    Exact 0 for u == v and exact pi for u == -v, with no acos clamping.
    """
    u, v = _as_array(u), _as_array(v)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    dot = float(u @ v)
    return math.atan2(float(np.linalg.norm(u - dot * v)), dot)


def angles_to(points: np.ndarray, v) -> np.ndarray:
    """Angles between each row of ``points`` (unit vectors) and unit vector ``v``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    v = _as_array(v)
    if points.shape[1] != v.shape[0]:
        raise DomainError(f"dimension mismatch: {points.shape[1]} vs {v.shape[0]}")
    dots = points @ v
    ortho = np.linalg.norm(points - dots[:, None] * v[None, :], axis=1)
    return np.arctan2(ortho, dots)


def pairwise_angles(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Matrix of angles between rows of ``a`` and rows of ``b`` (unit vectors)."""
    b = a if b is None else b
    dots = a @ b.T
    # |a - (a.b) b|^2 = 1 - (a.b)^2 for unit vectors, but computed as a norm it stays accurate near 0
    ortho = np.linalg.norm(a[:, None, :] - dots[:, :, None] * b[None, :, :], axis=2)
    return np.arctan2(ortho, dots)


def min_pairwise_angle(points: np.ndarray, chunk: int = 512) -> float:
    m = len(points)
    if m < 2:
        return math.pi
    best = math.pi
    for start in range(0, m, chunk):
        block = pairwise_angles(points[start:start + chunk], points)
        rows = np.arange(start, min(start + chunk, m))
        block[rows - start, rows] = np.inf
        best = min(best, float(block.min()))
    return best


# -- delta-nets ---------------------------------------------------------------


@dataclass
class CoverageReport:
    passed: bool
    probes: int
    uncovered: int
    worst_angle: float
    witness: np.ndarray | None
    confidence: float
    exact: bool = False


@dataclass
class DeltaNet:
    """Greedy maximal delta-separated point set on S^{d-1}.

    Separation is checked exactly after construction. Covering (every point
    of the sphere within ``delta`` of a center) is only certified for d = 2;
    in higher dimensions ``coverage_confidence`` records the one-sided 95%
    lower confidence bound on the covered fraction from the last
    ``verify_net_coverage`` run, and stays 0 until one has happened.
    """

    centers: np.ndarray
    delta: float
    seed: SeedSpec | None = None
    separation_verified: bool = False
    coverage_confidence: float = 0.0
    probe_count: int = 0
    max_consecutive_rejections: int = 0
    candidates_drawn: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    @property
    def size(self) -> int:
        return len(self.centers)

    def __len__(self):
        return len(self.centers)

    @property
    def rogers_bound(self) -> float:
        """n^2 / sin^n(delta) with n = d - 1."""
        return net_size_bound(self.dimension - 1, self.delta)

    def unit_vectors(self) -> list[UnitVector]:
        return [UnitVector(c) for c in self.centers]

    def to_json(self) -> dict:
        return {
            "schema": _io.schema_tag("delta-net"),
            "dimension": self.dimension,
            "delta": float(self.delta),
            "centers": self.centers,
            "seed": None if self.seed is None else self.seed.to_dict(),
            "rng": RNG_ALGORITHM,
            "separation_verified": self.separation_verified,
            "probes": {"count": self.probe_count, "coverage_confidence": float(self.coverage_confidence)},
            "max_consecutive_rejections": self.max_consecutive_rejections,
            "candidates_drawn": self.candidates_drawn,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DeltaNet":
        _io.check_schema(doc, "delta-net")
        centers = np.asarray(doc["centers"], dtype=float).reshape(-1, doc["dimension"])
        return cls(
            centers=centers,
            delta=doc["delta"],
            seed=None if doc["seed"] is None else SeedSpec.from_dict(doc["seed"]),
            separation_verified=doc["separation_verified"],
            coverage_confidence=doc["probes"]["coverage_confidence"],
            probe_count=doc["probes"]["count"],
            max_consecutive_rejections=doc["max_consecutive_rejections"],
            candidates_drawn=doc["candidates_drawn"],
        )


def default_size_cap(d: int, delta: float) -> int:
    return int(math.ceil(10.0 * net_size_bound(d - 1, delta)))


def build_delta_net(d: int, delta: float, seed, max_consecutive_rejections: int = 100_000,
                    size_cap: int | None = None, batch: int = 4096) -> DeltaNet:
    """Greedy maximal delta-separated set from a stream of uniform candidates.

    A candidate is admitted iff its angle to every current center exceeds
    ``delta``; construction stops after ``max_consecutive_rejections``
    rejections in a row. Admission order is the candidate order, so the
    result is a pure function of ``seed`` (``batch`` only affects speed).
    """
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    if not (0.0 < delta < math.pi / 2):
        raise DomainError(f"delta must lie in (0, pi/2), got {delta!r}")
    if max_consecutive_rejections < 1:
        raise DomainError("max_consecutive_rejections must be >= 1")
    size_cap = default_size_cap(d, delta) if size_cap is None else int(size_cap)
    spec = seed if isinstance(seed, SeedSpec) else None
    rng = as_generator(seed, "delta-net")
    cos_delta = math.cos(delta)

    centers = np.empty((min(size_cap, 1024), d))
    count = 0
    run = 0
    drawn = 0
    done = False
    while not done:
        cand = sample_uniform_many(d, batch, rng)
        if count:
            ok = (cand @ centers[:count].T).max(axis=1) < cos_delta
        else:
            ok = np.ones(batch, dtype=bool)
        batch_start = count
        pos = 0  # candidates of this batch already accounted for
        for idx in np.flatnonzero(ok):
            fresh = centers[batch_start:count]
            if len(fresh) and (fresh @ cand[idx]).max() >= cos_delta:
                continue
            # candidates pos..idx-1 were all rejected
            if run + (idx - pos) >= max_consecutive_rejections:
                drawn += max_consecutive_rejections - run
                done = True
                break
            if count >= size_cap:
                raise NetSizeError(f"delta-net exceeded its size cap of {size_cap} centers")
            if count == len(centers):
                centers = np.concatenate([centers, np.empty_like(centers)])
            centers[count] = cand[idx]
            count += 1
            drawn += idx - pos + 1
            pos = idx + 1
            run = 0
        if not done:
            tail = batch - pos
            if run + tail >= max_consecutive_rejections:
                drawn += max_consecutive_rejections - run
                done = True
            else:
                run += tail
                drawn += tail

    net = DeltaNet(centers=centers[:count].copy(), delta=float(delta), seed=spec,
                   max_consecutive_rejections=int(max_consecutive_rejections), candidates_drawn=drawn)
    if min_pairwise_angle(net.centers) <= delta:
        raise AssertionError("greedy net is not delta-separated")
    net.separation_verified = True
    return net


def net_from_centers(centers, delta: float) -> DeltaNet:
    """Wrap an explicit center list (e.g. a hand-built net) without separation claims."""
    centers = normalize_rows(np.atleast_2d(centers))
    return DeltaNet(centers=centers, delta=float(delta),
                    separation_verified=min_pairwise_angle(centers) > delta)


def _circle_coverage(net: DeltaNet) -> CoverageReport:
    theta = np.sort(np.arctan2(net.centers[:, 1], net.centers[:, 0]))
    gaps = np.diff(np.concatenate([theta, [theta[0] + 2 * math.pi]]))
    k = int(np.argmax(gaps))
    worst = float(gaps[k]) / 2
    mid = theta[k] + worst
    witness = np.array([math.cos(mid), math.sin(mid)])
    passed = worst <= net.delta
    return CoverageReport(passed=passed, probes=0, uncovered=0 if passed else 1,
                          worst_angle=worst, witness=None if passed else witness,
                          confidence=1.0 if passed else 0.0, exact=True)


def coverage_confidence(probes: int, uncovered: int, level: float = 0.05) -> float:
    """One-sided (1 - level) lower confidence bound on the covered fraction."""
    if uncovered or probes == 0:
        return 0.0
    return level ** (1.0 / probes)


def nearest_angles(points: np.ndarray, centers: np.ndarray, chunk: int = 1 << 15):
    """For each point: (index of nearest center, angle to it)."""
    idx = np.empty(len(points), dtype=np.int64)
    ang = np.empty(len(points))
    for s in range(0, len(points), chunk):
        block = points[s:s + chunk]
        dots = block @ centers.T
        j = dots.argmax(axis=1)
        idx[s:s + chunk] = j
        c = centers[j]
        dd = np.einsum("ij,ij->i", block, c)
        ang[s:s + chunk] = np.arctan2(np.linalg.norm(block - dd[:, None] * c, axis=1), dd)
    return idx, ang


def verify_net_coverage(net: DeltaNet, probes: int, seed, chunk: int = 1 << 15) -> CoverageReport:
    """Check that every probe lies within ``net.delta`` of some center.

    On the circle the check is exact (largest gap between centers). Otherwise
    ``probes`` uniform points are drawn; any probe farther than delta from
    all centers fails the net and the farthest one is returned as witness.
    The net's ``coverage_confidence`` and ``probe_count`` are updated.
    """
    if probes < 1:
        raise DomainError("probes must be >= 1")
    if net.dimension == 2:
        report = _circle_coverage(net)
    else:
        rng = as_generator(seed, "net-coverage")
        uncovered = 0
        worst = -1.0
        witness = None
        done = 0
        while done < probes:
            m = min(chunk, probes - done)
            pts = sample_uniform_many(net.dimension, m, rng)
            _, ang = nearest_angles(pts, net.centers)
            bad = ang > net.delta
            uncovered += int(bad.sum())
            k = int(np.argmax(ang))
            if ang[k] > worst:
                worst = float(ang[k])
                if ang[k] > net.delta:
                    witness = pts[k].copy()
            done += m
        report = CoverageReport(passed=uncovered == 0, probes=probes, uncovered=uncovered,
                                worst_angle=worst, witness=witness,
                                confidence=coverage_confidence(probes, uncovered))
    net.coverage_confidence = report.confidence
    net.probe_count = report.probes
    return report
