"""Support function, membership margin, gauge and illumination tests for spiky balls.

Everything reduces to minimizing, over unit vectors w, a maximum of functions
that are affine in w:

    margin(q) = min_w  h_K(w) - <q, w>
              = min_w  max( max_k <V_k - q, w>,  1/D - <q, w> )

where V_k runs over the signed spikes (and the scaled core for polytopal
bodies; the ball term is dropped then). At a local minimizer some set of
pieces is active and w is a critical point of one of them on the subsphere
where they agree, so candidates come from solving small linear systems for
subsets of at most d pieces. When the number of such subsets is small the
enumeration is exhaustive and the minimum is exact up to rounding; otherwise
a random sweep plus polished multistart is used and the result is only as
good as the restarts.
"""

from __future__ import annotations

import itertools
import math
import weakref
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .body import SpikyBody
from .caps import DomainError
from .sphere import SeedSpec, UnitVector, angle, sample_uniform_many

DEFAULT_TOL = 1e-9
EXHAUSTIVE_LIMIT = 40_000
SWEEP_SIZE = 10_000

CERT_NEGATIVE = "certified-negative"
CERT_POSITIVE = "certified-positive"
AMBIGUOUS = "numerically-ambiguous"


def support(body: SpikyBody, w) -> float:
    """h_K(w) = max(max_i |<X_i, w>|, |w|/D), with the core maximum for polytopal bodies."""
    w = np.asarray(w.coords if isinstance(w, UnitVector) else w, dtype=float)
    return float(_support_many(body, w[None, :])[0])


def _support_many(body: SpikyBody, W: np.ndarray) -> np.ndarray:
    if body.is_polytopal:
        inner = (W @ body.polytopal_core.T).max(axis=1) / body.D
    else:
        inner = np.linalg.norm(W, axis=1) / body.D
    if body.N:
        return np.maximum(np.abs(W @ body.points.T).max(axis=1), inner)
    return inner


def _pieces(body: SpikyBody, q: np.ndarray):
    """Rows a_k and offsets b_k with h_K(w) - <q,w> = max_k <a_k, w> + b_k on the unit sphere."""
    verts = body.signed_points()
    if body.is_polytopal:
        verts = np.concatenate([verts, body.core_points()])
        A = verts - q
        b = np.zeros(len(A))
    else:
        A = np.concatenate([verts - q, -q[None, :]])
        b = np.zeros(len(A))
        b[-1] = 1.0 / body.D
    return A, b


def _subset_count(k: int, d: int) -> int:
    return sum(comb(k, m) for m in range(1, min(k, d) + 1))


_COMBO_CACHE: dict = {}


def _combos(k: int, m: int) -> np.ndarray:
    key = (k, m)
    if key not in _COMBO_CACHE:
        _COMBO_CACHE[key] = np.array(list(itertools.combinations(range(k), m)), dtype=np.int64).reshape(-1, m)
    return _COMBO_CACHE[key]


def _critical_points(A: np.ndarray, b: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Critical points of piece idx[:, 0] on the subsphere where the pieces idx[s] agree.

    ``A`` is (S, K, d) or (K, d); returns (2S, d) candidate unit vectors (NaN rows when
    the subsphere is empty).
    """
    if A.ndim == 2:
        A = np.broadcast_to(A, (len(idx),) + A.shape)
        b = np.broadcast_to(b, (len(idx),) + b.shape)
    S, m = idx.shape
    d = A.shape[-1]
    rows = np.arange(S)[:, None]
    Ai = A[rows, idx]  # (S, m, d)
    bi = b[rows, idx]  # (S, m)
    a1 = Ai[:, 0, :]
    if m == 1:
        w0 = np.zeros((S, d))
        proj = np.broadcast_to(np.eye(d), (S, d, d))
    else:
        G = Ai[:, 1:, :] - a1[:, None, :]
        h = bi[:, :1] - bi[:, 1:]
        Gp = np.linalg.pinv(G, rcond=1e-12)  # (S, d, m-1)
        w0 = np.einsum("sij,sj->si", Gp, h)
        proj = np.eye(d)[None] - Gp @ G
    r2 = 1.0 - np.einsum("si,si->s", w0, w0)
    v = np.einsum("sij,sj->si", proj, a1)
    vn = np.linalg.norm(v, axis=1)
    flat = vn < 1e-12
    if np.any(flat):
        # piece constant on the subsphere: any null-space direction is critical
        cols = np.linalg.norm(proj[flat], axis=1)
        pick = cols.argmax(axis=1)
        v[flat] = proj[flat][np.arange(flat.sum()), :, pick]
        vn[flat] = np.linalg.norm(v[flat], axis=1)
    v = v / np.where(vn > 0, vn, 1.0)[:, None]
    r = np.sqrt(np.clip(r2, 0.0, None))[:, None]
    cand = np.concatenate([w0 - r * v, w0 + r * v])
    bad = np.concatenate([r2 < -1e-10, r2 < -1e-10]) | np.concatenate([vn == 0, vn == 0])
    norms = np.linalg.norm(cand, axis=1)
    cand = cand / np.where(norms > 0, norms, 1.0)[:, None]
    cand[bad | (norms == 0)] = np.nan
    return cand


def _objective(A: np.ndarray, b: np.ndarray, W: np.ndarray) -> np.ndarray:
    vals = W @ A.T + b
    return vals.max(axis=1)


@dataclass
class SphereMin:
    value: float
    w: np.ndarray
    exhaustive: bool
    restarts: int


def _exhaustive(A, b) -> SphereMin:
    K, d = A.shape
    cands = [np.zeros((0, d))]
    for m in range(1, min(K, d) + 1):
        cands.append(_critical_points(A, b, _combos(K, m)))
    W = np.concatenate(cands)
    W = W[~np.isnan(W).any(axis=1)]
    vals = _objective(A, b, W)
    k = int(np.argmin(vals))
    return SphereMin(float(vals[k]), W[k], True, 0)


def _polish(A, b, starts: np.ndarray, width: int, max_rounds: int = 12) -> SphereMin:
    """Re-solve on the ``width`` most active pieces around each start until nothing improves."""
    K, d = A.shape
    width = min(width, K)
    W = starts.copy()
    cur = _objective(A, b, W)
    combos = [_combos(width, m) for m in range(1, min(width, d) + 1)]
    for _ in range(max_rounds):
        vals = W @ A.T + b
        near = np.argsort(-vals, axis=1)[:, :width]  # (s, width)
        improved = False
        best_val = cur.copy()
        best_w = W.copy()
        for cb in combos:
            idx = near[:, cb]  # (s, c, m)
            s, c, m = idx.shape
            cand = _critical_points(A, b, idx.reshape(s * c, m))
            cand = cand.reshape(2, s, c, d).transpose(1, 0, 2, 3).reshape(s, 2 * c, d)
            cv = np.einsum("scd,kd->sck", np.nan_to_num(cand, nan=0.0), A) + b
            cv = cv.max(axis=2)
            cv[np.isnan(cand).any(axis=2)] = np.inf
            j = cv.argmin(axis=1)
            v = cv[np.arange(s), j]
            upd = v < best_val - 1e-15
            if np.any(upd):
                improved = True
                best_val[upd] = v[upd]
                best_w[upd] = cand[np.arange(s), j][upd]
        W, cur = best_w, best_val
        if not improved:
            break
    k = int(np.argmin(cur))
    return SphereMin(float(cur[k]), W[k], False, len(starts))


_SWEEPS: "weakref.WeakKeyDictionary[SpikyBody, tuple]" = weakref.WeakKeyDictionary()


def _sweep(body: SpikyBody, size: int = SWEEP_SIZE):
    """Random directions and their support values, fixed per body."""
    cached = _SWEEPS.get(body)
    if cached is None or len(cached[0]) != size:
        rng = SeedSpec(body.fingerprint(), 0, ("oracle-sweep",)).generator()
        W = sample_uniform_many(body.dimension, size, rng)
        cached = (W, _support_many(body, W))
        _SWEEPS[body] = cached
    return cached


def _minimize(body: SpikyBody, A, b, extra_starts, restarts: int, sweep: int,
              exhaustive_limit: int) -> SphereMin:
    K, d = A.shape
    if _subset_count(K, d) <= exhaustive_limit:
        return _exhaustive(A, b)
    W, _ = _sweep(body, sweep)
    pool = np.concatenate([W, extra_starts])
    vals = _objective(A, b, pool)
    order = np.argsort(vals, kind="stable")[:restarts]
    return _polish(A, b, pool[order], width=d + 2)


@dataclass
class MarginResult:
    value: float
    minimizer_direction: UnitVector
    restarts_used: int
    status: str
    exhaustive: bool = False

    @property
    def certified_outside(self) -> bool:
        return self.status == CERT_NEGATIVE


def _status(value: float, tol: float) -> str:
    if value < -tol:
        return CERT_NEGATIVE
    if value > tol:
        return CERT_POSITIVE
    return AMBIGUOUS


def _margin_min(body: SpikyBody, p, restarts: int, sweep: int, exhaustive_limit: int) -> SphereMin:
    q = np.asarray(p.coords if isinstance(p, UnitVector) else p, dtype=float)
    if q.shape != (body.dimension,) or not np.all(np.isfinite(q)):
        raise DomainError(f"point must be a finite vector of length {body.dimension}")
    A, b = _pieces(body, q)
    extra = [body.signed_points()]
    nq = np.linalg.norm(q)
    if nq > 0:
        extra.append((q / nq)[None, :])
    starts = np.concatenate(extra) if body.N or nq > 0 else np.zeros((0, body.dimension))
    return _minimize(body, A, b, starts, restarts, sweep, exhaustive_limit)


def membership_margin(body: SpikyBody, p, restarts: int = 64, tolerance: float = DEFAULT_TOL,
                      sweep: int = SWEEP_SIZE, exhaustive_limit: int = EXHAUSTIVE_LIMIT) -> MarginResult:
    """Signed depth of ``p``: the largest r with p + rB inside K, or -dist(p, K) outside.

    A negative value comes with a witness direction w satisfying
    <p, w> > h_K(w), which anyone can re-check with one support evaluation.
    """
    res = _margin_min(body, p, restarts, sweep, exhaustive_limit)
    return MarginResult(res.value, UnitVector.normalized(res.w), res.restarts,
                        _status(res.value, tolerance), res.exhaustive)


def gauge(body: SpikyBody, p, restarts: int = 64, sweep: int = SWEEP_SIZE,
          exhaustive_limit: int = EXHAUSTIVE_LIMIT, max_iter: int = 50) -> float:
    """||p||_K = max_w <p, w> / h_K(w), by Dinkelbach iteration on the margin solver.

    Each step minimizes lam h_K(w) - <p, w> = lam * margin(p / lam) and moves lam to
    the ratio at the minimizer; the iteration stops once that minimum is zero.
    """
    q = np.asarray(p.coords if isinstance(p, UnitVector) else p, dtype=float)
    if q.shape != (body.dimension,) or not np.all(np.isfinite(q)):
        raise DomainError(f"point must be a finite vector of length {body.dimension}")
    nq = float(np.linalg.norm(q))
    if nq == 0.0:
        return 0.0
    # gauge >= |q| since K lies in the unit ball; the ratio at w = q/|q| is a valid start
    cands = np.concatenate([(q / nq)[None, :], body.signed_points()])
    lam = float(np.max((cands @ q) / _support_many(body, cands)))
    for _ in range(max_iter):
        res = _margin_min(body, q / lam, restarts, sweep, exhaustive_limit)
        if res.value >= -1e-15:
            break
        w = res.w
        new = float(w @ q) / float(_support_many(body, w[None, :])[0])
        if new <= lam * (1 + 1e-16):
            break
        lam = new
    return lam


@dataclass
class IlluminationResult:
    illuminated: bool
    max_margin: float
    best_lambda: float
    status: str
    trace: list = field(default_factory=list, repr=False)

    def __bool__(self):
        return self.illuminated


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _boundary_point(body: SpikyBody, target, sign: int) -> np.ndarray:
    if isinstance(target, (int, np.integer)):
        if not (0 <= target < body.N):
            raise DomainError(f"spike index {target} out of range for N={body.N}")
        return sign * body.points[int(target)]
    b = np.asarray(target.coords if isinstance(target, UnitVector) else target, dtype=float)
    if b.shape != (body.dimension,):
        raise DomainError("boundary point has the wrong dimension")
    return b


def illuminates(body: SpikyBody, target, u, sign: int = 1, tolerance: float = DEFAULT_TOL,
                grid: int = 32, lam_max: float = 2.0, lam_tol: float = 1e-5, **margin_opts) -> IlluminationResult:
    """Does the ray {b + lam u : lam > 0} from boundary point b enter the interior of K?

    ``target`` is a spike index (b = sign * X_i) or an explicit boundary point.
    The margin along the ray is concave in lam, so a coarse grid on (0, 2]
    followed by golden-section search finds its maximum; since K lies in the
    unit ball, no ray from the boundary stays inside past lam = 2.
    """
    b = _boundary_point(body, target, sign)
    u = np.asarray(u.coords if isinstance(u, UnitVector) else u, dtype=float)
    u = u / np.linalg.norm(u)
    trace = []

    def g(lam):
        v = _margin_min(body, b + lam * u, margin_opts.get("restarts", 64),
                        margin_opts.get("sweep", SWEEP_SIZE),
                        margin_opts.get("exhaustive_limit", EXHAUSTIVE_LIMIT)).value
        trace.append((lam, v))
        return v

    lams = lam_max * np.arange(1, grid + 1) / grid
    vals = [g(float(x)) for x in lams]
    k = int(np.argmax(vals))
    lo = 0.0 if k == 0 else float(lams[k - 1])
    hi = float(lams[min(k + 1, grid - 1)])
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = g(x1), g(x2)
    while hi - lo > lam_tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = g(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = g(x1)
    best_lam, best = max(trace, key=lambda t: t[1])
    return IlluminationResult(best > tolerance, best, best_lam, _status(best, tolerance), trace)


def cap_predicate(body: SpikyBody, i: int, u, sign: int = 1, tol: float = 1e-12) -> bool:
    """Is u strictly inside the open cap of radius alpha around -(sign * X_i)?"""
    return angle(u, -sign * body.points[i]) < body.alpha - tol


def illuminating_cap_distance(body: SpikyBody, i: int, u, sign: int = 1) -> float:
    """Signed angular distance of u from the boundary of the predicted cap (positive inside)."""
    return body.alpha - angle(u, -sign * body.points[i])


def simplex_directions(d: int) -> np.ndarray:
    """Vertices of a regular simplex inscribed in S^{d-1}, as a (d+1, d) array.

    Every open hemisphere contains one of them, so they illuminate any smooth body.
    """
    if d < 1:
        raise DomainError("dimension must be positive")
    centered = np.eye(d + 1) - 1.0 / (d + 1)
    # orthonormal basis of the hyperplane sum(x) = 0
    basis = np.linalg.svd(centered)[2][:d]
    verts = centered @ basis.T
    return verts / np.linalg.norm(verts, axis=1, keepdims=True)
