"""Analytic side: the parameter planner, covering upper bounds, and ill/vein sums.

Dimension conventions: ``plan_parameters`` and ``feasibility_scan`` take the
sphere dimension n, so the body lives in R^(n+1). ``illumination_upper_bound``
takes the ambient dimension n of the body, and ``greedy_cap_cover`` the
ambient dimension d.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import mpmath
import numpy as np
from scipy.spatial import ConvexHull

from . import _io
from .body import SpikyBody
from .caps import (DomainError, PreconditionError, bw_upper_limit, cap_measure, log_bw_lower,
                   log_bw_upper, log_cap_measure, log_net_size_bound)
from .oracle import gauge, illuminates, simplex_directions, support
from .sphere import (CoverageReport, NetSizeError, SeedSpec, angles_to, as_generator,
                     coverage_confidence, nearest_angles, normalize_rows, sample_uniform_many)

CERTIFIED_D_MAX = 1.116
LN2 = math.log(2.0)

__all__ = [
    "Plan", "plan_parameters", "feasibility_scan", "ScanResult", "CapCover", "greedy_cap_cover",
    "covering_numerator", "illumination_upper_bound", "illuminate_with_cover", "CoverCheck",
    "illumination_parameter_sum", "ParameterSum", "InvalidSetError", "simplex_directions",
]


def _int_floor_exp(log_x: float) -> int:
    """floor(exp(log_x)) as a Python int, exact in the integer part when it is large."""
    if log_x < 700.0:
        return int(math.floor(math.exp(log_x)))
    with mpmath.workdps(int(log_x / 2.3) + 30):
        return int(mpmath.floor(mpmath.exp(mpmath.mpf(log_x))))


def _exp_or_inf(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


@dataclass
class Plan:
    """All construction parameters for sphere dimension n, kept in log form where they overflow.

    ``flags`` evaluates the conditions with exact cap measures; ``bound_flags``
    evaluates the sufficient conditions obtained through the cap-measure
    bounds, which is the chain that ends in 1/(theta p) = D^n / 36.
    """

    D: float
    n: int
    alpha: float
    delta: float
    p: float
    log_p: float
    theta: float
    log_theta: float
    N: int
    log_N_max: float
    log_T: float
    log_lower_bound: float
    in_certified_range: bool
    flags: dict = field(default_factory=dict)
    bound_flags: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.n + 1

    @property
    def T(self) -> float:
        return _exp_or_inf(self.log_T)

    @property
    def lower_bound(self) -> float:
        """2/(theta p) = D^n / 18."""
        return _exp_or_inf(self.log_lower_bound)

    @property
    def feasible(self) -> bool:
        """Inequalities (N <= ...), (net * 2^(-theta N p) <= 1/4) and theta >= 6 all hold."""
        return all(self.flags[k] for k in ("N_le", "net_tail", "theta_ge_6"))

    @property
    def diagnostics(self) -> dict:
        """p <= 1 (the binomial model is well posed) and D^n/18 > 1 (the bound says something)."""
        return {"p_le_1": self.log_p <= 0.0, "nontrivial": self.log_lower_bound > 0.0}

    @property
    def bound_route_feasible(self) -> bool:
        return all(self.bound_flags.values())

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["N"] = str(self.N)
        doc["schema"] = _io.schema_tag("plan")
        doc["feasible"] = self.feasible
        doc["diagnostics"] = self.diagnostics
        return doc


def plan_parameters(D: float, n: int, relaxed: bool = False) -> Plan:
    """Choose delta = alpha/n, 1/(theta p) = D^n/36 and the largest admissible N."""
    if int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    D = float(D)
    in_range = 1.0 < D < CERTIFIED_D_MAX
    if not in_range and not (relaxed and 1.0 < D < math.sqrt(2.0)):
        raise DomainError(f"D must lie in (1, {CERTIFIED_D_MAX}); pass relaxed=True for (1, sqrt 2)")
    d = n + 1
    alpha = math.asin(1.0 / D)
    delta = alpha / n
    log_D = math.log(D)

    log_omega_ad = log_cap_measure(d, alpha + delta)
    log_omega_a = log_cap_measure(d, alpha)
    log_omega_e1 = log_cap_measure(d, math.pi - 2 * alpha)
    log_p = LN2 + log_omega_ad
    log_inv_theta_p = n * log_D - math.log(36.0)
    log_theta = -log_inv_theta_p - log_p
    log_N_max = -0.5 * (math.log(4.0) + log_omega_e1)
    N = _int_floor_exp(log_N_max)
    log_T = (math.log(N) if N > 0 else -math.inf) + log_theta + log_p
    log_lb = LN2 + log_inv_theta_p

    # log of n^2/sin^n(delta) * 4, which must not exceed theta N p * ln 2
    log_net4 = log_net_size_bound(n, delta) + math.log(4.0)
    margins = {
        "N_le": log_N_max - math.log(N) if N > 0 else -math.inf,
        "net_tail": (log_T + math.log(LN2) - math.log(log_net4)) if N > 0 else -math.inf,
        "theta_ge_6": log_theta - math.log(6.0),
        # 1/(theta p) <= 1/(8 n sqrt(Omega(pi-2a)) log2(1/sin delta))
        "integer_N_exists": -(log_inv_theta_p + math.log(8 * n) + 0.5 * log_omega_e1
                              + math.log(math.log2(1.0 / math.sin(delta)))),
        # same with 24 n log2(1/delta), after Jordan's inequality
        "jordan_form": -(log_inv_theta_p + math.log(24 * n) + 0.5 * log_omega_e1
                         + math.log(math.log2(1.0 / delta))),
        "theta_form": -(log_inv_theta_p + math.log(12.0) + log_omega_ad),
        "cap_alpha_form": -(log_inv_theta_p + math.log(36.0) + log_omega_a),
    }
    flags = {k: bool(v >= 0.0) for k, v in margins.items()}
    flags["N_le"] = bool(N >= 1 and margins["N_le"] >= 0.0)

    n_bw_ok = alpha <= bw_upper_limit(n)
    e1_bw_ok = math.pi - 2 * alpha <= bw_upper_limit(n)
    by_bounds = {
        "alpha_gt_1.11": alpha > 1.11,
        "sin2_dominates": math.sin(alpha + delta) ** 2 > math.sin(math.pi - 2 * alpha),
        "bw_upper_valid": n_bw_ok and math.sqrt(2 * math.pi * n) * math.cos(alpha) >= 1.0,
        # bw_upper(n, alpha) <= D^-n gives the cap-alpha form for 1/(theta p) = D^n/36
        "cap_alpha_by_bw": n_bw_ok and log_bw_upper(n, alpha) <= -n * log_D,
        # scaling by t = 1 + 1/n needs (1 + 1/n) alpha < pi/2; then (1+1/n)^n < 3
        "scaling_valid": alpha + delta < math.pi / 2,
        # theta form implies the Jordan form when 12 bw_lower(alpha+delta) >= 24 n sqrt(bw_upper(pi-2a)) log2(1/delta)
        "jordan_by_bw": (e1_bw_ok and alpha + delta < math.pi / 2 and
                         math.log(12.0) + log_bw_lower(n, alpha + delta)
                         >= math.log(24 * n) + 0.5 * log_bw_upper(n, math.pi - 2 * alpha)
                         + math.log(math.log2(1.0 / delta))),
    }
    return Plan(D=D, n=n, alpha=alpha, delta=delta, p=math.exp(log_p), log_p=log_p,
                theta=_exp_or_inf(log_theta), log_theta=log_theta, N=N, log_N_max=log_N_max,
                log_T=log_T, log_lower_bound=log_lb, in_certified_range=in_range,
                flags=flags, bound_flags=by_bounds, margins=margins)


def lower_bound_constant_dominates() -> bool:
    """1/18 >= 1/20, compared as exact rationals."""
    return Fraction(2, 36) >= Fraction(5, 100)


@dataclass
class ScanResult:
    D: float
    rows: list
    onset: dict
    first_feasible: int | None

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        keys = list(self.rows[0].keys()) if self.rows else []
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.rows)
        return path


def _row(plan: Plan) -> dict:
    row = {"n": plan.n, "D": plan.D, "alpha": plan.alpha, "delta": plan.delta, "p": plan.p,
           "log_theta": plan.log_theta, "N": str(plan.N), "log_T": plan.log_T,
           "log_lower_bound": plan.log_lower_bound, "feasible": plan.feasible,
           "bound_route_feasible": plan.bound_route_feasible}
    row.update({f"flag_{k}": v for k, v in plan.flags.items()})
    row.update({f"bound_{k}": v for k, v in plan.bound_flags.items()})
    row.update(plan.diagnostics)
    return row


def feasibility_scan(D: float, n_range, relaxed: bool = False) -> ScanResult:
    """Plan every n in ``n_range``; record where each flag starts passing for good."""
    plans = [plan_parameters(D, n, relaxed=relaxed) for n in n_range]
    rows = [_row(p) for p in plans]
    onset = {}
    keys = list(plans[0].flags) + ["feasible", "p_le_1", "nontrivial"] if plans else []
    for key in keys:
        vals = [p.feasible if key == "feasible" else
                p.flags[key] if key in p.flags else p.diagnostics[key] for p in plans]
        first = None
        for plan, ok in zip(plans, vals):
            if ok and first is None:
                first = plan.n
            elif not ok:
                first = None
        onset[key] = first
    first_feasible = next((p.n for p in plans if p.feasible), None)
    return ScanResult(float(D), rows, onset, first_feasible)


# -- covering -----------------------------------------------------------------


def covering_numerator(n: int) -> float:
    """n ln n + n ln ln n + 5n; only meaningful for n >= 3."""
    if n < 3:
        raise DomainError("n ln ln n needs n >= 3")
    return n * math.log(n) + n * math.log(math.log(n)) + 5 * n


@dataclass
class CapCover:
    dimension: int
    radius: float
    centers: np.ndarray
    verified: CoverageReport | None = None
    seed: SeedSpec | None = None
    probes: int = 0

    @property
    def size(self) -> int:
        return len(self.centers)

    def __len__(self):
        return len(self.centers)

    @property
    def volumetric_bound(self) -> float | None:
        """(n ln n + n ln ln n + 5n) / Omega(radius) with n = d, or None for d < 3."""
        if self.dimension < 3:
            return None
        return covering_numerator(self.dimension) / cap_measure(self.dimension, self.radius)

    @property
    def ratio_to_estimate(self) -> float | None:
        tb = self.volumetric_bound
        return None if tb is None else self.size / tb

    def to_json(self) -> dict:
        return {
            "schema": _io.schema_tag("cap-cover"),
            "dimension": self.dimension,
            "radius": self.radius,
            "centers": self.centers,
            "seed": None if self.seed is None else self.seed.to_dict(),
            "probes": self.probes,
            "verified": None if self.verified is None else asdict(self.verified),
            "volumetric_bound": self.volumetric_bound,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CapCover":
        _io.check_schema(doc, "cap-cover")
        ver = doc["verified"]
        return cls(dimension=doc["dimension"], radius=doc["radius"],
                   centers=np.asarray(doc["centers"], dtype=float).reshape(-1, doc["dimension"]),
                   verified=None if ver is None else CoverageReport(**ver),
                   seed=None if doc["seed"] is None else SeedSpec.from_dict(doc["seed"]),
                   probes=doc["probes"])


def _probe_coverage(points: np.ndarray, centers: np.ndarray, radius: float):
    _, ang = nearest_angles(points, centers)
    return ang <= radius, ang


def _minimax_refine(points: np.ndarray, centers: np.ndarray, iters: int = 60) -> np.ndarray:
    """Move each center toward the farthest point it serves (Badoiu-Clarkson style)."""
    c = centers.copy()
    for t in range(1, iters + 1):
        idx, ang = nearest_angles(points, c)
        for j in range(len(c)):
            mine = idx == j
            if not np.any(mine):
                continue
            far = points[mine][int(np.argmax(ang[mine]))]
            c[j] = c[j] + (far - c[j]) / (t + 1)
            c[j] /= np.linalg.norm(c[j])
    return c


def _circle_cover(radius: float, rng) -> np.ndarray:
    m = math.ceil(math.pi / radius - 1e-12)
    t = rng.uniform(0, 2 * math.pi) + 2 * math.pi * np.arange(m) / m
    return np.column_stack([np.cos(t), np.sin(t)])


def greedy_cap_cover(d: int, radius: float, seed=0, probes: int = 1_000_000, candidates: int = 512,
                     gain_sample: int = 50_000, shrink: bool = True, verify_probes: int | None = None,
                     repair_rounds: int = 3, size_cap: int | None = None) -> CapCover:
    """Cover S^{d-1} by caps of angular radius ``radius`` centred at chosen probes.

    Greedy step: among ``candidates`` uncovered probes, take the one covering
    the most uncovered probes (estimated on ``gain_sample`` of them; ties go to
    the lowest probe index). A shrink pass then tries to drop centers, moving
    the rest with minimax updates, as long as every probe stays covered. The
    result is checked against a fresh probe batch; uncovered fresh probes are
    added as centers and the check repeated. On the circle the cover is the
    exact regular polygon with ceil(pi / radius) vertices.
    """
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    if not (0.0 < radius < math.pi / 2):
        raise DomainError(f"radius must lie in (0, pi/2), got {radius!r}")
    spec = seed if isinstance(seed, SeedSpec) else (SeedSpec(int(seed)) if isinstance(seed, int) else None)
    rng = as_generator(seed, "cap-cover")
    if d == 2:
        centers = _circle_cover(radius, rng)
        m = len(centers)
        worst = math.pi / m
        report = CoverageReport(passed=worst <= radius, probes=0, uncovered=0, worst_angle=worst,
                                witness=None, confidence=1.0, exact=True)
        return CapCover(2, float(radius), centers, report, spec, 0)

    if size_cap is None:
        size_cap = int(math.ceil(10 * (covering_numerator(max(d, 3)) / cap_measure(d, radius)))) + 10
    cos_r = math.cos(radius)
    P = sample_uniform_many(d, probes, rng)
    covered = np.zeros(probes, dtype=bool)
    chosen = []
    while not covered.all():
        unc = np.flatnonzero(~covered)
        cand = np.sort(rng.choice(unc, size=min(candidates, len(unc)), replace=False))
        sample = unc if len(unc) <= gain_sample else rng.choice(unc, size=gain_sample, replace=False)
        gains = ((P[cand] @ P[sample].T) >= cos_r).sum(axis=1)
        c = P[cand[int(np.argmax(gains))]]
        chosen.append(c)
        if len(chosen) > size_cap:
            raise NetSizeError(f"cap cover exceeded its size cap of {size_cap}")
        covered |= P @ c >= cos_r
    centers = np.array(chosen)

    if shrink and len(centers) > 1:
        sub = P[: min(probes, 100_000)]
        while len(centers) > 1:
            idx, _ = nearest_angles(P, centers)
            load = np.bincount(idx, minlength=len(centers))
            trial = np.delete(centers, int(np.argmin(load)), axis=0)
            trial = _minimax_refine(sub, trial)
            ok, _ = _probe_coverage(P, trial, radius)
            if not ok.all():
                break
            centers = trial

    report = None
    vp = probes if verify_probes is None else verify_probes
    for _ in range(repair_rounds + 1):
        fresh = sample_uniform_many(d, vp, rng)
        ok, ang = _probe_coverage(fresh, centers, radius)
        k = int(np.argmax(ang))
        report = CoverageReport(passed=bool(ok.all()), probes=vp, uncovered=int((~ok).sum()),
                                worst_angle=float(ang[k]), witness=None if ok.all() else fresh[k],
                                confidence=coverage_confidence(vp, int((~ok).sum())))
        if report.passed:
            break
        # repair: uncovered fresh probes become centers, then a new fresh batch decides
        extra = []
        for x in fresh[~ok]:
            if not extra or (np.array(extra) @ x).max() < cos_r:
                extra.append(x)
        centers = np.concatenate([centers, np.array(extra)])
    return CapCover(int(d), float(radius), centers, report, spec, probes)


def illumination_upper_bound(D: float, n: int, seed=0) -> float:
    """(n ln n + n ln ln n + 5n) / Omega_{n-1}(arcsin(1/D)) for a body in R^n.

    For n < 3 the formula is undefined; the size of an explicit cap cover of
    radius arcsin(1/D) is returned instead.
    """
    if not D > 1.0:
        raise DomainError(f"D must exceed 1, got {D!r}")
    if int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n!r}")
    alpha = math.asin(1.0 / D)
    if n < 3:
        return float(greedy_cap_cover(int(n), alpha, seed).size)
    return covering_numerator(int(n)) / cap_measure(int(n), alpha)


def log_illumination_upper_bound(D: float, n: int) -> float:
    return math.log(covering_numerator(n)) - log_cap_measure(n, math.asin(1.0 / D))


# -- checking covers against bodies -------------------------------------------


@dataclass
class CoverCheck:
    passed: bool
    cover_size: int
    spike_failures: list
    boundary_failures: list
    boundary_probes: int
    cross_checked: int
    cross_check_disagreements: list


def illuminate_with_cover(body: SpikyBody, cover: CapCover, cross_check: int = 0,
                          boundary_probes: int = 1000, seed=0) -> CoverCheck:
    """Use the cover centers as illumination directions for ``body``.

    Each signed spike s needs a center strictly within alpha of -s. For other
    boundary points b, the directions illuminating b include the open cap of
    radius alpha around -b/|b| (the cone from b over the inner ball), so a
    center within alpha of -b suffices; this is checked on random directions.
    ``cross_check`` spikes are re-decided by the ray oracle.
    """
    alpha = body.alpha if body.D > 1.0 else math.pi / 2
    if cover.radius > alpha + 1e-15:
        raise PreconditionError(f"cover radius {cover.radius!r} exceeds alpha = {alpha!r}")
    C = cover.centers
    spike_fail = []
    signed = body.signed_points()
    if len(signed):
        idx, ang = nearest_angles(-signed, C)
        for k in np.flatnonzero(ang >= alpha - 1e-12):
            i, sgn = (int(k), 1) if k < body.N else (int(k) - body.N, -1)
            spike_fail.append((i, sgn, float(ang[k])))
    rng = as_generator(seed, "cover-boundary")
    bfail = []
    if boundary_probes:
        V = sample_uniform_many(body.dimension, boundary_probes, rng)
        _, bang = nearest_angles(-V, C)
        bfail = [V[k] for k in np.flatnonzero(bang >= alpha - 1e-12)]
    disagreements = []
    checked = 0
    if cross_check and len(signed):
        idx, _ = nearest_angles(-signed, C)
        for k in range(min(cross_check, len(signed))):
            i, sgn = (k, 1) if k < body.N else (k - body.N, -1)
            res = illuminates(body, i, C[idx[k]], sign=sgn)
            checked += 1
            if not res.illuminated:
                disagreements.append((i, sgn, res.max_margin))
    passed = not spike_fail and not bfail and not disagreements
    return CoverCheck(passed, cover.size, spike_fail, bfail, boundary_probes, checked, disagreements)


# -- illumination parameter / vertex index sums ---------------------------------


class InvalidSetError(ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass
class ParameterSum:
    total: float
    count: int
    gauges: np.ndarray
    mode: str


CONTAINMENT_MAX_DIM = 16


def _contains_body(points: np.ndarray, body: SpikyBody, tol: float = 1e-12) -> tuple[bool, object]:
    # facet enumeration; a cross-polytope in R^n already has 2^n facets
    if points.shape[1] > CONTAINMENT_MAX_DIM:
        raise DomainError(f"containment check needs hull facets; dimension {points.shape[1]} exceeds "
                          f"{CONTAINMENT_MAX_DIM}")
    hull = ConvexHull(points)
    for eq in hull.equations:
        normal, offset = eq[:-1], -eq[-1]
        if support(body, normal) > offset + tol:
            return False, normal
    return True, None


def illumination_parameter_sum(body: SpikyBody, points, mode: str = "illumination",
                               boundary_probes: int = 0, seed=0) -> ParameterSum:
    """Sum of gauges ||p||_K over a candidate vertex set.

    mode="illumination": every signed spike must be lit by some point p, i.e.
    the direction from p through the spike lies in its open alpha-cap, and every
    point must lie outside K; the sum bounds ill(K) from above. For the bare
    ball (no spikes) ``boundary_probes`` random boundary points are checked
    instead. mode="containment": conv(points) must contain K; the sum bounds
    vein(K) from above.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float)) if len(points) else np.zeros((0, body.dimension))
    if len(pts) == 0:
        raise InvalidSetError("empty point set")
    gauges = np.array([gauge(body, p) for p in pts])
    if mode == "illumination":
        inside = np.flatnonzero(gauges <= 1.0)
        if len(inside):
            raise InvalidSetError("illuminating points must lie outside K", witness=pts[inside[0]])
        alpha = body.alpha if body.D > 1.0 else math.pi / 2
        for s in body.signed_points():
            rays = normalize_rows(s[None, :] - pts)
            if not np.any(angles_to(rays, -s) < alpha - 1e-12):
                raise InvalidSetError("spike not illuminated by any point", witness=s)
        if body.N == 0 and boundary_probes:
            rng = as_generator(seed, "ill-boundary")
            for b in sample_uniform_many(body.dimension, boundary_probes, rng):
                rays = normalize_rows(b[None, :] - pts)
                if not np.any(angles_to(rays, -b) < alpha - 1e-12):
                    raise InvalidSetError("boundary point not illuminated", witness=b)
    elif mode == "containment":
        ok, normal = _contains_body(pts, body)
        if not ok:
            raise InvalidSetError("conv(points) does not contain K", witness=normal)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return ParameterSum(math.fsum(gauges.tolist()), len(pts), gauges, mode)


def cross_polytope(n: int, scale: float) -> np.ndarray:
    e = np.eye(n) * scale
    return np.concatenate([e, -e])


def distant_illuminators(directions: np.ndarray, R: float) -> np.ndarray:
    """Point sources far out along -direction; their rays approach the given directions."""
    return -R * np.asarray(directions, dtype=float)
