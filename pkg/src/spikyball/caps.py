"""Normalized spherical cap measures and the tail bounds built on them.

Every function here takes the *ambient* dimension ``d`` (the cap lives on
S^{d-1} in R^d) unless its signature says ``n``; the ``bw_*`` bounds and
``cap_scaling_bound`` use the sphere's intrinsic dimension ``n = d - 1``
because that is how those inequalities are usually written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

HALF_PI = 0.5 * math.pi


class DomainError(ValueError):
    """An argument is outside the region where a formula is defined."""


class PreconditionError(ValueError):
    """A bound was requested outside the range where it is known to hold."""


def _check_dim(d):
    if int(d) != d or d < 2:
        raise DomainError(f"ambient dimension must be an integer >= 2, got {d!r}")
    return int(d)


def _check_angle(phi, hi=math.pi):
    phi = float(phi)
    if not (0.0 < phi < hi):
        raise DomainError(f"angle must lie in (0, {hi:g}), got {phi!r}")
    return phi


def log_sphere_normalizer(d: int) -> float:
    """log of the integral of sin^(d-2) over [0, pi] (a Wallis integral)."""
    k = d - 2
    return 0.5 * math.log(math.pi) + special.gammaln((k + 1) / 2) - special.gammaln(k / 2 + 1)


def _log_partial_integral(k: int, phi: float) -> float:
    """log of the integral of sin^k over [0, phi] for 0 < phi <= pi/2.

    The integrand is rescaled by sin^k(phi) so large k never underflows; the
    mass concentrates in a window of width ~tan(phi)/k below phi, which is
    passed to QUADPACK as breakpoints.
    """
    if k == 0:
        return math.log(phi)
    log_sin_phi = math.log(math.sin(phi))

    def scaled(t):
        return math.exp(k * (math.log(math.sin(t)) - log_sin_phi))

    width = math.tan(phi) / k if phi < HALF_PI else 1.0 / math.sqrt(k)
    breaks = sorted({phi - j * width for j in (1, 4, 16, 64, 256) if phi - j * width > 0.0})
    value, _ = integrate.quad(
        scaled, 0.0, phi, points=breaks or None, epsabs=0.0, epsrel=1e-13, limit=500
    )
    return k * log_sin_phi + math.log(value)


def log_cap_measure(d: int, phi: float) -> float:
    """Natural log of ``cap_measure(d, phi)``; finite even when the value underflows."""
    d = _check_dim(d)
    phi = _check_angle(phi)
    if phi == HALF_PI:
        return -math.log(2.0)
    if phi > HALF_PI:
        return math.log1p(-math.exp(log_cap_measure(d, math.pi - phi)))
    return _log_partial_integral(d - 2, phi) - log_sphere_normalizer(d)


def cap_measure(d: int, phi: float) -> float:
    """Probability that a uniform point of S^{d-1} lies within angle ``phi`` of a pole.

    Computed as the ratio of integrals of sin^(d-2) over [0, phi] and [0, pi]
    with adaptive Gauss-Kronrod quadrature (relative tolerance well below
    1e-10). ``cap_measure_incbeta`` evaluates the same quantity through the
    regularized incomplete beta function and serves as an independent check.
    """
    d = _check_dim(d)
    phi = _check_angle(phi)
    if phi > HALF_PI:
        return 1.0 - cap_measure(d, math.pi - phi)
    return math.exp(log_cap_measure(d, phi))


def cap_measure_incbeta(d: int, phi: float) -> float:
    """Closed form 0.5 * I_{sin^2 phi}((d-1)/2, 1/2), reflected for phi > pi/2."""
    d = _check_dim(d)
    phi = _check_angle(phi)
    if phi > HALF_PI:
        return 1.0 - cap_measure_incbeta(d, math.pi - phi)
    a = (d - 1) / 2
    lower = float(special.betainc(a, 0.5, math.sin(phi) ** 2))
    if lower < 0.5:
        return 0.5 * lower
    # near the equator sin^2 rounds toward 1; the reflected argument keeps precision
    return 0.5 - 0.5 * float(special.betainc(0.5, a, math.cos(phi) ** 2))


@dataclass(frozen=True)
class CapMeasure:
    dimension_ambient: int
    radius: float
    value: float

    @classmethod
    def of(cls, d: int, phi: float) -> "CapMeasure":
        return cls(int(d), float(phi), cap_measure(d, phi))


def bw_lower(n: int, phi: float) -> float:
    """Boroczky-Wintsche lower bound sin^n(phi) / sqrt(2 pi (n+1)) on a cap of S^n."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    phi = _check_angle(phi, HALF_PI)
    return math.sin(phi) ** n / math.sqrt(2.0 * math.pi * (n + 1))


def bw_upper_limit(n: int) -> float:
    """Largest radius for which ``bw_upper`` is valid: arccos(1/sqrt(n+1))."""
    return math.acos(1.0 / math.sqrt(n + 1))


def bw_upper(n: int, phi: float) -> float:
    """Boroczky-Wintsche upper bound sin^n(phi) / (sqrt(2 pi n) cos phi) on a cap of S^n."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    phi = float(phi)
    if not phi > 0.0:
        raise DomainError(f"angle must be positive, got {phi!r}")
    limit = bw_upper_limit(n)
    # The limit itself is allowed; a few ulps of slack keep arccos round-off from rejecting it.
    if phi > limit + 4 * math.ulp(limit):
        raise PreconditionError(
            f"bw_upper needs phi <= arccos(1/sqrt(n+1)) = {limit!r} for n={n}, got phi={phi!r}"
        )
    return math.sin(phi) ** n / (math.sqrt(2.0 * math.pi * n) * math.cos(phi))


def log_bw_lower(n: int, phi: float) -> float:
    return n * math.log(math.sin(phi)) - 0.5 * math.log(2.0 * math.pi * (n + 1))


def log_bw_upper(n: int, phi: float) -> float:
    return n * math.log(math.sin(phi)) - 0.5 * math.log(2.0 * math.pi * n) - math.log(math.cos(phi))


def cap_scaling_bound(n: int, phi: float, t: float) -> float:
    """t^n * Omega_n(phi), which strictly exceeds Omega_n(t * phi) when 1 < t < pi/(2 phi)."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    phi = _check_angle(phi, HALF_PI)
    t = float(t)
    if not (1.0 < t < math.pi / (2.0 * phi)):
        raise DomainError(f"scaling factor must lie in (1, pi/(2 phi)) = (1, {math.pi / (2 * phi):g}), got {t!r}")
    return t**n * cap_measure(n + 1, phi)


def jordan_lower(x: float) -> float:
    """2x/pi, the lower bound for sin(x) on [0, pi/2]."""
    if not (0.0 <= x <= HALF_PI):
        raise DomainError(f"Jordan's inequality is stated on [0, pi/2], got {x!r}")
    return 2.0 * x / math.pi


def small_cap_lower(n: int, delta: float) -> float:
    """sin^n(delta) / (3 sqrt(n)), the weakened form of ``bw_lower`` used for net sizes.

    It follows from ``bw_lower`` when sqrt(2 pi (n+1)) <= 3 sqrt(n), i.e. n >= 3;
    on S^2 it holds directly because (1 - cos d)/2 > sin^2(d)/(3 sqrt 2).
    """
    if n < 2:
        raise PreconditionError("sin^n(delta)/(3 sqrt n) is not a lower bound on the circle")
    return math.sin(delta) ** n / (3.0 * math.sqrt(n))


def log_net_size_bound(n: int, delta: float) -> float:
    """log of n^2 / sin^n(delta), the size of a delta-net of S^n guaranteed by Rogers."""
    return 2.0 * math.log(n) - n * math.log(math.sin(delta))


def net_size_bound(n: int, delta: float) -> float:
    return math.exp(log_net_size_bound(n, delta))


# -- binomial machinery -------------------------------------------------------


@dataclass(frozen=True)
class TailBound:
    """P(xi > threshold) for xi ~ Binom(trials, success_prob), bounded or exact."""

    trials: int
    success_prob: float
    threshold: float
    log2_bound: float

    @property
    def bound(self) -> float:
        return min(1.0, 2.0**self.log2_bound)


def _check_binomial(N, p):
    if int(N) != N or N < 0:
        raise DomainError(f"number of trials must be a non-negative integer, got {N!r}")
    if not (0.0 < p < 1.0):
        raise DomainError(f"success probability must lie in (0, 1), got {p!r}")
    return int(N), float(p)


def chernoff_log2_bound(N: int, p: float, theta: float) -> float:
    """log2 of the Chernoff-type bound, i.e. -N * theta * p."""
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N!r}")
    N, p = _check_binomial(N, p)
    if theta < 6:
        raise PreconditionError(f"P(xi > N theta p) < 2^(-N theta p) is only asserted for theta >= 6, got {theta!r}")
    return -N * float(theta) * p


def chernoff_bound(N: int, p: float, theta: float) -> float:
    """2^(-N theta p), valid for theta >= 6; underflows to 0.0 for huge exponents."""
    return min(1.0, 2.0 ** chernoff_log2_bound(N, p, theta))


def chernoff_tail(N: int, p: float, theta: float) -> TailBound:
    return TailBound(int(N), float(p), float(N) * theta * p, chernoff_log2_bound(N, p, theta))


def binomial_log_pmf(N: int, p: float, j: np.ndarray) -> np.ndarray:
    j = np.asarray(j, dtype=np.int64)
    log_comb = np.array([math.log(math.comb(N, int(i))) for i in j.ravel()]).reshape(j.shape)
    return log_comb + j * math.log(p) + (N - j) * math.log1p(-p)


def binomial_tail_exact(N: int, p: float, k: float) -> float:
    """P(xi > k) for xi ~ Binom(N, p), by compensated summation of the pmf.

    ``k`` may be any real in [0, N]; the tail starts at floor(k) + 1.
    Binomial coefficients are exact integers, so the relative error is a few
    ulps of the largest log-term.
    """
    N, p = _check_binomial(N, p)
    k = float(k)
    if not (0.0 <= k <= N):
        raise DomainError(f"threshold must lie in [0, N] = [0, {N}], got {k!r}")
    first = math.floor(k) + 1
    if first > N:
        return 0.0
    terms = np.exp(binomial_log_pmf(N, p, np.arange(first, N + 1)))
    return min(1.0, math.fsum(terms.tolist()))


def exact_tail(N: int, p: float, k: float) -> TailBound:
    value = binomial_tail_exact(N, p, k)
    return TailBound(int(N), float(p), float(k), math.log2(value) if value > 0 else -math.inf)
