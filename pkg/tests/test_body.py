import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikyball import _io
from spikyball.body import (SpikyBody, adversarial_body, cap_probability, certify, check_e1, check_e2_prime,
                            construct, e1_threshold, from_points, multiplicity_profile, polytopal_variant,
                            unit_ball)
from spikyball.caps import DomainError, PreconditionError, cap_measure
from spikyball.sphere import SeedSpec, build_delta_net, net_from_centers, sample_uniform_many, as_generator


def brute_e1(points, D):
    thr = math.pi - 2 * math.asin(1 / D)
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            a = math.acos(float(np.clip(points[i] @ points[j], -1, 1)))
            if a < thr or math.pi - a < thr:
                return True
    return False


def brute_counts(body, centers, radius):
    out = []
    for c in centers:
        k = 0
        for x in body.points:
            for s in (x, -x):
                if math.acos(float(np.clip(c @ s, -1, 1))) <= radius:
                    k += 1
        out.append(k)
    return np.array(out)


def test_construct_is_deterministic():
    a = construct(4, 10, 1.1, SeedSpec(3))
    b = construct(4, 10, 1.1, SeedSpec(3))
    assert np.array_equal(a.points, b.points) and a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != construct(4, 10, 1.1, SeedSpec(4)).fingerprint()


def test_body_validation():
    with pytest.raises(DomainError):
        construct(3, 0, 1.1, 0)
    with pytest.raises(DomainError):
        construct(3, 4, 1.0, 0)
    with pytest.raises(DomainError):
        SpikyBody(points=np.array([[1.0, 1.0, 0.0]]), D=1.1)
    with pytest.raises(DomainError):
        SpikyBody(points=np.array([[1.0, 0.0]]), D=1.0)
    ball = unit_ball(3)
    assert ball.N == 0 and ball.dimension == 3 and ball.alpha == pytest.approx(math.pi / 2)


def test_signed_points_and_alpha():
    body = construct(3, 4, 1.1, SeedSpec(1))
    sp = body.signed_points()
    assert np.array_equal(sp[4:], -sp[:4])
    assert body.alpha == pytest.approx(math.asin(1 / 1.1))
    assert body.inner_radius == pytest.approx(1 / 1.1)


def test_body_json_roundtrip():
    body = polytopal_variant(construct(3, 5, 1.1, SeedSpec(2)), 0.3, seed=1)
    back = SpikyBody.from_json(_io.loads(_io.dumps(body.to_json())))
    assert back.fingerprint() == body.fingerprint() and back.is_polytopal


def test_e1_threshold_domain():
    assert e1_threshold(1.1) == pytest.approx(math.pi - 2 * math.asin(1 / 1.1))
    for D in (1.0, math.sqrt(2), 1.5):
        with pytest.raises(PreconditionError):
            e1_threshold(D)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 8), st.sampled_from([1.02, 1.1, 1.3]))
def test_e1_matches_brute_force(seed, N, D):
    body = construct(3, N, D, SeedSpec(seed))
    assert check_e1(body).occurred == brute_e1(body.points, D)


def test_e1_witnesses_are_real():
    body = construct(3, 12, 1.2, SeedSpec(5))
    rep = check_e1(body)
    assert rep.occurred
    for i, j, a in rep.witnesses:
        assert i < j and a < rep.threshold_used + 1e-12


def test_e1_direction_in_D():
    # raising D widens the forbidden angle pi - 2 alpha, so E1 can only switch on
    for seed in range(40):
        pts = construct(3, 4, 1.01, SeedSpec(seed)).points
        seq = [check_e1(from_points(pts, D)).occurred for D in (1.01, 1.05, 1.1, 1.2, 1.3, 1.4)]
        assert seq == sorted(seq)


def test_adversarial_body_triggers_e1():
    body = adversarial_body(np.array([1.0, 0, 0]), 3, 1.1)
    assert check_e1(body).occurred


def test_e1_probability_for_two_spikes():
    # for N = 2 the event is |<X1, X2>| > cos(pi - 2 alpha), probability 2 Omega(pi - 2 alpha)
    D = 1.1
    rng = as_generator(11)
    hits = sum(check_e1(construct(3, 2, D, rng)).occurred for _ in range(4000))
    exact = 2 * cap_measure(3, e1_threshold(D))
    assert abs(hits / 4000 - exact) <= 4 * math.sqrt(exact * (1 - exact) / 4000)


def test_multiplicity_profile_matches_brute_force():
    body = construct(4, 15, 1.1, SeedSpec(6))
    dirs = sample_uniform_many(4, 50, as_generator(7))
    assert np.array_equal(multiplicity_profile(body, dirs, 1.2), brute_counts(body, dirs, 1.2))
    assert np.array_equal(multiplicity_profile(unit_ball(4), dirs, 1.0), np.zeros(50))


def test_e2_prime_recount():
    body = construct(3, 20, 1.1, SeedSpec(8))
    net = build_delta_net(3, 0.3, SeedSpec(9))
    with pytest.warns(UserWarning):
        rep = check_e2_prime(body, net, theta=1.0)
    p = cap_probability(3, body.alpha, 0.3)
    assert rep.threshold_used == pytest.approx(20 * p)
    counts = brute_counts(body, net.centers, body.alpha + 0.3)
    assert np.array_equal(rep.counts, counts)
    assert rep.occurred == bool((counts > 20 * p).any())
    assert rep.max_multiplicity == counts.max()


def test_e2_prime_warns_below_six_and_checks_delta():
    body = construct(3, 5, 1.1, SeedSpec(1))
    net = build_delta_net(3, 0.3, SeedSpec(1))
    with pytest.warns(UserWarning):
        check_e2_prime(body, net, theta=2.0)
    with pytest.raises(PreconditionError):
        check_e2_prime(body, net, theta=6.0, delta=0.31)
    with pytest.raises(DomainError):
        check_e2_prime(construct(4, 5, 1.1, SeedSpec(1)), net, theta=6.0)


def test_adversarial_body_triggers_e2_prime():
    body = adversarial_body(np.array([0, 0, 1.0]), 10, 1.1)
    net = build_delta_net(3, 0.3, SeedSpec(2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cert = certify(body, net, theta=1.0)
    assert cert.e2prime.occurred and cert.lower_bound is None and cert.label == "no bound"


def _clean_certificate():
    net = build_delta_net(3, 0.1, SeedSpec(0), max_consecutive_rejections=200_000)
    for seed in range(200):
        body = construct(3, 3, 1.05, SeedSpec(seed))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cert = certify(body, net, theta=1.5)
        if cert.lower_bound is not None:
            return cert
    raise AssertionError("no clean body found")


def test_certificate_value_and_soundness():
    cert = _clean_certificate()
    assert cert.lower_bound == 2 / (cert.theta * cert.p)
    assert cert.lower_bound == pytest.approx(2 * cert.N / cert.T)
    # every sphere direction sees at most T signed spikes within alpha
    sweep = sample_uniform_many(3, 100_000, as_generator(1))
    assert multiplicity_profile(cert.body, sweep, cert.alpha).max() <= cert.T
    assert cert.label == "probabilistically certified"  # coverage never probed
    doc = _io.loads(_io.dumps(cert.to_json()))
    assert doc["lower_bound"] == cert.lower_bound and doc["schema"] == "spikyball/certificate@1"


def test_certificate_label_on_exact_circle_net():
    from spikyball.sphere import verify_net_coverage
    net = build_delta_net(2, 0.05, SeedSpec(1))
    verify_net_coverage(net, 1, SeedSpec(1))
    body = from_points(np.array([[1.0, 0.0]]), 1.05)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cert = certify(body, net, theta=2.0)
    assert cert.label == "certified"


def test_polytopal_variant_keeps_spikes():
    body = construct(2, 3, 1.1, SeedSpec(3))
    poly = polytopal_variant(body, 0.2)
    assert poly.is_polytopal and np.array_equal(poly.points, body.points)
    assert check_e1(poly).occurred == check_e1(body).occurred
    assert len(poly.polytopal_core) == math.ceil(math.pi / 0.2)
    with pytest.raises(DomainError):
        polytopal_variant(body, 1.0)


def test_net_from_centers_separation_flag():
    assert not net_from_centers(np.array([[1.0, 0, 0], [1.0, 0.01, 0]]), 0.1).separation_verified
