"""Acceptance criteria, one test each; every test prints a single pass/fail line."""

import math
import time
import warnings
from fractions import Fraction

import numpy as np

from spikyball import _io
from spikyball.body import certify, construct, unit_ball
from spikyball.bounds import (covering_numerator, cross_polytope, distant_illuminators, feasibility_scan,
                              greedy_cap_cover, illuminate_with_cover, illumination_parameter_sum,
                              illumination_upper_bound, plan_parameters)
from spikyball.caps import (binomial_tail_exact, bw_lower, bw_upper, bw_upper_limit, cap_measure,
                            cap_scaling_bound, chernoff_bound)
from spikyball.harness import ExperimentConfig, run_campaign
from spikyball.oracle import illuminates, simplex_directions
from spikyball.sphere import SeedSpec, as_generator, build_delta_net, sample_uniform_many

from test_bounds import GOLDEN


def test_criterion_01_cap_bounds(acceptance):
    rec = acceptance(1, 10)
    angles = np.linspace(0, math.pi / 2, 102)[1:-1]
    checks = violations = 0
    worst_identity = 0.0
    for n in range(1, 51):
        for phi in angles:
            om = cap_measure(n + 1, phi)
            checks += 1
            violations += not bw_lower(n, phi) < om
            if phi <= bw_upper_limit(n):
                checks += 1
                violations += not om < bw_upper(n, phi)
            for frac in (0.25, 0.5, 0.75):
                t = 1 + (math.pi / (2 * phi) - 1) * frac
                lhs, rhs = cap_measure(n + 1, t * phi), cap_scaling_bound(n, phi, t)
                checks += 1
                if n == 1:
                    # on the circle Omega is linear in the angle, so the scaling bound is an identity
                    err = abs(lhs - rhs) / rhs
                    worst_identity = max(worst_identity, err)
                    violations += err > 1e-14
                else:
                    violations += not lhs < rhs
    rec.finish(violations == 0, f"{checks} comparisons, {violations} violations "
                                f"(n=1 scaling identity holds to {worst_identity:.1e})")


def test_criterion_02_cap_measure_oracles(acceptance):
    rec = acceptance(2, 60)
    worst = 0.0
    for phi in np.linspace(0.001, math.pi - 0.001, 500):
        worst = max(worst, abs(cap_measure(2, phi) - phi / math.pi),
                    abs(cap_measure(3, phi) - (1 - math.cos(phi)) / 2))
    samples = 10**7
    z_worst = 0.0
    for d in (4, 8):
        rng = as_generator(SeedSpec(2024, d, ("mc-cap",)))
        phis = (0.3, 0.8, 1.2, math.pi / 2, 2.0)
        hits = np.zeros(len(phis))
        for _ in range(10):
            x = sample_uniform_many(d, samples // 10, rng)[:, 0]
            hits += [(x >= math.cos(p)).sum() for p in phis]
        for h, p in zip(hits, phis):
            om = cap_measure(d, p)
            z_worst = max(z_worst, abs(h / samples - om) / math.sqrt(om * (1 - om) / samples))
    ok = worst <= 1e-10 and z_worst <= 4
    rec.finish(ok, f"closed-form error {worst:.1e}; Monte Carlo 10^7 samples d=4,8 worst {z_worst:.2f} SE")


def test_criterion_03_chernoff(acceptance):
    rec = acceptance(3, 120)
    grid = [(N, p) for N in (10, 25, 50, 75, 100, 125, 150, 175, 190, 200)
            for p in (0.001, 0.01, 0.03, 0.08, 0.16)]
    exact_bad = mc_bad = 0
    for k, (N, p) in enumerate(grid):
        exact = binomial_tail_exact(N, p, 6 * N * p)
        exact_bad += exact > chernoff_bound(N, p, 6)
        cfg = ExperimentConfig(kind="mc-chernoff", N=N, success_prob=p, theta=6, trials=10**6,
                               block_size=250_000, master_seed=7000 + k)
        res = run_campaign(cfg)
        row = [r for r in res.rows if r["claim"].endswith("exact tail")][0]
        mc_bad += not row["pass"]
    rec.finish(exact_bad == 0 and mc_bad == 0,
               f"{len(grid)} grid points: exact tail above 2^(-6Np) {exact_bad} times, "
               f"10^6-trial empirical tail above exact + 4 sigma {mc_bad} times")


def test_criterion_04_e1_bound(acceptance):
    rec = acceptance(4, 120)
    notes, ok = [], True
    for N in (2, 5, 10):
        res = run_campaign(ExperimentConfig(kind="mc-e1", dim=3, N=N, D=1.1, trials=10**5,
                                            block_size=5000, master_seed=40 + N))
        ok &= res.passed and (N != 2 or len(res.rows) == 2)
        notes.append(f"N={N}: {res.rows[0]['empirical']:.4f} vs {min(res.rows[0]['bound'], 1):.4f}")
        if N == 2:
            notes.append(f"exact {res.rows[1]['bound']:.4f}")
    rec.finish(ok, "; ".join(notes))


def test_criterion_05_illuminating_cap(acceptance):
    rec = acceptance(5, 300)
    tested = agree = band = amb = inside = 0
    for d in (3, 4):
        for D in (1.05, 1.1):
            res = run_campaign(ExperimentConfig(kind="factcap", dim=d, N=4, D=D, trials=260, block_size=65,
                                                master_seed=500 + d * 10 + int(D * 100)))
            a = res.aggregates
            tested += a["tested"]
            agree += a["agree"]
            band += a["in_band"]
            amb += a["ambiguous"]
            inside += a["in_cap"]
    ok = tested >= 1000 and agree == tested
    rec.finish(ok, f"{agree}/{tested} probes agree ({inside} inside the cap, {band} in the 1e-3 band "
                   f"skipped, {amb} ambiguous)")


def _independent_recount(body, net, theta, delta):
    alpha = math.asin(1 / body.D)
    p = 2 * cap_measure(body.dimension, alpha + delta)
    T = body.N * theta * p
    ang = np.arccos(np.clip(net.centers @ body.points.T, -1, 1))
    counts = (ang <= alpha + delta + 1e-12).sum(axis=1) + (math.pi - ang <= alpha + delta + 1e-12).sum(axis=1)
    return counts.max(), T, 2 / (theta * p)


def test_criterion_06_certificate_soundness(acceptance):
    rec = acceptance(6, None)
    setups = [(3, 3, 1.05, 1.5, 0.1, 40), (4, 4, 1.03, 1.5, 0.15, 20), (5, 200, 1.0003, 1.2, 0.3, 2)]
    certs = bad = 0
    slowest = 0.0
    per_setup = []
    for d, N, D, theta, delta, tries in setups:
        before = certs
        t_setup = time.perf_counter()
        net = build_delta_net(d, delta, SeedSpec(66, d, ("net",)))
        sweep = sample_uniform_many(d, 10**5, as_generator(SeedSpec(66, d, ("sweep",))))
        t_setup = time.perf_counter() - t_setup
        for s in range(tries):
            t0 = time.perf_counter()
            body = construct(d, N, D, SeedSpec(600 + s, d))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cert = certify(body, net, theta)
            if cert.lower_bound is not None:
                certs += 1
                mx, T, lb = _independent_recount(body, net, theta, delta)
                signed = body.signed_points()
                alpha_mult = (np.arccos(np.clip(sweep @ signed.T, -1, 1)) < cert.alpha).sum(axis=1).max()
                bad += not (mx <= T and lb == cert.lower_bound and alpha_mult <= T and
                            math.isclose(T, cert.T, rel_tol=1e-15))
            slowest = max(slowest, t_setup + time.perf_counter() - t0)
        per_setup.append(f"d={d},N={N}: {certs - before}/{tries}")
    ok = certs >= 10 and bad == 0 and slowest < 120 and certs > before
    rec.finish(ok, f"{certs} certificates ({', '.join(per_setup)}) recounted and swept with 10^5 directions, "
                   f"{bad} unsound; "
                   f"slowest body including its net and sweep {slowest:.1f}s (limit 120s, d<=5, N<=200)")


def test_criterion_07_planner(acceptance):
    rec = acceptance(7, 60)
    ok = Fraction(2, 36) >= Fraction(1, 20)
    worst = 0.0
    for n in range(2, 2001):
        plan = plan_parameters(1.1, n)
        worst = max(worst, abs(plan.log_lower_bound - (n * math.log(1.1) - math.log(18))))
        ok &= plan.log_lower_bound >= n * math.log(1.1) + math.log(0.05)
    scan = feasibility_scan(1.1, range(2, 2001))
    onset = scan.onset["feasible"]
    pinned = scan.onset == GOLDEN["onsets_2_2000"]["1.1"]
    p100 = plan_parameters(1.1, 100)
    pinned &= p100.N == int(GOLDEN["plans_D_1.1"]["100"]["N"])
    ok &= onset is not None and pinned and worst < 1e-9
    rec.finish(ok, f"D^n/18 >= D^n/20 exactly; log lower bound error {worst:.1e} up to n=2000; all three conditions "
                   f"onset n={onset}, nontrivial bound from n={scan.onset['nontrivial']}, pins match: {pinned}")


def test_criterion_08_covering_upper_bound(acceptance):
    rec = acceptance(8, 600)
    D = 1.1
    alpha = math.asin(1 / D)
    notes, ok = [], True
    for d in (3, 4, 5):
        cover = greedy_cap_cover(d, alpha, seed=SeedSpec(88, d), probes=10**6)
        bound = covering_numerator(d) / cap_measure(d, alpha)
        ok &= cover.verified.passed and cover.size <= bound
        upper = illumination_upper_bound(D, d)
        # spiky bodies at this D; with alpha + delta < pi/2 a clean E1 check is enough to certify
        net = build_delta_net(d, 0.4, SeedSpec(88, d, ("net",)))
        lit = certified = 0
        for s in range(8):
            body = construct(d, 2, D, SeedSpec(880 + s, d))
            rep = illuminate_with_cover(body, cover, cross_check=4, boundary_probes=2000, seed=s)
            ok &= rep.passed
            lit += rep.passed
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cert = certify(body, net, 6.0)
            if cert.lower_bound is not None:
                certified += 1
                ok &= upper >= cert.lower_bound and cover.size >= cert.lower_bound
        ok &= certified > 0
        notes.append(f"d={d}: |cover|={cover.size} <= {bound:.1f}, lit {lit}/8 bodies, "
                     f"upper {upper:.1f} >= lower on {certified} certified")
    rec.finish(ok, "; ".join(notes))


def test_criterion_09_smooth_baseline(acceptance):
    rec = acceptance(9, 60)
    total = lit = 0
    for d in (3, 4, 5):
        ball = unit_ball(d)
        S = simplex_directions(d)
        for b in sample_uniform_many(d, 1000, as_generator(SeedSpec(99, d))):
            total += 1
            order = np.argsort(S @ b)
            lit += any(illuminates(ball, b, S[j]).illuminated for j in order[:2])
    rec.finish(lit == total, f"{lit}/{total} boundary probes illuminated by the d+1 simplex directions")


def test_criterion_10_application(acceptance):
    rec = acceptance(10, 60)
    net = build_delta_net(3, 0.1, SeedSpec(10, 0, ("net",)), max_consecutive_rejections=200_000)
    cert = None
    for s in range(300):
        body = construct(3, 3, 1.05, SeedSpec(1000 + s))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = certify(body, net, 1.5)
        if c.lower_bound is not None:
            cert = c
            break
    cover = greedy_cap_cover(3, cert.body.alpha - 0.05, seed=SeedSpec(10, 1), probes=200_000)
    ill = illumination_parameter_sum(cert.body, distant_illuminators(cover.centers, 100.0))
    ok = ill.total >= ill.count >= cert.lower_bound
    vein = {}
    for n in (4, 9, 16):
        res = illumination_parameter_sum(unit_ball(n), cross_polytope(n, math.sqrt(n)), mode="containment")
        vein[n] = res.total
        ok &= res.total == 2 * n ** 1.5
    rec.finish(ok, f"ill sum {ill.total:.1f} >= {ill.count} points >= certified {cert.lower_bound:.3f}; "
                   f"cross-polytope sums {vein} equal 2n^(3/2)")


def test_criterion_11_reproducibility(acceptance):
    rec = acceptance(11, None)
    configs = [
        dict(kind="mc-e1", dim=3, N=5, D=1.1, trials=2000, block_size=100),
        dict(kind="mc-e2", dim=3, N=6, D=1.1, theta=6, delta_policy="explicit", delta=0.3, trials=200, block_size=20),
        dict(kind="mc-chernoff", N=150, success_prob=0.02, theta=6, trials=200_000, block_size=10_000),
        dict(kind="factcap", dim=3, N=3, D=1.1, trials=32, block_size=2),
        dict(kind="end-to-end", dim=3, N=3, D=1.05, theta=1.5, delta_policy="explicit", delta=0.15,
             trials=64, block_size=4, probes=2000),
        dict(kind="scan", D=1.1, n_range=list(range(2, 200))),
        dict(kind="cover-bench", dims=[2, 3], radius=1.1, probes=20_000),
    ]
    same = 0
    for cfg in configs:
        reports = {_io.dumps(run_campaign(ExperimentConfig(master_seed=11, workers=w, **cfg)).report())
                   for w in (1, 4, 16)}
        same += len(reports) == 1
    rec.finish(same == len(configs), f"{same}/{len(configs)} campaign kinds bit-identical across 1, 4, 16 workers")
