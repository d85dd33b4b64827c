"""Seeded Monte Carlo campaigns and their reports.

Trials are grouped into blocks; block ``stream_id`` draws everything from the
Philox stream ``SeedSpec(master_seed, stream_id, (kind,))``, so a block (and
every trial in it) is reproducible from the config and its stream id alone.
Blocks are farmed out to worker processes in contiguous chunks and merged
in stream order, so the report does not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import multiprocessing
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, _io
from .body import certify, check_e1, construct, e1_threshold, multiplicity_profile
from .bounds import feasibility_scan, greedy_cap_cover
from .caps import binomial_tail_exact, cap_measure, chernoff_bound
from .oracle import AMBIGUOUS, cap_predicate, illuminates, illuminating_cap_distance
from .sphere import RNG_ALGORITHM, SeedSpec, build_delta_net, sample_uniform_many

KINDS = ("mc-e1", "mc-e2", "mc-chernoff", "factcap", "end-to-end", "scan", "cover-bench")
SIGMAS = 4.0
WILSON_Z = 1.959963984540054


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    dim: int = 3
    N: int = 2
    D: float = 1.1
    theta: float | None = None
    delta_policy: str = "alpha/n"
    delta: float | None = None
    trials: int = 1000
    master_seed: int = 0
    block_size: int = 1000
    probes: int = 100_000
    net_rejections: int = 100_000
    success_prob: float | None = None
    boundary_band: float = 1e-3
    dims: list = field(default_factory=list)
    radius: float | None = None
    n_range: list = field(default_factory=list)
    workers: int = 1
    out: str | None = None

    # fields that affect how a campaign runs but not what it computes
    NON_SEMANTIC = ("workers", "out")

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.trials < 0 or self.block_size < 1 or self.workers < 1:
            raise ConfigError("trials must be >= 0, block_size and workers >= 1")
        if self.kind in ("mc-e1", "mc-e2", "factcap", "end-to-end"):
            if self.dim < 2 or self.N < 1:
                raise ConfigError("dim must be >= 2 and N >= 1")
            if not 1.0 < self.D < math.sqrt(2.0):
                raise ConfigError("D must lie in (1, sqrt 2)")
        if self.kind in ("mc-e2", "end-to-end"):
            if self.theta is None or self.theta <= 0:
                raise ConfigError("theta must be positive")
            if self.delta_policy not in ("alpha/n", "explicit"):
                raise ConfigError(f"unknown delta policy {self.delta_policy!r}")
            if self.delta_policy == "explicit" and not (self.delta and self.delta > 0):
                raise ConfigError("explicit delta policy needs a positive delta")
        if self.kind == "mc-chernoff":
            if self.success_prob is None or not 0.0 < self.success_prob < 1.0:
                raise ConfigError("mc-chernoff needs success_prob in (0, 1)")
            if self.theta is None or self.theta <= 0:
                raise ConfigError("theta must be positive")
        if self.kind == "cover-bench" and (not self.dims or self.radius is None):
            raise ConfigError("cover-bench needs dims and radius")
        if self.kind == "scan" and not self.n_range:
            raise ConfigError("scan needs n_range")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names - {"schema"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in doc.items() if k in names}).validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def semantic_dict(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in self.NON_SEMANTIC}

    def config_hash(self) -> str:
        canon = json.dumps(_io.pack(self.semantic_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def resolved_delta(self) -> float:
        alpha = math.asin(1.0 / self.D)
        if self.delta_policy == "explicit":
            return float(self.delta)
        return alpha / (self.dim - 1)


@dataclass
class TrialRecord:
    stream_id: int
    index: int
    outcomes: dict
    max_multiplicity: int | None = None
    certified: bool | None = None
    lower_bound: float | None = None
    error: str | None = None
    wall_time: float = 0.0


# -- per-kind block runners -----------------------------------------------------
#
# Each runner takes (config, shared, stream_id, n_trials) and returns a list of
# TrialRecords. ``shared`` holds data built once per campaign, like the net.


def _run_e1(cfg, shared, sid, count, rng):
    out = []
    for k in range(count):
        body = construct(cfg.dim, cfg.N, cfg.D, rng)
        out.append(TrialRecord(sid, k, {"E1": check_e1(body).occurred}))
    return out


def _run_e2(cfg, shared, sid, count, rng, recount=False):
    net = shared["net"]
    out = []
    for k in range(count):
        body = construct(cfg.dim, cfg.N, cfg.D, rng)
        with warnings.catch_warnings():
            # theta < 6 is a legitimate campaign setting; the report drops the Chernoff row instead
            warnings.simplefilter("ignore", UserWarning)
            cert = certify(body, net, cfg.theta)
        outcomes = {"E1": cert.e1.occurred, "E2PRIME": cert.e2prime.occurred}
        if recount and cert.lower_bound is not None:
            outcomes["recount_ok"] = _recount(body, net, cert)
            outcomes["sweep_ok"] = _sweep_ok(body, cert, shared["sweep"])
        out.append(TrialRecord(sid, k, outcomes, cert.e2prime.max_multiplicity,
                               cert.lower_bound is not None, cert.lower_bound))
    return out


def _recount(body, net, cert) -> bool:
    """Recount net multiplicities from scratch with plain arccos and compare."""
    X = body.points
    dots = np.clip(net.centers @ X.T, -1.0, 1.0)
    near = (np.arccos(dots) <= cert.alpha + cert.delta + 1e-12) | (np.arccos(-dots) <= cert.alpha + cert.delta + 1e-12)
    counts = near.sum(axis=1)
    return bool(counts.max() <= cert.T and math.isclose(2.0 / (cert.theta * cert.p), cert.lower_bound, rel_tol=1e-15))


def _sweep_ok(body, cert, directions) -> bool:
    return bool(multiplicity_profile(body, directions, cert.alpha).max() <= cert.T)


def _run_chernoff(cfg, shared, sid, count, rng):
    thr = cfg.theta * cfg.N * cfg.success_prob
    xi = rng.binomial(cfg.N, cfg.success_prob, size=count)
    hits = int(np.count_nonzero(xi > thr))
    # one aggregated record per block keeps 10^6-trial runs cheap
    return [TrialRecord(sid, 0, {"exceed": hits, "n": count}, max_multiplicity=int(xi.max()) if count else None)]


def _run_factcap(cfg, shared, sid, count, rng):
    out = []
    k = 0
    while len(out) < count:
        body = construct(cfg.dim, cfg.N, cfg.D, rng)
        i = int(rng.integers(cfg.N))
        sign = 1 if rng.random() < 0.5 else -1
        u = sample_uniform_many(cfg.dim, 1, rng)[0]
        if check_e1(body).occurred:
            continue
        dist = illuminating_cap_distance(body, i, u, sign)
        if abs(dist) < cfg.boundary_band:
            out.append(TrialRecord(sid, k, {"in_band": True}))
        else:
            res = illuminates(body, i, u, sign=sign)
            pred = cap_predicate(body, i, u, sign)
            out.append(TrialRecord(sid, k, {"in_band": False, "agree": res.illuminated == pred,
                                            "ambiguous": res.status == AMBIGUOUS, "in_cap": pred}))
        k += 1
    return out


RUNNERS = {"mc-e1": _run_e1, "mc-e2": _run_e2, "end-to-end": lambda *a: _run_e2(*a, recount=True),
           "mc-chernoff": _run_chernoff, "factcap": _run_factcap}


def _run_block(cfg, shared, sid, count):
    rng = SeedSpec(cfg.master_seed, sid, (cfg.kind,)).generator()
    t0 = time.perf_counter()
    try:
        recs = RUNNERS[cfg.kind](cfg, shared, sid, count, rng)
    except Exception as exc:  # a broken block is recorded, not fatal
        recs = [TrialRecord(sid, 0, {}, error=f"{type(exc).__name__}: {exc}")]
    dt = (time.perf_counter() - t0) / max(len(recs), 1)
    for r in recs:
        r.wall_time = dt
    return recs


def _run_chunk(args):
    cfg, shared, jobs = args
    return [_run_block(cfg, shared, sid, count) for sid, count in jobs]


def _blocks(cfg):
    full, rest = divmod(cfg.trials, cfg.block_size)
    jobs = [(s, cfg.block_size) for s in range(full)]
    if rest:
        jobs.append((full, rest))
    return jobs


# -- statistics -------------------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


def bound_row(claim: str, successes: int, n: int, bound: float, relation: str = "<=") -> dict:
    """A bound-comparison row: analytic value, empirical rate, Wilson CI and pass flag.

    relation "<=": pass iff rate <= bound + 4 sigma(bound).
    relation ">=": pass iff rate >= bound - 4 sigma(bound).
    relation "==": pass iff |rate - bound| <= 4 sigma(bound).
    """
    rate = successes / n if n else float("nan")
    b = min(max(bound, 0.0), 1.0)
    sigma = math.sqrt(b * (1 - b) / n) if n else float("inf")
    if relation == "<=":
        ok = rate <= bound + SIGMAS * sigma
    elif relation == ">=":
        ok = rate >= bound - SIGMAS * sigma
    else:
        ok = abs(rate - bound) <= SIGMAS * sigma
    lo, hi = wilson_interval(successes, n)
    return {"claim": claim, "relation": relation, "bound": float(bound), "empirical": rate,
            "successes": successes, "n": n, "sigma": sigma, "ci_low": lo, "ci_high": hi, "pass": bool(ok)}


def check_row(claim: str, ok: bool, detail=None) -> dict:
    return {"claim": claim, "relation": "holds", "bound": None, "empirical": detail,
            "successes": None, "n": None, "sigma": None, "ci_low": None, "ci_high": None, "pass": bool(ok)}


# -- campaigns --------------------------------------------------------------------


@dataclass
class CampaignResult:
    config: ExperimentConfig
    records: list
    rows: list
    aggregates: dict
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def report(self) -> dict:
        """Everything except wall times, which would break bit-identical reruns."""
        return {
            "schema": _io.schema_tag("report"),
            "kind": self.config.kind,
            "config": self.config.semantic_dict(),
            "config_hash": self.config.config_hash(),
            "master_seed": self.config.master_seed,
            "rng": RNG_ALGORITHM,
            "library_version": __version__,
            "aggregates": self.aggregates,
            "rows": self.rows,
            "extra": self.extra,
            "records_digest": records_digest(self.records),
            "passed": self.passed,
        }


def records_digest(records) -> str:
    h = hashlib.sha256()
    for r in records:
        d = asdict(r)
        d.pop("wall_time")
        h.update(json.dumps(_io.pack(d), sort_keys=True).encode())
    return h.hexdigest()


def _shared(cfg) -> dict:
    if cfg.kind not in ("mc-e2", "end-to-end"):
        return {}
    net = build_delta_net(cfg.dim, cfg.resolved_delta(), SeedSpec(cfg.master_seed, 0, ("net",)),
                          max_consecutive_rejections=cfg.net_rejections)
    shared = {"net": net}
    if cfg.kind == "end-to-end":
        shared["sweep"] = sample_uniform_many(cfg.dim, cfg.probes, SeedSpec(cfg.master_seed, 0, ("sweep",)).generator())
    return shared


def _execute(cfg, shared):
    jobs = _blocks(cfg)
    if not jobs:
        return []
    workers = min(cfg.workers, len(jobs))
    if workers == 1:
        chunks = [_run_chunk((cfg, shared, jobs))]
    else:
        size = math.ceil(len(jobs) / workers)
        parts = [(cfg, shared, jobs[i:i + size]) for i in range(0, len(jobs), size)]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            chunks = list(pool.map(_run_chunk, parts))
    return [r for chunk in chunks for block in chunk for r in block]


def _tail(N, p, T):
    """P(Bin(N, p) > T), which is 0 once T reaches N."""
    return 0.0 if T >= N else binomial_tail_exact(N, p, T)


def _count(records, key):
    good = [r for r in records if r.error is None]
    return sum(1 for r in good if r.outcomes.get(key)), len(good)


def run_campaign(config: ExperimentConfig) -> CampaignResult:
    cfg = config.validate()
    if cfg.kind == "scan":
        return _scan_campaign(cfg)
    if cfg.kind == "cover-bench":
        return _cover_campaign(cfg)
    shared = _shared(cfg)
    records = _execute(cfg, shared)
    errors = [(r.stream_id, r.error) for r in records if r.error]
    agg = {"trials_requested": cfg.trials, "failed_blocks": len(errors), "errors": errors}
    rows = []
    extra = {}
    if cfg.kind == "mc-chernoff":
        good = [r for r in records if r.error is None]
        hits = sum(r.outcomes["exceed"] for r in good)
        n = sum(r.outcomes["n"] for r in good)
        thr = cfg.theta * cfg.N * cfg.success_prob
        agg.update(trials=n, exceed=hits)
        if n:
            exact = binomial_tail_exact(cfg.N, cfg.success_prob, thr)
            rows.append(bound_row("P(xi > theta N p) <= exact tail", hits, n, exact))
            if cfg.theta >= 6:
                rows.append(bound_row("P(xi > theta N p) <= 2^(-theta N p)", hits, n,
                                      chernoff_bound(cfg.N, cfg.success_prob, cfg.theta)))
                rows.append(check_row("exact tail <= 2^(-theta N p)",
                                      exact <= chernoff_bound(cfg.N, cfg.success_prob, cfg.theta), exact))
        return CampaignResult(cfg, records, rows, agg)

    if cfg.kind in ("mc-e1", "mc-e2", "end-to-end"):
        e1, n = _count(records, "E1")
        agg.update(trials=n, E1=e1)
        thr = e1_threshold(cfg.D)
        omega = cap_measure(cfg.dim, thr)
        if n:
            rows.append(bound_row("P(E1) <= N^2 Omega(pi - 2 alpha)", e1, n, cfg.N ** 2 * omega))
            if cfg.N == 2:
                rows.append(bound_row("P(E1) == 2 Omega(pi - 2 alpha) for N = 2", e1, n, 2 * omega, "=="))
    if cfg.kind in ("mc-e2", "end-to-end"):
        net = shared["net"]
        delta = net.delta
        alpha = math.asin(1.0 / cfg.D)
        p = 2 * cap_measure(cfg.dim, alpha + delta)
        T = cfg.N * cfg.theta * p
        e2, n = _count(records, "E2PRIME")
        good = [r for r in records if r.error is None]
        both = sum(1 for r in good if not r.outcomes["E1"] and not r.outcomes["E2PRIME"])
        agg.update(E2PRIME=e2, success=both, net_size=net.size, delta=delta, p=p, T=T,
                   max_multiplicity=max((r.max_multiplicity for r in good), default=None))
        extra["net_coverage_confidence"] = net.coverage_confidence
        if n:
            if alpha + delta < math.pi / 2:
                # caps around u and -u are disjoint, so each count is Binomial(N, p)
                rows.append(bound_row("P(E2') <= |net| P(Bin(N,p) > T)", e2, n,
                                      net.size * _tail(cfg.N, p, T)))
            if cfg.theta >= 6 and p < 1.0:
                rows.append(bound_row("P(E2') <= |net| 2^(-theta N p)", e2, n,
                                      net.size * chernoff_bound(cfg.N, p, cfg.theta)))
            omega = cap_measure(cfg.dim, e1_threshold(cfg.D))
            union = cfg.N ** 2 * omega + net.size * (_tail(cfg.N, p, T) if alpha + delta < math.pi / 2 else 1.0)
            rows.append(bound_row("P(no bad event) >= 1 - union bound", both, n, max(0.0, 1.0 - union), ">="))
        if cfg.kind == "end-to-end":
            certs = [r for r in good if r.certified]
            agg.update(certified=len(certs))
            rows.append(check_row("every certificate recounts", all(r.outcomes["recount_ok"] for r in certs), len(certs)))
            rows.append(check_row("no swept direction has alpha-cap multiplicity > T",
                                  all(r.outcomes["sweep_ok"] for r in certs), cfg.probes))
    if cfg.kind == "factcap":
        good = [r for r in records if r.error is None]
        tested = [r for r in good if not r.outcomes["in_band"]]
        agree = sum(1 for r in tested if r.outcomes["agree"])
        agg.update(trials=len(good), tested=len(tested), in_band=len(good) - len(tested), agree=agree,
                   in_cap=sum(1 for r in tested if r.outcomes["in_cap"]),
                   ambiguous=sum(1 for r in tested if r.outcomes["ambiguous"]))
        if good:
            rows.append(check_row("oracle agrees with the alpha-cap predicate off the boundary band",
                                  agree == len(tested), agree))
    return CampaignResult(cfg, records, rows, agg, extra)


def _scan_campaign(cfg) -> CampaignResult:
    scan = feasibility_scan(cfg.D, cfg.n_range, relaxed=True)
    rows = [check_row(f"feasible rows at n={r['n']} pass the net, tail and theta conditions",
                      r["flag_N_le"] and r["flag_net_tail"] and r["flag_theta_ge_6"]) for r in scan.rows if r["feasible"]]
    agg = {"onset": scan.onset, "first_feasible": scan.first_feasible, "grid": len(scan.rows)}
    return CampaignResult(cfg, [], rows, agg, {"table": scan.rows})


def _cover_campaign(cfg) -> CampaignResult:
    rows, table = [], []
    for k, d in enumerate(cfg.dims):
        cover = greedy_cap_cover(int(d), cfg.radius, seed=SeedSpec(cfg.master_seed, k, ("cover",)), probes=cfg.probes)
        tb = cover.volumetric_bound
        table.append({"d": int(d), "size": cover.size, "volumetric_bound": tb, "verified": cover.verified.passed,
                      "worst_angle": cover.verified.worst_angle})
        rows.append(check_row(f"cover of S^{int(d) - 1} verified", cover.verified.passed, cover.verified.probes))
        if tb is not None:
            rows.append(check_row(f"|cover| <= covering numerator / Omega at d={int(d)}", cover.size <= tb, cover.size))
    return CampaignResult(cfg, [], rows, {"grid": len(table)}, {"table": table})


# -- emission ---------------------------------------------------------------------


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        keys = list(rows[0].keys())
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (v.hex() if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def emit_report(result: CampaignResult, out, format: str = "json") -> list[Path]:
    """Write the report; csv also writes the per-trial records and any table.

    Floats are hex-encoded in both formats so files re-ingest bit-exactly.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [_io.write_json(out / "report.json", result.report())]
    if format == "csv":
        rows = []
        for r in result.records:
            d = asdict(r)
            d.pop("wall_time")
            outcomes = d.pop("outcomes")
            d.update({f"o_{k}": v for k, v in outcomes.items()})
            rows.append(d)
        (out / "records.csv").write_text(_csv_text(rows))
        (out / "claims.csv").write_text(_csv_text(result.rows))
        paths += [out / "records.csv", out / "claims.csv"]
        table = result.extra.get("table")
        if table:
            (out / "table.csv").write_text(_csv_text(table))
            paths.append(out / "table.csv")
    elif format != "json":
        raise ValueError(f"unknown format {format!r}")
    return paths


def load_report(path) -> dict:
    return _io.read_json(Path(path), "report")


def omega_curve(d: int, angles) -> list[dict]:
    return [{"d": d, "phi": float(a), "omega": cap_measure(d, float(a))} for a in angles]
