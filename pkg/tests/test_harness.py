import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from spikyball import _io
from spikyball.body import construct, check_e1
from spikyball.caps import binomial_tail_exact, cap_measure
from spikyball.harness import (ConfigError, ExperimentConfig, TrialRecord, bound_row, emit_report, load_report,
                               omega_curve, run_campaign, wilson_interval, _run_block)
from spikyball.sphere import SeedSpec

DATA = Path(__file__).parent / "data"


def test_config_roundtrip_and_hash():
    cfg = ExperimentConfig(kind="mc-e1", dim=3, N=4, trials=10, master_seed=5)
    back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.config_hash() == cfg.config_hash()
    other = ExperimentConfig(kind="mc-e1", dim=3, N=4, trials=10, master_seed=6)
    assert other.config_hash() != cfg.config_hash()
    busy = ExperimentConfig(kind="mc-e1", dim=3, N=4, trials=10, master_seed=5, workers=16, out="x")
    assert busy.config_hash() == cfg.config_hash()


@pytest.mark.parametrize("bad", [
    dict(kind="nope"), dict(kind="mc-e1", D=1.5), dict(kind="mc-e1", trials=-1),
    dict(kind="mc-e2", theta=None), dict(kind="mc-e2", theta=6, delta_policy="explicit"),
    dict(kind="mc-chernoff", theta=6), dict(kind="cover-bench"), dict(kind="scan"),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "mc-e1", "bogus": 1})


def test_wilson_interval_known_value():
    lo, hi = wilson_interval(10, 100)
    assert lo == pytest.approx(0.0552, abs=1e-4) and hi == pytest.approx(0.1744, abs=1e-4)
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_bound_row_has_all_fields():
    row = bound_row("x", 3, 100, 0.05)
    for key in ("bound", "empirical", "ci_low", "ci_high", "pass"):
        assert row[key] is not None
    assert row["pass"]
    assert not bound_row("x", 30, 100, 0.05)["pass"]
    assert bound_row("x", 50, 100, 0.5, "==")["pass"]
    assert not bound_row("x", 10, 100, 0.5, ">=")["pass"]


def test_zero_trials_is_empty_success():
    res = run_campaign(ExperimentConfig(kind="mc-e1", trials=0))
    assert res.records == [] and res.rows == [] and res.exit_code == 0


def test_trial_reproducible_from_stream_id():
    cfg = ExperimentConfig(kind="mc-e1", dim=3, N=4, D=1.1, trials=60, block_size=20, master_seed=3)
    res = run_campaign(cfg)
    replay = _run_block(cfg, {}, 2, 20)
    assert [r.outcomes for r in replay] == [r.outcomes for r in res.records if r.stream_id == 2]
    # and the block's first body is the first body drawn from that stream
    rng = SeedSpec(3, 2, ("mc-e1",)).generator()
    assert check_e1(construct(3, 4, 1.1, rng)).occurred == replay[0].outcomes["E1"]


def test_mc_e1_exact_for_two_spikes():
    res = run_campaign(ExperimentConfig(kind="mc-e1", dim=3, N=2, D=1.1, trials=5000, block_size=500, master_seed=1))
    exact = [r for r in res.rows if r["relation"] == "=="][0]
    assert exact["bound"] == pytest.approx(2 * cap_measure(3, math.pi - 2 * math.asin(1 / 1.1)))
    assert res.passed


def test_mc_chernoff_rows():
    res = run_campaign(ExperimentConfig(kind="mc-chernoff", N=200, success_prob=0.05, theta=6,
                                        trials=100_000, block_size=50_000))
    assert res.aggregates["trials"] == 100_000 and res.aggregates["exceed"] == 0
    assert res.rows[0]["bound"] == binomial_tail_exact(200, 0.05, 60.0)
    assert res.passed
    low = run_campaign(ExperimentConfig(kind="mc-chernoff", N=40, success_prob=0.2, theta=1.2,
                                        trials=40_000, block_size=10_000, master_seed=2))
    assert len(low.rows) == 1 and low.passed  # no Chernoff row below theta = 6


def test_end_to_end_certificates_recount():
    res = run_campaign(ExperimentConfig(kind="end-to-end", dim=3, N=3, D=1.05, theta=1.5, delta_policy="explicit",
                                        delta=0.15, trials=60, block_size=20, probes=5000))
    assert res.aggregates["certified"] > 0
    assert res.passed


def test_failed_block_is_isolated(monkeypatch):
    from spikyball import harness

    def boom(cfg, shared, sid, count, rng):
        if sid == 1:
            raise RuntimeError("injected")
        return harness._run_e1(cfg, shared, sid, count, rng)

    monkeypatch.setitem(harness.RUNNERS, "mc-e1", boom)
    res = run_campaign(ExperimentConfig(kind="mc-e1", dim=3, N=2, trials=30, block_size=10))
    assert res.aggregates["failed_blocks"] == 1
    assert res.aggregates["trials"] == 20
    assert "injected" in res.aggregates["errors"][0][1]


def test_scan_and_cover_campaigns():
    scan = run_campaign(ExperimentConfig(kind="scan", D=1.1, n_range=list(range(2, 60))))
    assert scan.aggregates["onset"]["nontrivial"] == 31 and scan.passed
    cover = run_campaign(ExperimentConfig(kind="cover-bench", dims=[2, 3], radius=1.0, probes=50_000))
    assert cover.passed and len(cover.extra["table"]) == 2


def test_report_golden_file():
    cfg = ExperimentConfig(kind="mc-e1", dim=3, N=3, D=1.1, trials=50, block_size=10, master_seed=123)
    produced = _io.loads(_io.dumps(run_campaign(cfg).report()))
    golden = _io.read_json(DATA / "golden_report_mc_e1.json", "report")
    assert produced == golden


def test_emit_and_reingest(tmp_path):
    res = run_campaign(ExperimentConfig(kind="mc-e1", dim=3, N=3, D=1.1, trials=40, block_size=10, master_seed=9))
    paths = emit_report(res, tmp_path, "csv")
    doc = load_report(tmp_path / "report.json")
    assert doc["aggregates"] == _io.unpack(_io.pack(res.aggregates))
    assert doc["rows"] == _io.unpack(_io.pack(res.rows)) and doc["config_hash"] == res.config.config_hash()
    with open(tmp_path / "records.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 40
    with open(tmp_path / "claims.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res.rows)
    assert float.fromhex(rows[0]["bound"]) == res.rows[0]["bound"]
    assert tmp_path / "records.csv" in paths
    with pytest.raises(ValueError):
        emit_report(res, tmp_path, "xml")


def test_scan_csv_row_count(tmp_path):
    res = run_campaign(ExperimentConfig(kind="scan", D=1.1, n_range=list(range(2, 40))))
    emit_report(res, tmp_path, "csv")
    assert len((tmp_path / "table.csv").read_text().strip().splitlines()) == 1 + 38


def test_worker_counts_agree():
    base = dict(kind="mc-e1", dim=3, N=4, D=1.1, trials=400, block_size=50, master_seed=4)
    reports = {w: _io.dumps(run_campaign(ExperimentConfig(workers=w, **base)).report()) for w in (1, 4)}
    assert reports[1] == reports[4]


def test_omega_curve():
    rows = omega_curve(3, np.linspace(0.1, 3.0, 5))
    assert rows[0]["omega"] == pytest.approx((1 - math.cos(0.1)) / 2)
