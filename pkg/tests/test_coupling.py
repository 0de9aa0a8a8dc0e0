import pytest

from axelrod1d.coupling import couple_run, rate_audit, wilson_interval
from axelrod1d.engine import Fault
from axelrod1d.model import ConfigurationError, Horizon, SystemParams, monoculture


def test_couple_run_passes():
    report = couple_run(SystemParams(3, 2, 64, seed=1), Horizon(events_max=10_000))
    assert report.passed
    assert report.first_divergence is None
    assert report.events_compared > 0


def test_couple_run_monoculture():
    params = SystemParams(3, 2, 32, seed=1)
    report = couple_run(params, Horizon(events_max=1000, until_absorbed=False), initial=monoculture(params), policy="all")
    assert report.passed
    assert report.accepted == 0
    assert report.events_compared == 1000


@pytest.mark.parametrize("fault", list(Fault))
def test_faults_are_detected(fault):
    report = couple_run(SystemParams(3, 2, 64, seed=1), Horizon(events_max=10_000), fault=fault)
    assert not report.passed
    assert report.first_divergence is not None


@pytest.mark.parametrize("N,F", [(8, 2), (16, 3), (16, 5)])
def test_small_sweep(N, F):
    for seed in range(20):
        assert couple_run(SystemParams(F, 2, N, seed=seed), Horizon(events_max=100_000)).passed


def test_path_topology_couples():
    for seed in range(10):
        assert couple_run(SystemParams(3, 2, 20, "path", seed=seed), Horizon(events_max=20_000)).passed


def test_couple_rejects_q3():
    with pytest.raises(ConfigurationError):
        couple_run(SystemParams(3, 3, 16))


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 1000)[0] == 0.0
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_rate_audit_examples():
    t3 = rate_audit(SystemParams(3, 2, 200, seed=5), 10_000)
    rows = {r.occupancy: r for r in t3.rows}
    assert rows[1].low <= 2 / 3 <= rows[1].high
    assert rows[3].accepted == 0 and rows[3].trials >= 1000
    t2 = rate_audit(SystemParams(2, 2, 200, seed=5), 10_000)
    r1 = t2.rows[0]
    assert r1.low <= 0.5 <= r1.high
    assert t3.passed and t2.passed


def test_rate_audit_insufficient():
    table = rate_audit(SystemParams(3, 2, 20, seed=5), 10_000, max_replicas=1)
    assert any(r.status == "insufficient" for r in table.rows)
    assert table.passed
