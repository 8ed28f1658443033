import dataclasses

import pytest

from icl_csma.analytic_model import BackoffLadder, design_ladder, ladder_throughput, solve_tau
from icl_csma.mac_simulator import (
    RESULT_CSV_COLUMNS,
    RetryPolicy,
    SimConfig,
    SimResult,
    empirical_tau,
    result_csv_row,
    result_record,
    run,
)


def test_single_node_renewal(table1):
    # no contention: cycle = E[backoff] idle slots + one success, so
    # U -> T_P / (T_s + (W_0 - 1)/2 * T_sigma)
    config = SimConfig(1, BackoffLadder((32,), 1024), table1, 500_000, seed=11)
    result = run(config)
    closed = table1.payload_us / (table1.success_us + 15.5 * table1.slot_time_us)
    assert result.throughput == pytest.approx(closed, rel=5e-3)
    assert result.collisions == 0
    assert empirical_tau(result) == pytest.approx(2.0 / 33.0, rel=2e-2)


def test_determinism(table1):
    lad = design_ladder(5, table1, 4, 4096)
    config = SimConfig(5, lad, table1, 50_000, seed=42)
    assert run(config) == run(config)
    assert run(config) != run(dataclasses.replace(config, seed=43))


def test_accounting_identity(table1):
    config = SimConfig(4, BackoffLadder.beb(16, 3, 1024), table1, 37_123, seed=9)
    r = run(config)
    idle_slots = config.horizon_slots - r.successes - r.collisions
    assert (r.successes * table1.success_us + r.collisions * table1.collision_us
            + idle_slots * table1.slot_time_us) == r.total_time_us
    assert r.total_time_us == r.busy_time_us + r.idle_time_us


def test_throughput_never_exceeds_payload_fraction(table1):
    cap = table1.payload_us / table1.success_us
    for n, w0, seed in [(1, 2, 0), (2, 2, 1), (3, 8, 2), (12, 64, 3)]:
        r = run(SimConfig(n, BackoffLadder.beb(w0, 2, 512), table1, 30_000, seed=seed))
        assert 0.0 <= r.throughput <= cap


def test_degenerate_w0_one(table1):
    # W_0 = 1 forces both nodes to collide immediately; only the higher
    # stages ever separate them
    lad = BackoffLadder((1, 2, 4, 8), 8, degenerate=True)
    r = run(SimConfig(2, lad, table1, 50_000, seed=3))
    assert r.collisions > 0
    assert r.successes > 0  # stage escalation eventually resolves contention
    first = run(SimConfig(2, lad, table1, 1, seed=3))
    assert first.collisions == 1 and first.successes == 0
    # attempts are counted independently of outcomes
    assert empirical_tau(first) == 1.0


def test_agreement_with_model(table1):
    lad = design_ladder(10, table1, 8, 32768)
    analytic = ladder_throughput(lad, 10, table1)
    r = run(SimConfig(10, lad, table1, 1_000_000, seed=1))
    assert r.throughput == pytest.approx(analytic, rel=2e-2)
    fp = solve_tau(lad, 10)
    assert empirical_tau(r) == pytest.approx(fp.tau, rel=5e-2)
    assert r.collision_rate == pytest.approx(fp.p, rel=1e-1)


def test_config_validation(table1):
    lad = BackoffLadder((32,), 1024)
    with pytest.raises(ValueError):
        SimConfig(0, lad, table1, 100, seed=1)
    with pytest.raises(ValueError):
        SimConfig(2, lad, table1, 0, seed=1)
    with pytest.raises(ValueError):
        SimConfig(2, lad, table1, 100, seed=-1)
    with pytest.raises(ValueError):
        SimConfig(2, lad, table1, 100, seed=1, retry_policy="drop")


def test_csv_row_and_record(table1):
    config = SimConfig(3, BackoffLadder.beb(16, 2, 256), table1, 5_000, seed=77)
    result = run(config)
    row = result_csv_row(config, result)
    assert RESULT_CSV_COLUMNS == ("seed", "n_nodes", "K", "W_0", "throughput",
                                  "tau_emp", "p_emp", "successes", "collisions")
    assert row[:4] == [77, 3, 2, 16]
    assert row[4] == result.throughput and row[8] == result.collisions
    record = result_record(config, result)
    assert record["ladder"] == [16, 32, 64]
    assert record["retry_policy"] == RetryPolicy.STAY_AT_MAX.value
    assert record["total_time_us"] == result.total_time_us


def test_result_is_frozen(table1):
    r = run(SimConfig(2, BackoffLadder((8, 16), 64), table1, 1_000, seed=5))
    assert isinstance(r, SimResult)
    with pytest.raises(dataclasses.FrozenInstanceError):
        r.throughput = 0.0
