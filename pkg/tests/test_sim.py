import math

import pytest

from mp3presence import records, sim
from mp3presence.sim import MetricsRow, SimConfig


def test_long_term_db_holds_one_record_per_client():
    res = sim.run_sim(SimConfig(N=100, n_fmax=10, lt_epochs=3, st_epochs_per_lt=5,
                                pir_mode="metered", observers=3, seed=1))
    lt = [r for r in res.rows if r.kind == "lt"]
    st = [r for r in res.rows if r.kind == "st"]
    assert [r.index for r in lt] == [1, 2, 3] and len(st) == 15
    assert all(r.db_records == 100 for r in lt)
    assert all(r.dp5_baseline_records == 1000 for r in lt)
    assert not res.mismatches
    assert all(a == b for a, b in res.conservation)


def test_same_seed_same_csv():
    cfg = dict(N=8, n_fmax=4, lt_epochs=2, st_epochs_per_lt=2, online_probability=0.5,
               revocation_rate=0.2, seed=11)
    a = sim.rows_to_csv(sim.run_sim(SimConfig(**cfg)).rows)
    b = sim.rows_to_csv(sim.run_sim(SimConfig(**cfg)).rows)
    assert a == b
    assert a.splitlines()[0] == ",".join(f.name for f in sim.fields(MetricsRow))


def test_ground_truth_with_revocations_and_skips():
    res = sim.run_sim(SimConfig(N=10, n_fmax=5, lt_epochs=5, st_epochs_per_lt=2, online_probability=0.5,
                                revocation_rate=0.25, skips=[(2, 1, 2), (7, 3, 1)], seed=4))
    assert res.mismatches == []
    assert res.checks["revocations_seen"] > 0
    assert res.checks["catch_ups"] >= 1
    assert res.checks["online_seen"] > 0


def test_registration_bytes_constant_in_n_fmax():
    per_client = set()
    for n_fmax in (10, 100, 1000):
        res = sim.run_sim(SimConfig(N=4, n_fmax=n_fmax, friends_per_client=2, lt_epochs=1,
                                    st_epochs_per_lt=1, pir_mode="metered", observers=0))
        per_client.add(res.rows[0].reg_server_in_bytes / 4)
    assert len(per_client) == 1


def test_dp5_baseline():
    cfg = SimConfig(N=1000, n_fmax=100)
    n, size = sim.dp5_baseline(cfg)
    assert n == 100_000
    s = sim.dp5_record_len(cfg)
    assert s == 32 + records.st_ct_len()
    assert size >= n * s
    n2, size2 = sim.dp5_baseline(SimConfig(N=2000, n_fmax=100))
    assert n2 == 2 * n and size2 > size
    assert sim.dp5_baseline(cfg, record_len=10)[1] != size


def test_padded_bucket_model():
    r = math.ceil(math.sqrt(400 * 100))
    per = math.ceil(400 / r + math.sqrt(400 / r))
    assert sim.padded_bucket_bytes(400, 100) == r * per * 100


def _row(n, kind, value):
    return MetricsRow(n, kind, 1, value, 1, value, value, 0, 1.0, 1.0, 1, value)


def test_fit_scaling_recovers_power_law():
    rows = [_row(n, k, int(1000 * n**1.5)) for n in (100, 200, 400, 800) for k in ("lt", "st")]
    fits = {f.quantity: f for f in sim.fit_scaling(rows)}
    assert fits["lt_db_bytes"].slope == pytest.approx(1.5, abs=1e-3)
    assert fits["lt_db_bytes"].r2 > 0.9999
    with pytest.raises(ValueError):
        sim.fit_scaling(rows[:6])


@pytest.mark.parametrize("bad", [
    dict(t=2), dict(n_rev=0), dict(friends_per_client=11), dict(pir_mode="fast"),
    dict(online_probability=1.5), dict(skips=[(99, 1, 1)]), dict(N=0),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        sim.run_sim(SimConfig(**{"N": 20, "n_fmax": 10, **bad}))


def test_config_from_dict():
    cfg = SimConfig.from_dict({"N": 5, "skips": [[1, 2, 3]]})
    assert cfg.skips == [(1, 2, 3)]
    with pytest.raises(ValueError):
        SimConfig.from_dict({"N": 5, "bogus": 1})
