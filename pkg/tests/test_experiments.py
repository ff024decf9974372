import csv
import io
import math

import numpy as np
import pytest

from blockcycle import dynamics as dyn
from blockcycle.config import dump_config, parse_config_text
from blockcycle.experiments import (
    CampaignConfig,
    CampaignTable,
    ConfigError,
    NoiseSpec,
    flip_noise,
    run_campaign,
    trial_revival,
)
from blockcycle.state import SpinState
from blockcycle.topology import dense_network

HEADER_TAIL = ["p", "trials", "revived", "revival_rate", "stderr", "mean_T", "ties_total", "seed", "wall_ms"]


def rows(table):
    return list(csv.DictReader(io.StringIO(table.to_csv())))


def test_flip_noise_extremes():
    x = SpinState.from_spins(np.random.default_rng(0).choice([-1, 1], 100))
    assert flip_noise(x, NoiseSpec(0.0, seed=1)) == x
    assert flip_noise(x, NoiseSpec(1.0, seed=1)) == -x
    assert flip_noise(x, NoiseSpec(0.3, seed=1)) == flip_noise(x, NoiseSpec(0.3, seed=1))
    with pytest.raises(ValueError):
        NoiseSpec(1.5)


def test_trial_revival_noiseless_and_dense():
    net = dense_network([5], 201)
    orbit = dyn.reference_orbit(net.partition, "+--+-")
    rec = trial_revival(net, orbit, NoiseSpec(0.0, seed=3))
    assert (rec.revived, rec.T, rec.flips) == (True, 0, 0)
    for seed in range(5):
        rec = trial_revival(net, orbit, NoiseSpec(0.2, seed=seed))
        assert rec.revived and rec.T == 1 and rec.ties == 0
    with pytest.raises(ValueError):
        trial_revival(net, orbit, NoiseSpec(0.1), mode="nope")


def test_csv_schema_and_stderr():
    cfg = CampaignConfig("fig1a", seed=4, lengths=(10,), d_values=(11, 21), p_values=(0.0, 0.3), trials=8)
    table = run_campaign(cfg)
    lines = table.to_csv().splitlines()
    assert lines[0].split(",") == ["experiment", "ell", "d", "h", *HEADER_TAIL]
    out = rows(table)
    assert [(r["d"], r["p"]) for r in out] == [("11", "0"), ("11", "0.3"), ("21", "0"), ("21", "0.3")]
    for r in out:
        rate = int(r["revived"]) / int(r["trials"])
        assert float(r["revival_rate"]) == pytest.approx(rate)
        assert float(r["stderr"]) == pytest.approx(math.sqrt(rate * (1 - rate) / 8))
        assert r["wall_ms"] == "" and r["seed"] == "4"
    assert all(r["revival_rate"] == "1" for r in out if r["p"] == "0")


def test_campaign_is_deterministic_and_schedule_free():
    base = dict(seed=9, lengths=(12,), d_values=(15,), p_values=(0.2, 0.4), trials=12)
    a = run_campaign(CampaignConfig("fig1a", **base)).to_csv()
    b = run_campaign(CampaignConfig("fig1a", **base)).to_csv()
    c = run_campaign(CampaignConfig("fig1a", threads=4, **base)).to_csv()
    assert a == b == c
    d = run_campaign(CampaignConfig("fig1a", **{**base, "seed": 10})).to_csv()
    assert d != a


def test_fixed_topology_mode():
    cfg = CampaignConfig("fig1a", seed=2, lengths=(8,), d_values=(9,), p_values=(0.3,), trials=6, resample_topology=False)
    assert run_campaign(cfg).to_csv() == run_campaign(cfg).to_csv()


def test_timing_column_when_requested():
    cfg = CampaignConfig("fig1a", seed=1, lengths=(6,), d_values=(7,), p_values=(0.1,), trials=2, record_timing=True)
    assert float(rows(run_campaign(cfg))[0]["wall_ms"]) >= 0.0


def test_zero_success_rows_are_flagged():
    cfg = CampaignConfig("fig1a", seed=1, lengths=(10,), d_values=(11,), p_values=(0.5,), trials=10)
    table = run_campaign(cfg)
    row = table.rows[0]
    assert row["revived"] == 0 and row["zero_success"] and row["stderr"] == 0.0
    assert table.summary().splitlines()[1].endswith("*")


def test_fig1b_noiseless_and_k_bound():
    cfg = CampaignConfig("fig1b", seed=3, lengths=(5, 7), d_values=(21,), k_values=(0, 3, 21), p_values=(0.0,), trials=4)
    out = rows(run_campaign(cfg))
    assert [r["k"] for r in out] == ["0", "3", "21"]
    assert all(r["revival_rate"] == "1" for r in out)
    with pytest.raises(ValueError):
        run_campaign(CampaignConfig("fig1b", seed=3, lengths=(5,), d_values=(7,), k_values=(8,), p_values=(0.1,)))


def test_adversarial_nodes_reduces_to_plain_sparse():
    common = dict(seed=5, lengths=(15,), d_values=(25,), p_values=(0.35,), trials=20)
    plain = run_campaign(CampaignConfig("fig1a", **common)).rows[0]
    none = run_campaign(CampaignConfig("adversarial_nodes", counts=(0,), **common)).rows[0]
    assert none["revived"] == plain["revived"]
    assert none["mean_T"] == plain["mean_T"]


def test_all_neurons_adversarial_never_revive():
    cfg = CampaignConfig("adversarial_nodes", seed=5, lengths=(10,), d_values=(5,), counts=(50,), p_values=(0.0, 0.2), trials=10)
    assert [r["revived"] for r in run_campaign(cfg).rows] == [0, 0]


def test_global_convergence_dense_exhaustive():
    cfg = CampaignConfig("global_convergence", seed=1, kind="dense", lengths=(4,), d_values=(2,), exhaustive=True, horizon=4)
    row = run_campaign(cfg).rows[0]
    assert row["trials"] == 256 and row["revived"] == 256
    assert row["criterion"] == "periodic"
    with pytest.raises(ValueError):
        run_campaign(CampaignConfig("global_convergence", seed=1, kind="dense", lengths=(4,), d_values=(6,), exhaustive=True))


def test_dense_monochromatic_start_converges_immediately():
    net = dense_network([3, 5], 4)
    orbit = dyn.reference_orbit(net.partition, "+--|+-+--")
    rep = dyn.detect_cycle(net, orbit.state_at(0), 20)
    assert rep.transient == 0


def test_global_convergence_sparse_small():
    cfg = CampaignConfig("global_convergence", seed=2, lengths=(20,), d_values=(15,), trials=10)
    row = run_campaign(cfg).rows[0]
    assert row["criterion"] == "monochromatic" and row["trials"] == 10
    assert row["mean_T"] is None or row["mean_T"] <= 20


def test_lcm_growth_rows():
    cfg = CampaignConfig("lcm_growth", seed=3, m_values=(500, 2000), repetitions=5)
    out = run_campaign(cfg).rows
    assert [r["b"] for r in out] == [math.ceil(500**0.3), math.ceil(2000**0.3)]
    assert all(0.7 < r["ratio_mean"] < 1.3 for r in out)
    full = run_campaign(CampaignConfig("lcm_growth", seed=3, m_values=(10_000,), full_range=True)).rows[0]
    assert full["prediction"] == 10_000.0 and 0.9 <= full["ratio_mean"] <= 1.1


def test_lcm_growth_flags_empty_samples():
    cfg = CampaignConfig("lcm_growth", seed=3, m_values=(2,), b=1, delta=0.01, repetitions=10)
    row = run_campaign(cfg).rows[0]
    assert row["empty"] > 0 and row["psi_mean"] == 0.0
    assert row["zero_success"]
    with pytest.raises(ValueError):
        CampaignConfig("lcm_growth", seed=1, delta=1.0)


def test_period_law_campaign():
    cfg = CampaignConfig("period_law", seed=1, length_sets=((3, 4), (5,), (2, 2)), d_values=(1, 2))
    out = run_campaign(cfg).rows
    assert [r["labelings"] for r in out] == [72, 72, 30, 30, 4, 4]
    assert all(r["violations"] == 0 for r in out)
    rnd = run_campaign(CampaignConfig("period_law", seed=1, length_sets=(), random_sets=4, label_limit=30, max_total=16))
    assert all(r["violations"] == 0 for r in rnd.rows)


def test_config_text_round_trip():
    text = """
    # revival grid
    experiment = fig1a
    seed = 12          # master seed
    lengths = 200
    d_values = 250, 500
    p_values = 0.1, 0.3
    trials = 50
    """
    cfg = parse_config_text(text)
    assert cfg.d_values == (250, 500) and cfg.p_values == (0.1, 0.3) and cfg.seed == 12
    assert parse_config_text(dump_config(cfg)) == cfg
    sets = parse_config_text("experiment = period_law\nseed = 1\nlength_sets = 3,4; 5; 2,3,5\n")
    assert sets.length_sets == ((3, 4), (5,), (2, 3, 5))
    assert parse_config_text(dump_config(sets)) == sets


@pytest.mark.parametrize(
    "text,needle",
    [
        ("experiment = fig1a\n", "seed"),
        ("experiment = fig1a\nseed = 1\nbogus = 3\n", "bogus"),
        ("experiment = fig1a\nseed = 1\nseed = 2\n", ":3"),
        ("experiment = fig1a\nseed = 1\njust words\n", ":3"),
        ("experiment = fig1a\nseed = one\n", "seed"),
        ("experiment = nope\nseed = 1\n", "nope"),
        ("experiment = fig1a\nseed = 1\np_values = 0.1, 2\n", "p"),
    ],
)
def test_config_errors(text, needle):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text, "c.cfg")
    assert needle in str(err.value)


def test_table_formatting():
    t = CampaignTable("x", ("lengths",), seed=1)
    t.add({"lengths": (3, 4)}, 0.25, 4, 2, [1, 2], 0, 1.5)
    assert t.to_csv().splitlines()[1] == "x,3;4,0.25,4,2,0.5,0.25,1.5,0,1,"


# floors = pooled pilot revival minus three pooled standard errors (scripts/pilot_output.txt)
ADVERSARIAL_FLOORS = {1000: 0.05, 2000: 0.83}


@pytest.mark.slow
@pytest.mark.parametrize("d", sorted(ADVERSARIAL_FLOORS))
def test_adversarial_nodes_stay_above_pilot_floor(d):
    cfg = CampaignConfig("adversarial_nodes", seed=31, d_values=(d,))
    out = run_campaign(cfg).rows
    assert [r["count"] for r in out] == [0, 10, 50]
    pooled = sum(r["revived"] for r in out) / sum(r["trials"] for r in out)
    assert pooled >= ADVERSARIAL_FLOORS[d]
