import json
import math

import numpy as np
import pytest

import oracles
from radarcast.errors import ConfigError, DimensionError
from radarcast.verify import (ContingencyTable, Evaluator, ThresholdSet, contingency, csi, csi_m, evaluate, fss,
                              hss_score, mae_mse, pooled_contingency, pooled_csi, rhd)


def test_two_by_two_example():
    pred = np.array([[1.0, 1.0], [0.0, 0.0]])
    obs = np.array([[1.0, 0.0], [1.0, 0.0]])
    t = contingency(pred, obs, 0.5)
    assert t.as_list() == [1, 1, 1, 1]
    assert csi(t) == pytest.approx(1 / 3)
    assert hss_score(t) == 0.0


def test_threshold_is_inclusive():
    assert contingency(np.array([[2.0]]), np.array([[2.0]]), 2.0).hits == 1


def test_perfect_and_empty():
    f = np.random.default_rng(0).random((3, 8, 8))
    t = contingency(f, f, 0.5)
    assert csi(t) == 1.0 and hss_score(t) == 1.0
    empty = contingency(np.zeros((4, 4)), np.zeros((4, 4)), 0.5)
    assert csi(empty) is None and hss_score(empty) is None
    assert csi_m([empty, t]) == 1.0


def test_hss_negative_and_printed_form():
    t = ContingencyTable(0, 5, 5, 0)
    assert hss_score(t) == pytest.approx(oracles.hss(0, 5, 5, 0))
    assert hss_score(t) < 0
    with pytest.raises(ConfigError):
        hss_score(t, "other")
    assert hss_score(ContingencyTable(4, 0, 0, 4), "printed") != 1.0


def test_all_zero_mask():
    f = np.ones((4, 4))
    assert contingency(f, f, 0.5, np.zeros((4, 4))).as_list() == [0, 0, 0, 0]
    assert mae_mse(f, f, np.zeros((4, 4))) == (None, None)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        contingency(np.zeros((4, 4)), np.zeros((4, 5)), 0.5)
    with pytest.raises(DimensionError):
        contingency(np.zeros((4, 4)), np.zeros((4, 4)), 0.5, mask=np.ones((3, 3)))


def test_counts_and_ratios_match_oracle():
    r = np.random.default_rng(1)
    for _ in range(60):
        pred, obs = r.random((2, 3, 16, 16))
        mask = r.random((16, 16)) > 0.2
        for p in (0.3, 0.7):
            t = contingency(pred, obs, p, mask)
            m3 = np.broadcast_to(mask, pred.shape)
            ref = oracles.counts(pred, obs, p, m3)
            assert tuple(t.as_list()) == ref
            assert abs(csi(t) - oracles.csi(*ref)) <= 1e-12
            assert abs(hss_score(t) - oracles.hss(*ref)) <= 1e-12


@pytest.mark.parametrize("k", [4, 8, 16])
def test_pooled_matches_materialized_windows(k):
    r = np.random.default_rng(k)
    for _ in range(10):
        pred, obs = r.random((2, 16, 16))
        mask = np.ones((16, 16), bool)
        mask[r.integers(0, 16), :] = False
        pp, po = oracles.pooled_field(pred, k), oracles.pooled_field(obs, k)
        pm = oracles.pooled_mask(mask, k)
        ref = oracles.counts(pp, po, 0.9, pm)
        assert tuple(pooled_contingency(pred, obs, 0.9, k, mask).as_list()) == ref
        got = pooled_csi(pred, obs, 0.9, k)
        assert got == oracles.csi(*oracles.counts(pp, po, 0.9))


def test_pooled_k1_is_plain_csi(rng):
    pred, obs = rng.random((2, 3, 16, 16))
    assert pooled_csi(pred, obs, 0.5, 1) == csi(contingency(pred, obs, 0.5))


def test_pooled_bad_k(rng):
    with pytest.raises(ConfigError):
        pooled_csi(np.zeros((8, 8)), np.zeros((8, 8)), 0.5, 6)


def test_pooled_is_more_forgiving_for_displacement():
    pred, obs = np.zeros((32, 32)), np.zeros((32, 32))
    pred[10, 10] = 1
    obs[11, 12] = 1
    assert pooled_csi(pred, obs, 0.5, 1) == 0.0
    assert pooled_csi(pred, obs, 0.5, 4) > 0.0


def test_fss_examples(rng):
    f = rng.random((2, 16, 16))
    assert fss(f, f, 0.5, 3) == 1.0
    assert fss(np.zeros((8, 8)), np.zeros((8, 8)), 0.5, 3) is None
    with pytest.raises(ConfigError):
        fss(f, f, 0.5, 4)
    pred, obs = np.zeros((21, 21)), np.zeros((21, 21))
    pred[10, 8] = obs[10, 12] = 1
    scores = [fss(pred, obs, 0.5, n) for n in (1, 3, 5, 9, 21)]
    assert scores[0] == 0.0
    assert all(a <= b for a, b in zip(scores, scores[1:])) and scores[-1] > 0.85


def test_fss_matches_oracle():
    r = np.random.default_rng(2)
    for _ in range(10):
        pred, obs = r.random((2, 2, 12, 12))
        mask = r.random((12, 12)) > 0.1
        for n in (1, 3, 5):
            got = fss(pred, obs, 0.6, n, mask)
            assert abs(got - oracles.fss_frames(pred, obs, 0.6, n, mask)) <= 1e-9


def test_rhd_examples(rng):
    f = rng.random((2, 20, 20))
    assert rhd(f, f, 5, [0.3, 0.6]) == 0.0
    # every block fully in the lowest bin for pred and top bin for obs
    assert rhd(np.zeros((10, 10)), np.ones((10, 10)), 5, [0.5]) == 2.0


def test_rhd_matches_oracle():
    r = np.random.default_rng(3)
    for _ in range(10):
        pred, obs = r.random((2, 2, 17, 13))
        mask = r.random((17, 13)) > 0.3
        for region in (4, 5, 17):
            got = rhd(pred, obs, region, [0.25, 0.5, 0.75], mask)
            assert abs(got - oracles.rhd_frames(pred, obs, region, [0.25, 0.5, 0.75], mask)) <= 1e-9


def test_threshold_monotone_counts(rng):
    pred, obs = rng.random((2, 3, 16, 16))
    prev = None
    for p in np.linspace(0.05, 0.95, 10):
        t = contingency(pred, obs, p)
        if prev is not None:
            assert t.hits + t.false_alarms <= prev.hits + prev.false_alarms
            assert t.hits + t.misses <= prev.hits + prev.misses
        prev = t


def test_hss_of_independent_fields_is_near_zero():
    r = np.random.default_rng(4)
    pred, obs = r.random((2, 10, 64, 64))
    assert abs(hss_score(contingency(pred, obs, 0.5))) < 0.02


def test_sharded_equals_single_pass():
    r = np.random.default_rng(5)
    pred, obs = r.random((2, 6, 4, 16, 16, 1))
    kw = dict(thresholds=[0.2, 0.5, 0.8], pools=(1, 4), neighbors=(3, 5), rhd_region=5)
    whole = Evaluator(**kw).update(pred, obs).report()
    shards = [Evaluator(**kw).update(pred[i:i + 2], obs[i:i + 2]) for i in range(0, 6, 2)]
    merged = (shards[2] + shards[0] + shards[1]).report()
    assert merged.counts == whole.counts
    assert merged.csi == whole.csi and merged.hss == whole.hss
    for n in whole.fss:
        for p in whole.fss[n]:
            assert merged.fss[n][p] == pytest.approx(whole.fss[n][p], abs=1e-12)
    assert merged.rhd == pytest.approx(whole.rhd, abs=1e-12)


def test_report_ranges_and_serialization():
    r = np.random.default_rng(6)
    for _ in range(1000):
        pred, obs = r.random((2, 2, 8, 8)) * r.random() * 2
        rep = evaluate(pred, obs, [0.2, 0.5], pools=(1, 4), neighbors=(3,), rhd_region=4)
        assert rep.ranges_ok()
    d = json.loads(rep.to_json())
    assert d["thresholds"] == [0.2, 0.5]
    lines = rep.to_csv().splitlines()
    assert lines[0] == "metric,threshold,pool,value"
    assert len(lines) == 1 + len(rep.rows())


def test_absent_scores_are_listed():
    rep = evaluate(np.zeros((8, 8)), np.zeros((8, 8)), [0.5], neighbors=(3,), rhd_region=4)
    assert rep.csi["1"]["0.5"] is None and rep.csi_m["1"] is None
    assert any(a.startswith("csi") for a in rep.absent)
    assert rep.ranges_ok()
    assert not math.isnan(rep.mae)


def test_threshold_set_validation():
    assert ThresholdSet([0.5, 2, 5], "mm_per_h").values == (0.5, 2.0, 5.0)
    with pytest.raises(ConfigError):
        ThresholdSet([2, 1])
    with pytest.raises(ConfigError):
        ThresholdSet([1], "furlongs")
