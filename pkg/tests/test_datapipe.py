import datetime as dt

import numpy as np
import pytest

import oracles
from radarcast.datapipe import (RadarGrid, advected_blobs, build_windows, crop_offsets, dbz_to_rain, get_profile,
                                kma_to_rain, normalize_kma, preprocess_grid, rain_to_dbz, read_frame, read_index,
                                read_mask, read_pgm, subsample_crop, time_split, write_frame, write_index, write_pgm)
from radarcast.errors import ConfigError, DimensionError, DomainError, FormatError

KMA = get_profile("kma")
T0 = int(dt.datetime(2021, 7, 1, tzinfo=dt.timezone.utc).timestamp())


def _grid(data, unit="raw_0p01dBZ"):
    return RadarGrid(T0, np.asarray(data, dtype=np.float32), unit)


def test_normalize_kma_values():
    g = normalize_kma(_grid([[2500, -300], [0, 7000]]))
    np.testing.assert_allclose(g.data, [[0.25, 0.0], [0.0, 0.7]], atol=1e-7)
    assert g.unit == "dbz_fraction"
    with pytest.raises(ConfigError):
        normalize_kma(g)


def test_zr_constants():
    assert rain_to_dbz(1.0) == pytest.approx(23.0103, abs=1e-4)
    assert rain_to_dbz(2.0) == pytest.approx(27.83, abs=1e-2)
    assert rain_to_dbz(30.0) == pytest.approx(46.64, abs=1e-2)
    assert rain_to_dbz(0.0) == -32.0
    assert dbz_to_rain(-32.0) == 0.0
    with pytest.raises(DomainError):
        rain_to_dbz(-1.0)


def test_zr_thresholds_within_one_dbz():
    got = rain_to_dbz(np.array([0.5, 2, 5, 10, 30]))
    assert np.all(np.abs(got - np.array([19, 28, 35, 40, 47])) <= 1.0)


def test_zr_roundtrip(rng):
    r = 10 ** rng.uniform(-3, 3, 1000)
    back = dbz_to_rain(rain_to_dbz(r))
    assert np.max(np.abs(back - r) / r) <= 1e-9
    assert kma_to_rain(0.2301029995663981) == pytest.approx(1.0, rel=1e-9)


def test_kma_subsample_crop():
    raw = np.arange(2304 * 2880, dtype=np.float64).reshape(2304, 2880)
    out = subsample_crop(raw, 8, (256, 256))
    assert out.shape == (256, 256)
    assert crop_offsets((2304, 2880), 8, (256, 256)) == (16, 52)
    # top-left of the crop is native pixel (16*8, 52*8)
    assert out[0, 0] == raw[128, 416]
    assert out[1, 1] == raw[136, 424]
    with pytest.raises(DimensionError):
        subsample_crop(np.zeros((100, 100)), 8, (16, 16))


def test_preprocess_kma_chain():
    raw = np.full((2304, 2880), 2500.0, np.float32)
    raw[0, 0] = -100
    g = preprocess_grid(_grid(raw), KMA)
    assert g.data.shape == (256, 256) and g.unit == "dbz_fraction"
    assert g.resolution_km == 8.0
    np.testing.assert_allclose(g.data, 0.25)


def test_meteonet_upper_left():
    prof = get_profile("meteonet")
    data = np.arange(515 * 784, dtype=np.float32).reshape(515, 784)
    g = preprocess_grid(_grid(data, "dBZ"), prof)
    np.testing.assert_array_equal(g.data, data[:416, :416])


def _stamps(n, interval=600, start=T0):
    return [start + i * interval for i in range(n)]


def test_windows_examples():
    assert len(build_windows(_stamps(13), KMA)) == 1
    gap = _stamps(14)
    del gap[6]
    assert build_windows(gap, KMA) == []
    w = build_windows(_stamps(20), KMA)
    assert [s.start for s in w] == list(range(8))
    assert len(build_windows(_stamps(20), KMA, stride=3)) == 3
    with pytest.raises(ConfigError):
        build_windows([T0, T0], KMA)


def test_windows_match_bruteforce():
    r = np.random.default_rng(9)
    for _ in range(100):
        deltas = np.where(r.random(499) < r.uniform(0.001, 0.05), 600 * r.integers(2, 5, 499), 600)
        stamps = [T0] + list(T0 + np.cumsum(deltas))
        stride = int(r.integers(1, 4))
        got = build_windows(stamps, KMA, stride)
        assert [s.start for s in got] == oracles.windows(stamps, 13, 600, stride)
        for s in got:
            seg = stamps[s.start:s.stop]
            assert all(b - a == 600 for a, b in zip(seg, seg[1:]))


def test_time_split():
    stamps = [int(dt.datetime(y, 6, 1, tzinfo=dt.timezone.utc).timestamp()) for y in (2020, 2022, 2023, 2024)]
    samples = [s for st in stamps for s in build_windows(_stamps(13, start=st), KMA)]
    parts = time_split(samples, KMA)
    assert [len(parts[k]) for k in ("train", "val", "test")] == [1, 1, 2]
    with pytest.raises(ConfigError):
        time_split(samples, get_profile("sevir"))


def test_frame_and_index_io(tmp_path):
    g = RadarGrid(T0, np.array([[0, 1], [65535, 2500]], np.float32), "raw_0p01dBZ")
    write_frame(tmp_path / "f.bin", g)
    back = read_frame(tmp_path / "f.bin")
    assert back.timestamp == T0 and back.unit == g.unit
    np.testing.assert_array_equal(back.data, g.data)
    (tmp_path / "f.bin").write_bytes(b"\0" * 6)
    with pytest.raises(FormatError):
        read_frame(tmp_path / "f.bin")
    samples = build_windows(_stamps(15), KMA)
    write_index(tmp_path / "idx.jsonl", samples)
    assert read_index(tmp_path / "idx.jsonl") == samples


def test_pgm_roundtrip(tmp_path):
    img = np.array([[0, 128, 255], [3, 2, 1]], np.uint8)
    write_pgm(tmp_path / "a.pgm", img)
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)
    (tmp_path / "c.pgm").write_bytes(b"P5\n# comment\n3 1\n255\n\x00\x05\x00")
    assert read_mask(tmp_path / "c.pgm").tolist() == [[False, True, False]]
    (tmp_path / "b.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "b.pgm")


def test_advected_blobs():
    x = advected_blobs(40, (16, 16), seed=1)
    assert x.shape == (40, 16, 16) and x.dtype == np.float32
    assert 0 <= x.min() and x.max() == pytest.approx(1.0)
    np.testing.assert_array_equal(x, advected_blobs(40, (16, 16), seed=1))
    # consecutive frames are closer than distant ones
    assert np.abs(x[1] - x[0]).mean() < np.abs(x[20] - x[0]).mean()


def test_unknown_profile_and_unit():
    with pytest.raises(ConfigError):
        get_profile("mars")
    with pytest.raises(ConfigError):
        RadarGrid(0, np.zeros((2, 2)), "furlongs")
