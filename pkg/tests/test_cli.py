import hashlib
import json

import numpy as np
import pytest

from radarcast import container
from radarcast.cli import build_parser, main
from radarcast.datapipe import RadarGrid, advected_blobs, read_index, read_pgm, write_frame

SUBCOMMANDS = ("preprocess", "windows", "infer", "eval", "ablate-upsample", "render", "info")


def _stack(path, arr, name="frames", meta=None):
    container.save(path, {name: np.asarray(arr, np.float32)}, meta or {})
    return str(path)


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def toy_pair(tmp_path):
    x = advected_blobs(8, (16, 16), seed=2)
    obs = _stack(tmp_path / "obs.xt5", x[None, 4:, :, :, None])
    pred = _stack(tmp_path / "pred.xt5", x[None, 3:7, :, :, None], name="forecast")
    return pred, obs


def test_help_for_every_subcommand(capsys):
    for cmd in SUBCOMMANDS:
        with pytest.raises(SystemExit) as e:
            main([cmd, "--help"])
        assert e.value.code == 0
        out = capsys.readouterr().out
        assert "--config" in out and "--seed" in out and "--profile" in out
    assert set(build_parser()._subparsers._group_actions[0].choices) == set(SUBCOMMANDS)


def test_usage_errors():
    assert main(["info", "--no-such-flag"]) == 2
    assert main(["bogus"]) == 2
    assert main(["infer", "--seed", "abc"]) == 2


def test_eval_perfect_forecast(tmp_path, toy_pair):
    _, obs = toy_pair
    same = _stack(tmp_path / "same.xt5", container.load(obs)[0]["frames"], name="forecast")
    stem = str(tmp_path / "rep")
    assert main(["eval", "--profile", "toy", "--pred", same, "--obs", obs, "--report", stem]) == 0
    rep = json.load(open(stem + ".json"))
    assert rep["csi_m"]["1"] == 1.0 and rep["hss"] == 1.0 and rep["mae"] == 0.0
    assert open(stem + ".csv").readline().strip() == "metric,threshold,pool,value"


def test_eval_report_is_byte_stable(tmp_path, toy_pair):
    pred, obs = toy_pair
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["eval", "--profile", "toy", "--pred", pred, "--obs", obs, "--report", a]) == 0
    assert main(["eval", "--profile", "toy", "--pred", pred, "--obs", obs, "--report", b, "--threads", "2"]) == 0
    assert open(a + ".json", "rb").read() == open(b + ".json", "rb").read()
    assert open(a + ".csv", "rb").read() == open(b + ".csv", "rb").read()


def test_eval_errors(tmp_path, toy_pair):
    pred, obs = toy_pair
    stem = str(tmp_path / "r")
    assert main(["eval", "--profile", "toy", "--pred", str(tmp_path / "nope.xt5"), "--obs", obs,
                 "--report", stem]) == 3
    short = _stack(tmp_path / "short.xt5", np.zeros((1, 3, 16, 16, 1)), name="forecast")
    assert main(["eval", "--profile", "toy", "--pred", short, "--obs", obs, "--report", stem]) == 4
    assert main(["eval", "--pred", pred, "--obs", obs, "--report", stem]) == 4
    assert main(["eval", "--profile", "mars", "--pred", pred, "--obs", obs, "--report", stem]) == 4


def test_config_file_precedence(tmp_path, toy_pair):
    pred, obs = toy_pair
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"profile": "toy", "pools": [1, 4], "neighbors": [3]}))
    stem = str(tmp_path / "r")
    assert main(["eval", "--config", str(cfg), "--pred", pred, "--obs", obs, "--report", stem,
                 "--neighbors", "5"]) == 0
    rep = json.load(open(stem + ".json"))
    assert rep["pools"] == [1, 4] and list(rep["fss"]) == ["5"]
    cfg.write_text(json.dumps({"profile": "toy", "colour": "red"}))
    assert main(["eval", "--config", str(cfg), "--pred", pred, "--obs", obs, "--report", stem]) == 4


def test_infer_deterministic_across_runs_and_threads(tmp_path):
    x = np.random.default_rng(0).random((3, 4, 16, 16, 1))
    inp = _stack(tmp_path / "in.xt5", x)
    outs = []
    for i, threads in enumerate(("1", "1", "2", "3")):
        out = str(tmp_path / f"out{i}.xt5")
        assert main(["infer", "--preset", "toy", "--seed", "5", "--input", inp, "--out", out,
                     "--threads", threads]) == 0
        outs.append(_sha(out))
    assert len(set(outs)) == 1
    y, meta = container.load(tmp_path / "out0.xt5")
    assert y["forecast"].shape == (3, 4, 16, 16, 1) and meta["preset"] == "toy"


def test_infer_seed_and_weights(tmp_path):
    from radarcast.swin import init_weights, preset, save_weights
    x = np.random.default_rng(0).random((1, 4, 16, 16, 1))
    inp = _stack(tmp_path / "in.xt5", x)
    w = tmp_path / "w.xt5"
    save_weights(init_weights(preset("toy"), 5), w, preset("toy"))
    a, b, c = (str(tmp_path / n) for n in ("a.xt5", "b.xt5", "c.xt5"))
    assert main(["infer", "--preset", "toy", "--seed", "5", "--input", inp, "--out", a]) == 0
    assert main(["infer", "--preset", "toy", "--weights", str(w), "--input", inp, "--out", b]) == 0
    assert main(["infer", "--preset", "toy", "--seed", "6", "--input", inp, "--out", c]) == 0
    ya, yb, yc = (container.load(p)[0]["forecast"] for p in (a, b, c))
    np.testing.assert_array_equal(ya, yb)
    assert not np.array_equal(ya, yc)


def test_infer_rejects_wrong_shape(tmp_path):
    inp = _stack(tmp_path / "in.xt5", np.zeros((1, 5, 16, 16, 1)))
    assert main(["infer", "--preset", "toy", "--input", inp, "--out", str(tmp_path / "o.xt5")]) == 4
    assert main(["infer", "--preset", "toy", "--out", str(tmp_path / "o.xt5")]) == 4
    bad = tmp_path / "bad.xt5"
    bad.write_bytes(b"junk")
    assert main(["infer", "--preset", "toy", "--input", str(bad), "--out", str(tmp_path / "o.xt5")]) == 4


def test_ablate(tmp_path):
    t, h, w = np.meshgrid(np.arange(2), np.arange(16), np.arange(16), indexing="ij")
    affine = (0.1 + 0.05 * t + 0.02 * h + 0.03 * w)[None, ..., None]
    target = _stack(tmp_path / "t.xt5", affine)
    stem = str(tmp_path / "abl")
    assert main(["ablate-upsample", "--target", target, "--report", stem]) == 0
    rows = json.load(open(stem + ".json"))["rows"]
    assert [r["mode"] for r in rows] == ["cdu", "ps", "ti", "bic", "area"]
    by = {r["mode"]: r for r in rows}
    assert by["ti"]["mse"] <= 1e-10
    assert by["ps"]["mse"] == 0.0
    assert len(open(stem + ".csv").read().splitlines()) == 6
    assert main(["ablate-upsample", "--target", target, "--report", stem, "--mode", "zoom"]) == 2


def test_render(tmp_path):
    x = np.zeros((1, 2, 2, 3, 1), np.float32)
    x[0, 1, 0] = [[0.0], [1.0], [5.0]]
    x[0, 1, 1] = [[-3.0], [0.5], [0.25]]
    src = _stack(tmp_path / "x.xt5", x)
    out = str(tmp_path / "f.pgm")
    assert main(["render", "--tensor", src, "--frame", "1", "--range", "0", "1", "--out", out]) == 0
    assert read_pgm(out).tolist() == [[0, 255, 255], [0, 128, 64]]
    assert main(["render", "--tensor", src, "--frame", "7", "--range", "0", "1", "--out", out]) == 4
    assert main(["render", "--tensor", src, "--frame", "0", "--out", out]) == 4


def test_info(capsys):
    assert main(["info", "--preset", "toy"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["input"] == [1, 4, 16, 16, 1] and info["output"] == [1, 4, 16, 16, 1]
    assert main(["info", "--preset", "toy", "--batch", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["flops"] == 2 * info["flops"]
    assert main(["info", "--preset", "kma-9h"]) == 4


def test_preprocess_and_windows(tmp_path, capsys):
    start = 1_656_633_600  # 2022-07-01T00:00:00Z
    paths = []
    for i in range(16):
        if i == 6:
            continue
        p = tmp_path / f"f{i:02d}.bin"
        write_frame(p, RadarGrid(start + 600 * i, np.full((32, 32), 100 * i, np.float32), "raw_0p01dBZ"))
        paths.append(str(p))
    stack = str(tmp_path / "stack.xt5")
    assert main(["preprocess", "--profile", "toy", "--inputs", *paths, "--factor", "2", "--out", stack]) == 0
    tensors, meta = container.load(stack)
    assert tensors["frames"].shape == (1, 15, 16, 16, 1)
    assert meta["unit"] == "dbz_fraction"
    np.testing.assert_allclose(tensors["frames"][0, 1, 0, 0, 0], 0.01)
    idx = str(tmp_path / "idx.jsonl")
    assert main(["windows", "--profile", "toy", "--stack", stack, "--out", idx]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["windows"] == 2 and summary["test"] == 0 and summary["val"] == 2
    assert [s.start for s in read_index(idx)] == [6, 7]
    assert main(["windows", "--profile", "toy", "--inputs", *paths[:6], "--out", idx]) == 0
    assert [s.start for s in read_index(idx)] == []
    assert main(["preprocess", "--profile", "toy", "--inputs", str(tmp_path / "missing.bin"),
                 "--out", stack]) == 3
