import json
import os

import pytest
from pyarrow import csv as pa_csv

from tsp_fcn import DatasetStore, exceptions
from tsp_fcn.cli import DATA_DIR_ENV, RUN_MANIFEST, build_parser, main, parse_range
from tsp_fcn.instance import generate_instance, load_instances, save_instances
from tsp_fcn.solvers import solve_dp


def _gen(data, *extra, n=6, count=4, seed=3, split="train"):
    argv = ["gen", "--n", str(n), "--count", str(count), "--seed", str(seed), "--data", str(data), "--split", split]
    return main(argv + list(extra))


@pytest.fixture(scope="function")
def dataset(tmp_path):
    """four 224 x 224 samples of six cities in split train"""
    data = tmp_path / "data"
    assert _gen(data, "--size", "224") == 0
    return data


def test_parse_range():
    assert parse_range("4..7") == [4, 5, 6, 7]
    assert parse_range("4,6,8") == [4, 6, 8]
    assert parse_range("10") == [10]
    with pytest.raises(exceptions.ConfigError):
        parse_range("four")


def test_gen(dataset):
    store = DatasetStore(str(dataset), split="train")
    assert len(store) == 4
    assert store.manifest()["count"] == 4
    assert store.render_config().w == 224
    manifest = json.loads((dataset / RUN_MANIFEST).read_text())
    assert manifest["command"] == "gen"
    assert manifest["seeds"] == {"seed": 3}
    assert manifest["version"]


def test_gen_deterministic(tmp_path):
    assert _gen(tmp_path / "a") == 0
    assert _gen(tmp_path / "b", "--jobs", "2") == 0
    a = DatasetStore(str(tmp_path / "a"), split="train")
    b = DatasetStore(str(tmp_path / "b"), split="train")
    assert a.digest() == b.digest()


def test_gen_uses_env(tmp_path, monkeypatch):
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path / "env"))
    assert main(["gen", "--n", "5", "--count", "2"]) == 0
    assert len(DatasetStore(str(tmp_path / "env"))) == 2


def test_gen_default_split_in_root(tmp_path):
    out = tmp_path / "root"
    assert main(["gen", "--n", "5", "--count", "2", "--data", str(out)]) == 0
    assert (out / "instances.jsonl").exists()
    assert (out / "manifest.json").exists()
    assert not (out / "train").exists()
    assert len(DatasetStore(str(out))) == 2


def test_split_defaults_per_command():
    parser = build_parser()
    assert parser.parse_args(["gen", "--n", "5", "--count", "1"]).split == "default"
    assert parser.parse_args(["predict"]).split == "default"
    assert parser.parse_args(["train"]).split == "train"


def test_gen_lengths_match_exhaustive(dataset):
    for instance in load_instances(dataset / "train" / "instances.jsonl"):
        assert abs(instance.length - solve_dp(instance).length) <= 1e-9 * instance.length


def test_render_scatter(dataset, tmp_path):
    out = tmp_path / "scatter"
    assert main(["render", "--data", str(dataset), "--split", "train", "--size", "224", "--mode", "scatter", "--out", str(out)]) == 0
    store = DatasetStore(str(out), split="train")
    assert len(store) == 4
    assert store.render_config().mode == "scatter"


def test_render_refuses_in_place(dataset):
    assert main(["render", "--data", str(dataset), "--split", "train", "--out", str(dataset)]) == 1


def test_solve(tmp_path):
    source = tmp_path / "instances.jsonl"
    save_instances([generate_instance(7, seed=k) for k in range(3)], source)
    out = tmp_path / "solved.jsonl"
    assert main(["solve", "--algo", "bb", "--in", str(source), "--out", str(out)]) == 0
    for instance in load_instances(out):
        assert abs(instance.length - solve_dp(instance).length) <= 1e-9 * instance.length
    assert (tmp_path / RUN_MANIFEST).exists()


def test_solve_malformed_input(tmp_path):
    source = tmp_path / "instances.jsonl"
    source.write_text("not json\n")
    assert main(["solve", "--algo", "dp", "--in", str(source), "--out", str(tmp_path / "x.jsonl")]) == 2


def test_oracle_predict_then_decode(dataset, tmp_path):
    masks = tmp_path / "masks"
    assert main(["predict", "--data", str(dataset), "--split", "train", "--oracle-passthrough", "--out", str(masks)]) == 0
    instances = load_instances(dataset / "train" / "instances.jsonl")
    assert sorted(os.listdir(masks)) == sorted([f"{x.id}.png" for x in instances] + [RUN_MANIFEST])

    target = instances[0]
    out = tmp_path / "solution.json"
    argv = [
        "decode",
        "--mask", str(masks / f"{target.id}.png"),
        "--instance", str(dataset / "train" / "instances.jsonl"),
        "--id", target.id,
        "--m", "6",
        "--departure", "2",
        "--out", str(out),
    ]
    assert main(argv) == 0
    solution = json.loads(out.read_text())
    assert set(solution) == {"order", "length", "m", "diagnostics"}
    assert solution["order"][0] == 2
    assert abs(solution["length"] - target.length) <= 1e-9 * target.length


def test_decode_missing_mask(tmp_path):
    source = tmp_path / "one.jsonl"
    save_instances([generate_instance(5, seed=1)], source)
    argv = ["decode", "--mask", str(tmp_path / "nope.png"), "--instance", str(source), "--out", str(tmp_path / "s.json")]
    assert main(argv) == 2


def test_eval_oracle_scatter(dataset, tmp_path):
    out = tmp_path / "eval"
    argv = ["eval", "--data", str(dataset), "--split", "train", "--oracle-passthrough", "--mode", "scatter", "--out", str(out)]
    assert main(argv) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["count"] == 4
    assert metrics["invalid"] == 0
    assert pa_csv.read_csv(str(out / "samples.csv")).num_rows == 4
    manifest = json.loads((out / RUN_MANIFEST).read_text())
    assert str(dataset) in manifest["inputs"]


def test_usage_errors(dataset, tmp_path):
    assert main(["gen"]) == 1
    assert main(["fly"]) == 1
    assert main(["predict", "--data", str(dataset), "--split", "train", "--out", str(tmp_path)]) == 1
    assert main(["eval", "--data", str(dataset), "--checkpoint", "x", "--oracle-passthrough"]) == 1
    assert main(["gen", "--n", "5", "--count", "1", "--data", str(dataset), "--jobs", "0"]) == 1


def test_data_errors(tmp_path):
    assert main(["eval", "--data", str(tmp_path / "missing"), "--oracle-passthrough"]) == 2
    assert main(["gen", "--n", "2", "--count", "1", "--data", str(tmp_path / "d")]) == 2


def test_train_then_eval(tmp_path):
    data = tmp_path / "data"
    assert _gen(data, "--size", "32", "--city-halfwidth", "1", n=5, count=2) == 0
    run = tmp_path / "run"
    argv = [
        "train", "--data", str(data), "--arch", "tiny",
        "--iterations", "2", "--snapshot-every", "1", "--snapshots", "--out", str(run),
    ]
    assert main(argv) == 0
    assert (run / "model.ckpt").exists()
    assert pa_csv.read_csv(str(run / "learning_curve.csv")).num_rows == 3
    assert sorted(os.listdir(run / "snapshots")) == ["iter_0.png", "iter_1.png", "iter_2.png"]

    tuned = tmp_path / "tuned"
    argv = ["train", "--data", str(data), "--checkpoint", str(run / "model.ckpt"), "--fine-tune", "--iterations", "1", "--out", str(tuned)]
    assert main(argv) == 0

    out = tmp_path / "eval"
    argv = ["eval", "--data", str(data), "--split", "train", "--checkpoint", str(tuned / "model.ckpt"), "--out", str(out)]
    assert main(argv) == 0
    assert json.loads((out / "metrics.json").read_text())["invalid"] == 0


def test_fine_tune_needs_checkpoint(tmp_path):
    data = tmp_path / "data"
    assert _gen(data, "--size", "32", "--city-halfwidth", "1", n=5, count=1) == 0
    assert main(["train", "--data", str(data), "--fine-tune", "--out", str(tmp_path / "run")]) == 1


def test_bench(tmp_path):
    out = tmp_path / "bench"
    argv = ["bench", "--n", "4..5", "--instances", "1", "--repeats", "1", "--warmup", "0", "--algos", "dp,exh", "--out", str(out)]
    assert main(argv) == 0
    table = pa_csv.read_csv(str(out / "bench.csv"))
    assert table.column("n").to_pylist() == [4, 5]
    assert "dp_ms" in table.column_names


def test_sweep_departure(dataset, tmp_path):
    out = tmp_path / "sweep"
    argv = [
        "sweep", "--kind", "departure", "--data", str(dataset), "--split", "train",
        "--oracle-passthrough", "--m-values", "1..3", "--plot", "--out", str(out),
    ]
    assert main(argv) == 0
    records = json.loads((out / "sweep.json").read_text())
    assert [r["m"] for r in records] == [1, 2, 3]
    assert (out / "sweep.png").exists()


def test_sweep_generalization(tmp_path):
    out = tmp_path / "sweep"
    argv = ["sweep", "--oracle-passthrough", "--n", "4,5", "--samples", "2", "--size", "224", "--out", str(out)]
    assert main(argv) == 0
    assert pa_csv.read_csv(str(out / "sweep.csv")).column("n").to_pylist() == [4, 5]
