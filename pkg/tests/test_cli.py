import csv
import json
from pathlib import Path

import numpy as np
import pytest

from rpwno.checkpoint import load_checkpoint
from rpwno.cli import RunConfig, main, parse_points
from rpwno.data.dataset import Dataset

GOLDEN = json.loads((Path(__file__).parent / "golden" / "artifacts.json").read_text())
TINY = ["--members", "2", "--epochs", "3", "--width", "8", "--proj-hidden", "8", "--blocks", "2"]


def _header(path):
    return Path(path).read_text().splitlines()[0]


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["generate", "--problem", "burgers", "--count", "40", "--grid", "32", "--seed", "1",
                 "--out", str(d), "--name", "train.rpwd"]) == 0
    assert main(["generate", "--problem", "burgers", "--count", "30", "--grid", "32", "--seed", "2",
                 "--out", str(d), "--name", "test.rpwd"]) == 0
    assert main(["generate", "--problem", "darcy", "--count", "30", "--grid", "16", "--seed", "3",
                 "--out", str(d), "--name", "darcy.rpwd"]) == 0
    return d


def test_generate_shapes_and_reproducible(data, tmp_path, capsys):
    ds = Dataset.load(data / "train.rpwd")
    assert ds.inputs.shape == (40, 32, 1) and ds.outputs.shape == (40, 32, 1)
    main(["generate", "--problem", "burgers", "--count", "40", "--grid", "32", "--seed", "1", "--out", str(tmp_path)])
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["count"] == 40 and summary["seed"] == 1 and summary["inputs"] == [40, 32, 1]
    assert Path(summary["path"]).name == "burgers_n40_g32_s1.rpwd"
    assert Path(summary["path"]).read_bytes() == (data / "train.rpwd").read_bytes()
    dd = Dataset.load(data / "darcy.rpwd")
    assert set(np.unique(dd.inputs)) <= {3.0, 12.0}


def test_train_parallel_serial_identical(data, tmp_path):
    args = ["train", "--dataset", str(data / "train.rpwd"), *TINY]
    assert main([*args, "--serial", "--out", str(tmp_path / "s")]) == 0
    assert main([*args, "--parallel", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "s" / "checkpoint.rpwc").read_bytes() == (tmp_path / "p" / "checkpoint.rpwc").read_bytes()
    assert (tmp_path / "s" / "loss.csv").read_bytes() == (tmp_path / "p" / "loss.csv").read_bytes()
    assert _header(tmp_path / "s" / "loss.csv") == GOLDEN["loss.csv"]
    assert len(_rows(tmp_path / "s" / "loss.csv")) == 3 * 2
    run = json.loads((tmp_path / "s" / "run.json").read_text())
    assert sorted(run) == GOLDEN["run.json/train"] and run["member_seeds"] == [0, 1]
    est = load_checkpoint(tmp_path / "s" / "checkpoint.rpwc")
    ds = Dataset.load(data / "test.rpwd")
    assert est.predict(ds.inputs).shape == ds.outputs.shape


def test_every_command_reproducible(data, tmp_path):
    def run(tag):
        out = tmp_path / tag
        base = ["--dataset", str(data / "train.rpwd"), "--test-dataset", str(data / "test.rpwd"), *TINY]
        assert main(["train", *base, "--seed", "7", "--out", str(out / "train")]) == 0
        assert main(["eval", "--checkpoint", str(out / "train" / "checkpoint.rpwc"), "--test-dataset",
                     str(data / "test.rpwd"), "--points", "x=0.14;x=0.92", "--out", str(out / "eval")]) == 0
        assert main(["sweep-tds", *base, "--tds", "10,20", "--seed", "7", "--out", str(out / "tds")]) == 0
        assert main(["sweep-beta", *base, "--betas", "0,1", "--train-count", "20", "--seed", "7",
                     "--out", str(out / "beta")]) == 0
        return out

    a, b = run("a"), run("b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) >= 12
    for rel in files:
        if rel.name in ("report.json", "run.json"):
            # configs embed output paths, which differ by design; compare everything else
            ja, jb = json.loads((a / rel).read_text()), json.loads((b / rel).read_text())
            ja.pop("config"), jb.pop("config")
            assert ja == jb, rel
        else:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_eval_artifacts_match_golden(data, tmp_path):
    main(["train", "--dataset", str(data / "train.rpwd"), *TINY, "--out", str(tmp_path / "t")])
    assert main(["eval", "--checkpoint", str(tmp_path / "t" / "checkpoint.rpwc"), "--test-dataset",
                 str(data / "test.rpwd"), "--points", "x=0.14;x=0.92", "--out", str(tmp_path / "e")]) == 0
    e = tmp_path / "e"
    assert _header(e / "fields.csv") == GOLDEN["fields.csv/1d"]
    assert len(_rows(e / "fields.csv")) == 30 * 32
    assert _header(e / "per_sample.csv") == GOLDEN["per_sample.csv"]
    for k in (0, 1):
        assert _header(e / f"pdf_{k}.csv") == GOLDEN["pdf.csv"]
        rows = _rows(e / f"pdf_{k}.csv")
        xs = np.array([float(r["abscissa"]) for r in rows])
        for col in ("predicted_density", "truth_density"):
            dens = np.array([float(r[col]) for r in rows])
            assert np.all(dens >= 0) and abs(np.trapezoid(dens, xs) - 1) < 0.02
    report = json.loads((e / "report.json").read_text())
    assert sorted(report) == GOLDEN["report.json"]
    assert sorted(report["pdfs"][0]) == GOLDEN["report.json/pdfs"]
    assert report["pdfs"][0]["grid_point"]["x"] == pytest.approx(0.125)
    for key in ("mae", "mean_std", "rel_l2_percent", "nmse_percent", "coverage95"):
        assert np.isfinite(report[key]) and report[key] >= 0
    assert 0 <= report["coverage95"] <= 1


def test_eval_2d_headers_and_points(data, tmp_path):
    main(["train", "--dataset", str(data / "darcy.rpwd"), *TINY, "--out", str(tmp_path / "t")])
    assert main(["eval", "--checkpoint", str(tmp_path / "t" / "checkpoint.rpwc"), "--test-dataset",
                 str(data / "darcy.rpwd"), "--points", "x=0.1,y=0.6", "--out", str(tmp_path / "e")]) == 0
    assert _header(tmp_path / "e" / "fields.csv") == GOLDEN["fields.csv/2d"]
    pt = json.loads((tmp_path / "e" / "report.json").read_text())["pdfs"][0]["grid_point"]
    assert pt == {"y": pytest.approx(0.59375), "x": pytest.approx(0.09375)}


def test_eval_rejects_incompatible_grid(data, tmp_path, capsys):
    main(["train", "--dataset", str(data / "train.rpwd"), *TINY, "--out", str(tmp_path / "t")])
    code = main(["eval", "--checkpoint", str(tmp_path / "t" / "checkpoint.rpwc"),
                 "--test-dataset", str(data / "darcy.rpwd"), "--out", str(tmp_path / "e")])
    assert code == 1 and "incompatible grid" in capsys.readouterr().err


def test_eval_train_set_beats_held_out(data, tmp_path):
    args = ["--members", "2", "--epochs", "60", "--width", "12", "--proj-hidden", "16", "--blocks", "2",
            "--batch-size", "5", "--train-count", "20"]
    main(["train", "--dataset", str(data / "train.rpwd"), *args, "--out", str(tmp_path / "t")])
    ck = str(tmp_path / "t" / "checkpoint.rpwc")
    train20 = Dataset.load(data / "train.rpwd").subset(slice(0, 20))
    train20.save(tmp_path / "train20.rpwd")
    main(["eval", "--checkpoint", ck, "--test-dataset", str(tmp_path / "train20.rpwd"), "--out", str(tmp_path / "a")])
    main(["eval", "--checkpoint", ck, "--test-dataset", str(data / "test.rpwd"), "--out", str(tmp_path / "b")])
    on_train = json.loads((tmp_path / "a" / "report.json").read_text())["rel_l2_percent"]
    held_out = json.loads((tmp_path / "b" / "report.json").read_text())["rel_l2_percent"]
    assert on_train < held_out


def test_sweep_beta_rows_and_zero_beta_equals_vanilla(data, tmp_path):
    from rpwno import WNORegressor
    from rpwno.ensemble import ensemble_stats
    from rpwno.metrics import relative_l2_percent

    assert main(["sweep-beta", "--dataset", str(data / "train.rpwd"), "--test-dataset", str(data / "test.rpwd"),
                 *TINY, "--betas", "0,1,100", "--train-count", "12", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "beta_sweep.csv")
    assert _header(tmp_path / "beta_sweep.csv") == GOLDEN["beta_sweep.csv"] and len(rows) == 3
    train = Dataset.load(data / "train.rpwd").subset(slice(0, 12))
    test = Dataset.load(data / "test.rpwd")
    preds = [WNORegressor(width=8, proj_hidden=8, n_blocks=2, epochs=3, random_state=s, spatial_dims=1)
             .fit(train.inputs, train.outputs).predict(test.inputs) for s in (0, 1)]
    vanilla = relative_l2_percent(ensemble_stats(preds).mean, test.outputs)
    assert float(rows[0]["rel_l2_percent"]) == vanilla


def test_sweep_tds_table(data, tmp_path):
    assert main(["sweep-tds", "--dataset", str(data / "train.rpwd"), "--test-dataset", str(data / "test.rpwd"),
                 *TINY, "--tds", "10,40", "--out", str(tmp_path)]) == 0
    assert _header(tmp_path / "tds_trend.csv") == GOLDEN["tds_trend.csv"]
    assert [r["tds"] for r in _rows(tmp_path / "tds_trend.csv")] == ["10", "40"]
    code = main(["sweep-tds", "--dataset", str(data / "train.rpwd"), "--test-dataset", str(data / "test.rpwd"),
                 *TINY, "--tds", "10,400", "--out", str(tmp_path)])
    assert code == 1


def test_config_file_and_overrides(data, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_members": 3, "epochs": 2, "width": 8, "proj_hidden": 8, "n_blocks": 1,
                               "dataset": str(data / "train.rpwd"), "out": str(tmp_path / "o")}))
    assert main(["train", "--config", str(cfg), "--members", "2"]) == 0
    assert len(_rows(tmp_path / "o" / "loss.csv")) == 2 * 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["train", "--config", str(cfg)]) == 1


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(n_members=1).validate()
    with pytest.raises(ValueError):
        RunConfig(problem="heat").validate()
    with pytest.raises(ValueError):
        RunConfig(seed=-1).validate()
    RunConfig().validate()


def test_parse_points():
    assert parse_points("x=0.14;x=0.92", 1) == [{"x": 0.14}, {"x": 0.92}]
    assert parse_points("x=0.1,y=0.2", 2) == [{"x": 0.1, "y": 0.2}]
    assert parse_points("", 1) == []
    for bad, dims in (("z=0.1", 1), ("x=0.1", 2), ("x=1.5", 1), ("x0.1", 1)):
        with pytest.raises(ValueError):
            parse_points(bad, dims)
