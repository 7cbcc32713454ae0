import json

import numpy as np
import pytest

from fi2p import cli, data, model
from fi2p.data import DatasetManifest


def _datagen(tmp_path, categories="box,torus", count=24, size=32, points=64,
             seed=11):
    out = tmp_path / "data"
    rc = cli.main(["datagen", "--categories", categories, "--count",
                   str(count), "--image-size", str(size), "--points",
                   str(points), "--seed", str(seed), "--out", str(out)])
    assert rc == 0
    return out


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    assert "datagen" in capsys.readouterr().out


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["datagen", "--categories", "box", "--count", "3",
                  "--out", "x", "--frobnicate"])
    assert exc.value.code == 2


def test_parse_datagen_fields():
    args = cli.parse_args(["datagen", "--categories", "box,torus", "--count",
                           "100", "--seed", "7", "--out", "data/"])
    assert args.command == "datagen"
    assert args.categories == "box,torus"
    assert args.count == 100
    assert args.seed == 7
    assert str(args.out) == "data"


def test_parse_train_variant():
    args = cli.parse_args(["train", "--data", "m.json", "--variant", "stride",
                           "--scale", "8", "--checkpoint", "out.fi2p"])
    assert args.variant == "stride"
    assert args.scale == 8


def test_bad_variant_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.parse_args(["train", "--data", "m.json", "--variant", "wobble",
                        "--checkpoint", "c"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "stride" in err and "maxpool" in err


def test_datagen_writes_dataset_and_echoes_config(tmp_path, capsys):
    out = _datagen(tmp_path)
    captured = capsys.readouterr()
    assert "config:" in captured.err
    echoed = json.loads(captured.err.split("config:", 1)[1].splitlines()[0])
    assert echoed["seed"] == 11
    manifest = DatasetManifest.load(out / "manifest.json")
    assert len(manifest.samples) == 48


def test_train_eval_infer_export_pipeline(tmp_path, capsys):
    out = _datagen(tmp_path)
    ckpt = tmp_path / "model.fi2p"
    rc = cli.main(["train", "--data", str(out / "manifest.json"),
                   "--variant", "stride", "--scale", "8",
                   "--lr", "5e-4", "--epochs", "2", "--seed", "3",
                   "--checkpoint", str(ckpt)])
    assert rc == 0
    assert ckpt.exists()
    assert ckpt.with_suffix(".fi2p.history.csv").exists()
    capsys.readouterr()

    rc = cli.main(["eval", "--checkpoint", str(ckpt), "--data",
                   str(out / "manifest.json"), "--split", "test"])
    assert rc == 0
    printed = capsys.readouterr().out.strip()
    float(printed)  # a single decimal on stdout

    sample_ppm = next(out.glob("box_*.ppm"))
    cloud_out = tmp_path / "pred.xyz"
    rc = cli.main(["infer", "--checkpoint", str(ckpt), "--image",
                   str(sample_ppm), "--out", str(cloud_out)])
    assert rc == 0
    cloud = data.load_cloud_xyz(cloud_out)
    assert cloud.shape == (64, 3)
    assert (np.abs(cloud) < 1.0).all()
    capsys.readouterr()

    ply_out = tmp_path / "pred.ply"
    rc = cli.main(["export", "--in", str(cloud_out), "--format", "ply",
                   "--out", str(ply_out)])
    assert rc == 0
    text = ply_out.read_text().splitlines()
    assert text[0] == "ply"
    assert f"element vertex {cloud.shape[0]}" in text
    n_data = len(text) - text.index("end_header") - 1
    assert n_data == cloud.shape[0]


def test_train_scale_mismatch_is_runtime_error(tmp_path, capsys):
    out = _datagen(tmp_path)
    rc = cli.main(["train", "--data", str(out / "manifest.json"),
                   "--variant", "stride", "--scale", "4",
                   "--checkpoint", str(tmp_path / "x.fi2p")])
    assert rc == 1
    assert "64px" in capsys.readouterr().err


def test_infer_on_corrupt_checkpoint_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.fi2p"
    bad.write_bytes(b"FI2Pgarbage")
    rc = cli.main(["infer", "--checkpoint", str(bad), "--image", "x.ppm",
                   "--out", str(tmp_path / "o.xyz")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path, capsys):
    out = _datagen(tmp_path)
    capsys.readouterr()  # drop datagen's own config echo
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({
        "model": {"variant": "maxpool", "scale": 8},
        "train": {"max_epochs": 1, "learning_rate": 5e-4, "seed": 2},
    }))
    ckpt = tmp_path / "m.fi2p"
    rc = cli.main(["train", "--data", str(out / "manifest.json"),
                   "--config", str(cfg_file), "--variant", "stride",
                   "--checkpoint", str(ckpt)])
    assert rc == 0
    echoed = capsys.readouterr().err
    line = [l for l in echoed.splitlines() if l.startswith("config:")][0]
    resolved = json.loads(line.split("config:", 1)[1])
    # flag overrides the file; file fills what flags left unset
    assert resolved["model"]["variant"] == "stride"
    assert resolved["train"]["max_epochs"] == 1
    _, loaded_cfg = model.load_checkpoint(ckpt)
    assert loaded_cfg.variant == "stride"


def test_bench_cli_end_to_end(tmp_path, capsys):
    out = _datagen(tmp_path, categories="box,cylinder", count=20)
    report_csv = tmp_path / "bench.csv"
    rc = cli.main(["bench", "--data", str(out / "manifest.json"),
                   "--checkpoints", str(tmp_path / "ckpts"),
                   "--reps", "5", "--warmup", "1", "--epochs", "1",
                   "--scale", "8",
                   "--out", str(report_csv)])
    assert rc == 0
    lines = report_csv.read_text().splitlines()
    assert len(lines) == 1 + 2 * 2  # header + (2 categories x 2 variants)
    raw = tmp_path / "bench.csv.raw.csv"
    assert raw.exists()
    capsys.readouterr()
    # second run reuses the checkpoints
    rc = cli.main(["bench", "--data", str(out / "manifest.json"),
                   "--checkpoints", str(tmp_path / "ckpts"), "--no-train",
                   "--reps", "3", "--warmup", "0", "--scale", "8",
                   "--out", str(report_csv)])
    assert rc == 0
