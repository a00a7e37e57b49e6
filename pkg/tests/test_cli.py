import pandas as pd
import pytest

from corvet.main import main


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    assert main(["fixture", "--out", str(out), "--train", "200", "--test", "30"]) == 0
    return out


def run_args(fixture_dir, out, *extra):
    return ["run", "--model", str(fixture_dir / "model.json"), "--dataset", str(fixture_dir / "test.json"),
            "--out", str(out), *extra]


def error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line]


def test_fixture_files(fixture_dir):
    for name in ("model.json", "model.weights.bin", "train.json", "test.json", "engine.json", "metadata.json"):
        assert (fixture_dir / name).exists()


def test_missing_model_exits_one(tmp_path, fixture_dir, capsys):
    rc = main(["run", "--model", str(tmp_path / "nope.json"), "--dataset", str(fixture_dir / "test.json"),
               "--out", str(tmp_path / "out")])
    assert rc == 1
    lines = error_lines(capsys)
    assert len(lines) == 1
    assert lines[0].startswith("corvet: error[load]")
    assert not (tmp_path / "out" / "results.json").exists()


def test_run_writes_outputs(tmp_path, fixture_dir, capsys):
    out = tmp_path / "out"
    assert main(run_args(fixture_dir, out, "--trace")) == 0
    for name in ("results.json", "cycles.csv", "trace.csv", "report.md", "metadata.json"):
        assert (out / name).exists()
    assert "digits-mlp" in capsys.readouterr().out

    cycles = pd.read_csv(out / "cycles.csv")
    assert len(cycles) == 4
    trace = pd.read_csv(out / "trace.csv")
    assert list(trace.columns) == ["cycle", "signal", "value"]
    assert trace["signal"].iloc[-1] == "DNNDone"


def test_run_is_byte_identical(tmp_path, fixture_dir):
    assert main(run_args(fixture_dir, tmp_path / "a", "--modes", "uniform-approx")) == 0
    assert main(run_args(fixture_dir, tmp_path / "b", "--modes", "uniform-approx")) == 0
    for name in ("results.json", "cycles.csv", "report.md"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_modes_is_a_config_error(tmp_path, fixture_dir, capsys):
    assert main(run_args(fixture_dir, tmp_path / "out", "--modes", "greedy")) == 1
    assert error_lines(capsys)[0].startswith("corvet: error[config]")


def test_precision_sweep(tmp_path, fixture_dir):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--model", str(fixture_dir / "model.json"), "--dataset", str(fixture_dir / "test.json"),
               "--out", str(out), "--sweep", "precision"])
    assert rc == 0
    df = pd.read_csv(out / "sweep.csv")
    assert list(df["point"]) == ["fxp4", "fxp8", "fxp16"]
    cycles = list(df["total_cycles"])
    assert cycles[0] < cycles[1] < cycles[2]
    assert "tanh_max_error" not in df.columns


def test_iterations_sweep_has_tanh_column(tmp_path, fixture_dir):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--model", str(fixture_dir / "model.json"), "--dataset", str(fixture_dir / "test.json"),
               "--out", str(out), "--sweep", "iterations", "--points", "2,8"])
    assert rc == 0
    df = pd.read_csv(out / "sweep.csv")
    assert list(df["point"]) == [2, 8]
    assert df["tanh_max_error"].iloc[0] > df["tanh_max_error"].iloc[1]
    assert df["total_cycles"].iloc[0] < df["total_cycles"].iloc[1]


@pytest.mark.parametrize("points", [",", " , "])
def test_empty_sweep_axis(tmp_path, fixture_dir, capsys, points):
    rc = main(["sweep", "--model", str(fixture_dir / "model.json"), "--dataset", str(fixture_dir / "test.json"),
               "--out", str(tmp_path / "out"), "--sweep", "pes", "--points", points])
    assert rc == 1
    lines = error_lines(capsys)
    assert len(lines) == 1 and lines[0].startswith("corvet: error[config]")


def test_pes_sweep_rejects_unsupported_count(tmp_path, fixture_dir, capsys):
    rc = main(["sweep", "--model", str(fixture_dir / "model.json"), "--dataset", str(fixture_dir / "test.json"),
               "--out", str(tmp_path / "out"), "--sweep", "pes", "--points", "64,100"])
    assert rc == 1
    assert "100" in error_lines(capsys)[0]


def test_loadimg_verify(tmp_path, fixture_dir, capsys):
    image = tmp_path / "params.cvtp"
    assert main(["loadimg", "--model", str(fixture_dir / "model.json"), "--out", str(image), "--json",
                 "--verify"]) == 0
    # 196*64+64 + 64*32+32 + 32*32+32 + 32*10+10
    assert "16074 entries verified" in capsys.readouterr().out
    assert image.with_suffix(".json").exists()

    assert main(["loadimg", "--model", str(fixture_dir / "model.json"), "--image", str(image)]) == 0

    data = bytearray(image.read_bytes())
    data[:4] = b"XXXX"
    image.write_bytes(bytes(data))
    capsys.readouterr()
    assert main(["loadimg", "--model", str(fixture_dir / "model.json"), "--image", str(image)]) == 1
    lines = error_lines(capsys)
    assert len(lines) == 1 and "magic" in lines[0]


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    assert error_lines(capsys)[0].startswith("corvet: error[usage]")

    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--model", "m.json", "--dataset", "d.json", "--sweep", "depth"])
    assert exc.value.code == 1
