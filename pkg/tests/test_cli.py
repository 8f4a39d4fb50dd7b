import re

import pytest

from bgload.metrics import load_cache
from pipeline import ARTIFACTS, full_pipeline, run


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    return d, full_pipeline(d)


def test_pipeline_outputs(workspace):
    d, stdout = workspace
    assert re.search(r"^t_target=\S+ iters=\d+ d_ms=0\.000$", stdout, re.M)
    assert stdout.startswith("config predict k=1")
    for name in ARTIFACTS:
        assert (d / name).stat().st_size > 0
    text = (d / "predict.txt").read_text()
    assert text.startswith("t_target=") and "trajectory=" in text


def test_rerun_is_byte_identical(workspace, tmp_path):
    d, stdout = workspace
    again = full_pipeline(tmp_path)
    assert again == stdout
    for name in ARTIFACTS:
        assert (tmp_path / name).read_bytes() == (d / name).read_bytes(), name


def test_predict_reports_timing(workspace):
    d, _ = workspace
    code, out, _ = run(["predict", "--cache", d / "cache.txt", "--simlog", d / "simlog.txt",
                        "--workflow", d / "workflow.txt", "--k", 2, "--seed", 3])
    assert code == 0
    assert re.search(r"^t_target=\S+ iters=\d+ d_ms=\d+\.\d{3}$", out, re.M)


def test_predict_from_observed_file(workspace, tmp_path):
    d, _ = workspace
    obs = tmp_path / "obs.txt"
    obs.write_text("\n".join(str(v) for v in [300.0] + [260.0] * 8) + "\n")
    code, out, err = run(["predict", "--cache", d / "cache.txt", "--simlog", d / "simlog.txt",
                          "--workflow", d / "workflow.txt", "--k", 1, "--observed", obs,
                          "--filter-budget", 10])
    assert code == 0, err
    assert "filtered=10" in out


def test_study_and_sweep(workspace, tmp_path):
    d, _ = workspace
    common = ["--cache", d / "cache.txt", "--simlog", d / "simlog.txt", "--workflow", d / "workflow.txt"]
    code, out, err = run(["study", *common, "--runs", 4, "--out", tmp_path / "s.csv", "--no-timing"])
    assert code == 0, err
    assert "R2[SQD] past=" in out
    assert (tmp_path / "s.csv").read_text().startswith("run_id,t_g,t_target,k,")
    assert (tmp_path / "s.random.csv").exists()
    code, out, err = run(["sweep", *common, "--grid", "P=5,10", "--grid", "fn=SQD,MAPE", "--runs", 2,
                          "--no-timing"])
    assert code == 0, err
    rows = [line for line in out.splitlines() if re.match(r"^\d", line)]
    assert len(rows) == 4


def test_inputs_untouched(workspace):
    d, _ = workspace
    before = {n: (d / n).read_bytes() for n in ("cache.txt", "simlog.txt", "workflow.txt")}
    run(["predict", "--cache", d / "cache.txt", "--simlog", d / "simlog.txt",
         "--workflow", d / "workflow.txt", "--k", 1])
    assert before == {n: (d / n).read_bytes() for n in before}


def test_cache_file_round_trips(workspace):
    d, _ = workspace
    cache = load_cache(d / "cache.txt")
    assert cache.shape.sections == 3 and len(cache) > 0


@pytest.mark.parametrize(
    "argv",
    [
        ["predict", "--simlog", "s", "--workflow", "w", "--k", "1"],
        ["frobnicate"],
        ["simulate", "--archive", "a"],
        ["synth", "--out", "x", "--jobs", "many"],
    ],
)
def test_usage_errors_exit_1(argv):
    assert run(argv)[0] == 1


def test_data_errors_exit_2(workspace, tmp_path):
    d, _ = workspace
    code, _, err = run(["predict", "--cache", d / "cache.txt", "--simlog", d / "simlog.txt",
                        "--workflow", d / "workflow.txt", "--k", 3])
    assert code == 2 and "error:" in err
    bad = tmp_path / "bad.txt"
    bad.write_text("1 x 0 10 1\n")
    assert run(["ingest", bad, "--out", tmp_path / "o.txt"])[0] == 2
    assert run(["ingest", tmp_path / "missing.txt", "--out", tmp_path / "o.txt"])[0] == 2
