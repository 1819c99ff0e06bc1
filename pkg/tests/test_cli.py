import numpy as np
import pytest

from quarticity.cli import main
from quarticity.estimators import EstimatorConfig, evaluate, increments
from quarticity.process_sim import ModelSpec, SamplingSpec, simulate_path, observe, observed_spot

CONFIG = """
seed: 5
M: 30
estimators: [RV, VBarPrime, VHatPrime, "UStat:c"]
model: {volatility: {kind: constant, c: 1.0}}
sampling: {t: 1.0, n: 400}
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(CONFIG)
    return p


def read_estimates(path):
    rows = path.read_text().splitlines()[1:]
    return {r.split(",")[0]: float(r.split(",")[1]) for r in rows}


def test_simulate_then_estimate_round_trip(tmp_path, cfg_file, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(out)]) == 0
    assert main(["estimate", "--config", str(cfg_file), "--path", str(out / "path.csv"),
                 "--out", str(out)]) == 0
    got = read_estimates(out / "estimates.csv")

    path = simulate_path(ModelSpec(), SamplingSpec(1.0, 400), 5)
    inc = increments(observe(path), 1 / 400)
    for label in ("RV", "VBarPrime", "VHatPrime", "UStat:c"):
        want = evaluate(EstimatorConfig.from_label(label, 11), inc, observed_spot(path)).value
        assert got[label] == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_estimate_from_ticks(tmp_path, capsys):
    ticks = tmp_path / "t.csv"
    ticks.write_text("timestamp,price\n" + "".join(f"{i},{100 + (i % 3)}\n" for i in range(50)))
    code = main(["estimate", "--ticks", str(ticks), "--delta", "1", "--k-n", "3",
                 "--estimators", "RV,VHatPrime,UStat:c", "--out", str(tmp_path)])
    assert code == 0
    assert set(read_estimates(tmp_path / "estimates.csv")) == {"RV", "VHatPrime"}


def test_usage_error_exit_1(tmp_path, capsys):
    assert main(["mc"]) == 1
    assert main(["bogus"]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text(CONFIG + "kn_rule: {gamma: 0.6}\n")
    assert main(["mc", "--config", str(bad)]) == 1
    assert "rate condition" in capsys.readouterr().err


def test_data_error_exit_2(tmp_path, capsys):
    ticks = tmp_path / "t.csv"
    ticks.write_text("timestamp,price\n0,1\n1,-2\n")
    assert main(["estimate", "--ticks", str(ticks), "--delta", "1", "--out", str(tmp_path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_numerical_error_exit_3(tmp_path, capsys):
    p = tmp_path / "huge.yaml"
    p.write_text(CONFIG.replace("c: 1.0", "c: 1.0e300").replace("[RV, VBarPrime, VHatPrime, \"UStat:c\"]", "[QuarticNaive]"))
    with np.errstate(over="ignore", invalid="ignore"):
        assert main(["mc", "--config", str(p), "--out", str(tmp_path)]) == 3


def test_mc_outputs_and_flags_after_subcommand(tmp_path, cfg_file, capsys):
    out = tmp_path / "o"
    code = main(["mc", "--config", str(cfg_file), "--out", str(out), "--hist", "--qq",
                 "--samples", "--ci", "--format", "csv"])
    assert code == 0
    assert (out / "report.csv").exists()
    assert (out / "hist_UStat_c.csv").exists() and (out / "qq_RV.csv").exists()
    assert len((out / "samples.csv").read_text().splitlines()) == 1 + 4 * 30


def test_ci_and_decomp(tmp_path, cfg_file, capsys):
    assert main(["--config", str(cfg_file), "ci", "--alpha", "0.1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "ci.csv").read_text().startswith("plugin,alpha")
    assert main(["decomp", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "decomp.csv").read_text().splitlines()) == 31


def test_threads_do_not_change_report(tmp_path, cfg_file, capsys):
    for t in (1, 8):
        assert main(["mc", "--config", str(cfg_file), "--threads", str(t), "--out", str(tmp_path / str(t))]) == 0
    assert (tmp_path / "1" / "report.csv").read_bytes() == (tmp_path / "8" / "report.csv").read_bytes()
