import json

import pytest
from hypothesis import given, strategies as st

from minlab.cli import RunConfig, main

SMALL = ["--grid", "64", "--samples", "4", "--horizons", "1..6"]


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_decay_is_byte_identical(tmp_path, monkeypatch):
    cfg = tmp_path / "base.cfg"
    cfg.write_text("grid = 64\nsamples = 6\nhorizons = 1..8\ndist = uniform:0.01\n")
    outs = []
    for i, threads in enumerate(["1", "1", "3"]):
        monkeypatch.setenv("MINLAB_THREADS", threads)
        out = tmp_path / f"run{i}"
        assert main(["decay", "--config", str(cfg), "--seed", "42", "--out", str(out)]) == 0
        outs.append(out)
    for name in ("decay.csv", "fit.json", "omega.csv"):
        blobs = {(o / name).read_bytes() for o in outs}
        assert len(blobs) == 1, name


def test_decay_csv_format(tmp_path):
    assert run(tmp_path, "decay", *SMALL, "--sigma", "0.01") == 0
    lines = (tmp_path / "decay.csv").read_text().splitlines()
    assert lines[0] == "sample,horizon,diameter"
    assert len(lines) == 1 + 4 * 6
    assert lines[1].split(",")[2].count("e") == 1
    head = (tmp_path / "omega.csv").read_text().splitlines()[0]
    assert head == "t_minus_s,point_index,terminal_index,kind"


def test_zero_sigma_reports_no_decay(tmp_path, capsys):
    assert run(tmp_path, "decay", *SMALL, "--sigma", "0") == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["lambda_hat"] == pytest.approx(0.0, abs=1e-12)
    assert fit["status"] == "no-decay"
    assert {"lambda_hat", "C_hat", "r_squared", "n_samples", "burn_in"} <= set(fit)
    assert "lambda_hat=" in capsys.readouterr().out


def test_collapsed_series_is_numeric_failure(tmp_path, capsys):
    assert run(tmp_path, "decay", *SMALL, "--sigma", "5") == 3
    assert "grid floor" in capsys.readouterr().err
    assert json.loads((tmp_path / "fit.json").read_text())["status"] == "too-few-points"


def test_fit_subcommand_reads_decay_csv(tmp_path):
    assert run(tmp_path, "decay", *SMALL, "--sigma", "0") == 0
    first = (tmp_path / "fit.json").read_bytes()
    assert run(tmp_path, "fit", "--grid", "64") == 0
    assert (tmp_path / "fit.json").read_bytes() == first


@pytest.mark.parametrize("text", ["foo = 1\n", "grid = 4\n", "grid = x\n", "samples = 0\n", "b = 2.5\nwinding_max = 2\n",
                                  "horizons = 5..2\n", "mode = white:0\n", "dist = cauchy:1\n", "no equals sign\n"])
def test_bad_config_exits_2_without_output(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    out = tmp_path / "out"
    assert main(["decay", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_missing_config_exits_2(tmp_path):
    assert main(["decay", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_config_round_trip_default():
    cfg = RunConfig()
    again = RunConfig.parse(cfg.dump())
    assert again.dump() == cfg.dump()


@given(
    grid=st.integers(8, 4096),
    b=st.floats(-3, 3, allow_nan=False),
    seed=st.integers(0, 2**64 - 1),
    sigma=st.floats(0, 10, allow_nan=False),
    burn=st.one_of(st.none(), st.integers(0, 5)),
    kind=st.sampled_from(["uniform", "gauss"]),
    mode=st.sampled_from(["kicked", "white:4", "white:16"]),
)
def test_config_round_trip(grid, b, seed, sigma, burn, kind, mode):
    cfg = RunConfig(grid=grid, b=b, seed=seed, dist=f"{kind}:{sigma!r}", burn_in=burn, mode=mode)
    cfg.validate()
    text = cfg.dump()
    parsed = RunConfig.parse(text)
    assert parsed == cfg
    assert parsed.dump() == text


def test_comments_and_blank_lines():
    cfg = RunConfig.parse("# base run\n\ngrid = 128  # small\nseed=7\n")
    assert cfg.grid == 128 and cfg.seed == 7


def test_separation_auto3(tmp_path):
    assert run(tmp_path, "separation", "--basis", "fourier:1c,1s", "--auto3") == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert len(cert["coefficients"]) == 3 and len(cert["J"]) == 3
    assert cert["alpha0"] > 0


def test_separation_failure_exit(tmp_path):
    assert run(tmp_path, "separation", "--basis", "fourier:2c,2s", "--auto3") == 1


def test_constants(tmp_path):
    assert run(tmp_path, "constants") == 0
    c = json.loads((tmp_path / "constants.json").read_text())
    assert c["alpha"] < 1 / 30 and int(c["N"]) > int(c["N_prime"])


def test_embed(capsys):
    assert main(["embed", "--basis", "fourier:2c,2s", "--grid", "64"]) != 0
    assert "witness" in capsys.readouterr().out
    assert main(["embed", "--basis", "fourier:1c,1s"]) == 0


def test_oracle_small(capsys):
    assert main(["oracle", "--max-m", "8", "--max-steps", "2", "--seeds", "3"]) == 0
    assert "0 mismatches" in capsys.readouterr().out


def test_halving_json(tmp_path):
    assert run(tmp_path, "halving", "--grid", "64", "--t-halving", "2") == 0
    h = json.loads((tmp_path / "halving.json").read_text())
    assert {"T", "frequency", "excluded", "confidence"} <= set(h)
    assert h["T"] == 2


def test_lyapunov_and_convergence(tmp_path):
    assert run(tmp_path, "lyapunov", "--grid", "64") == 0
    assert json.loads((tmp_path / "lyapunov.json").read_text())["exponent"] > 0
    assert run(tmp_path, "convergence", "--grid", "64", "--samples", "2", "--horizons", "1..3") == 0
    assert (tmp_path / "convergence.csv").read_text().startswith("sample,horizon,distance\n")


def test_white_mode_decay(tmp_path):
    assert run(tmp_path, "decay", *SMALL, "--mode", "white:4", "--b", "0.5", "--sigma", "0") == 0


def test_values_dump(tmp_path):
    assert main(["decay", *SMALL, "--sigma", "0", "--dump-values", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "values.csv").read_text().startswith("time,index,value\n")
