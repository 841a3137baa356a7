import json
from pathlib import Path

import numpy as np
import pytest

from mg1kit import cli, presets
from mg1kit.io import chain_from_dict, chain_to_dict, dumps
from mg1kit.errors import ValidationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("name", ["SC1", "HC1", "MP2"])
def test_chain_roundtrip(name):
    spec = presets.get(name)
    back = chain_from_dict(json.loads(dumps(chain_to_dict(spec))))
    for k in range(-1, 6):
        assert np.array_equal(spec.a(k), back.a(k))
        assert np.array_equal(spec.b(k), back.b(k))


def test_bad_block_offsets():
    d = chain_to_dict(presets.sc1())
    d["A"] = {"0": [[0.5]], "1": [[0.5]]}
    with pytest.raises(ValidationError):
        chain_from_dict(d)
    d = chain_to_dict(presets.sc1())
    d["B"]["0"] = [[0.8, 0.0]]
    with pytest.raises(ValidationError):
        chain_from_dict(d)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok_and_broken(capsys):
    code, out, _ = run(capsys, "validate", CONFIGS / "sc1.json")
    assert code == 0 and json.loads(out)["valid"]
    code, out, _ = run(capsys, "validate", CONFIGS / "sc1_broken.json")
    assert code == 2 and not json.loads(out)["valid"]


def test_solve_csv(capsys):
    code, out, _ = run(capsys, "solve", CONFIGS / "sc1.json", "--levels", 3)
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0] == "level,phase,value"
    assert float(rows[2].split(",")[2]) == pytest.approx(0.24)


def test_solve_finite_needs_n(capsys):
    code, _, err = run(capsys, "solve", CONFIGS / "sc1.json", "--mode", "finite")
    assert code == 64 and "--N" in err


def test_missing_file(capsys):
    code, _, _ = run(capsys, "solve", CONFIGS / "nope.json")
    assert code == 64


def test_deviation_window_error(capsys):
    code, _, err = run(capsys, "deviation", CONFIGS / "sc1.json", "--K", 4, "--L", 4,
                       "--check-poisson")
    assert code == 3 and "K >= 5" in err


def test_deviation_outputs(capsys, tmp_path):
    code, _, err = run(capsys, "deviation", CONFIGS / "mp2.json", "--K", 20, "--L", 5,
                       "--check-poisson", "--check-diff", "--N", 10, "--out", tmp_path)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["poisson"]["residual"] < 1e-10
    assert summary["difference"]["max_error"] < 1e-12
    assert (tmp_path / "h_window.csv").exists()


def test_loss_commands(capsys):
    code, out, _ = run(capsys, "loss", CONFIGS / "mm1_queue.json", "--N-grid", "1,4")
    assert code == 0
    assert float(out.splitlines()[2].split(",")[1]) == pytest.approx(1 / 63)
    code, _, _ = run(capsys, "loss", CONFIGS / "mm1_queue.json", "--N-grid", "4", "--asymptotic")
    assert code == 65
    code, _, _ = run(capsys, "loss", CONFIGS / "mm1_queue.json", "--N-grid", "")
    assert code == 64
    code, out, _ = run(capsys, "loss", CONFIGS / "m_pareto_queue.json", "--N-grid", "25,50",
                       "--asymptotic")
    assert code == 0 and out.startswith("N,loss_exact,loss_asymptotic,ratio")


def test_study_and_verify(capsys, tmp_path):
    code, _, _ = run(capsys, "study", CONFIGS / "hc1_preset.json", "--grid", "25,50,100",
                     "--k-list", "1", "--out", tmp_path)
    assert code == 0
    assert json.loads((tmp_path / "summary.json").read_text())["status"] == "ok"
    code, out, _ = run(capsys, "verify", CONFIGS / "sc1.json", "--N", 200)
    assert code == 0 and json.loads(out)["pass"]


def test_bad_arguments_exit_64():
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve"])
    assert exc.value.code == 64
