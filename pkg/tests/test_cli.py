import csv
import json
import warnings

import pytest

from spikeattack import cli, verify
from spikeattack.verify import CheckResult

SMALL = """
data.n_train = 200
data.n_test = 40
data.dim = 16
data.classes = 2
model.hidden = 16, 16
train.epochs = 3
train.batch_size = 50
attack.n_iter = 5
attack.n_samples = 20
sweep.budgets = 5, 10
sweep.methods = pgd, sapgd
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def _run(*args):
    return cli.main([str(a) for a in args])


def test_verify_exit_codes(monkeypatch, capsys):
    monkeypatch.setattr(verify, "run_all", lambda: [CheckResult("ok", True)])
    assert _run("verify") == 0
    monkeypatch.setattr(verify, "run_all",
                        lambda: [CheckResult("ok", True), CheckResult("bad", False)])
    assert _run("verify") == 2
    assert "FAIL" in capsys.readouterr().out


def test_invalid_config_exit_one(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("attack.A = 7\nnot.a.key = 1\n")
    assert _run("train", "--config", p) == 1
    err = capsys.readouterr().err
    assert "attack.A" in err and "not.a.key" in err
    assert _run("frobnicate") == 1


def test_attack_without_model_is_invalid(cfg_path, tmp_path):
    assert _run("attack", "--config", cfg_path, "--out", tmp_path / "o") == 1


def test_gen_data_deterministic(cfg_path, tmp_path):
    for name in ("a", "b"):
        assert _run("gen-data", "--config", cfg_path, "--seed", 3, "--out", tmp_path / name) == 0
    for f in ("train_x", "train_y", "test_x", "test_y"):
        assert (tmp_path / "a/data" / f"{f}.spkt").read_bytes() == \
            (tmp_path / "b/data" / f"{f}.spkt").read_bytes()


def test_pipeline(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert _run("train", "--config", cfg_path, "--out", out) == 0
    manifest = json.loads((out / "model/train_manifest.json").read_text())
    assert manifest["training_method"] == "at" and len(manifest["history"]) == 3
    assert _run("attack", "--config", cfg_path, "--out", out) == 0
    assert _run("sweep", "--config", cfg_path, "--out", out) == 0
    fig4 = list(csv.DictReader(open(out / "sweep_fig4.csv", encoding="utf-8")))
    assert len([r for r in fig4 if r["surrogate"] == "assg"]) == 9
    assert len([r for r in fig4 if r["surrogate"] == "atan"]) == 6
    fig5 = list(csv.reader(open(out / "sweep_fig5.csv", encoding="utf-8")))
    assert fig5[0] == ["method", "iter_5", "iter_10"] and len(fig5) == 3
    gamma = list(csv.reader(open(out / "sweep_gamma.csv", encoding="utf-8")))
    assert gamma[0] == ["gamma_0", "gamma_0.5", "gamma_1.5", "gamma_3"] and len(gamma[1]) == 4
    assert _run("report", "--config", cfg_path, "--out", out) == 0
    table = list(csv.DictReader(open(out / "asr_table.csv", encoding="utf-8")))
    assert len(table) == 1 and table[0]["attack"] == "sapgd"


def test_poisson_attack_freezes_inside_eot(tmp_path):
    p = tmp_path / "p.ini"
    p.write_text(SMALL + "model.encoder = poisson\nattack.eot_samples = 10\n")
    out = tmp_path / "o"
    assert _run("train", "--config", p, "--out", out) == 0
    with warnings.catch_warnings():
        # an update on a frozen state would warn; inside EOT none may happen
        warnings.simplefilter("error", RuntimeWarning)
        assert _run("attack", "--config", p, "--out", out) == 0
