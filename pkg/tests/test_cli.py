import csv

import numpy as np
import pytest

from reproto import cli
from reproto.model import load_model
from reproto.prototypes import load_prototypes

SMALL = """
[data]
k = 3
input_dim = 4
sigma = 0.06
n_per_class = 60

[prototypes]
D = 6

[model]
hidden = 16

[training]
epochs = 4
batch_size = 32

[attack]
eps = 0.08
n_iters = 5

[evaluation]
eps_list = 0, 0.04, 0.08, 0.12
d_list = 3, 6
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(SMALL)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_protos_gen_and_stats(config, tmp_path):
    out = tmp_path / "p"
    assert run("protos", "gen", "--config", config, "--out", out) == 0
    protos = load_prototypes(out / "protos.csv")
    assert protos.k == 3 and protos.D == 6
    stats = dict(read_rows(out / "protos_stats.csv")[1:])
    assert float(stats["min_pairwise"]) > 0
    assert (out / "resolved_config.ini").exists()
    out2 = tmp_path / "s"
    assert run("protos", "stats", "--config", config, "--out", out2,
               "--override", f"prototypes.path={out / 'protos.csv'}") == 0
    assert (out2 / "protos_stats.csv").read_text() == (out / "protos_stats.csv").read_text()


def test_default_recipe_protos(tmp_path):
    out = tmp_path / "p"
    assert run("protos", "gen", "--out", out, "--override", "data.k=10",
               "--override", "prototypes.D=100") == 0
    stats = dict(read_rows(out / "protos_stats.csv")[1:])
    assert float(stats["min_pairwise"]) > 0


def test_train_then_evaluate_pipeline(config, tmp_path):
    rep, soft = tmp_path / "rep", tmp_path / "soft"
    assert run("train", "--config", config, "--out", rep) == 0
    assert run("train", "--config", config, "--out", soft,
               "--override", "training.regime=softmax") == 0
    m = load_model(rep / "model.txt")
    assert m.protos is not None and m.protos == load_prototypes(rep / "protos.csv")
    assert load_model(soft / "model.txt").protos is None
    hist = read_rows(rep / "history.csv")
    assert hist[0] == ["epoch", "loss", "nat_acc", "rob_acc", "lr"] and len(hist) == 5

    model_override = f"model.path={rep / 'model.txt'}"
    assert run("attack", "--config", config, "--out", tmp_path / "a", "--override", model_override) == 0
    assert run("curve", "--config", config, "--out", tmp_path / "c", "--override", model_override) == 0
    curve = read_rows(tmp_path / "c" / "curve.csv")[1:]
    assert len(curve) == 4
    accs = [float(r[1]) for r in curve]
    assert all(b <= a for a, b in zip(accs, accs[1:]))
    assert (tmp_path / "c" / "curve.svg").read_text().startswith("<svg")
    assert run("confusion", "--config", config, "--out", tmp_path / "cm",
               "--override", model_override) == 0

    assert run("transfer", "--config", config, "--out", tmp_path / "t",
               "--override", f"evaluation.substitute={soft / 'model.txt'}",
               "--override", f"evaluation.targets={soft / 'model.txt'},{rep / 'model.txt'}") == 0
    rows = read_rows(tmp_path / "t" / "transfer.csv")
    assert rows[1][2] == rows[1][3]          # self-transfer equals white-box


def test_sweep_dims(config, tmp_path):
    assert run("sweep-dims", "--config", config, "--out", tmp_path / "w") == 0
    rows = read_rows(tmp_path / "w" / "sweep.csv")
    assert rows[0] == ["D", "natural_acc", "robust_acc", "min_separation"]
    assert [r[0] for r in rows[1:]] == ["3", "6"]


@pytest.mark.parametrize("argv", [
    ["train", "--override", "training.bogus=1"],
    ["train", "--override", "nosection.key=1"],
    ["train", "--override", "training.epochs=abc"],
    ["attack"],
    ["train", "--override", "data.path=/does/not/exist.csv"],
])
def test_validation_failures_write_nothing(tmp_path, argv, capsys):
    out = tmp_path / "o"
    assert cli.main(argv + ["--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())
    assert "error" in capsys.readouterr().err


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[training]\nepochz = 3\n")
    with pytest.raises(cli.ConfigError):
        cli.load_config(path)


def test_rerun_is_byte_identical(config, tmp_path):
    for name in ("a", "b"):
        assert run("train", "--config", config, "--out", tmp_path / name, "--seed", 7) == 0
    for f in ("model.txt", "history.csv", "protos.csv", "summary.csv", "enclosure.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_derive_seed_distinct():
    seeds = {cli.derive_seed(0, c) for c in ("data", "split", "model", "training", "attack")}
    assert len(seeds) == 5
    assert cli.derive_seed(3, "data") == cli.derive_seed(3, "data")
