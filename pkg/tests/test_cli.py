import json

import numpy as np
import pytest

from dbnmer import render
from dbnmer.cli import _parse_grid_file, grid_rows, main
from dbnmer.data import read_pgm, write_pgm
from dbnmer.metrics import METRIC_KEYS

TINY = """embed_dim = 16
enc_layers = 1
enc_heads = 2
dec_layers = 1
dec_heads = 2
ffn_dim = 32
batch = 4
epochs = 1
"""


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--n", "10", "--seed", "1", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def ckpt(dataset, tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpt")
    cfg = d / "tiny.cfg"
    cfg.write_text(TINY)
    path = d / "m.ckpt"
    assert main(["train", "--config", str(cfg), "--out", str(path), "--data", str(dataset), "--split", "all"]) == 0
    return path


def test_gen_data_layout(dataset):
    assert len(list((dataset / "images").glob("*.pgm"))) == 10
    assert len((dataset / "manifest.tsv").read_text().splitlines()) == 10


def test_train_prints_epochs(dataset, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(TINY.replace("epochs = 1", "epochs = 2") + f"data = {dataset}\nsplit = all\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [l.split("\t")[0] for l in lines[:2]] == ["epoch 1", "epoch 2"]
    assert (tmp_path / "m").exists()


def test_eval_report_and_records(ckpt, dataset, tmp_path, capsys):
    rep, recs = tmp_path / "r.tsv", tmp_path / "r.jsonl"
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(dataset), "--split", "all",
                 "--report", str(rep), "--records", str(recs)]) == 0
    lines = rep.read_text().splitlines()
    assert [l.split("\t")[0] for l in lines] == list(METRIC_KEYS)
    rows = [json.loads(l) for l in recs.read_text().splitlines()]
    assert len(rows) == 10 and set(rows[0]) == {"id", *METRIC_KEYS}
    assert capsys.readouterr().out == rep.read_text()


def test_infer(ckpt, tmp_path, capsys):
    write_pgm(tmp_path / "e.pgm", render.render("x + 1".split()))
    capsys.readouterr()
    assert main(["infer", "--ckpt", str(ckpt), "--image", str(tmp_path / "e.pgm")]) == 0
    out = capsys.readouterr().out.strip()
    assert "<sos>" not in out


def test_segment(tmp_path):
    img = render.render("1 + x = 2".split())
    write_pgm(tmp_path / "e.pgm", img)
    assert main(["segment", "--image", str(tmp_path / "e.pgm"), "--out", str(tmp_path / "s")]) == 0
    man = (tmp_path / "s" / "manifest.txt").read_text().splitlines()
    assert len(man) == 5
    idx, x0, y0, x1, y1 = map(int, man[0].split())
    assert idx == 0 and x0 <= x1 and y0 <= y1
    assert read_pgm(tmp_path / "s" / "symbol000.pgm").shape == (30, 30)


def test_grid_file_parsing(tmp_path):
    f = tmp_path / "g.cfg"
    f.write_text("grid = ccm_dst\nepochs = 1\nlr = 1e-3 | 3e-4\n")
    values, sweep = _parse_grid_file(f)
    assert values == {"grid": "ccm_dst", "epochs": 1} and sweep == {"lr": [1e-3, 3e-4]}
    rows = grid_rows({"grid": "ccm_dst", **sweep})
    assert len(rows) == 8 and rows[0] == {"enhancer": "none", "dst": False, "lr": 1e-3}
    f.write_text("grid = nope\n")
    with pytest.raises(ValueError, match="preset"):
        _parse_grid_file(f)


def test_ablate_end_to_end(tmp_path, capsys):
    f = tmp_path / "g.cfg"
    f.write_text(TINY + "n = 20\nenhancer = none | ccm\ntable = " + str(tmp_path / "t.tsv") + "\n")
    assert main(["ablate", "--grid", str(f)]) == 0
    table = (tmp_path / "t.tsv").read_text().splitlines()
    assert table[0].split("\t") == ["CCM", *METRIC_KEYS] and len(table) == 3
    assert capsys.readouterr().out.splitlines() == table


def test_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("lr = 1\nwhat = 3\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "m")]) == 2
    assert "bad.cfg:2" in capsys.readouterr().err
    assert main(["eval", "--ckpt", str(tmp_path / "none"), "--data", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["fly"])
