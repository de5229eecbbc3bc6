import re

import pytest

from alsx.bench import benchmark_suite, default_library, random_netlist
from alsx.cli import main
from alsx.netlist import export_blif

from conftest import MINI_LIB


@pytest.fixture
def files(tmp_path):
    lib = tmp_path / "mini.lib"
    lib.write_text(MINI_LIB)
    def gate(name, body, inputs="a b", outputs="y"):
        p = tmp_path / f"{name}.blif"
        p.write_text(f".model {name}\n.inputs {inputs}\n.outputs {outputs}\n{body}\n.end\n")
        return str(p)
    return tmp_path, str(lib), gate


def _suite_file(tmp_path, idx):
    nl = benchmark_suite(default_library())[idx]
    p = tmp_path / f"{nl.name}.blif"
    p.write_text(export_blif(nl))
    return str(p)


def test_gen_data_and_determinism(files, capsys):
    tmp, lib, gate = files
    g = gate("g", ".gate NAND2 A=a B=b Y=y")
    assert main(["gen-data", "--lib", lib, "--in", g, "--out", str(tmp / "a.txt"), "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert int(re.search(r"samples: (\d+)", out).group(1)) > 0
    assert main(["gen-data", "--lib", lib, "--in", g, "--out", str(tmp / "b.txt"), "--seed", "1"]) == 0
    assert (tmp / "a.txt").read_bytes() == (tmp / "b.txt").read_bytes()


def test_missing_library(files, capsys):
    tmp, _, gate = files
    g = gate("g", ".gate NAND2 A=a B=b Y=y")
    assert main(["gen-data", "--lib", str(tmp / "nope.lib"), "--in", g, "--out", str(tmp / "x")]) == 2
    assert "nope.lib" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["approx"]) == 2
    assert main(["approx", "--in", "x.blif", "--emax", "2"]) == 2


def test_train_header_and_accuracy(files, capsys):
    tmp, lib, _ = files
    data = tmp / "d.txt"
    assert main(["gen-data", "--in", _suite_file(tmp, 0), _suite_file(tmp, 1), "--out", str(data)]) == 0
    capsys.readouterr()
    model = tmp / "m.txt"
    assert main(["train", "--data", str(data), "--out", str(model), "--epochs", "2", "--plots", str(tmp / "fig")]) == 0
    out = capsys.readouterr().out
    assert "lr 0.001 epochs 2" in out
    acc = [float(v) for v in re.search(r"test_accuracy: (\S+) (\S+)", out).groups()]
    assert all(0 <= a <= 1 for a in acc)
    assert (tmp / "fig" / "training.png").stat().st_size > 0
    assert main(["train", "--data", str(data), "--out", str(tmp / "m0.txt"), "--epochs", "0"]) == 0
    assert "lr 0.001 epochs 0" in capsys.readouterr().out and (tmp / "m0.txt").exists()
    main(["train", "--data", str(data), "--out", str(tmp / "m3.txt")])
    assert "lr 0.001 epochs 30" in capsys.readouterr().out


def test_approx_zero_budget_verifies(files, capsys):
    tmp, _, _ = files
    src = _suite_file(tmp, 1)
    out = tmp / "o.blif"
    assert main(["approx", "--in", src, "--out", str(out), "--emax", "0", "--predictor", "oracle"]) == 0
    capsys.readouterr()
    assert main(["verify", "--in", src, "--approx", str(out), "--emax", "0"]) == 0
    assert "max,0.000000" in capsys.readouterr().out


def _field(text, key):
    return float(re.search(rf"^{key}: (\S+)$", text, re.M).group(1))


def test_approx_default_and_delay(files, capsys):
    tmp, _, _ = files
    src = _suite_file(tmp, 2)
    report = tmp / "r.txt"
    main(["approx", "--in", src, "--out", str(tmp / "o.blif"), "--report", str(report), "--plots", str(tmp / "f")])
    text = capsys.readouterr().out
    assert _field(text, "e_out_predicted") <= 0.05
    assert report.read_text() in text
    assert (tmp / "f" / "approx_costs.png").exists()
    main(["approx", "--in", src, "--out", str(tmp / "d.blif"), "--mode", "delay"])
    text = capsys.readouterr().out
    assert _field(text, "delay_after") <= _field(text, "delay_before")


def test_approx_dnn_needs_model(files, capsys):
    tmp, _, _ = files
    assert main(["approx", "--in", _suite_file(tmp, 0), "--predictor", "dnn"]) == 2


def test_approx_dnn_runs(files, capsys):
    tmp, _, _ = files
    data, model = tmp / "d.txt", tmp / "m.txt"
    main(["gen-data", "--in", _suite_file(tmp, 0), "--out", str(data)])
    main(["train", "--data", str(data), "--out", str(model), "--epochs", "1"])
    capsys.readouterr()
    code = main(["approx", "--in", _suite_file(tmp, 1), "--predictor", "dnn", "--model", str(model)])
    assert code in (0, 1)
    assert "predictor: dnn" in capsys.readouterr().out


def test_verify_examples(files, capsys):
    tmp, lib, gate = files
    a = gate("a", ".gate AND2 A=a B=b Y=y")
    o = gate("o", ".gate OR2 A=a B=b Y=y")
    assert main(["verify", "--lib", lib, "--in", a, "--approx", a]) == 0
    assert "max,0.000000" in capsys.readouterr().out
    assert main(["verify", "--lib", lib, "--in", a, "--approx", o]) == 0
    assert "max,0.500000" in capsys.readouterr().out
    assert main(["verify", "--lib", lib, "--in", a, "--approx", o, "--emax", "0.1"]) == 1
    z = gate("z", ".gate AND2 A=a B=b Y=z", outputs="z")
    assert main(["verify", "--lib", lib, "--in", a, "--approx", z]) == 2


def test_verify_mc_matches_exhaustive(tmp_path, capsys):
    lib = default_library()
    nl = random_netlist(lib, 50, 10, 3, seed=8)
    approx = nl.copy()
    approx.replace(4, lib["CONST1"], [])
    a, b = tmp_path / "a.blif", tmp_path / "b.blif"
    a.write_text(export_blif(nl))
    b.write_text(export_blif(approx))
    main(["verify", "--in", str(a), "--approx", str(b)])
    ex = float(capsys.readouterr().out.strip().splitlines()[-1].split(",")[1])
    main(["verify", "--in", str(a), "--approx", str(b), "--method", "mc", "--samples", "1000000", "--seed", "3"])
    mc = float(capsys.readouterr().out.strip().splitlines()[-1].split(",")[1])
    assert abs(ex - mc) <= 0.003


def test_report_examples(files, capsys):
    tmp, lib, gate = files
    empty = gate("e", "", inputs="a", outputs="a")
    assert main(["report", "--lib", lib, "--in", empty]) == 0
    row = capsys.readouterr().out.splitlines()[1].split(",")
    assert row[5:7] == ["0.000000", "0.000000"]
    one = gate("one", ".gate NAND2 A=a B=b Y=y")
    two = gate("two", ".gate NAND2 A=a B=b Y=y\n.gate NAND2 A=a B=b Y=z", outputs="y z")
    main(["report", "--lib", lib, "--in", one, two, "--plots", str(tmp / "p")])
    lines = capsys.readouterr().out.splitlines()
    assert float(lines[2].split(",")[6]) == 2 * float(lines[1].split(",")[6])
    # NAND2 alone: p = 0.75, activity 0.375, load 1.2, delay 1.0 + 0.5 * 1.2
    assert lines[1].split(",")[5:] == ["0.450000", "2.000000", "1.600000"]
    assert (tmp / "p" / "costs.png").exists()


def test_commands_are_byte_identical(files, capsys):
    tmp, _, _ = files
    src = _suite_file(tmp, 3)
    outs = []
    for k in range(2):
        main(["approx", "--in", src, "--out", str(tmp / f"o{k}.blif"), "--report", str(tmp / f"r{k}.txt")])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert (tmp / "o0.blif").read_bytes() == (tmp / "o1.blif").read_bytes()
    assert (tmp / "r0.txt").read_bytes() == (tmp / "r1.txt").read_bytes()
