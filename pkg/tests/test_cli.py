import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from colocfw import InstanceSpec, generate
from colocfw.cli import OUT_DIR_ENV, TRACE_COLUMNS, main

from conftest import brute_force_atoms, brute_force_min


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def inst_file(tmp_path):
    path = tmp_path / "inst.txt"
    assert main(["generate", "--videos", "2", "--frames", "5", "--boxes", "4", "--dim", "8",
                 "--seed", "7", "-o", str(path)]) == 0
    return path


def test_generate_writes_header_and_checksum(tmp_path, capsys):
    path = tmp_path / "inst.txt"
    assert main(["generate", "--videos", "2", "--frames", "5", "--boxes", "4", "--dim", "8",
                 "--seed", "7", "-o", str(path)]) == 0
    digest = capsys.readouterr().out.strip()
    text = path.read_text()
    assert text.splitlines()[0] == "COLOC-INSTANCE v1"
    assert text.splitlines()[-1] == f"CHECKSUM {digest}"


def test_generate_twice_same_checksum(tmp_path, capsys):
    args = ["generate", "--seed", "3", "-o"]
    main(args + [str(tmp_path / "a.txt")])
    main(args + [str(tmp_path / "b.txt")])
    a, b = capsys.readouterr().out.split()
    assert a == b


def test_generate_invalid_spec_exits_nonzero(tmp_path, capsys):
    assert main(["generate", "--boxes", "0", "-o", str(tmp_path / "x.txt")]) != 0
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "x.txt").exists()


def test_run_writes_traces_and_summary(inst_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--instance", str(inst_file), "--epsilon", "1e-4", "--max-iters", "300",
                 "--out-dir", str(out), "--plot-data"]) == 0
    table = capsys.readouterr().out
    for name in ("fw", "afw", "pairfw", "cgs", "acgs", "pcgs"):
        assert name in table
        rows = _read_csv(out / f"trace_{name}.csv")
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert 1 <= len(rows) <= 300
        assert [int(r["iter"]) for r in rows] == list(range(1, len(rows) + 1))
        assert all(float(r["gap"]) >= -1e-10 for r in rows)
        y = np.loadtxt(out / f"solution_{name}.txt")
        assert y.shape == (40,)
        rounded = json.loads((out / f"rounded_{name}.json").read_text())
        assert rounded["feasible"] is True
        assert [len(v) for v in rounded["boxes"]] == [5, 5]
    summary = {r["solver"]: r for r in _read_csv(out / "summary.csv")}
    for name, r in summary.items():
        trace = _read_csv(out / f"trace_{name}.csv")
        first = next((int(t["iter"]) for t in trace if float(t["gap"]) <= 1e-4), "")
        assert r["iterations_to_eps"] == str(first)
        assert int(r["iterations"]) == len(trace)
        assert r["reason"] in ("converged", "max_iters")
    plot = _read_csv(out / "plot_data.csv")
    assert {p["solver"] for p in plot} == set(summary)


def test_run_iteration_cap_rows(inst_file, tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--instance", str(inst_file), "--solvers", "acgs", "--max-iters", "10",
                 "--epsilon", "1e-12", "--out-dir", str(out)]) == 0
    assert len(_read_csv(out / "trace_acgs.csv")) <= 10
    assert _read_csv(out / "summary.csv")[0]["reason"] == "max_iters"


def test_run_huge_epsilon_converges_immediately(inst_file, tmp_path):
    out = tmp_path / "o"
    main(["run", "--instance", str(inst_file), "--epsilon", "1e9", "--out-dir", str(out)])
    for r in _read_csv(out / "summary.csv"):
        assert r["iterations"] == "1" and r["reason"] == "converged"


def test_run_uses_output_directory_from_environment(inst_file, tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv(OUT_DIR_ENV, str(target))
    assert main(["run", "--instance", str(inst_file), "--solvers", "fw", "--max-iters", "5"]) == 0
    assert (target / "trace_fw.csv").exists()


def test_run_generates_instance_from_flags(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--videos", "1", "--frames", "3", "--boxes", "3", "--seed", "2",
                 "--solvers", "pairfw,fw", "--gamma-schedule", "2k1", "--mu", "0.5",
                 "--mu-t", "1.0", "--lambda", "0.2", "--kappa", "0.05",
                 "--out-dir", str(out)]) == 0
    assert {r["solver"] for r in _read_csv(out / "summary.csv")} == {"pairfw", "fw"}


@pytest.mark.parametrize("argv", [
    ["run", "--solvers", "newton"],
    ["run", "--solvers", ","],
    ["run", "--epsilon", "0"],
    ["run", "--max-iters", "0"],
    ["run", "--instance", "/nonexistent/inst.txt"],
    ["run", "--edge-threshold", "0.99999"],
])
def test_run_configuration_errors(argv, tmp_path):
    assert main(argv + ["--out-dir", str(tmp_path / "o")]) == 2


def test_run_is_reproducible_except_time(inst_file, tmp_path):
    for d in ("a", "b"):
        main(["run", "--instance", str(inst_file), "--max-iters", "200", "--epsilon", "1e-4",
              "--out-dir", str(tmp_path / d)])
    for name in ("fw", "afw", "pairfw", "cgs", "acgs", "pcgs"):
        a = _read_csv(tmp_path / "a" / f"trace_{name}.csv")
        b = _read_csv(tmp_path / "b" / f"trace_{name}.csv")
        for ra, rb in zip(a, b):
            ra.pop("elapsed_s"), rb.pop("elapsed_s")
        assert a == b


def test_round_echoes_integral_solution(inst_file, tmp_path, capsys):
    inst = generate(InstanceSpec(seed=7))
    sol = tmp_path / "sol.txt"
    np.savetxt(sol, inst.planted_atom.indicator(inst.indexing.n_boxes))
    capsys.readouterr()
    assert main(["round", "--instance", str(inst_file), "--solution", str(sol)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["feasible"] is True
    assert out["boxes"] == [list(v) for v in inst.planted_atom.per_video(inst.indexing)]


def test_round_uniform_vector_gives_tie_break(inst_file, tmp_path, capsys):
    sol = tmp_path / "sol.txt"
    np.savetxt(sol, np.full(40, 0.25))
    capsys.readouterr()
    main(["round", "--instance", str(inst_file), "--solution", str(sol)])
    assert json.loads(capsys.readouterr().out)["boxes"] == [[0] * 5, [0] * 5]


def test_round_matches_enumeration(tmp_path, capsys):
    path = tmp_path / "small.txt"
    main(["generate", "--videos", "1", "--frames", "3", "--boxes", "3", "--seed", "4", "-o", str(path)])
    inst = generate(InstanceSpec(n_videos=1, frames_per_video=3, boxes_per_frame=3, seed=4))
    y = np.random.default_rng(0).uniform(size=9)
    sol = tmp_path / "y.txt"
    np.savetxt(sol, y, fmt="%.17g")
    capsys.readouterr()
    main(["round", "--instance", str(path), "--solution", str(sol)])
    got = json.loads(capsys.readouterr().out)["boxes"][0]
    atoms = brute_force_atoms(inst.indexing, inst.temporal_similarity(), 0.0)
    assert tuple(got) == brute_force_min(-y, atoms, 3)[1]


def test_round_length_mismatch(inst_file, tmp_path):
    sol = tmp_path / "sol.txt"
    np.savetxt(sol, np.zeros(7))
    assert main(["round", "--instance", str(inst_file), "--solution", str(sol)]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "colocfw", "generate", "--seed", "1", "-o",
                          str(tmp_path / "i.txt")], capture_output=True, text=True)
    assert res.returncode == 0 and len(res.stdout.strip()) == 64
    res = subprocess.run([sys.executable, "-m", "colocfw", "run", "--solvers", "bogus"],
                         capture_output=True, text=True)
    assert res.returncode == 2
