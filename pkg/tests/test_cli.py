from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from gforpod.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from gforpod.scenarios import build_two_area, remove_converter

SPECS = Path(__file__).resolve().parent.parent / "specs"
TWO_AREA = str(SPECS / "two_area.json")

VERBS = {
    "pf": (["pf", TWO_AREA], ["pf.csv"]),
    "modes": (["modes", TWO_AREA], ["modes.csv"]),
    "sim": (["sim", TWO_AREA, "--event", "load:bus=2,factor=1.01,t=0.1", "--T", "0.5"],
            ["timeseries.csv"]),
    "sweep": (["sweep", TWO_AREA, "--param", "branch:2-3:x", "--grid", "0.05:0.3:4"],
              ["sweep.csv"]),
    "design": (["design", TWO_AREA, "--channel", "P", "--dzeta", "0.10", "--kmin", "200",
                "--kmax", "400", "--ns", "2", "--tf", "0.1", "--tw", "5"], ["design.json"]),
    "compare": (["compare", str(SPECS / "matrix_two_area.json")],
                ["compare.csv", "design_P.json", "design_Q.json", "sweep_Base.csv",
                 "sweep_POD-PQ.csv"]),
}


def _run(argv, out: Path) -> int:
    return main([*argv, "--out", str(out)])


@pytest.mark.parametrize("verb", sorted(VERBS))
def test_every_verb_succeeds_and_writes_its_files(tmp_path, verb):
    argv, files = VERBS[verb]
    assert _run(argv, tmp_path) == EXIT_OK
    for name in files:
        assert (tmp_path / name).stat().st_size > 0


@pytest.mark.parametrize("verb", sorted(VERBS))
def test_repeated_runs_are_byte_identical(tmp_path, verb):
    argv, _ = VERBS[verb]
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(argv, a) == _run(argv, b) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_design_file_holds_pod_and_report(tmp_path):
    assert _run(VERBS["design"][0], tmp_path) == EXIT_OK
    d = json.loads((tmp_path / "design.json").read_text())
    assert d["pod"]["k"] == 200.0
    assert d["report"]["clamped"] == "minimum" and d["report"]["branch"] == "lag"


def test_sim_csv_starts_with_time_column(tmp_path):
    assert _run(VERBS["sim"][0], tmp_path) == EXIT_OK
    lines = (tmp_path / "timeseries.csv").read_text().splitlines()
    assert lines[0].startswith("t_s,") and len(lines) == 501 + 1


def test_missing_file_is_a_usage_error(tmp_path, capsys):
    assert _run(["modes", str(tmp_path / "nope.json")], tmp_path) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_failed_sweep_point_gives_nonzero_exit(tmp_path, capsys):
    code = _run(["sweep", TWO_AREA, "--param", "branch:2-3:x", "--grid", "0.1,5"], tmp_path)
    assert code == EXIT_FAILED
    assert "sweep point 5" in capsys.readouterr().err
    assert (tmp_path / "sweep.csv").exists()


def test_divergent_simulation_gives_nonzero_exit(tmp_path, capsys):
    argv = ["sim", TWO_AREA, "--event", "load:bus=2,factor=1.01,t=0.1", "--T", "1", "--dt", "5e-3"]
    assert _run(argv, tmp_path) == EXIT_FAILED
    assert "SimulationError" in capsys.readouterr().err


def test_design_without_converter_gives_nonzero_exit(tmp_path):
    spec = build_two_area(0.1)
    from_file = tmp_path / "base.json"
    remove_converter(spec, "GFOR2").save(from_file)
    assert _run(["design", str(from_file)], tmp_path) == EXIT_FAILED


def test_unknown_verb_is_rejected_by_the_parser():
    with pytest.raises(SystemExit) as info:
        main(["explode"])
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gforpod", "pf", TWO_AREA, "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "pf.csv").exists()
