import io
import json
import subprocess
import sys

import pytest

from cutscreen.cli import run
from cutscreen.network import DATA_DIR

CASE5 = str(DATA_DIR / "case5.tsv")
CASE39 = str(DATA_DIR / "case39.m")


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), out=out)
    return code, out.getvalue()


def test_ft_table():
    code, text = call("ft", "--case", CASE5, "--outage", "3-4")
    assert code == 0
    assert "-30.000" in text and "{3-4, 1-5, 3-5}" in text


def test_ft_json_dc_base():
    code, text = call("ft", "--case", CASE5, "--outage", "4-3", "--output", "json", "--base", "dc")
    rep = json.loads(text)
    assert code == 0
    assert rep["margin_mw"] == -30.0 and rep["flow_mw"] == 195.0
    assert [b["id"] for b in rep["critical_cut"]["branches"]] == [3, 5, 6]


def test_json_is_byte_stable():
    a = call("screen", "--case", CASE39, "--balance", "economic", "--output", "json", "--seed", "5", "--threads", "1")
    b = call("screen", "--case", CASE39, "--balance", "economic", "--output", "json", "--seed", "5", "--threads", "2")
    assert a == b and a[0] == 0


def test_screen_case39_table():
    code, text = call("screen", "--case", CASE39, "--balance", "economic", "--threads", "1")
    assert code == 0
    assert "{10-11, 10-13}" in text and "{21-22, 23-24}" in text and "{16-21, 23-24}" in text
    # saturated rows first, ascending margin
    table, summary = text.rstrip().split("\n\n")
    margins = [float(line.split()[4]) for line in table.splitlines()[2:]]
    assert len(margins) == 46
    assert margins == sorted(margins) and margins[-1] == 0.0
    assert summary == "18 of 46 outages saturate a cut-set"


def test_validate_ok_and_json():
    code, text = call("validate", "--case", CASE39, "--output", "json")
    rep = json.loads(text)
    assert code == 0 and rep["buses"] == 39 and rep["connected"] and rep["balance_policy"] == "slack:39"


def test_validate_dangling_branch(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("#buses 2 branches 1\nbus 1 0\nbus 2 0\nbranch 1 3 10 -\n")
    proc = subprocess.run(
        [sys.executable, "-m", "cutscreen", "validate", "--case", str(p)], capture_output=True, text=True
    )
    assert proc.returncode == 2
    assert "branch 1-3" in proc.stderr and len(proc.stderr.strip().splitlines()) == 1


def test_flow_tsv():
    code, text = call("flow", "--case", CASE5)
    assert code == 0
    assert len(text.splitlines()) == 7 and text.startswith("flow 0 1 2 ")


def test_dc_single_and_sweep():
    code, text = call("dc", "--case", CASE5, "--outage", "3-4", "--output", "json")
    (rep,) = json.loads(text)
    assert code == 0 and rep["outage"] == 3
    assert {o["branch"]: o["excess_mw"] for o in rep["overloads"]} == {5: 7.5, 6: 22.5}
    code, text = call("dc", "--case", CASE5, "--threads", "1")
    assert code == 0 and "3-5" in text


def test_bench_json():
    code, text = call("bench", "--case", CASE5, "--threads", "1", "--output", "json")
    rep = json.loads(text)
    assert code == 0
    assert rep["speedup"] == pytest.approx(rep["dc_total_ms"] / rep["ft_total_ms"], abs=0.01)
    assert rep["saturated_outages"] == 3 and rep["branches"] == 7


@pytest.mark.parametrize(
    "argv, code",
    [
        (["ft", "--case", CASE5], 1),
        (["ft", "--case", CASE5, "--outage", "2-5"], 1),
        (["screen", "--case", CASE5, "--balance", "sideways"], 1),
        (["screen", "--case", CASE5, "--threads", "0"], 1),
        (["validate", "--case", "/nonexistent/case.m"], 2),
        (["screen", "--case", CASE39, "--balance", "strict"], 3),
    ],
)
def test_exit_codes(argv, code, capsys):
    if code == 1 and "--outage" not in argv and argv[0] == "ft":
        with pytest.raises(SystemExit) as exc:
            run(argv)
        assert exc.value.code == 1
        return
    assert call(*argv)[0] == code
    err = capsys.readouterr().err
    assert err.startswith("cutscreen") and err.count("\n") == 1


def test_infeasible_exit(tmp_path):
    p = tmp_path / "tight.tsv"
    p.write_text("#buses 2 branches 1\nbus 1 10\nbus 2 -10\nbranch 1 2 4 1\n")
    assert call("flow", "--case", str(p), "--balance", "strict")[0] == 3
    assert call("ft", "--case", str(p), "--outage", "1-2", "--base", "dc")[0] == 3


def test_islanded_exit(tmp_path):
    p = tmp_path / "split.tsv"
    p.write_text("#buses 3 branches 1\nbus 1 0\nbus 2 0\nbus 3 0\nbranch 1 2 4 1\n")
    assert call("validate", "--case", str(p))[0] == 3
    assert call("screen", "--case", str(p))[0] == 3
