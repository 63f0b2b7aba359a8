import subprocess
import sys
from pathlib import Path

import pytest

from pimtower.cli import main, parse_args, report_bundle, run

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(autouse=True)
def at_root(monkeypatch):
    monkeypatch.chdir(ROOT)
    monkeypatch.delenv("PIMTOWER_BUDGET", raising=False)


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_canonical(capsys):
    code, out, _ = call(capsys, "check", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "6")
    assert code == 0
    lines = out.splitlines()
    for rec in ("H1 pass", "C pass", "M pass-at-depth", "FirstReturn pass-at-depth"):
        assert any(line.startswith(rec) for line in lines), rec


def test_check_counterexample(capsys):
    code, out, _ = call(capsys, "check", "--map", "data/doubling.map", "--scheme", "data/counterexample.scheme", "--m-max", "3")
    assert code == 1
    assert "M fail witness L=(0,1/2) m=1 J=(1/4,1/2) tau=2 depth=3" in out.splitlines()
    assert "FirstReturn skipped reason=M-or-C-not-passing" in out


def test_kac_lebesgue(capsys):
    code, out, _ = call(
        capsys, "kac", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "12",
        "--measure", "data/lebesgue.measure",
    )
    assert code == 0
    assert "Kac Q=6143/2048 target=3 err<=2^-10" in out.splitlines()


def test_kac_period_three_exact(capsys):
    code, out, _ = call(
        capsys, "kac", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "4",
        "--measure", "data/period3.measure",
    )
    assert code == 0
    assert "Kac Q=3 target=3 err<=2^-10" in out


def test_kac_refuses_counterexample(capsys):
    code, out, _ = call(
        capsys, "kac", "--map", "data/doubling.map", "--scheme", "data/counterexample.scheme",
        "--measure", "data/period3.measure",
    )
    assert code == 1
    assert "error kind=PreconditionUnverified" in out


def test_kac_markov_keyword(capsys):
    code, out, _ = call(
        capsys, "kac", "--map", "data/markov.map", "--nice", "1/6..1/3", "--tau-max", "6", "--measure", "markov",
    )
    assert code == 2
    assert "reason=truncation" in out


def test_tower_markov(capsys):
    code, out, _ = call(capsys, "tower", "--map", "data/markov.map", "--depth", "5")
    assert code == 0
    assert "elem 1 level=1 interval=0/1..1/2" in out
    assert "Markov pass depth=5" in out


def test_nice_rejects(capsys):
    code, out, _ = call(capsys, "nice", "--map", "data/doubling.map", "--nice", "1/4..3/4")
    assert code == 1
    assert "witness point=1/4 n=1" in out


def test_scheme_to_file(capsys, tmp_path):
    target = tmp_path / "s.scheme"
    code, out, _ = call(
        capsys, "scheme", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "3", "--out", str(target)
    )
    assert code == 0 and out == ""
    text = target.read_text()
    assert "deficit=1/12" in text and text.count("\nJ ") == 4


def test_lift_writes_measure(capsys):
    code, out, _ = call(
        capsys, "lift", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "3", "--measure", "lebesgue",
    )
    assert code == 0
    assert out.splitlines()[1].startswith("lift Q=")
    assert "total=1/1" in out


def test_thermo_records(capsys):
    code, out, _ = call(
        capsys, "thermo", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "5",
        "--potential", "neglog:1", "--n-max", "2", "--cylinders",
    )
    assert code == 0
    assert "sum1 N=5 partial=15/16 tail=1/16 verdict=pass" in out
    assert "cyl 0,0 1/3..17/48 diam=1/48" in out
    assert "Vn n=2 value=0/1" in out


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["tower"],
    ["tower", "--map", "missing.map"],
    ["nice", "--map", "data/doubling.map"],
    ["nice", "--map", "data/doubling.map", "--nice", "2/3..1/3"],
    ["tower", "--map", "data/doubling.map", "--depth", "-1"],
    ["thermo", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--potential", "cosh"],
])
def test_usage_errors_exit_3(capsys, argv):
    code, _, _ = call(capsys, *argv)
    assert code == 3


def test_budget_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("PIMTOWER_BUDGET", "2")
    code, out, _ = call(capsys, "scheme", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "6")
    assert code == 2 and "ElementBudgetExceeded" in out
    monkeypatch.setenv("PIMTOWER_BUDGET", "lots")
    assert call(capsys, "tower", "--map", "data/doubling.map")[0] == 3


def test_flag_budget_overrides_environment(monkeypatch):
    monkeypatch.setenv("PIMTOWER_BUDGET", "2")
    assert parse_args(["tower", "--budget", "50"]).budget == 50


def test_empty_bundle(capsys):
    code, out, _ = call(capsys, "report", "--bundle", "data/empty.bundle")
    assert code == 0 and out == ""
    assert report_bundle([]) == (0, "")


def test_bundle_exit_is_worst_stage(capsys):
    code, out, _ = call(capsys, "report", "--bundle", "data/counterexample.bundle")
    assert code == 1
    assert out.startswith("== stage 1 command=check exit=1\n")


def test_nested_bundle_rejected(tmp_path):
    b = tmp_path / "nested.bundle"
    b.write_text("report --bundle other.bundle\n")
    code, lines = run(parse_args(["report", "--bundle", str(b)]))
    assert code == 3


@pytest.mark.parametrize("name", ["doubling", "counterexample"])
def test_bundle_golden(capsys, name):
    code, out, _ = call(capsys, "report", "--bundle", f"data/{name}.bundle")
    assert out == (GOLDEN / f"{name}.report").read_text()
    assert code == {"doubling": 0, "counterexample": 1}[name]


def test_output_is_deterministic(capsys):
    argv = ["check", "--map", "data/doubling.map", "--nice", "1/3..2/3", "--tau-max", "5"]
    first = call(capsys, *argv)
    assert call(capsys, *argv) == first


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "pimtower", "nice", "--map", "data/doubling.map", "--nice", "1/3..2/3"],
        cwd=ROOT, capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("nice V=(1/3,2/3) verdict=nice")
