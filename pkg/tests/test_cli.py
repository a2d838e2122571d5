"""CLI behavior: artifacts, exit codes, determinism, module commands."""

import filecmp
import json
import socket
from pathlib import Path

import pytest
from click.testing import CliRunner

from psychoforge.cli import main

DATA = Path(__file__).parent / "data" / "toy.csv"

VALID_MANIFEST = (
    "cat:\n"
    "  title: CAT Example\n"
    "  category: Modules\n"
    "  binding:\n"
    "    ui: sm_cat_ui\n"
    "    server: sm_cat_server\n"
)


@pytest.fixture
def runner():
    return CliRunner()


class TestAnalyze:
    def test_classical_section_writes_table(self, runner, tmp_path):
        out = tmp_path / "rep"
        result = runner.invoke(
            main, ["analyze", "--data", str(DATA), "--sections", "classical", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        report = (out / "report.md").read_text()
        assert "## Classical item analysis" in report
        assert "item,difficulty,rit,rir,uli,n_valid" in report
        payload = json.loads((out / "classical.json").read_text())
        assert len(payload["items"]) == 8
        assert (out / "classical_overview.png").exists()

    def test_all_sections_write_figures(self, runner, tmp_path):
        out = tmp_path / "rep"
        result = runner.invoke(
            main, ["analyze", "--data", str(DATA), "--out", str(out), "--seed", "7"]
        )
        assert result.exit_code == 0, result.output
        for name in (
            "classical.json",
            "regression.json",
            "irt.json",
            "dif.json",
            "cat.json",
            "classical_overview.png",
            "regression_icc.png",
            "irt_curves.png",
            "irt_information.png",
            "dif_curves.png",
            "cat_trajectory.png",
            "report.md",
        ):
            assert (out / name).exists(), name

    def test_seeded_runs_byte_identical(self, runner, tmp_path):
        args = ["analyze", "--data", str(DATA), "--seed", "7"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert runner.invoke(main, args + ["--out", str(a)]).exit_code == 0
        assert runner.invoke(main, args + ["--out", str(b)]).exit_code == 0
        files = sorted(p.name for p in a.iterdir())
        assert files == sorted(p.name for p in b.iterdir())
        match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
        assert mismatch == [] and errors == []

    def test_missing_file_exit_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["analyze", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2

    def test_ragged_csv_exit_2(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,0\n1\n")
        result = runner.invoke(main, ["analyze", "--data", str(bad), "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "data error" in result.output

    def test_unknown_section_exit_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["analyze", "--data", str(DATA), "--sections", "astrology", "--out", str(tmp_path / "o")],
        )
        assert result.exit_code == 2

    def test_dif_without_group_exit_2(self, runner, tmp_path):
        plain = tmp_path / "plain.csv"
        lines = DATA.read_text().splitlines()
        header = lines[0].split(",")[:8]
        rows = [",".join(l.split(",")[:8]) for l in lines[1:]]
        plain.write_text("\n".join([",".join(header)] + rows) + "\n")
        result = runner.invoke(
            main, ["analyze", "--data", str(plain), "--sections", "dif", "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert "__group" in result.output


class TestServe:
    def test_port_in_use_exit_4(self, runner):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        try:
            result = runner.invoke(main, ["serve", "--port", str(port)])
        finally:
            blocker.close()
        assert result.exit_code == 4
        assert "already in use" in result.output


class TestModulesCommands:
    def test_list_shows_bundled(self, runner):
        result = runner.invoke(main, ["modules", "list"])
        assert result.exit_code == 0
        assert "cat_example" in result.output
        assert "dif_c" in result.output
        assert "DIF/Fairness" in result.output

    def test_validate_valid_manifest(self, runner, tmp_path):
        path = tmp_path / "modules.yml"
        path.write_text(VALID_MANIFEST)
        result = runner.invoke(main, ["modules", "validate", str(path)])
        assert result.exit_code == 0
        assert "1 module(s) valid" in result.output

    def test_validate_missing_server_binding_exit_5(self, runner, tmp_path):
        path = tmp_path / "modules.yml"
        path.write_text(
            "\n".join(l for l in VALID_MANIFEST.splitlines() if "server" not in l) + "\n"
        )
        result = runner.invoke(main, ["modules", "validate", str(path)])
        assert result.exit_code == 5
        assert "binding.server" in result.output

    def test_validate_unknown_category_warns_exit_0(self, runner, tmp_path):
        path = tmp_path / "modules.yml"
        path.write_text(VALID_MANIFEST.replace("Modules", "Frobnication"))
        result = runner.invoke(main, ["modules", "validate", str(path)])
        assert result.exit_code == 0
        assert "routed to Modules" in result.output

    def test_validate_grammar_error_exit_5(self, runner, tmp_path):
        path = tmp_path / "modules.yml"
        path.write_text("cat:\n\ttitle: broken\n")
        result = runner.invoke(main, ["modules", "validate", str(path)])
        assert result.exit_code == 5
        assert "tabs" in result.output

    def test_validate_missing_file_exit_5(self, runner, tmp_path):
        result = runner.invoke(main, ["modules", "validate", str(tmp_path / "none.yml")])
        assert result.exit_code == 5
