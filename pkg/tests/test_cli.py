"""Command-line contract: exit codes, output determinism, emitted files."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from vmsim import benchmark_scenario
from vmsim.cli import main
from vmsim.scenario_io import dumps, load_scenario


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(dumps(benchmark_scenario(10, 4, 7)), encoding="utf-8")
    return path


class TestValidate:
    def test_valid_file(self, scenario_file, capsys):
        assert main(["validate", str(scenario_file)]) == 0
        assert capsys.readouterr().out == "ok\n"

    def test_cyclic_hierarchy_fails_with_diagnostic(self, tmp_path, capsys):
        doc = {
            "maintainer": "SMI",
            "schemas": [],
            "data": {},
            "views": [{"name": "V", "operands": ["V"], "project": ["x"]}],
            "primary_view": "V",
        }
        path = tmp_path / "cyclic.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["validate", str(path)]) == 1
        assert "cycle" in capsys.readouterr().err

    def test_unparseable_file(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("not json", encoding="utf-8")
        assert main(["validate", str(path)]) == 1
        assert "error:" in capsys.readouterr().err


class TestRun:
    def test_csv_to_stdout_deterministic(self, scenario_file, capsys):
        assert main(["run", str(scenario_file)]) == 0
        first = capsys.readouterr().out
        assert main(["run", str(scenario_file)]) == 0
        second = capsys.readouterr().out
        assert first == second
        assert first.splitlines()[0].startswith("kind,space_bytes,rows_warehouse")

    def test_json_format(self, scenario_file, capsys):
        assert main(["run", str(scenario_file), "--format", "json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["kind"] == "SMI" and rows[0]["oracle_match"] is True

    def test_trace_written(self, scenario_file, tmp_path, capsys):
        trace = tmp_path / "trace.log"
        assert main(["run", str(scenario_file), "--trace", str(trace)]) == 0
        capsys.readouterr()
        text = trace.read_text(encoding="utf-8")
        assert text.startswith("t=0 quiescent")

    def test_report_file_with_figures(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "report.csv"
        assert main(["run", str(scenario_file), "-o", str(out)]) == 0
        capsys.readouterr()
        assert out.exists()
        assert (tmp_path / "report_rows.png").stat().st_size > 0
        assert (tmp_path / "report_space.png").stat().st_size > 0

    def test_no_figures_flag(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "plain.csv"
        assert main(["run", str(scenario_file), "-o", str(out), "--no-figures"]) == 0
        capsys.readouterr()
        assert out.exists()
        assert not (tmp_path / "plain_rows.png").exists()


class TestCompare:
    def test_four_kind_table(self, scenario_file, capsys):
        assert main(["compare", str(scenario_file),
                     "--kinds", "SMR,NSMR,SMI,NSMI_ECA"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 5
        assert [line.split(",")[0] for line in lines[1:]] == [
            "SMR", "NSMR", "SMI", "NSMI_ECA"]

    def test_unknown_kind_is_an_error(self, scenario_file, capsys):
        assert main(["compare", str(scenario_file), "--kinds", "SMI,MAGIC"]) == 1
        assert "unknown kind" in capsys.readouterr().err

    def test_figures_next_to_report(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "cmp.csv"
        assert main(["compare", str(scenario_file), "-o", str(out)]) == 0
        capsys.readouterr()
        assert (tmp_path / "cmp_rows.png").exists()
        assert (tmp_path / "cmp_space.png").exists()


class TestAnomalyDemo:
    def test_exit_zero_and_report(self, capsys):
        assert main(["anomaly-demo"]) == 0
        out = capsys.readouterr().out
        assert "naive:       V(a,c){(1,3)×1,(4,3)×2}" in out
        assert "compensated: V(a,c){(1,3)×1,(4,3)×1}" in out
        assert "anomaly reproduced" in out

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "vmsim", "anomaly-demo"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "anomaly reproduced" in proc.stdout


class TestGenerate:
    def test_generated_file_validates_and_round_trips(self, tmp_path, capsys):
        out = tmp_path / "bench.json"
        assert main(["generate", "--scale", "25", "--seed", "5",
                     "--updates", "8", "-o", str(out)]) == 0
        capsys.readouterr()
        scenario = load_scenario(out)
        assert scenario.initial["customer"].cardinality == 25
        assert len(scenario.updates) == 8
        assert main(["validate", str(out)]) == 0

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        main(["generate", "--scale", "25", "--seed", "5", "-o", str(a)])
        main(["generate", "--scale", "25", "--seed", "5", "-o", str(b)])
        capsys.readouterr()
        assert a.read_bytes() == b.read_bytes()


class TestSeedOverride:
    def test_env_var_wins(self, scenario_file, monkeypatch, capsys):
        monkeypatch.setenv("VMSIM_SEED", "123")
        assert main(["run", str(scenario_file)]) == 0
        capsys.readouterr()
        # The override must actually reach the scenario.
        assert load_scenario(scenario_file, seed_override=123).seed == 123

    def test_malformed_env_var(self, scenario_file, monkeypatch, capsys):
        monkeypatch.setenv("VMSIM_SEED", "elephant")
        assert main(["run", str(scenario_file)]) == 1
        assert "VMSIM_SEED" in capsys.readouterr().err


class TestBadFlags:
    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "-o", str(tmp_path / "x.json")])
        assert exc.value.code == 2
