"""Command line front end: exit codes and emitted records."""
import json
import os

import pytest
import yaml

from cocyclelab.cli import main
from cocyclelab.driver import PRESETS


def run_cli(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestStep:
    def test_step_preset(self, capsys):
        rc, out, err = run_cli(capsys, "step", "--config", "z2-flips")
        assert rc == 0 and err == ""
        record = json.loads(out)
        assert record["refined_level"] == 2
        assert record["delta"] == "1/3"
        assert all(c["ok"] for c in record["certificates"])
        assert all(c["ok"] for c in record["validator"])

    def test_step_depth_override_fails_cleanly(self, capsys):
        rc, out, err = run_cli(capsys, "step", "--config", "z2-adding",
                               "--depth", "3")
        assert rc == 1
        assert json.loads(err.strip())["error"]


class TestRun:
    def test_run_to_stdout(self, capsys):
        rc, out, err = run_cli(capsys, "run", "--config", "z2-flips",
                               "--rounds", "2", "--seedless")
        assert rc == 0 and err == ""
        records = [json.loads(line) for line in out.splitlines()]
        kinds = [r["record"] for r in records]
        assert kinds[0] == "header"
        assert kinds.count("round") == 2
        assert kinds[-1] == "final"

    def test_run_certify_export_cycle(self, tmp_path, capsys):
        out = str(tmp_path)
        rc, _, _ = run_cli(capsys, "run", "--config", "z2-flips",
                           "--rounds", "3", "--out", out)
        assert rc == 0
        report = os.path.join(out, "report.jsonl")
        assert os.path.exists(report)

        rc, stdout, _ = run_cli(capsys, "certify", report)
        assert rc == 0
        assert json.loads(stdout)["ok"] is True

        rc, stdout, _ = run_cli(capsys, "export", report, "--out", out)
        assert rc == 0
        paths = stdout.splitlines()
        assert any(p.endswith("final_function.csv") for p in paths)
        assert all(os.path.exists(p) for p in paths)

    def test_certify_tampered_report(self, tmp_path, capsys):
        out = str(tmp_path)
        run_cli(capsys, "run", "--config", "z2-flips", "--rounds", "2",
                "--out", out)
        path = os.path.join(out, "report.jsonl")
        with open(path) as fh:
            records = [json.loads(line) for line in fh]
        for record in records:
            if record["record"] == "round" and record["round"] == 2:
                record["eps"] = records[1]["eps"]
        with open(path, "w") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

        rc, _, err = run_cli(capsys, "certify", path)
        assert rc == 1
        failures = [json.loads(line) for line in err.splitlines()]
        assert any(f["clause"] == "eps_halving" for f in failures)

    def test_run_resume(self, tmp_path, capsys):
        out = str(tmp_path)
        rc, _, _ = run_cli(capsys, "run", "--config", "z2-flips",
                           "--rounds", "2", "--out", out)
        assert rc == 0
        rc, _, _ = run_cli(capsys, "run", "--config", "z2-flips",
                           "--rounds", "2", "--out", out, "--resume")
        assert rc == 0

    def test_run_infinite(self, capsys):
        rc, out, _ = run_cli(capsys, "run-infinite", "--config",
                             "z2-flip-stream", "--rounds", "2")
        assert rc == 0
        kinds = [json.loads(line)["record"] for line in out.splitlines()]
        assert "stream_bounds" in kinds


class TestWrappedPipelines:
    def test_bounded(self, capsys):
        rc, out, _ = run_cli(capsys, "bounded", "--config", "z2-flips",
                             "--rounds", "2")
        assert rc == 0
        kinds = [json.loads(line)["record"] for line in out.splitlines()]
        assert kinds[-1] == "compact_range"

    def test_norm_bounded(self, capsys):
        rc, out, _ = run_cli(capsys, "norm-bounded", "--config", "sum-z",
                             "--rounds", "2")
        assert rc == 0
        records = [json.loads(line) for line in out.splitlines()]
        assert records[-1]["record"] == "norm_bounds"
        assert records[-1]["ok"]


class TestConfigHandling:
    def test_unknown_preset(self, capsys):
        rc, out, err = run_cli(capsys, "run", "--config", "no-such-preset")
        assert rc == 2 and out == ""
        record = json.loads(err.strip())
        assert record["error"] == "ConfigError"
        assert "no-such-preset" in record["message"]

    def test_yaml_config_file(self, tmp_path, capsys):
        raw = dict(PRESETS["z2-flips"])
        raw["rounds"] = 1
        path = tmp_path / "custom.yaml"
        path.write_text(yaml.safe_dump(raw))
        rc, out, _ = run_cli(capsys, "run", "--config", str(path))
        assert rc == 0
        kinds = [json.loads(line)["record"] for line in out.splitlines()]
        assert kinds.count("round") == 1

    def test_yaml_config_must_be_mapping(self, tmp_path, capsys):
        path = tmp_path / "broken.yaml"
        path.write_text("- just\n- a\n- list\n")
        rc, _, err = run_cli(capsys, "run", "--config", str(path))
        assert rc == 2
        assert json.loads(err.strip())["error"]

    def test_installed_entry_point(self):
        from importlib.metadata import entry_points
        scripts = entry_points(group="console_scripts")
        match = [ep for ep in scripts if ep.name == "cocyclelab"]
        assert match and match[0].value == "cocyclelab.cli:main"
