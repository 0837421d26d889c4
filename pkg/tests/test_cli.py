import csv
import json
from pathlib import Path

import pytest

from uhlm.cli import main

PLANTED_CONFIG = """
[run]
method = "hlm"
rounds = 120
seed = 3
oracle = true

[backend]
kind = "planted"

[backend.planted]
seed = 9

[channel]
fading = "none"
"""


@pytest.fixture()
def config_file(tmp_path) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(PLANTED_CONFIG)
    return path


def read_summary(path: Path) -> list[dict]:
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# uhlm")
    return list(csv.DictReader(lines[1:]))


class TestCalibrate:
    def test_writes_model_and_thresholds(self, config_file, tmp_path, capsys):
        out = tmp_path / "calib.json"
        code = main(["calibrate", "--config", str(config_file), "--rounds", "800", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert {"a", "b", "delta", "u_th_averse", "u_th_prone"} <= set(doc)
        printed = capsys.readouterr().out
        assert "risk-averse" in printed and "risk-prone" in printed

    def test_deterministic_output(self, config_file, tmp_path):
        out1, out2 = tmp_path / "c1.json", tmp_path / "c2.json"
        assert main(["calibrate", "--config", str(config_file), "--rounds", "400", "--out", str(out1)]) == 0
        assert main(["calibrate", "--config", str(config_file), "--rounds", "400", "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_degenerate_backend_fails_cleanly(self, tmp_path, capsys):
        cfg = tmp_path / "flat.toml"
        cfg.write_text(
            """
[run]
rounds = 100

[backend]
kind = "synthetic"

[backend.synthetic]
vocab_size = 32
coupling = 1.0
"""
        )
        out = tmp_path / "c.json"
        code = main(["calibrate", "--config", str(cfg), "--rounds", "200", "--out", str(out)])
        assert code == 4
        assert "slope" in capsys.readouterr().err
        assert not out.exists()


class TestRun:
    def test_hlm_summary_row(self, config_file, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config", str(config_file), "--method", "hlm", "--out", str(out)])
        assert code == 0
        rows = read_summary(out / "summary.csv")
        assert len(rows) == 1
        assert rows[0]["method"] == "hlm"
        assert float(rows[0]["TR"]) == 1.0
        trace = (out / "trace_hlm_seed3.ndjson").read_text().splitlines()
        header = json.loads(trace[0])
        assert "config_hash" in header and header["config"]["run"]["method"] == "hlm"
        assert len(trace) == 121

    def test_reproducible_outputs(self, config_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()
        assert (
            (out1 / "trace_hlm_seed3.ndjson").read_bytes()
            == (out2 / "trace_hlm_seed3.ndjson").read_bytes()
        )

    def test_uhlm_requires_calibration(self, config_file, tmp_path, capsys):
        code = main(
            ["run", "--config", str(config_file), "--method", "uhlm", "--out", str(tmp_path / "o")]
        )
        assert code == 2
        assert "calibration required" in capsys.readouterr().err

    def test_uhlm_with_calibration_file(self, config_file, tmp_path):
        calib = tmp_path / "calib.json"
        assert main(
            ["calibrate", "--config", str(config_file), "--rounds", "600", "--out", str(calib)]
        ) == 0
        out = tmp_path / "out"
        code = main(
            [
                "run", "--config", str(config_file), "--method", "uhlm",
                "--calibration", str(calib), "--oracle", "--out", str(out),
            ]
        )
        assert code == 0
        rows = read_summary(out / "summary.csv")
        assert "realized_risk" in rows[0]
        assert rows[0]["u_th"] != ""
        assert rows[0]["realized_risk"] != ""

    def test_explicit_u_th_flag(self, config_file, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["run", "--config", str(config_file), "--method", "uhlm", "--u-th", "0.4", "--out", str(out)]
        )
        assert code == 0
        assert float(read_summary(out / "summary.csv")[0]["u_th"]) == 0.4

    def test_rand_hlm_matches_gated_skip_rate(self, config_file, tmp_path):
        calib = tmp_path / "calib.json"
        assert main(
            ["calibrate", "--config", str(config_file), "--rounds", "600", "--out", str(calib)]
        ) == 0
        out = tmp_path / "out"
        code = main(
            [
                "run", "--config", str(config_file), "--method", "rand-hlm",
                "--calibration", str(calib), "--out", str(out),
            ]
        )
        assert code == 0
        row = read_summary(out / "summary.csv")[0]
        # TR should hover near the matched gated rate, i.e. well inside (0, 1).
        assert 0.05 < float(row["TR"]) < 0.95

    def test_backend_death_flushes_partial_trace(self, tmp_path, capsys):
        from conftest import stub_command

        cfg = tmp_path / "external.toml"
        cfg.write_text(
            f"""
[run]
method = "hlm"
rounds = 10
seed = 4
prompt_tokens = [1]

[backend]
kind = "external"

[backend.external]
endpoint = "{stub_command('dieafter', '64', '0', '5')}"
timeout_s = 15.0
"""
        )
        out = tmp_path / "out"
        code = main(["run", "--config", str(cfg), "--out", str(out)])
        assert code == 3
        trace = (out / "trace_hlm_seed4.ndjson").read_text().splitlines()
        assert len(trace) == 4  # header + two full rounds + diagnostic
        assert "aborted" in json.loads(trace[-1])

    def test_writes_only_inside_out_dir(self, config_file, tmp_path, monkeypatch):
        workdir = tmp_path / "cwd"
        workdir.mkdir()
        monkeypatch.chdir(workdir)
        out = tmp_path / "only-here"
        assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
        assert list(workdir.iterdir()) == []


class TestConfigValidation:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[run]\nmethod = 'hlm'\nbogus_knob = 3\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "bogus_knob" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")]) == 2

    def test_json_config_accepted(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(
            json.dumps(
                {
                    "run": {"method": "slm", "rounds": 10, "seed": 1},
                    "backend": {"kind": "planted", "planted": {"seed": 2}},
                }
            )
        )
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        assert read_summary(out / "summary.csv")[0]["method"] == "slm"


class TestSweep:
    def test_u_th_axis(self, tmp_path):
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            PLANTED_CONFIG
            + """
[sweep]
methods = ["uhlm"]
u_th = [0.0, 0.5, 1.0]
seeds = [0, 1]
"""
        )
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(cfg), "--out", str(out), "--jobs", "2"])
        assert code == 0
        rows = read_summary(out / "sweep.csv")
        assert len(rows) == 6
        assert all(row["status"] == "ok" for row in rows)
        tr_by_uth = {}
        for row in rows:
            tr_by_uth.setdefault(float(row["u_th"]), []).append(float(row["TR"]))
        means = [sum(v) / len(v) for _, v in sorted(tr_by_uth.items())]
        assert means[0] >= means[1] >= means[2]

    def test_serial_matches_parallel(self, tmp_path):
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            PLANTED_CONFIG
            + """
[sweep]
methods = ["uhlm"]
u_th = [0.2, 0.8]
seeds = [0]
"""
        )
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["sweep", "--config", str(cfg), "--out", str(out1), "--jobs", "1"]) == 0
        assert main(["sweep", "--config", str(cfg), "--out", str(out2), "--jobs", "4"]) == 0
        assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()

    def test_missing_axes_rejected(self, config_file, tmp_path, capsys):
        assert main(["sweep", "--config", str(config_file), "--out", str(tmp_path / "o")]) == 2
        assert "sweep" in capsys.readouterr().err

    def test_snr_axis_method_ordering(self, tmp_path):
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            PLANTED_CONFIG.replace('rounds = 120', 'rounds = 100')
            + """
[sweep]
methods = ["slm", "hlm", "uhlm"]
rho_m = [1200.0, 2500.0]
seeds = [0, 1]
u_th = [0.45]
"""
        )
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out), "--jobs", "4"]) == 0
        rows = read_summary(out / "sweep.csv")
        assert all(r["status"] == "ok" for r in rows)
        by_cell: dict[tuple, dict[str, list[float]]] = {}
        for r in rows:
            cell = by_cell.setdefault((r["snr_mean_db"],), {})
            cell.setdefault(r["method"], []).append(float(r["throughput"]))
        for cell in by_cell.values():
            slm = sum(cell["slm"]) / len(cell["slm"])
            hlm = sum(cell["hlm"]) / len(cell["hlm"])
            uhlm = sum(cell["uhlm"]) / len(cell["uhlm"])
            assert slm >= uhlm >= hlm

    def test_failed_cells_recorded(self, tmp_path):
        # uhlm without any resolvable u_th in one cell: u_th axis omitted.
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            PLANTED_CONFIG
            + """
[sweep]
methods = ["uhlm", "slm"]
seeds = [0]
"""
        )
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_summary(out / "sweep.csv")
        statuses = {row["method"]: row["status"] for row in rows}
        assert statuses["slm"] == "ok"
        assert statuses["uhlm"].startswith("error:")
