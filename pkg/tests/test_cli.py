import json

import pytest

from stefanlab.cli import main
from stefanlab.config import ConfigError, RunConfig
from stefanlab.field import read_field


class TestRunConfig:
    def test_roundtrip_canonical(self):
        cfg = RunConfig({"solver": {"psor_omega": 1.7}, "example": {"name": "radial"}})
        text = cfg.to_text()
        cfg2 = RunConfig.parse(text)
        assert cfg2.values == cfg.values
        assert cfg2.to_text() == text

    def test_parse_noncanonical_to_canonical(self):
        text = "[solver]\n  psor_omega = 1.25  # comment\n[grid]\nn1=65\n"
        cfg = RunConfig.parse(text)
        assert cfg.get("solver", "psor_omega") == 1.25
        assert cfg.get("grid", "n1") == 65
        assert RunConfig.parse(cfg.to_text()).to_text() == cfg.to_text()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.parse("[solver]\nwhatever=1\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            RunConfig.parse("[nope]\nx=1\n")

    def test_defaults_present(self):
        cfg = RunConfig()
        assert cfg.get("analysis", "gamma") == 4.0
        assert cfg.get("solver", "enforce_monotone") is True


class TestExampleCommand:
    def test_unknown_name_lists_valid(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "example", "bogus"])
        assert rc == 1
        err = capsys.readouterr().err
        for name in ("planar", "tychonoff", "radial", "glued"):
            assert name in err

    def test_planar_writes_field_and_sidecar(self, tmp_path):
        rc = main(["--out", str(tmp_path), "example", "planar", "--t0", "0.25"])
        assert rc == 0
        fld = read_field(tmp_path / "planar.sstf")
        assert fld.sup_norm() > 0
        sidecar = json.loads((tmp_path / "planar.sstf.json").read_text())
        assert "config" in sidecar
        assert sidecar["provenance"]["t0"] == 0.25


class TestSolveCommand:
    def test_validation_failure_exit_one(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "solve", "--w0-expr", "x1**2"])
        assert rc == 1
        assert "validation" in capsys.readouterr().err

    def test_force_runs_and_records_failed_report(self, tmp_path):
        rc = main(["--out", str(tmp_path), "solve", "--w0-expr", "x1**2", "--force"])
        assert rc in (0, 2)
        sidecar = json.loads((tmp_path / "solution.sstf.json").read_text())
        assert sidecar["validation"]["passed"] is False

    def test_constant_extinction(self, tmp_path):
        cfgp = tmp_path / "cfg.txt"
        cfgp.write_text("[grid]\nn1=65\nnt=3000\n")
        rc = main(["--config", str(cfgp), "--out", str(tmp_path),
                   "solve", "--w0-const", "0.02"])
        assert rc == 0
        sidecar = json.loads((tmp_path / "solution.sstf.json").read_text())
        assert sidecar["extinction_time"] == pytest.approx(0.02, abs=2e-3)


class TestAnalyzeCommand:
    @pytest.fixture()
    def planar_file(self, tmp_path):
        main(["--out", str(tmp_path), "example", "planar", "--t0", "0.25"])
        return tmp_path / "planar.sstf"

    def test_unknown_kind(self, tmp_path, planar_file, capsys):
        rc = main(["--out", str(tmp_path), "analyze", "wat", str(planar_file)])
        assert rc == 1
        assert "freeze" in capsys.readouterr().err

    def test_freeze_csv_constant(self, tmp_path, planar_file):
        rc = main(["--out", str(tmp_path), "analyze", "freeze", str(planar_file)])
        assert rc == 0
        rows = (tmp_path / "freeze.csv").read_text().splitlines()[1:]
        svals = {float(r.split(",")[1]) for r in rows}
        assert all(abs(v - 0.25) < 2e-3 for v in svals)

    def test_jumps(self, tmp_path, planar_file):
        rc = main(["--out", str(tmp_path), "analyze", "jumps", str(planar_file)])
        assert rc == 0
        rows = (tmp_path / "jumps.csv").read_text().splitlines()
        assert len(rows) == 2

    def test_frequency_auto_center(self, tmp_path, planar_file):
        rc = main(["--out", str(tmp_path), "analyze", "frequency", str(planar_file),
                   "--center", "auto-extinction", "--gamma", "4"])
        assert rc == 0
        lines = (tmp_path / "frequency.csv").read_text().splitlines()
        assert lines[0].startswith("r,H,D")

    def test_dimension_from_graph(self, tmp_path, planar_file):
        rc = main(["--out", str(tmp_path), "analyze", "dimension", str(planar_file)])
        assert rc == 0
        side = json.loads((tmp_path / "dimension.csv.json").read_text())
        assert abs(side["slope"] - 1.0) <= 0.3  # flat graph: spatial slab

    def test_bad_center_exit_one(self, tmp_path, planar_file, capsys):
        rc = main(["--out", str(tmp_path), "analyze", "frequency", str(planar_file),
                   "--center", "5.0,0.25"])
        assert rc == 1


class TestReportCommand:
    def test_report_writes_text_csv_figures(self, tmp_path):
        main(["--out", str(tmp_path), "example", "planar", "--t0", "0.25"])
        rc = main(["--out", str(tmp_path), "report", str(tmp_path / "planar.sstf")])
        assert rc == 0
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "report_freeze.csv").exists()
        for fig in ("report_freezing.png", "report_eta.png", "report_grad_s.png"):
            assert (tmp_path / fig).exists()
        text = (tmp_path / "report.txt").read_text()
        assert "extinction time" in text
        assert "jump times" in text

    def test_no_figures_flag(self, tmp_path):
        main(["--out", str(tmp_path), "example", "planar", "--t0", "0.25"])
        rc = main(["--out", str(tmp_path / "r"), "report", str(tmp_path / "planar.sstf"),
                   "--no-figures"])
        assert rc == 0
        assert not list((tmp_path / "r").glob("*.png"))


class TestDeterminism:
    def test_identical_runs_byte_identical(self, tmp_path):
        outs = []
        for sub in ("a", "b"):
            d = tmp_path / sub
            main(["--out", str(d), "--seed", "3", "example", "planar", "--t0", "0.25"])
            main(["--out", str(d), "--seed", "3", "analyze", "freeze",
                  str(d / "planar.sstf")])
            main(["--out", str(d), "--seed", "3", "report", str(d / "planar.sstf")])
            outs.append(d)
        files = sorted(p.name for p in outs[0].iterdir())
        assert files == sorted(p.name for p in outs[1].iterdir())
        for name in files:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
