import json
import subprocess
import sys

import pytest

from wgelast.cli import _CSV_HEADER, emit_table, main
from wgelast.study import ConvergenceTable


def run_cli(args, **kw):
    return subprocess.run([sys.executable, "-m", "wgelast.cli"] + args,
                          capture_output=True, text=True, **kw)


class TestEmitTable:
    def make_table(self):
        t = ConvergenceTable(1, "smooth sinusoidal", 1, 1.0, 1.0, "robust")
        t.add(2, 0.3535533906, 416, 4.7e-01, 3.9e-02)
        t.add(3, 0.1767766953, 1568, 2.7e-01, 1.1e-02)
        return t

    def test_empty_table_is_header_only(self):
        table = ConvergenceTable(1, "smooth sinusoidal", 1, 1.0, 1.0, "robust")
        assert emit_table(table, "csv") == _CSV_HEADER + "\n"

    def test_csv_schema(self):
        lines = emit_table(self.make_table(), "csv").splitlines()
        assert lines[0] == ("example,degree,variant,lambda,level,h,ndof,"
                            "energy_err,energy_order,l2_err,l2_order")
        first = lines[1].split(",")
        assert first[0] == "1" and first[4] == "2"
        assert first[8] == "" and first[10] == ""      # first-row orders empty
        second = lines[2].split(",")
        assert second[8] != "" and "." in second[8]

    def test_markdown_column_names(self):
        md = emit_table(self.make_table(), "md")
        assert "|||Q_h u - u_h|||" in md
        assert "||Q_0 u - u_0||" in md
        assert md.count("order") >= 2

    def test_svg_contents(self):
        svg = emit_table(self.make_table(), "svg")
        assert svg.startswith("<svg")
        assert "slope 1" in svg and "slope 2" in svg
        assert "polyline" in svg

    def test_deterministic_bytes(self):
        t = self.make_table()
        for fmt in ("csv", "md", "svg"):
            assert emit_table(t, fmt) == emit_table(t, fmt)

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_table(self.make_table(), "pdf")


class TestRun:
    def test_small_study_writes_artifacts(self, tmp_path):
        out = tmp_path / "artifacts"
        rc = main(["run", "--example", "1", "--degree", "1", "--levels", "2..3",
                   "--lambda", "1", "--out", str(out)])
        assert rc == 0
        for ext in ("csv", "md", "svg"):
            assert (out / f"example1_k1_robust_lambda1.{ext}").exists()
        csv = (out / "example1_k1_robust_lambda1.csv").read_text()
        assert csv.splitlines()[0] == _CSV_HEADER
        assert len(csv.splitlines()) == 3

    def test_rerun_is_byte_identical(self, tmp_path):
        args = ["run", "--example", "3", "--degree", "1", "--levels", "2..3",
                "--lambda", "1e2", "--variant", "robust,standard"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        for stem in ("example3_k1_robust_lambda1e2", "example3_k1_standard_lambda1e2"):
            for ext in ("csv", "md", "svg"):
                a = (tmp_path / "a" / f"{stem}.{ext}").read_bytes()
                b = (tmp_path / "b" / f"{stem}.{ext}").read_bytes()
                assert a == b

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "study.cfg"
        cfg.write_text("example = 1\ndegree = 1\nlevels = 2..3\nlambda = 1\n")
        out = tmp_path / "out"
        rc = main(["run", "--config", str(cfg), "--levels", "2..2", "--out", str(out)])
        assert rc == 0
        csv = (out / "example1_k1_robust_lambda1.csv").read_text()
        assert len(csv.splitlines()) == 2   # header + one level

    def test_invalid_config_is_machine_readable(self, tmp_path):
        proc = run_cli(["run", "--example", "1", "--degree", "7",
                        "--out", str(tmp_path)])
        assert proc.returncode != 0
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert "error" in err

    def test_bad_lambda_rejected(self, tmp_path):
        proc = run_cli(["run", "--lambda", "-3", "--out", str(tmp_path)])
        assert proc.returncode != 0
        assert "invalid config" in json.loads(proc.stderr.strip().splitlines()[-1])["error"]

    def test_condensed_run_matches_direct(self, tmp_path):
        base = ["run", "--example", "1", "--degree", "1", "--levels", "2..2",
                "--lambda", "1", "--formats", "csv"]
        main(base + ["--out", str(tmp_path / "direct")])
        main(base + ["--condense", "--out", str(tmp_path / "cond")])
        a = (tmp_path / "direct" / "example1_k1_robust_lambda1.csv").read_text()
        b = (tmp_path / "cond" / "example1_k1_robust_lambda1.csv").read_text()
        assert a == b

    def test_threaded_run_matches_serial(self, tmp_path, monkeypatch):
        args = ["run", "--example", "1", "--degree", "1", "--levels", "2..3",
                "--lambda", "1,1e2", "--formats", "csv"]
        main(args + ["--out", str(tmp_path / "serial")])
        monkeypatch.setenv("WGELAST_THREADS", "2")
        main(args + ["--out", str(tmp_path / "threaded")])
        for stem in ("example1_k1_robust_lambda1", "example1_k1_robust_lambda1e2"):
            a = (tmp_path / "serial" / f"{stem}.csv").read_bytes()
            b = (tmp_path / "threaded" / f"{stem}.csv").read_bytes()
            assert a == b
