import json
import subprocess
import sys
from pathlib import Path

import pytest

from ialm.cli import main


@pytest.fixture(scope="module")
def instance_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "inst.json"
    rc = main(["generate", "--seed", "5", "--n", "14", "--m", "2", "--out", str(path)])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory, instance_file):
    out = tmp_path_factory.mktemp("cli-bench")
    rc = main([
        "bench", "--instance", str(instance_file), "--out", str(out),
        "--regimes", "geo-const,geo-adapt", "--K", "6",
    ])
    assert rc == 0
    return out


class TestGenerate:
    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert main(["generate", "--seed", "9", "--n", "10", "--m", "2",
                         "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_strongly_convex_tag(self, tmp_path):
        path = tmp_path / "sc.json"
        assert main(["generate", "--seed", "1", "--n", "8", "--m", "1",
                     "--strongly-convex", "--out", str(path)]) == 0
        assert json.loads(path.read_text())["convexity"] == "strongly_convex"

    def test_zero_dimension_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--seed", "1", "--n", "0", "--out", str(tmp_path / "x.json")])
        assert exc.value.code == 2


class TestBench:
    def test_outputs_exist(self, bench_dir):
        assert (bench_dir / "geo-const.csv").exists()
        assert (bench_dir / "geo-adapt.csv").exists()
        bundle = json.loads((bench_dir / "certificate.json").read_text())
        assert bundle["format"] == "ialm-certificate-v1"
        assert len(bundle["runs"]) == 2

    def test_csv_shape(self, bench_dir):
        lines = (bench_dir / "geo-const.csv").read_text().strip().splitlines()
        assert lines[0].split(",")[0] == "outer_iter"
        assert len(lines) == 1 + 1 + 6  # header + row 0 + K rows

    def test_default_regimes_full_pipeline(self, instance_file, tmp_path):
        out = tmp_path / "default"
        rc = main(["bench", "--instance", str(instance_file), "--out", str(out),
                   "--max-inner", "200000"])
        assert rc == 0
        names = sorted(p.name for p in out.glob("*.csv"))
        assert names == ["const-const.csv", "geo-adapt.csv", "geo-const.csv", "penalty.csv"]

    def test_single_regime_flag(self, instance_file, tmp_path):
        out = tmp_path / "single"
        rc = main(["bench", "--instance", str(instance_file), "--out", str(out),
                   "--regimes", "geo-const", "--K", "5"])
        assert rc == 0
        assert sorted(p.name for p in out.glob("*.csv")) == ["geo-const.csv"]

    def test_unknown_regime_usage_error(self, instance_file, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--instance", str(instance_file), "--out",
                  str(tmp_path / "o"), "--regimes", "bogus"])
        assert exc.value.code == 2

    def test_corrupted_instance_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--instance", str(bad), "--out", str(tmp_path / "o")])
        assert exc.value.code == 2

    def test_missing_instance_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--instance", str(tmp_path / "nope.json"),
                  "--out", str(tmp_path / "o")])
        assert exc.value.code == 2


class TestSolve:
    def test_single_regime_run(self, instance_file, tmp_path):
        out = tmp_path / "solve-out"
        rc = main(["solve", "--instance", str(instance_file), "--out", str(out),
                   "--regime", "geo-adapt", "--K", "5"])
        assert rc == 0
        assert (out / "geo-adapt.csv").exists()
        assert (out / "certificate.json").exists()


class TestVerify:
    def test_reproduces_bench_output(self, instance_file, bench_dir):
        rc = main(["verify", "--certificate", str(bench_dir / "certificate.json"),
                   "--instance", str(instance_file)])
        assert rc == 0

    def test_tampered_trace_detected(self, instance_file, bench_dir, tmp_path, capsys):
        bundle = json.loads((bench_dir / "certificate.json").read_text())
        bundle["runs"][0]["rows"][-1]["feas_last"] = 0.123
        tampered = tmp_path / "tampered.json"
        tampered.write_text(json.dumps(bundle))
        rc = main(["verify", "--certificate", str(tampered),
                   "--instance", str(instance_file)])
        assert rc == 1
        assert "feas_last" in capsys.readouterr().err

    def test_tampered_bound_detected(self, instance_file, bench_dir, tmp_path, capsys):
        bundle = json.loads((bench_dir / "certificate.json").read_text())
        for check in bundle["runs"][0]["checks"]:
            if check["name"] == "ergodic-feasibility":
                check["rhs"] = check["rhs"] * 2.0
        tampered = tmp_path / "tampered2.json"
        tampered.write_text(json.dumps(bundle))
        rc = main(["verify", "--certificate", str(tampered),
                   "--instance", str(instance_file)])
        assert rc == 1
        assert "ergodic-feasibility" in capsys.readouterr().err

    def test_missing_reference_warns_exit_zero(self, instance_file, bench_dir, tmp_path, capsys):
        bundle = json.loads((bench_dir / "certificate.json").read_text())
        bundle["reference"] = None
        stripped = tmp_path / "stripped.json"
        stripped.write_text(json.dumps(bundle))
        rc = main(["verify", "--certificate", str(stripped),
                   "--instance", str(instance_file)])
        assert rc == 0
        assert "not evaluated" in capsys.readouterr().out

    def test_wrong_instance_schema_mismatch(self, bench_dir, tmp_path):
        other = tmp_path / "other.json"
        main(["generate", "--seed", "99", "--n", "14", "--m", "2", "--out", str(other)])
        rc = main(["verify", "--certificate", str(bench_dir / "certificate.json"),
                   "--instance", str(other)])
        assert rc == 2


class TestDeterminism:
    def test_bench_twice_byte_identical(self, tmp_path):
        inst = tmp_path / "inst.json"
        subprocess.run(
            [sys.executable, "-m", "ialm.cli", "generate", "--seed", "3",
             "--n", "12", "--m", "2", "--out", str(inst)],
            check=True,
        )
        outputs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            proc = subprocess.run(
                [sys.executable, "-m", "ialm.cli", "bench", "--instance", str(inst),
                 "--out", str(out), "--regimes", "geo-const,geo-adapt", "--K", "5"],
                capture_output=True,
            )
            assert proc.returncode == 0, proc.stderr.decode()
            outputs.append(out)
        for name in ("geo-const.csv", "geo-adapt.csv", "certificate.json"):
            assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()
