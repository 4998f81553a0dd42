"""CLI subcommands: outputs, exit codes, reproducibility."""

import json

import numpy as np
import pytest

from gramsim.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSim:
    def write(self, tmp_path, text):
        path = tmp_path / "vectors.txt"
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_orthonormal_rows(self, tmp_path, capsys):
        path = self.write(tmp_path, "1 0 0\n0 1 0\n0 0 1\n")
        code, out, _ = run_cli(capsys, "sim", "--input", path)
        assert code == 0
        payload = json.loads(out)
        assert payload["cos_theta"] == 0.0
        assert payload["phi3"] == 0.0

    def test_identical_rows(self, tmp_path, capsys):
        path = self.write(tmp_path, "1,2,3\n1,2,3\n")
        code, out, _ = run_cli(capsys, "sim", "--input", path)
        assert code == 0
        assert json.loads(out)["cos_theta"] == 1.0

    def test_phi3_matches_cos_squared(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        rows = rng.standard_normal((3, 32))
        text = "\n".join(" ".join(format(v, ".17g") for v in row) for row in rows)
        code, out, _ = run_cli(capsys, "sim", "--input",
                               self.write(tmp_path, text))
        assert code == 0
        payload = json.loads(out)
        assert payload["cos_theta"] ** 2 == pytest.approx(payload["phi3"], abs=1e-9)

    def test_csv_format(self, tmp_path, capsys):
        path = self.write(tmp_path, "1 0\n0 1\n")
        code, out, _ = run_cli(capsys, "sim", "--input", path, "--format", "csv")
        assert code == 0
        header, row = out.strip().splitlines()
        assert header.split(",")[:2] == ["det_gram", "hypervolume"]
        assert len(header.split(",")) == len(row.split(","))

    def test_malformed_input_exits_2(self, tmp_path, capsys):
        path = self.write(tmp_path, "1 2\n3 oops\n")
        code, _, err = run_cli(capsys, "sim", "--input", path)
        assert code == 2
        assert "error" in err

    def test_ragged_input_exits_2(self, tmp_path, capsys):
        path = self.write(tmp_path, "1 2 3\n4 5\n")
        code, _, _ = run_cli(capsys, "sim", "--input", path)
        assert code == 2

    def test_zero_vector_exits_3(self, tmp_path, capsys):
        path = self.write(tmp_path, "0 0\n1 2\n")
        code, _, err = run_cli(capsys, "sim", "--input", path)
        assert code == 3
        assert "norm" in err


class TestCheckgrad:
    def test_default_run_passes(self, capsys):
        code, out, _ = run_cli(capsys, "checkgrad", "--seed", "1")
        assert code == 0
        assert "pipeline" in out
        assert "FAIL" not in out

    def test_report_is_deterministic(self, capsys):
        _, out1, _ = run_cli(capsys, "checkgrad", "--seed", "3")
        _, out2, _ = run_cli(capsys, "checkgrad", "--seed", "3")
        assert out1 == out2

    def test_two_modalities_path(self, capsys):
        code, out, _ = run_cli(capsys, "checkgrad", "--modalities", "2",
                               "--seed", "2")
        assert code == 0
        assert "two_vector_oracle" in out


class TestValidation:
    def test_bad_tau_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--tau", "-1"])
        assert exc.value.code == 2

    def test_bad_batch_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["align", "--batch", "1"])
        assert exc.value.code == 2

    def test_unknown_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestNoise:
    def test_writes_reports_and_repeats_identically(self, tmp_path, capsys):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            code, stdout, _ = run_cli(capsys, "noise", "--seed", "42",
                                      "--count", "10", "--dim", "32",
                                      "--out", str(out))
            assert code == 0
            assert "sigma=0.01" in stdout
        assert ((out_a / "noise_report.csv").read_bytes()
                == (out_b / "noise_report.csv").read_bytes())
        assert ((out_a / "noise_summary.json").read_bytes()
                == (out_b / "noise_summary.json").read_bytes())


class TestBench:
    def test_by_modalities_rows(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "bench", "--mode", "by_modalities",
                               "--batch", "8", "--dim", "8",
                               "--negatives", "2", "--repetitions", "1",
                               "--out", str(tmp_path))
        assert code == 0
        lines = [l for l in (tmp_path / "bench.csv").read_text().splitlines()
                 if not l.startswith("#")]
        gha_rows = [l for l in lines[1:] if l.startswith("gha,")]
        dual_rows = [l for l in lines[1:] if l.startswith("dual,")]
        assert len(gha_rows) == 10 and len(dual_rows) == 10


class TestAlign:
    def test_small_run_outputs_and_determinism(self, tmp_path, capsys):
        args = ["align", "--seed", "11", "--count", "24", "--dim", "8",
                "--epochs", "2", "--batch", "8", "--negatives", "2"]
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            code, stdout, _ = run_cli(capsys, *args, "--out", str(out))
            assert code == 0
            assert "mean positive joint cosine after" in stdout
        for name in ("embeddings_before.csv", "embeddings_after.csv",
                     "history.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        header = (out_a / "history.csv").read_text().splitlines()
        assert any(l.startswith("epoch,") for l in header)
