import json
import subprocess
import sys

import numpy as np
import pytest

from corrgreeks.cli import main

BASE_CONFIG = {
    "n_names": 3,
    "n_paths": 2_000,
    "n_bins": 20,
    "seed": 7,
    "hazards": 0.02,
    "correlation": {"uniform_off_diagonal": 0.3},
    "contract": {
        "seniority": 2,
        "maturity": 5.0,
        "payment_frequency": 4,
        "spreads": 0.0125,
        "recoveries": 0.4,
        "discount_rate": 0.03,
    },
}


def write_config(tmp_path, **overrides):
    raw = json.loads(json.dumps(BASE_CONFIG))
    for key, value in overrides.items():
        if isinstance(value, dict) and key in raw:
            raw[key].update(value)
        else:
            raw[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


def run_cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "corrgreeks.cli", *argv],
        capture_output=True, text=True,
    )


class TestPriceCommand:
    def test_report_line(self, tmp_path, capsys):
        assert main(["price", write_config(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("value=") and "stderr=" in out and "n_paths=2000" in out

    def test_zero_contract(self, tmp_path, capsys):
        cfg = write_config(tmp_path, contract={"spreads": 0.0, "recoveries": 1.0})
        assert main(["price", cfg]) == 0
        assert "value=0.0," in capsys.readouterr().out

    def test_missing_file_exits_2(self, capsys):
        assert main(["price", "/nonexistent/config.json"]) == 2
        assert "config error" in capsys.readouterr().err


class TestConfigValidation:
    def test_unknown_key_named(self, tmp_path, capsys):
        assert main(["price", write_config(tmp_path, typo_key=1)]) == 2
        assert "typo_key" in capsys.readouterr().err

    def test_unknown_contract_key_named(self, tmp_path, capsys):
        cfg = write_config(tmp_path, contract={"coupon": 1})
        assert main(["price", cfg]) == 2
        assert "coupon" in capsys.readouterr().err

    def test_schedule_exclusivity(self, tmp_path, capsys):
        cfg = write_config(tmp_path, contract={"payment_times": [1.0, 2.0]})
        assert main(["price", cfg]) == 2

    def test_full_matrix_correlation(self, tmp_path, capsys):
        rho = [[1.0, 0.2, 0.1], [0.2, 1.0, 0.3], [0.1, 0.3, 1.0]]
        assert main(["price", write_config(tmp_path, correlation=rho)]) == 0

    def test_bad_matrix_exits_2(self, tmp_path):
        rho = [[1.0, 2.0, 0.1], [2.0, 1.0, 0.3], [0.1, 0.3, 1.0]]
        assert main(["price", write_config(tmp_path, correlation=rho)]) == 2


class TestGreeksCommand:
    def test_row_count_and_header(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["greeks", write_config(tmp_path), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "i,j,rho,dV_drho,stderr"
        assert len(lines) == 1 + 3
        assert lines[1].startswith("2,1,0.3,")

    def test_same_seed_identical_files(self, tmp_path):
        cfg = write_config(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["greeks", cfg, "--out", str(a)]) == 0
        assert main(["greeks", cfg, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_flag_overrides_file(self, tmp_path):
        cfg = write_config(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["greeks", cfg, "--out", str(a)]) == 0
        assert main(["greeks", cfg, "--seed", "8", "--out", str(b)]) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_methods_agree_in_csv(self, tmp_path):
        cfg = write_config(tmp_path, n_paths=4_000)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["greeks", cfg, "--method", "aad-binned", "--out", str(a)]) == 0
        assert main(["greeks", cfg, "--method", "forward", "--out", str(b)]) == 0
        ga = np.loadtxt(str(a), delimiter=",", skiprows=1)[:, 3]
        gb = np.loadtxt(str(b), delimiter=",", skiprows=1)[:, 3]
        assert np.max(np.abs(ga - gb) / np.abs(ga)) <= 1e-10

    def test_output_path_from_config(self, tmp_path):
        out = tmp_path / "from_config.csv"
        cfg = write_config(tmp_path, output=str(out))
        assert main(["greeks", cfg]) == 0
        assert out.exists()


class TestBenchmarkCommand:
    def test_tiny_grid(self, tmp_path):
        cfg = write_config(tmp_path, n_paths=2_000)
        out = tmp_path / "bench.csv"
        code = main(["benchmark", cfg, "--names-grid", "3,4",
                     "--methods", "aad-binned", "--repeats", "1", "--out", str(out)])
        assert code in (0, 3)  # 3 only flags timing jitter; CSV is still written
        lines = out.read_text().splitlines()
        assert lines[0] == "n_names,method,ratio,seconds_value,seconds_total"
        assert len(lines) == 3
        n, method, ratio, sv, st = lines[1].split(",")
        assert (n, method) == ("3", "aad-binned")
        assert float(ratio) > 0 and float(sv) > 0 and float(st) > 0

    def test_rejects_heterogeneous_base(self, tmp_path):
        cfg = write_config(tmp_path, hazards=[0.01, 0.02, 0.03])
        assert main(["benchmark", cfg, "--names-grid", "3,4",
                     "--methods", "aad-binned", "--repeats", "1"]) == 2

    def test_bad_grid_exits_2(self, tmp_path):
        assert main(["benchmark", write_config(tmp_path), "--names-grid", "x"]) == 2


class TestSubprocessDeterminism:
    @pytest.mark.parametrize("threads", ["1", "4"])
    def test_threads_flag_accepted(self, tmp_path, threads):
        cfg = write_config(tmp_path)
        out = tmp_path / f"t{threads}.csv"
        proc = run_cli("--threads", threads, "greeks", cfg, "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
