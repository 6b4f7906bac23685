import json

import pandas as pd
import pytest

from storage_toolkit.cli import build_parser, parse_capacities, run
from storage_toolkit.utils.errors import InvalidArgumentError


@pytest.fixture
def prices(price_csv, daily_pattern_mwh):
    return price_csv(daily_pattern_mwh)


@pytest.fixture
def base_args(prices, tmp_path):
    def _args(command, *extra):
        return [command, "--prices", str(prices), "--hv", "10", "--out", str(tmp_path / "out"), "--quiet", *extra]

    return _args


class TestSolve:
    """Proves: solve writes a solution with the resolved config and maps failures to exit codes."""

    def test_writes_solution(self, base_args, tmp_path):
        assert run(base_args("solve")) == 0
        document = json.loads((tmp_path / "out" / "solution_20180108_20180109.json").read_text())
        assert len(document["x"]) == 48
        assert document["config"]["hv"] == 10.0
        assert document["cost"] > 0

    def test_heatmaps(self, base_args, tmp_path):
        assert run(base_args("solve", "--heatmap")) == 0
        frame = pd.read_csv(tmp_path / "out" / "purchases_20180108_20180109.csv", comment="#")
        assert len(frame) == 2
        assert (tmp_path / "out" / "prices_20180108_20180109.csv").exists()

    def test_date_range(self, base_args, tmp_path):
        assert run(base_args("solve", "--from", "2018-01-09", "--to", "2018-01-09")) == 0
        document = json.loads((tmp_path / "out" / "solution_20180109_20180109.json").read_text())
        assert len(document["x"]) == 24

    def test_infeasible_exit_code(self, base_args):
        assert run(base_args("solve", "--v-final", "1500")) == 1

    def test_missing_prices(self, tmp_path):
        assert run(["solve", "--out", str(tmp_path), "--quiet"]) == 2

    def test_unknown_config_key(self, base_args, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text("capacty: 10\n")
        assert run(base_args("solve", "--config", str(config))) == 2

    def test_invalid_parameter(self, base_args):
        assert run(base_args("solve", "--eta-in", "1.5")) == 2

    def test_deterministic_output(self, base_args, tmp_path):
        path = tmp_path / "out" / "solution_20180108_20180109.json"
        run(base_args("solve"))
        first = path.read_bytes()
        run(base_args("solve"))
        assert path.read_bytes() == first


class TestOtherCommands:
    def test_sweep_csv(self, base_args, tmp_path):
        assert run(base_args("sweep", "--capacities", "0:200:100", "--format", "csv")) == 0
        frame = pd.read_csv(tmp_path / "out" / "sweep_20180108_20180109.csv", comment="#")
        assert frame["capacity"].tolist() == [0.0, 100.0, 200.0]
        # default boundary levels are clamped, so C = 0 prices the storage-free baseline
        assert frame["savings"].iloc[0] == pytest.approx(0.0, abs=1e-6)

    def test_oracle_random(self, tmp_path):
        assert run(["oracle-check", "--random", "20", "--seed", "4", "--out", str(tmp_path), "--quiet"]) == 0
        document = json.loads((tmp_path / "oracle_check_random_4.json").read_text())
        assert len(document["reports"]) == 20

    def test_export_mps(self, base_args, tmp_path):
        assert run(base_args("export-milp", "--model-format", "mps")) == 0
        assert (tmp_path / "out" / "20180108_20180109.mps").exists()
        assert (tmp_path / "out" / "20180108_20180109.config.json").exists()

    def test_joint_compare(self, base_args, tmp_path):
        assert run(base_args("joint-compare")) == 0
        document = json.loads((tmp_path / "out" / "joint_20180108_20180109.json").read_text())
        assert document["config"]["v_init"] == 100.0

    def test_bench(self, base_args, tmp_path):
        assert run(base_args("bench", "--horizons", "6,12,24", "--repeats", "1")) == 0
        assert (tmp_path / "out" / "bench.json").exists()

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["optimise"])


class TestParseCapacities:
    def test_range_includes_stop(self):
        capacities = parse_capacities("0:5000:10")
        assert len(capacities) == 501
        assert capacities[-1] == 5000.0

    def test_list(self):
        assert parse_capacities("0,250,1000") == [0.0, 250.0, 1000.0]

    @pytest.mark.parametrize("raw", ["0:10:0", "10:0:1", "a:b:c"])
    def test_invalid(self, raw):
        with pytest.raises(InvalidArgumentError):
            parse_capacities(raw)


class TestOracleCheckStrict:
    """Proves: --strict turns a cost-gap excess into exit code 1."""

    def test_strict_random_campaign(self, tmp_path):
        args = ["oracle-check", "--random", "200", "--seed", "7", "--no-safe-capacity", "--out", str(tmp_path), "--quiet"]
        assert run(args) == 0
        document = json.loads((tmp_path / "oracle_check_random_7.json").read_text())
        assert any(r["within_gap"] is False for r in document["reports"])
        assert run([*args, "--strict"]) == 1
