import csv
from pathlib import Path

import pytest

from cascade_coordinator.cli import CSV_COLUMNS, SERIES_FILES, RunConfig, load_config, main, parse_grid


def _read(path: Path) -> list[dict[str, str]]:
    with path.open() as handle:
        return list(csv.DictReader(handle))


def test_parse_grid():
    """Test expanding a start:stop:step grid."""
    grid = parse_grid("0.005:0.495:0.005")
    assert len(grid) == 99
    assert grid[0] == 0.005
    assert grid[-1] == 0.495
    assert 0.37 in grid


def test_analytic_single_point(tmp_path: Path):
    """Test the CSV written for a single crossover probability."""
    out = tmp_path / "point.csv"
    assert main(["--p", "0.37", "--out", str(out)]) == 0

    assert out.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = _read(out)
    assert [(row["mechanism"], row["mode"]) for row in rows] == [("bhw", "analytic"), ("nsii", "analytic")]
    bhw, nsii = rows
    assert bhw["gsw_stderr"] == bhw["nsw_stderr"] == bhw["revenue_stderr"] == ""
    assert bhw["gross_impr_pct"] == ""
    assert float(bhw["revenue"]) == 0.0
    assert float(nsii["gross_impr_pct"]) == pytest.approx(7.60, abs=0.05)
    assert float(nsii["net_impr_pct"]) == pytest.approx(7.02, abs=0.05)
    assert float(nsii["profit_pct"]) == pytest.approx(0.58, abs=0.05)
    assert float(nsii["nsw"]) == pytest.approx(float(nsii["gsw"]) - float(nsii["revenue"]), abs=1e-10)


def test_sweep_row_matches_single_point(tmp_path: Path):
    """Test that a sweep row agrees with the single-point figures."""
    out = tmp_path / "sweep.csv"
    assert main(["--p-grid", "0.005:0.495:0.005", "--mechanism", "nsii", "--out", str(out)]) == 0
    rows = _read(out)
    assert len(rows) == 99
    row = next(row for row in rows if row["p"] == "0.37")
    assert float(row["gross_impr_pct"]) == pytest.approx(7.60, abs=0.05)
    assert float(row["profit_pct"]) == pytest.approx(0.58, abs=0.05)


def test_output_is_byte_stable(capsys):
    """Test that simulated output does not depend on the worker count."""
    assert main(["--p", "0.25", "--mode", "simulate", "--episodes", "500", "--seed", "3"]) == 0
    first = capsys.readouterr().out
    assert main(["--p", "0.25", "--mode", "simulate", "--episodes", "500", "--seed", "3", "--workers", "2"]) == 0
    assert capsys.readouterr().out == first


def test_normalize_scales_welfare_only(tmp_path: Path):
    """Test that --normalize scales welfare and revenue only."""
    raw, scaled = tmp_path / "raw.csv", tmp_path / "scaled.csv"
    assert main(["--p", "0.3", "--out", str(raw)]) == 0
    assert main(["--p", "0.3", "--normalize", "--out", str(scaled)]) == 0
    for before, after in zip(_read(raw), _read(scaled)):
        for column in ("gsw", "nsw", "revenue"):
            assert float(after[column]) == pytest.approx(0.1 * float(before[column]), rel=1e-10)
        for column in ("p", "delta", "mechanism", "mode"):
            assert after[column] == before[column]
        if before["gross_impr_pct"]:
            assert float(after["gross_impr_pct"]) == pytest.approx(float(before["gross_impr_pct"]), rel=1e-9)


def test_simulate_mode_reports_standard_errors(tmp_path: Path):
    """Test that simulate mode fills in standard errors."""
    out = tmp_path / "sim.csv"
    assert main(["--p", "0.25", "--mode", "simulate", "--mechanism", "nsii", "--episodes", "2000", "--out", str(out)]) == 0
    (row,) = _read(out)
    assert row["mode"] == "simulate"
    assert float(row["gsw_stderr"]) > 0.0
    assert float(row["revenue_stderr"]) > 0.0
    assert row["gross_impr_pct"] != ""


def test_dp_mode(tmp_path: Path):
    """Test that dp mode emits BHW, NSII and optimal rows."""
    out = tmp_path / "dp.csv"
    assert main(["--p", "0.25", "--mode", "dp", "--horizon", "3", "--out", str(out)]) == 0
    rows = {row["mechanism"]: row for row in _read(out)}
    assert set(rows) == {"bhw", "nsii", "dp"}
    assert float(rows["bhw"]["revenue"]) == 0.0
    assert float(rows["dp"]["revenue"]) >= float(rows["nsii"]["revenue"]) - 1e-12


@pytest.mark.slow
def test_crosscheck_passes():
    """Test that a full crosscheck run agrees with the exact values."""
    assert main(["--p", "0.25", "--mode", "crosscheck", "--episodes", "100000", "--workers", "4"]) == 0


def test_series_files(tmp_path: Path):
    """Test writing the plot series files for a sweep."""
    series = tmp_path / "series"
    assert main(["--p-grid", "0.1:0.2:0.05", "--series-dir", str(series), "--out", str(tmp_path / "x.csv")]) == 0
    for filename in SERIES_FILES:
        lines = (series / filename).read_text().splitlines()
        assert [line.split()[0] for line in lines] == ["0.1", "0.15", "0.2"]
        assert all(len(line.split()) == 2 for line in lines)
    gross = [float(line.split()[1]) for line in (series / "gross_impr_pct.txt").read_text().splitlines()]
    assert all(value > 0.0 for value in gross)


def test_config_file_and_flag_precedence(tmp_path: Path):
    """Test that flags override values from the config file."""
    config = tmp_path / "run.toml"
    config.write_text('p_grid = "0.1:0.3:0.1"\ndelta = 0.8\nmode = "analytic"\nkmax = 120\n')

    loaded = load_config(["--config", str(config)])
    assert loaded.grid == (0.1, 0.2, 0.3)
    assert loaded.delta == 0.8
    assert loaded.kmax == 120

    overridden = load_config(["--config", str(config), "--delta", "0.5", "--p", "0.2", "-v"])
    assert overridden.delta == 0.5
    assert overridden.grid == (0.2,)
    assert overridden.log_level == "INFO"
    assert overridden.kmax == 120


def test_run_config_defaults():
    config = RunConfig(p=0.25)
    assert config.delta == 0.9
    assert config.mode == "analytic"
    assert config.block_size == 16384
    assert [m.value for m in config.mechanisms] == ["bhw", "nsii"]


@pytest.mark.parametrize(
    "argv",
    [
        ["--p", "0.7"],
        ["--p", "0.0"],
        ["--p-grid", "0.3:0.1:0.05"],
        ["--p-grid", "0.1:0.3:0"],
        ["--p-grid", "nonsense"],
        ["--p", "0.2", "--p-grid", "0.1:0.2:0.1"],
        ["--p", "0.2", "--episodes", "0"],
        ["--p", "0.2", "--kmax", "3"],
        ["--p", "0.2", "--mode", "dp", "--horizon", "7"],
        ["--p", "0.2", "--log-level", "chatty"],
        ["--p", "0.2", "--frobnicate"],
        [],
    ],
)
def test_invalid_configuration_exits_with_one(argv: list[str], capsys):
    """Test that invalid settings exit with status 1."""
    assert main(argv) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_file_exits_with_one(tmp_path: Path):
    """Test that malformed or unknown config keys exit with status 1."""
    unknown = tmp_path / "unknown.toml"
    unknown.write_text("p = 0.2\ncolour = 'blue'\n")
    assert main(["--config", str(unknown)]) == 1

    broken = tmp_path / "broken.toml"
    broken.write_text("p = = 0.2\n")
    assert main(["--config", str(broken)]) == 1


def test_unwritable_output_exits_with_two(tmp_path: Path, capsys):
    """Test that an unwritable output path exits with status 2."""
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["--p", "0.2", "--out", str(blocker / "out.csv")]) == 2
    assert "blocker" in capsys.readouterr().err


def test_missing_config_file_exits_with_two(tmp_path: Path):
    """Test that a missing config file exits with status 2."""
    assert main(["--config", str(tmp_path / "absent.toml")]) == 2
