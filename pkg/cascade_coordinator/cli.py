"""
Command-line experiment runner.

Computes BHW and NSII welfare at a single crossover probability or over a grid, either
exactly, by simulation, by the finite-horizon DP, or both exactly and by simulation
(``crosscheck``), and writes one CSV row per mechanism and mode.

Settings come from defaults, then an optional TOML file (``--config``) with flat keys named
like the flags, then the flags themselves.
"""

import argparse
import csv
import logging
import sys
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import IO, Literal

if sys.version_info >= (3, 11):
    import tomllib

    _level_names_mapping = logging.getLevelNamesMapping
else:
    import tomli as tomllib

    def _level_names_mapping() -> dict[str, int]:
        # Same as logging.getLevelNamesMapping(), which is 3.11+.
        return logging._nameToLevel.copy()

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .analytic import WelfareReport, improvement_percentages, welfare_report
from .core import ModelParams
from .errors import CascadeError, ConfigurationError, CrosscheckError
from .mdp_solver import MAX_DP_HORIZON, finite_horizon_report, solve_finite_horizon
from .mechanisms import Mechanism, policy_for
from .simulator import DEFAULT_BLOCK_SIZE, estimate

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "p",
    "delta",
    "mechanism",
    "mode",
    "gsw",
    "nsw",
    "revenue",
    "gsw_stderr",
    "nsw_stderr",
    "revenue_stderr",
    "gross_impr_pct",
    "net_impr_pct",
    "profit_pct",
]

SERIES_FILES = {
    "gsw_bhw.txt": ("bhw", "gsw"),
    "gsw_nsii.txt": ("nsii", "gsw"),
    "nsw_nsii.txt": ("nsii", "nsw"),
    "revenue_nsii.txt": ("nsii", "revenue"),
    "gross_impr_pct.txt": ("nsii", "gross_impr_pct"),
    "net_impr_pct.txt": ("nsii", "net_impr_pct"),
    "profit_pct.txt": ("nsii", "profit_pct"),
}

DEFAULT_DP_HORIZON = 5

# crosscheck runs plot the exact curves
SERIES_MODE = {"analytic": "analytic", "simulate": "simulate", "dp": "dp", "crosscheck": "analytic"}


def parse_grid(text: str) -> tuple[float, ...]:
    """Expand ``start:stop:step`` into the inclusive grid, rounded to 12 decimals."""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"p grid must look like start:stop:step, got {text!r}") from None
    if step <= 0.0:
        raise ConfigurationError(f"p grid step must be positive, got {step}")
    if stop < start:
        raise ConfigurationError(f"p grid stop {stop} lies below start {start}")
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 12) for i in range(count))


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p: float | None = None
    p_grid: str | None = None
    delta: float = Field(0.9, gt=0.0, lt=1.0)
    mechanism: Mechanism | None = None
    mode: Literal["analytic", "simulate", "dp", "crosscheck"] = "analytic"
    episodes: int = Field(100_000, ge=1)
    seed: int = 0
    horizon: int | None = Field(None, ge=1)
    kmax: int = Field(200, ge=4)
    normalize: bool = False
    out: Path | None = None
    series_dir: Path | None = None
    workers: int = Field(1, ge=1)
    block_size: int = Field(DEFAULT_BLOCK_SIZE, ge=1)
    log_level: str = "WARNING"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in _level_names_mapping():
            raise ValueError(f"unknown log level {value!r}")
        return value

    @model_validator(mode="after")
    def _check_grid(self) -> "RunConfig":
        if (self.p is None) == (self.p_grid is None):
            raise ValueError("give exactly one of p or p_grid")
        for p in self.grid:
            if not 0.0 < p < 0.5:
                raise ValueError(f"crossover probability {p} lies outside (0, 0.5)")
        if self.mode == "dp" and self.horizon is not None and self.horizon > MAX_DP_HORIZON:
            raise ValueError(f"dp mode supports horizons up to {MAX_DP_HORIZON}, got {self.horizon}")
        return self

    @property
    def grid(self) -> tuple[float, ...]:
        if self.p_grid is not None:
            return parse_grid(self.p_grid)
        assert self.p is not None
        return (self.p,)

    @property
    def mechanisms(self) -> tuple[Mechanism, ...]:
        return (self.mechanism,) if self.mechanism is not None else (Mechanism.BHW, Mechanism.NSII)


def _format(value: float | int | str | None) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _row(p: float, report: WelfareReport, base: WelfareReport | None) -> dict[str, str]:
    row = {
        "p": p,
        "delta": report.delta,
        "mechanism": report.mechanism,
        "mode": report.mode,
        "gsw": report.gsw,
        "nsw": report.nsw,
        "revenue": report.revenue,
        "gsw_stderr": report.gsw_stderr,
        "nsw_stderr": report.nsw_stderr,
        "revenue_stderr": report.revenue_stderr,
    }
    if base is not None and report.mechanism != Mechanism.BHW.value:
        row.update(improvement_percentages(report, base))
    return {column: _format(row.get(column)) for column in CSV_COLUMNS}


def _simulated(config: RunConfig, params: ModelParams, mechanism: Mechanism) -> WelfareReport:
    report = estimate(
        params,
        policy_for(mechanism, params),
        episodes=config.episodes,
        horizon=config.horizon,
        seed=config.seed,
        workers=config.workers,
        block_size=config.block_size,
    )
    return report.normalize() if config.normalize else report


def _dp_reports(config: RunConfig, params: ModelParams) -> dict[str, WelfareReport]:
    T = config.horizon or DEFAULT_DP_HORIZON
    reports = {m.value: finite_horizon_report(params, policy_for(m, params), T) for m in Mechanism}
    reports["dp"] = solve_finite_horizon(params, T).report()
    if config.normalize:
        reports = {name: report.normalize() for name, report in reports.items()}
    return reports


def _check_agreement(p: float, exact: WelfareReport, simulated: WelfareReport) -> list[str]:
    failures = []
    for field in ("gsw", "nsw", "revenue"):
        stderr = getattr(simulated, f"{field}_stderr") or 0.0
        gap = abs(getattr(simulated, field) - getattr(exact, field))
        slack = 3.0 * stderr + simulated.truncation_bound + exact.truncation_bound + 1e-12
        if gap > slack:
            failures.append(f"p={p:g} {exact.mechanism} {field}: |{gap:.3e}| exceeds {slack:.3e}")
            logger.warning(failures[-1])
    return failures


def collect_rows(config: RunConfig) -> tuple[list[dict[str, str]], list[str]]:
    """Compute every CSV row for ``config``; also return crosscheck failures."""
    rows = []
    failures: list[str] = []
    selected = {m.value for m in config.mechanisms}
    for p in config.grid:
        params = ModelParams(p=p, delta=config.delta)
        reports: list[WelfareReport] = []
        base: WelfareReport | None = None
        if config.mode in ("analytic", "crosscheck"):
            exact = {
                m.value: welfare_report(params, m, normalize=config.normalize, truncation=config.kmax)
                for m in Mechanism
            }
            reports.extend(exact[name] for name in sorted(selected))
            base = exact[Mechanism.BHW.value]
        if config.mode in ("simulate", "crosscheck"):
            simulated = {m.value: _simulated(config, params, m) for m in Mechanism}
            reports.extend(simulated[name] for name in sorted(selected))
            if config.mode == "simulate":
                base = simulated[Mechanism.BHW.value]
            else:
                for name in sorted(selected):
                    failures.extend(_check_agreement(p, exact[name], simulated[name]))
        if config.mode == "dp":
            dp = _dp_reports(config, params)
            reports.extend(dp[name] for name in sorted(selected))
            reports.append(dp["dp"])
            base = dp[Mechanism.BHW.value]

        rows.extend(_row(p, report, base) for report in reports)
        logger.debug(f"Finished p={p:g}")
    return rows, failures


def write_csv(rows: Iterable[dict[str, str]], stream: IO[str]) -> None:
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def write_series(rows: Sequence[dict[str, str]], directory: Path, mode: str) -> None:
    """Two-column ``p value`` files for plotting welfare and improvement curves."""
    directory.mkdir(parents=True, exist_ok=True)
    primary = [row for row in rows if row["mode"] == mode]
    for filename, (mechanism, column) in SERIES_FILES.items():
        lines = [f"{row['p']} {row[column]}\n" for row in primary if row["mechanism"] == mechanism and row[column]]
        (directory / filename).write_text("".join(lines))
    logger.info(f"Wrote {len(SERIES_FILES)} series files to {directory}")


def run(config: RunConfig) -> int:
    """Run the experiment described by ``config`` and write its outputs; returns the exit status."""
    rows, failures = collect_rows(config)
    if config.out is None:
        write_csv(rows, sys.stdout)
    else:
        config.out.parent.mkdir(parents=True, exist_ok=True)
        with config.out.open("w", newline="") as stream:
            write_csv(rows, stream)
        logger.info(f"Wrote {len(rows)} rows to {config.out}")
    if config.series_dir is not None:
        write_series(rows, config.series_dir, SERIES_MODE[config.mode])
    if failures:
        raise CrosscheckError(f"{len(failures)} simulated figures disagree with the exact values: " + "; ".join(failures))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise ConfigurationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cascade-coordinator",
        description="Compare BHW sequential learning with the NSII coordinator mechanism",
        argument_default=argparse.SUPPRESS,
    )
    parser.add_argument("--config", type=Path, help="TOML file with default settings (flat keys named like the flags)")
    target = parser.add_mutually_exclusive_group()
    target.add_argument("--p", type=float, help="Single crossover probability")
    target.add_argument("--p-grid", dest="p_grid", help="Grid of crossover probabilities as start:stop:step")
    parser.add_argument("--delta", type=float, help="Discount factor (default 0.9)")
    parser.add_argument("--mechanism", choices=[m.value for m in Mechanism], help="Only emit rows for this mechanism")
    parser.add_argument("--mode", choices=["analytic", "simulate", "dp", "crosscheck"], help="Computation mode")
    parser.add_argument("--episodes", type=int, help="Monte-Carlo episodes per mechanism and grid point")
    parser.add_argument("--seed", type=int, help="Master seed of the simulation")
    parser.add_argument("--horizon", type=int, help="Agents per episode (simulate) or DP horizon (dp)")
    parser.add_argument("--kmax", type=int, help="Truncation K of the NSII belief chain")
    parser.add_argument("--normalize", action="store_true", help="Multiply welfare and revenue by 1 - delta")
    parser.add_argument("--out", type=Path, help="CSV output path (stdout if omitted)")
    parser.add_argument("--series-dir", dest="series_dir", type=Path, help="Directory for plot series files")
    parser.add_argument("--workers", type=int, help="Simulation threads")
    parser.add_argument("--block-size", dest="block_size", type=int, help="Episodes per random-stream block")
    parser.add_argument("--log-level", dest="log_level", help="Logging level (default WARNING)")
    parser.add_argument("-v", "--verbose", action="count", help="Shortcut for INFO (-v) or DEBUG (-vv) logging")
    return parser


def _read_config_file(path: Path) -> dict:
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{path}: {e}") from e


def load_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Merge defaults, the optional TOML file and the command-line flags into a :class:`RunConfig`."""
    flags = vars(build_parser().parse_args(argv))
    settings: dict = {}
    config_path = flags.pop("config", None)
    if config_path is not None:
        settings.update(_read_config_file(config_path))
    verbose = flags.pop("verbose", 0)
    settings.update(flags)
    if verbose:
        settings["log_level"] = "DEBUG" if verbose > 1 else "INFO"
    # a flag for p replaces a grid from the file and vice versa
    if "p" in flags:
        settings.pop("p_grid", None)
    if "p_grid" in flags:
        settings.pop("p", None)
    return RunConfig(**settings)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        config = load_config(argv)
        logging.basicConfig(level=config.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        return run(config)
    except (ConfigurationError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return 2
    except CascadeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
