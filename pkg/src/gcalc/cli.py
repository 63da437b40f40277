"""Command line front end: ``key = value`` configs, the experiment registry and CSV output.

Usage::

    gcalc CONFIG [--seed N] [--out DIR]
    gcalc --list
    gcalc CONFIG --check

Exit status is 0 when every declared assertion passes, 1 when any fails and
2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .core import GParams, ValidationError, make_grid
from .expectation import MAX_BLOCKS

__all__ = ["ConfigError", "ExperimentConfig", "RunReport", "parse_config", "run_experiment", "format_value", "main"]


class ConfigError(ValidationError):
    """Configuration text is malformed or violates a precondition."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    sigma_lo: float = 0.5
    sigma_hi: float = 1.0
    t_end: float = 1.0
    n_steps: int = 4096
    n_paths: int = 1000
    eps_rule: str = "sqrt-dt"
    blocks: int = 6
    ladder: int = 5
    seed: int = 0
    out_dir: str = "results"
    payoff: str = "abs"
    level: float = 0.0
    dyadic_n: int = 7
    n_levels: int = 64
    bdg_c: float = 4.0

    @property
    def eps_value(self) -> float | None:
        """Fixed bandwidth, or ``None`` for the ``sqrt-dt`` rule."""
        if self.eps_rule == "sqrt-dt":
            return None
        return float(self.eps_rule.split(":", 1)[1])


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_INT_KEYS = {k for k, t in _TYPES.items() if t == "int"}
_FLOAT_KEYS = {k for k, t in _TYPES.items() if t == "float"}


def _parse_eps_rule(value: str) -> str:
    if value == "sqrt-dt":
        return value
    if value.startswith("fixed:"):
        eps = float(value[len("fixed:"):])
        if not math.isfinite(eps) or eps <= 0:
            raise ValueError("fixed bandwidth must be positive")
        return f"fixed:{eps!r}"
    raise ValueError("expected 'sqrt-dt' or 'fixed:<value>'")


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Order does not matter."""
    from .experiments import PAYOFFS, REGISTRY

    seen: dict[str, int] = {}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                v = float(value)
                if not math.isfinite(v):
                    raise ValueError("not finite")
                values[key] = v
            elif key == "eps_rule":
                values[key] = _parse_eps_rule(value)
            else:
                if not value:
                    raise ValueError("empty value")
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r} ({exc})") from None

    def where(*keys: str) -> str:
        lines = [f"line {seen[k]}" for k in keys if k in seen]
        return (", ".join(lines) + ": ") if lines else "defaults: "

    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'")
    if values["experiment"] not in REGISTRY:
        raise ConfigError(f"{where('experiment')}unknown experiment {values['experiment']!r}; see --list")
    cfg = ExperimentConfig(**values)

    checks = [
        (("sigma_lo", "sigma_hi"), lambda: GParams(cfg.sigma_lo, cfg.sigma_hi)),
        (("t_end", "n_steps"), lambda: make_grid(cfg.t_end, cfg.n_steps)),
    ]
    for keys, check in checks:
        try:
            check()
        except ValidationError as exc:
            raise ConfigError(f"{where(*keys)}{exc}") from None
    simple = [
        ("n_paths", cfg.n_paths >= 2, "n_paths must be >= 2"),
        ("blocks", 1 <= cfg.blocks <= MAX_BLOCKS, f"blocks must be in [1, {MAX_BLOCKS}]"),
        ("ladder", cfg.ladder >= 2, "ladder must be >= 2"),
        ("seed", -(2**63) <= cfg.seed < 2**64, "seed must fit in 64 bits"),
        ("payoff", cfg.payoff in PAYOFFS, f"payoff must be one of {sorted(PAYOFFS)}"),
        ("dyadic_n", 1 <= cfg.dyadic_n <= 16, "dyadic_n must be in [1, 16]"),
        ("n_levels", cfg.n_levels >= 16, "n_levels must be >= 16"),
        ("bdg_c", cfg.bdg_c >= 1, "bdg_c must be >= 1"),
    ]
    for key, ok, msg in simple:
        if not ok:
            raise ConfigError(f"{where(key)}{msg}")
    from .experiments import preflight

    try:
        preflight(cfg)
    except ValidationError as exc:
        raise ConfigError(f"{where('experiment', 'sigma_lo', 'n_steps', 'dyadic_n')}{exc}") from None
    return cfg


def format_value(v) -> str:
    """CSV cell: floats with 17 significant digits, '.' decimal."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    if hasattr(v, "dtype"):
        return format_value(v.item())
    return str(v)


@dataclass
class RunReport:
    experiment: str
    csv_paths: list[str]
    summary: dict[str, object]
    flags: dict[str, bool]
    seconds: float
    svg_paths: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def lines(self) -> list[str]:
        out = [f"experiment = {self.experiment}"]
        out += [f"csv = {p}" for p in self.csv_paths]
        out += [f"svg = {p}" for p in self.svg_paths]
        out += [f"{k} = {format_value(v)}" for k, v in self.summary.items()]
        out += [f"assert.{k} = {'pass' if v else 'fail'}" for k, v in self.flags.items()]
        out.append(f"status = {'pass' if self.passed else 'fail'}")
        out.append(f"wall_seconds = {self.seconds:.3f}")
        return out


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def run_experiment(config: ExperimentConfig, plots: bool = True) -> RunReport:
    """Run one registered experiment and write ``<out_dir>/<experiment>-<seed>.csv``."""
    from .experiments import REGISTRY

    exp = REGISTRY[config.experiment]
    out_dir = Path(config.out_dir)
    csv_path = out_dir / f"{config.experiment}-{config.seed}.csv"
    svg_path = out_dir / f"{config.experiment}-{config.seed}.svg"
    written: list[Path] = []
    start = time.perf_counter()
    try:
        outcome = exp.runner(config)
        if tuple(outcome.flags) != exp.assertions:
            raise RuntimeError(f"runner produced flags {list(outcome.flags)}, manifest declares {list(exp.assertions)}")
        if tuple(outcome.columns) != exp.columns:
            raise RuntimeError("runner columns differ from the declared schema")
        out_dir.mkdir(parents=True, exist_ok=True)
        written.append(csv_path)
        csv_path.write_text(render_csv(outcome.columns, outcome.rows), encoding="utf-8")
        svgs = []
        if plots and outcome.plot is not None:
            written.append(svg_path)
            outcome.plot(str(svg_path))
            svgs.append(str(svg_path))
        for p in written:
            if not p.exists() or p.stat().st_size == 0:
                raise RuntimeError(f"output {p} is missing or empty")
    except Exception as exc:
        for p in written:
            if p.exists():
                p.unlink()
        if isinstance(exc, ValidationError):
            raise type(exc)(f"{config.experiment}: {exc}") from exc
        raise RuntimeError(f"{config.experiment}: {exc}") from exc
    flags = {k: bool(v) for k, v in outcome.flags.items()}
    return RunReport(config.experiment, [str(csv_path)], outcome.summary, flags, time.perf_counter() - start, svgs)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcalc", description="G-Brownian motion stochastic calculus experiments")
    p.add_argument("config", nargs="?", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override out_dir")
    p.add_argument("--list", action="store_true", help="print the experiment registry and exit")
    p.add_argument("--check", action="store_true", help="parse and validate the config only")
    p.add_argument("--no-plot", action="store_true", help="skip SVG output")
    return p


def main(argv: list[str] | None = None) -> int:
    from .experiments import REGISTRY

    args = _build_parser().parse_args(argv)
    if args.list:
        for exp in REGISTRY.values():
            print(f"{exp.name}: {exp.description}")
            print(f"  columns: {','.join(exp.columns)}")
            print(f"  assertions: {','.join(exp.assertions)}")
        return 0
    if not args.config:
        print("error: a config file is required (or --list)", file=sys.stderr)
        return 2
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        if overrides:
            cfg = replace(cfg, **overrides)
    except (OSError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if args.check else 2
    if args.check:
        print(f"ok: {cfg.experiment}")
        return 0
    try:
        report = run_experiment(cfg, plots=not args.no_plot)
    except Exception as exc:  # surfaced with experiment context
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print("\n".join(report.lines()))
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
