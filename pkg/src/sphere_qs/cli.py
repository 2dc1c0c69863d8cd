"""Command-line front end: ``sphere-qs <subcommand> [options]``.

Options can also come from a flat ``key = value`` file given with
``--config``; command-line flags win.  With ``--out DIR`` every subcommand
writes its CSV (canonical), JSON report and SVG figure into ``DIR``.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .errors import ConfigError, ExpressionError, SphereQSError
from .expressions import parse_expression
from .formats import format_csv, format_json, format_key_values
from .geometry import MAX_LEVEL, bracket_norm, build_icosphere, poisson_bracket, sample_field

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2

COMMON = {"level": 6, "C": 0.5, "seed": 0, "out": None, "format": "text"}
SPECIFIC = {
    "zeta": {"f": None, "oracle_levels": 0},
    "pi": {"f": None, "g": None},
    "bracket": {"f": None, "g": None},
    "inequality": {"f": None, "g": None, "slack": 0.05},
    "robustness": {"f": None, "g": None, "eps": "0.05:0.45:0.05"},
    "measure": {"f": None, "g": None, "T": "50,200", "epsilon": "1", "step": 0.005, "sample_level": 3},
    "partition": {"N": "8,16,32", "m": "1,2,4,8", "overlap": 0.3},
    "verify": {"only": None},
}
HELP = {
    "zeta": "median quasi-state of F",
    "pi": "non-commutativity |zeta(F+G) - zeta(F) - zeta(G)|",
    "bracket": "Poisson bracket {F,G} and its uniform norm",
    "inequality": "compare Pi(F,G) with sqrt(2C ||{F,G}||)",
    "robustness": "lower bounds on the bracket near (F,G) under C0 perturbations",
    "measure": "pointer-model measurement of F and G against the lower bound",
    "partition": "max pairwise brackets of cap partitions of unity",
    "verify": "run every numerical check and print a pass/fail table",
}


def parse_number_list(text, kind=float) -> list:
    """``"1,2,4"`` or ``"start:stop:step"`` (inclusive stop) into a list."""
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, s = (float(v) for v in text.split(":"))
            if s <= 0:
                raise ValueError("step must be positive")
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            vals = [round(a + i * s, 12) for i in range(n)]
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot read number list {text!r}: {exc}") from None
    if not vals:
        raise ConfigError(f"empty number list {text!r}")
    if kind is int:
        if any(v != int(v) for v in vals):
            raise ConfigError(f"expected integers in {text!r}")
        return [int(v) for v in vals]
    return vals


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sphere-qs", description="Quasi-state laboratory on the 2-sphere.")
    p.add_argument("--error-json", action="store_true", help="print errors as a JSON object on stdout")
    sub = p.add_subparsers(dest="command", required=True)
    for name, opts in SPECIFIC.items():
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", help="key = value file with default options")
        sp.add_argument("--level", help=f"icosphere subdivision level (default {COMMON['level']})")
        sp.add_argument("--C", help="defect constant (default 0.5)")
        sp.add_argument("--seed", help="random seed (default 0)")
        sp.add_argument("--out", help="directory for CSV, JSON and SVG artifacts")
        sp.add_argument("--format", choices=["text", "json"], help="stdout format")
        sp.add_argument("--error-json", action="store_true", dest="error_json_sub", help=argparse.SUPPRESS)
        for key in opts:
            flag = "--" + key.replace("_", "-")
            if key in ("f", "g"):
                sp.add_argument(flag, help=f"field expression for {key.upper()}")
            else:
                sp.add_argument(flag, help=f"default {opts[key]}")
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags; validate everything before any computation."""
    cfg = dict(COMMON)
    cfg.update(SPECIFIC[args.command])
    if args.config:
        try:
            extra = read_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        unknown = set(extra) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(extra)
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return validate(args.command, cfg)


def _as(kind, cfg, key):
    try:
        return kind(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be {kind.__name__}, got {cfg[key]!r}") from None


def validate(command: str, cfg: dict) -> dict:
    c = dict(cfg)
    c["level"] = _as(int, c, "level")
    if not 0 <= c["level"] <= MAX_LEVEL:
        raise ConfigError(f"level must be in [0, {MAX_LEVEL}]")
    c["C"] = _as(float, c, "C")
    if not (c["C"] > 0 and math.isfinite(c["C"])):
        raise ConfigError("C must be positive")
    c["seed"] = _as(int, c, "seed")
    if c["format"] not in ("text", "json"):
        raise ConfigError("format must be text or json")
    for key in ("f", "g"):
        if key in c:
            if not c[key]:
                raise ConfigError(f"--{key} is required for {command}")
            c[key] = parse_expression(str(c[key]))
    if command == "zeta":
        c["oracle_levels"] = _as(int, c, "oracle_levels")
        if c["oracle_levels"] != 0 and c["oracle_levels"] < 2:
            raise ConfigError("oracle-levels must be 0 (off) or at least 2")
    if command == "inequality":
        c["slack"] = _as(float, c, "slack")
        if c["slack"] < 0:
            raise ConfigError("slack must be nonnegative")
    if command == "robustness":
        c["eps"] = parse_number_list(c["eps"])
        if any(e < 0 for e in c["eps"]):
            raise ConfigError("eps values must be nonnegative")
    if command == "measure":
        c["T"] = parse_number_list(c["T"])
        c["epsilon"] = parse_number_list(c["epsilon"])
        c["step"] = _as(float, c, "step")
        c["sample_level"] = _as(int, c, "sample_level")
        if any(t <= 0 for t in c["T"]) or any(e < 0 for e in c["epsilon"]):
            raise ConfigError("T must be positive and epsilon nonnegative")
        if not c["step"] > 0:
            raise ConfigError("step must be positive")
        if c["sample_level"] < 0:
            raise ConfigError("sample-level must be nonnegative")
    if command == "partition":
        c["N"] = parse_number_list(c["N"], int)
        c["m"] = parse_number_list(c["m"], int)
        c["overlap"] = _as(float, c, "overlap")
        if any(n < 2 for n in c["N"]) or any(m < 1 for m in c["m"]):
            raise ConfigError("N must be at least 2 and m at least 1")
        if not 0 < c["overlap"] < 1:
            raise ConfigError("overlap must lie in (0, 1)")
    if command == "verify" and c["only"]:
        from .verification import CHECKS

        keys = [k.strip() for k in str(c["only"]).split(",") if k.strip()]
        known = {k for k, _, _ in CHECKS}
        bad = [k for k in keys if k not in known]
        if bad:
            raise ConfigError(f"unknown checks {bad}; choose from {sorted(known)}")
        c["only"] = keys
    if c["out"]:
        c["out"] = Path(c["out"])
        c["out"].mkdir(parents=True, exist_ok=True)
    return c


def _field(c, key):
    return sample_field(build_icosphere(c["level"]), c[key])


def _emit(c, name, report: dict, rows=None, columns=None, plot=None):
    """Print ``report`` and write artifacts under ``c['out']``."""
    if c["format"] == "json":
        body = dict(report)
        if rows is not None:
            body["rows"] = rows
        sys.stdout.write(format_json(body))
    else:
        sys.stdout.write(format_key_values(report))
        if rows is not None:
            sys.stdout.write(format_csv(rows, columns))
    out = c["out"]
    if out is None:
        return
    (out / f"{name}.json").write_text(format_json({**report, **({"rows": rows} if rows is not None else {})}),
                                      encoding="utf-8")
    if rows is not None:
        (out / f"{name}.csv").write_text(format_csv(rows, columns), newline="")
    if plot is not None:
        plot(out / f"{name}.svg")


def cmd_zeta(c) -> int:
    from .quasistate import zeta, zeta_bruteforce

    F = _field(c, "f")
    rep = {"F": str(c["f"]), "level": c["level"], "zeta": zeta(F)}
    if c["oracle_levels"]:
        rep["zeta_bruteforce"] = zeta_bruteforce(F, c["oracle_levels"])
    _emit(c, "zeta", rep)
    return EXIT_OK


def cmd_pi(c) -> int:
    from .quasistate import pi_functional, zeta

    F, G = _field(c, "f"), _field(c, "g")
    rep = {"F": str(c["f"]), "G": str(c["g"]), "level": c["level"],
           "zeta_F": zeta(F), "zeta_G": zeta(G), "zeta_F_plus_G": zeta(F + G), "pi": pi_functional(F, G)}
    _emit(c, "pi", rep)
    return EXIT_OK


def cmd_bracket(c) -> int:
    from .plotting import plot_sphere_field

    F, G = _field(c, "f"), _field(c, "g")
    B = poisson_bracket(F, G)
    rep = {"F": str(c["f"]), "G": str(c["g"]), "level": c["level"], "bracket_norm": bracket_norm(F, G)}
    _emit(c, "bracket", rep)
    if c["out"] is not None:
        # the per-vertex field is too long for stdout and goes to the CSV only
        rows = [{"vertex": i, "x": p[0], "y": p[1], "z": p[2], "bracket": v}
                for i, (p, v) in enumerate(zip(F.mesh.vertices.tolist(), B.values.tolist()))]
        (c["out"] / "bracket.csv").write_text(format_csv(rows), newline="")
        plot_sphere_field(F.mesh, B.values, c["out"] / "bracket.svg", title="{F, G}")
    return EXIT_OK


def cmd_inequality(c) -> int:
    from .quasistate import QuasiStateConfig, bracket_inequality_report

    F, G = _field(c, "f"), _field(c, "g")
    r = bracket_inequality_report(F, G, QuasiStateConfig(c["C"]), slack=c["slack"])
    rep = {"F": str(c["f"]), "G": str(c["g"]), "level": c["level"], **r.as_row(), "implied_C": r.implied_C}
    _emit(c, "inequality", rep, [r.as_row()], ["pi", "bracket_norm", "bound", "C", "satisfied"])
    return EXIT_OK if r.satisfied else EXIT_FAILED


def cmd_robustness(c) -> int:
    from .plotting import plot_robustness_curve
    from .quasistate import QuasiStateConfig, robustness_report

    F, G = _field(c, "f"), _field(c, "g")
    r = robustness_report(F, G, QuasiStateConfig(c["C"]), c["eps"])
    rep = {"F": str(c["f"]), "G": str(c["g"]), "level": c["level"], "C": r.C, "pi": r.pi_value,
           "upsilon_lower": r.upsilon_lower, "eps_max_lower": r.eps_max_lower, "vacuous": r.vacuous}
    rows = [{"epsilon": e, "upsilon_lower": v} for e, v in r.upsilon_curve.items()]
    eps = [row["epsilon"] for row in rows]
    ref = [max(1 - 2 * e, 0.0) ** 2 / (2 * r.C) for e in eps]
    _emit(c, "robustness", rep, rows, ["epsilon", "upsilon_lower"],
          lambda path: plot_robustness_curve(eps, [row["upsilon_lower"] for row in rows], path, ref))
    return EXIT_FAILED if r.vacuous else EXIT_OK


def cmd_measure(c) -> int:
    from .dynamics import simulate_measurement
    from .plotting import plot_measurement
    from .quasistate import QuasiStateConfig, pi_functional

    F1, F2 = _field(c, "f"), _field(c, "g")
    cfg = QuasiStateConfig(c["C"])
    pi = pi_functional(F1, F2)
    rows = []
    for T in c["T"]:
        for e in c["epsilon"]:
            r = simulate_measurement(F1, F2, T, e, step_size=c["step"], sample_level=c["sample_level"],
                                     cfg=cfg, pi=pi)
            row = r.as_row()
            if e == 0:
                row["satisfied"] = r.delta == 0.0
            rows.append(row)
    rep = {"F1": str(c["f"]), "F2": str(c["g"]), "level": c["level"], "C": c["C"], "pi": pi}
    cols = ["T", "epsilon", "delta", "bound", "satisfied", "conservation_residual"]
    plotted = [r for r in rows if r["epsilon"] > 0]
    _emit(c, "measure", rep, rows, cols, (lambda p: plot_measurement(plotted, p)) if plotted else None)
    return EXIT_OK if all(r["satisfied"] for r in rows) else EXIT_FAILED


def cmd_partition(c) -> int:
    from .partitions import CSV_COLUMNS, scaling_experiment
    from .plotting import plot_partition_scaling
    from .quasistate import QuasiStateConfig

    exp = scaling_experiment(build_icosphere(c["level"]), c["N"], c["m"], QuasiStateConfig(c["C"]),
                             overlap=c["overlap"])
    rows = [r.as_row() for r in exp.rows]
    rep = {"level": c["level"], "C": c["C"], "overlap": c["overlap"],
           **{f"slope_N{N}": s for N, s in exp.slopes.items()}}
    _emit(c, "partition", rep, rows, list(CSV_COLUMNS), lambda p: plot_partition_scaling(rows, p))
    return EXIT_OK if exp.all_satisfied else EXIT_FAILED


def cmd_verify(c) -> int:
    from .verification import run_checks

    width = 20

    def show(res):
        if c["format"] == "text":
            print(f"{'PASS' if res.passed else 'FAIL'}  {res.key:<{width}} {res.seconds:7.1f}s  {res.detail}",
                  flush=True)

    results = run_checks(c["level"], c["seed"], c["only"], progress=show)
    rows = [r.as_row() for r in results]
    n_ok = sum(r.passed for r in results)
    if c["format"] == "json":
        sys.stdout.write(format_json({"level": c["level"], "passed": n_ok, "total": len(results), "rows": rows}))
    else:
        print(f"{n_ok}/{len(results)} checks passed at level {c['level']}")
    if c["out"] is not None:
        cols = ["key", "claim", "passed", "detail", "seconds"]
        (c["out"] / "verify.csv").write_text(format_csv(rows, cols), newline="")
        (c["out"] / "verify.json").write_text(format_json({"level": c["level"], "rows": rows}), encoding="utf-8")
    return EXIT_OK if n_ok == len(results) else EXIT_FAILED


COMMANDS = {
    "zeta": cmd_zeta, "pi": cmd_pi, "bracket": cmd_bracket, "inequality": cmd_inequality,
    "robustness": cmd_robustness, "measure": cmd_measure, "partition": cmd_partition, "verify": cmd_verify,
}


def _report_error(exc: Exception, as_json: bool) -> None:
    if as_json:
        body = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("line", "column", "vertex"):
            if getattr(exc, attr, None) is not None:
                body[attr] = getattr(exc, attr)
        sys.stdout.write(format_json(body))
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    as_json = args.error_json or getattr(args, "error_json_sub", False)
    try:
        c = resolve(args)
        return COMMANDS[args.command](c)
    except (ConfigError, ExpressionError, ValueError) as exc:
        _report_error(exc, as_json)
        return EXIT_INVALID
    except SphereQSError as exc:
        _report_error(exc, as_json)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
