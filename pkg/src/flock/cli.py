"""Command-line front end: ``flock run``, ``flock compare`` and ``flock validate``.

Exit codes: 0 success, 1 simulation failure (divergence or conditioning),
2 invalid usage or config, 3 I/O error, 4 runs that cannot be compared.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import config as cf
from . import output
from .errors import ConditioningError, ConfigError, DivergenceError, FlockError

EXIT_OK, EXIT_SIM, EXIT_CONFIG, EXIT_IO, EXIT_MISMATCH = 0, 1, 2, 3, 4
DEFAULT_OUT = "flock-out"

COMPARED = (
    "terminal_e_norm",
    "terminal_delta_norm",
    "terminal_V",
    "rate_V",
    "terminal_avg_distance_rel_error",
    "final_window_avg_distance_max_rel_error",
)


class CompareError(FlockError):
    """The two runs do not share framework and disturbance."""


def _ratio(a, b):
    if a is None or b is None:
        return None
    if a == b:
        return 1.0
    if b == 0:
        return None
    return a / b


def compare_results(summary_a: dict, config_a: dict, summary_b: dict, config_b: dict) -> dict:
    """Side-by-side metrics and ratios.

    When one run is nominal and the other learning, ratios are nominal over
    learning (values above 1 favour learning); otherwise they are A over B.
    """
    for key in ("framework", "disturbance"):
        if config_a.get(key) != config_b.get(key):
            raise CompareError(f"runs differ in {key}; comparison needs the same scenario")
    modes = (summary_a["mode"], summary_b["mode"])
    if modes == ("learning", "nominal"):
        num, den, labels = summary_b, summary_a, ("B", "A")
    else:
        num, den, labels = summary_a, summary_b, ("A", "B")
    return {
        "runs": {"A": {"name": summary_a["name"], "mode": modes[0]},
                 "B": {"name": summary_b["name"], "mode": modes[1]}},
        "ratio_orientation": f"{labels[0]}/{labels[1]}",
        "metrics": {k: {"A": summary_a.get(k), "B": summary_b.get(k),
                        "ratio": _ratio(num.get(k), den.get(k))} for k in COMPARED},
    }


def compare_runs(dir_a, dir_b) -> dict:
    def load(d):
        d = Path(d)
        return json.loads((d / "summary.json").read_text()), json.loads((d / "config.json").read_text())

    sa, ca = load(dir_a)
    sb, cb = load(dir_b)
    return compare_results(sa, ca, sb, cb)


def compare_in_memory(result_a, result_b) -> dict:
    return compare_results(result_a.summary, cf.to_dict(result_a.config),
                           result_b.summary, cf.to_dict(result_b.config))


def resolve_config(args) -> cf.ScenarioConfig:
    cfg = cf.parse_config(args.config) if args.config else cf.preset(args.preset)
    if args.mode:
        cfg = cfg.with_mode(args.mode)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.no_disturbance:
        cfg = cfg.without_disturbance()
    return cfg


def default_out_dir(cfg: cf.ScenarioConfig, no_disturbance: bool = False) -> Path:
    base = os.environ.get("FLOCK_OUT") or DEFAULT_OUT
    tag = f"{cfg.name}-{cfg.control.mode}" + ("-undisturbed" if no_disturbance else "")
    return Path(base) / tag


def cmd_run(args) -> int:
    from .sim import run_scenario

    cfg = resolve_config(args)
    out = Path(args.out) if args.out else default_out_dir(cfg, args.no_disturbance)
    try:
        result = run_scenario(cfg)
    except (DivergenceError, ConditioningError) as exc:
        print(f"flock: simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM
    output.write_run(result, out, make_svg=args.svg)
    s = result.summary
    print(f"{s['name']} ({s['mode']}): converged={s['converged']} |e|={s['terminal_e_norm']:.6g} "
          f"V={s['terminal_V']:.6g} b={s['b']:.6g} bound_violated={s['bound_violated']}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    report = compare_runs(args.dir_a, args.dir_b)
    text = output.dumps(report)
    if args.out:
        Path(args.out).write_text(text)
    if args.svg:
        _compare_svg(args.dir_a, args.dir_b, Path(args.svg))
    sys.stdout.write(text)
    return EXIT_OK


def _compare_svg(dir_a, dir_b, path: Path):
    from . import svg

    series = []
    for d in (dir_a, dir_b):
        header, data = output.read_csv(Path(d) / "trajectory.csv")
        mode = json.loads((Path(d) / "summary.json").read_text())["mode"]
        t = data[:, 0]
        V = data[:, header.index("V")]
        v0 = V[0] if V[0] > 0 else 1.0
        series.append(svg.Series(mode, t, V / v0))
    path.write_text(svg.line_chart(series, "Normalized Lyapunov function", "t", "V / V(0)", log_y=True))


def cmd_validate(args) -> int:
    cfg = cf.parse_config(args.config)
    fw = cfg.framework
    print(f"ok: {cfg.name}: n={fw.n} d={fw.d} edges={fw.num_edges} mode={cfg.control.mode}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flock", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write its artifacts")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="scenario JSON file")
    src.add_argument("--preset", choices=sorted(cf.PRESETS), help="built-in scenario")
    r.add_argument("--mode", choices=("nominal", "learning"))
    r.add_argument("--out", help="output directory (default: $FLOCK_OUT/<name>-<mode> or flock-out/...)")
    r.add_argument("--svg", action="store_true", help="also write SVG plots")
    r.add_argument("--seed", type=int)
    r.add_argument("--no-disturbance", action="store_true", help="drop all disturbance terms")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare two run directories")
    c.add_argument("dir_a")
    c.add_argument("dir_b")
    c.add_argument("--out", help="also write the report to this file")
    c.add_argument("--svg", help="write a Lyapunov comparison plot to this file")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"flock: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CompareError as exc:
        print(f"flock: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (OSError, json.JSONDecodeError) as exc:
        print(f"flock: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
