"""Run the three built-in experiments in nominal and learning mode and compare them.

Usage: python3 scripts/run_scenarios.py [--out DIR] [--svg] [--presets NAME ...]
"""

import argparse
import time
from pathlib import Path

from flock import cli, output
from flock import config as cf
from flock.sim import run_scenario

DEFAULT_PRESETS = ("triangle2d", "hexad2d", "tetra3d")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="flock-out/scenarios", help="base output directory")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.add_argument("--presets", nargs="+", default=list(DEFAULT_PRESETS), choices=sorted(cf.PRESETS))
    args = p.parse_args(argv)
    base = Path(args.out)

    for name in args.presets:
        results = {}
        for mode in ("nominal", "learning"):
            start = time.perf_counter()
            res = run_scenario(cf.preset(name).with_mode(mode))
            output.write_run(res, base / f"{name}-{mode}", make_svg=args.svg)
            results[mode] = res
            s = res.summary
            print(f"{name:22s} {mode:8s} |e|={s['terminal_e_norm']:.4g} V={s['terminal_V']:.4g} "
                  f"avg-dist err={s['terminal_avg_distance_rel_error']:.2%} ({time.perf_counter() - start:.1f}s)")
        report = cli.compare_in_memory(results["nominal"], results["learning"])
        output.write_json(base / f"{name}-compare.json", report)
        if args.svg:
            svg_text = output.lyapunov_plot({m: r.record for m, r in results.items()})
            (base / f"{name}-lyapunov.svg").write_text(svg_text)
        ratio = report["metrics"]["terminal_e_norm"]["ratio"]
        print(f"{name:22s} nominal/learning terminal |e| ratio: {ratio:.4g}")


if __name__ == "__main__":
    main()
