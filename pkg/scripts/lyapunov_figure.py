"""Normalized Lyapunov trace of one preset under the nominal and the learning law.

Usage: python3 scripts/lyapunov_figure.py hexad2d --out lyapunov.svg
"""

import argparse
from pathlib import Path

from flock import config as cf
from flock.output import lyapunov_plot
from flock.sim import run_scenario


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("preset", choices=sorted(cf.PRESETS))
    p.add_argument("--out", default="lyapunov.svg")
    args = p.parse_args(argv)
    cfg = cf.preset(args.preset)
    records = {mode: run_scenario(cfg.with_mode(mode)).record for mode in ("nominal", "learning")}
    Path(args.out).write_text(lyapunov_plot(records))
    for mode, rec in records.items():
        print(f"{mode:8s} V(0)={rec.V[0]:.4g} V(t_end)={rec.V[-1]:.4g}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
