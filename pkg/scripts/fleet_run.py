"""Certified multi-vehicle run; ``--full`` solves the 11-vehicle formation (slow).

    python3 scripts/fleet_run.py --fleet 5 --out results/
"""

from __future__ import annotations

import argparse
from pathlib import Path

from bernopt.bench import run_example


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fleet", type=int, default=3)
    ap.add_argument("--full", action="store_true", help="11 vehicles; not time-bounded")
    ap.add_argument("-N", "--order", type=int, default=8)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args(argv)
    fleet = 11 if args.full else args.fleet
    res = run_example(4, args.order, out=args.out, certify=True, fleet=fleet)
    sol, rep = res["solution"], res["audit"]
    print(f"fleet {fleet}, N={args.order}: {sol.status}, objective {sol.objective:.3f}, "
          f"{res['summary']['seconds']:.1f}s")
    sep = [e for e in rep.entries if e.name.startswith("sep")]
    print(f"  min sampled separation margin {min(e.min_margin for e in sep):.3e} over {len(sep)} pairs")
    print(f"  audit {'passed' if rep.passed else 'failed'}")
    return 0 if sol.converged and rep.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
