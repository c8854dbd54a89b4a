"""Order sweeps for the examples with a reference, written as convergence CSVs.

    python3 scripts/convergence_sweep.py --out results/
"""

from __future__ import annotations

import argparse
from pathlib import Path

from bernopt import problems
from bernopt.bench import converge, write_convergence_csv

SWEEPS = {
    "example1": (problems.example1, problems.example1_reference, range(5, 65, 5)),
    "example2": (problems.example2, problems.example2_reference, (10, 15, 30, 55)),
    "smooth": (lambda: problems.smooth_toy()[0], lambda: problems.smooth_toy()[1], (10, 20, 40, 80)),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--only", choices=sorted(SWEEPS), default=None)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, (make, ref, orders) in SWEEPS.items():
        if args.only and name != args.only:
            continue
        rows = converge(make(), list(orders), ref())
        path = args.out / f"converge_{name}.csv"
        write_convergence_csv(rows, path)
        print(f"{name}: " + ", ".join(f"N={r.N} e_y={r.e_y:.2f} e_u={r.e_u:.2f}" for r in rows))
        print(f"  -> {path}")


if __name__ == "__main__":
    main()
