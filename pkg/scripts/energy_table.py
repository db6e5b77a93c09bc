"""Print the uniform-depth energy-contribution table next to reference values.

    python3 scripts/energy_table.py --realizations 5000 --seed 0
"""

import argparse

import numpy as np

from pncrelay.sim import energy_contribution_table

SIGMAS = (0.1, 0.5, 1.0, 1.5)
DEPTHS = (0, 1, 2)
# reference percentages for the default channel statistics
REFERENCE = {(0.1, 0): 98.40, (0.1, 1): 99.42, (1.5, 1): 77.53, (1.5, 2): 95.18}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--realizations", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--subtract-overlap", action="store_true",
                    help="count the diagonal once in the energy ratio")
    args = ap.parse_args()
    t = energy_contribution_table(SIGMAS, DEPTHS, args.realizations, np.random.default_rng(args.seed),
                                  subtract_overlap=args.subtract_overlap)
    print("sigma_u  " + "  ".join(f"D={d:<14d}" for d in DEPTHS))
    for i, s in enumerate(SIGMAS):
        cells = []
        for j, d in enumerate(DEPTHS):
            ref = REFERENCE.get((s, d))
            cells.append(f"{t[i, j]:6.2f}" + (f" (ref {ref:5.2f})" if ref else " " * 11))
        print(f"{s:<7}  " + "  ".join(cells))


if __name__ == "__main__":
    main()
