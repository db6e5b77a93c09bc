"""Per-frame detector wall time against a uniform ICI depth.

    python3 scripts/complexity.py --depths 0 1 2 3
"""

import argparse
import time

import numpy as np

from pncrelay.channel import band_truncate
from pncrelay.detection import AcaFgdDetector, sm_lmmse_detect, uniform_prior
from pncrelay.sim import SimConfig, draw_hop


def best_of(fn, reps):
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depths", nargs="+", type=int, default=[0, 1, 2, 3])
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()
    cfg = SimConfig()
    h = draw_hop(np.random.default_rng(0), cfg, 8.0, 0.5)
    N = cfg.ofdm.num_subcarriers
    prior = uniform_prior(N)
    print("depth,aca_fgd_s,sm_lmmse_s")
    for D in args.depths:
        prof = np.full(N, D)
        aca = best_of(lambda: AcaFgdDetector(h.frame, h.est_A, h.est_B, depths=prof,
                                             max_depth=None).detect(prior), args.reps)
        HA, HB = band_truncate(h.est_A, prof), band_truncate(h.est_B, prof)
        lm = best_of(lambda: sm_lmmse_detect(h.frame, HA, HB, prior), args.reps)
        print(f"{D},{aca:.4f},{lm:.4f}")


if __name__ == "__main__":
    main()
