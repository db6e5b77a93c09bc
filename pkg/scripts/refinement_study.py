"""Paired BER comparison of the receiver with and without belief refinement.

Frames use identical seeds for both runs, so the per-frame BER difference
gives a tight standard error.

    python3 scripts/refinement_study.py --snr -1 0 1 2 --relays 5 --frames 500
"""

import argparse
import math

import numpy as np

from pncrelay.receiver import ReceiverConfig
from pncrelay.sim import SimConfig, point_seed, run_multihop_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr", nargs="+", type=float, default=[-1, 0, 1, 2])
    ap.add_argument("--sigma-u", type=float, default=0.1)
    ap.add_argument("--relays", type=int, default=5)
    ap.add_argument("--decode", type=int, default=10)
    ap.add_argument("--frames", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfgs = {on: SimConfig(receiver=ReceiverConfig(decode_iterations=args.decode, refinement_enabled=on))
            for on in (False, True)}
    print("snr_db,ber_off,ber_on,diff,diff_se")
    for i, snr in enumerate(args.snr):
        ber = {on: np.empty(args.frames) for on in cfgs}
        for f in range(args.frames):
            for on, cfg in cfgs.items():
                rng = np.random.default_rng(point_seed(args.seed, (i,), f))
                ber[on][f] = run_multihop_trial(rng, cfg, args.relays, snr, args.sigma_u).mean()
        d = ber[True] - ber[False]
        se = d.std(ddof=1) / math.sqrt(d.size)
        print(f"{snr},{ber[False].mean():.4e},{ber[True].mean():.4e},{d.mean():.3e},{se:.1e}")


if __name__ == "__main__":
    main()
