"""BER/FER of several receivers over one grid, written as a single CSV.

All schemes share the master seed, so every scheme sees the same bits,
channels and noise at each grid point.

    python3 scripts/compare_schemes.py --sigma-u 1.5 --snr 4 6 8 --frames 200 --out fast.csv
    python3 scripts/compare_schemes.py --relays 1 3 5 --snr 8 --out multihop.csv
    python3 scripts/compare_schemes.py --cer 10 20 --schemes aca_fgd sm_lmmse --out cer.csv
"""

import argparse
import csv
import sys

from pncrelay.cli import CSV_COLUMNS, format_record
from pncrelay.receiver import ReceiverConfig
from pncrelay.sim import SimConfig, iter_sweep


def receiver_for(label, args):
    common = dict(outer_iterations=args.outer, decode_iterations=args.decode,
                  refinement_enabled=args.refinement)
    if label.startswith("fixed_d"):
        return ReceiverConfig(scheme="fixed_d", fixed_depth=int(label[7:] or 1), **common)
    return ReceiverConfig(scheme=label, eta=args.eta, **common)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--schemes", nargs="+", default=["aca_fgd", "sm_lmmse", "fixed_d1"])
    ap.add_argument("--snr", nargs="+", type=float, default=[0, 2, 4, 6, 8])
    ap.add_argument("--sigma-u", nargs="+", type=float, default=[0.1])
    ap.add_argument("--relays", nargs="+", type=int, default=[1])
    ap.add_argument("--cer", nargs="+", type=float, default=None, help="CER grid in dB (default: perfect CSI)")
    ap.add_argument("--outer", type=int, default=5)
    ap.add_argument("--decode", type=int, default=3)
    ap.add_argument("--eta", type=float, default=0.9)
    ap.add_argument("--refinement", action="store_true")
    ap.add_argument("--frames", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
    w.writeheader()
    for label in args.schemes:
        cfg = SimConfig(receiver=receiver_for(label, args), snr_grid_db=tuple(args.snr),
                        sigma_u_grid=tuple(args.sigma_u), relay_counts=tuple(args.relays),
                        cer_grid_db=tuple(args.cer) if args.cer else (None,),
                        frames_per_point=args.frames, master_seed=args.seed)
        for rec in iter_sweep(cfg, args.workers):
            w.writerow(format_record(rec))
            fh.flush()
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
