#!/usr/bin/env python3
"""Final self-information of the echo protocols for several disorder seeds.

    python scripts/echo_study.py --J 0.2 --seeds 0 1 2 3 4
"""

import argparse

import numpy as np

from romcontrol import MBLParams, OptimizerConfig, mbl_layout, optimize, rom_from_layout
from romcontrol.control import echo_problem, flip_baseline, single_gate_echo_problem
from romcontrol.pipeline import self_information

PROTOCOLS = ("none", "one_flip", "single", "multistep")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=9)
    ap.add_argument("--N", type=int, default=61)
    ap.add_argument("--J", type=float, default=0.3)
    ap.add_argument("--window", type=int, nargs=2, default=[20, 41])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--eps", type=float, default=0.01)
    ap.add_argument("--iters", type=int, default=1000)
    args = ap.parse_args()

    k0, k1 = args.window
    k_mid = (k0 + k1) // 2
    cfg = OptimizerConfig(max_iters=args.iters)
    rows = []
    print("seed  " + "  ".join(f"{p:>9s}" for p in PROTOCOLS))
    for seed in args.seeds:
        rom = rom_from_layout(mbl_layout(MBLParams.from_seed(args.J, args.n, seed), args.N), args.eps)
        ctrl = {
            "none": None,
            "one_flip": flip_baseline(k_mid, args.N),
            "single": optimize(single_gate_echo_problem(rom, k_mid), cfg).controls,
            "multistep": optimize(echo_problem(rom, k0, k1), cfg).controls,
        }
        final = [self_information(rom, ctrl[p])[-1] for p in PROTOCOLS]
        rows.append(final)
        print(f"{seed:<4d}  " + "  ".join(f"{v:9.3f}" for v in final))
    print("mean  " + "  ".join(f"{v:9.3f}" for v in np.mean(rows, axis=0)))


if __name__ == "__main__":
    main()
