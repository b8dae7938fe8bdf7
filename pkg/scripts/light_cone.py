#!/usr/bin/env python3
"""Print the effective dimension d_eff(k) next to the light-cone bound."""

import argparse

from romcontrol import XYZParams, rom_from_layout, xyz_layout
from romcontrol.exactsim import MAX_SPINS, causal_cone_dim, light_cone_dim


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=11)
    ap.add_argument("--N", type=int, default=30)
    ap.add_argument("--target", type=int, default=0)
    ap.add_argument("--eps", type=float, default=0.01)
    ap.add_argument("--r-max", type=int, default=512)
    args = ap.parse_args()

    lay = xyz_layout(XYZParams(), args.n, args.N, args.target)
    rom = rom_from_layout(lay, args.eps, args.r_max)
    if args.n + 1 <= MAX_SPINS:
        bound = light_cone_dim(lay)
    else:
        bound = causal_cone_dim(args.n, args.target, args.N)
    print("k    d_eff     bound")
    for k, (d, b) in enumerate(zip(rom.dims, bound)):
        print(f"{k:<4d} {d:<9d} {b}")
    if rom.meta.get("saturated"):
        print(f"rank cap reached; realized errors {rom.meta['realized_errors']}")


if __name__ == "__main__":
    main()
