#!/usr/bin/env python3
"""Compare reduced-model and exact single-spin trajectories for a range of eps.

    python scripts/validate_rom.py --n 9 --N 40 --eps 1e-2 1e-3 1e-4
"""

import argparse
import time

import numpy as np

from romcontrol import ControlSequence, XYZParams, rom_from_layout, xyz_layout
from romcontrol.exactsim import site_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=9)
    ap.add_argument("--N", type=int, default=40)
    ap.add_argument("--target", type=int, default=0)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    ap.add_argument("--seed", type=int, default=0, help="seed of the random control sequence")
    args = ap.parse_args()

    lay = xyz_layout(XYZParams(), args.n, args.N, args.target)
    ctrl = ControlSequence.random(0, args.N, args.seed)
    exact = {c: site_trajectory(lay, ctrl if c else None).bloch for c in (False, True)}
    print("eps       build_s  d_eff(N)  dev_none   dev_random")
    for eps in args.eps:
        t0 = time.perf_counter()
        rom = rom_from_layout(lay, eps)
        dt = time.perf_counter() - t0
        dev = [np.abs(rom.propagate(ctrl if c else None).bloch - exact[c]).max() for c in (False, True)]
        print(f"{eps:<9.0e} {dt:7.2f}  {rom.dims[-1]:8d}  {dev[0]:.2e}   {dev[1]:.2e}")


if __name__ == "__main__":
    main()
