"""Dense reference constructions shared by the test modules (small n only)."""

import numpy as np

from romcontrol.envnet import decompose_gate
from romcontrol.tensorcore import kron


def _embed(gate, pos, k):
    return kron(np.eye(2**pos), gate, np.eye(2 ** (k - pos - 2)))


def dense_end_environment(layout, l):
    """Environment blocks B_i (over spins != l) and psi_E for an end target.

    For l = 0 the bond (0, 1) comes first in the sweep and the rest of the
    layer follows; for l = n-1 the bond (n-2, n-1) comes last.
    """
    n, layer = layout.n, layout.layer
    k = n - 1
    if l == 0:
        rest = np.eye(2**k)
        for b in range(1, n - 1):
            rest = _embed(layer[b], b - 1, k) @ rest
        dec = decompose_gate(layer[0], 2, 2, system_first=True)
        B = np.stack([rest @ np.kron(b, np.eye(2 ** (k - 1))) for b in dec.B])
        spins = range(1, n)
    elif l == n - 1:
        rest = np.eye(2**k)
        for b in range(0, n - 2):
            rest = _embed(layer[b], b, k) @ rest
        dec = decompose_gate(layer[n - 2], 2, 2, system_first=False)
        B = np.stack([np.kron(np.eye(2 ** (k - 1)), b) @ rest for b in dec.B])
        spins = range(0, n - 1)
    else:
        raise ValueError("end targets only")
    psi_E = kron(*[layout.initial[s][:, None] for s in spins])[:, 0]
    return dec, B, psi_E
