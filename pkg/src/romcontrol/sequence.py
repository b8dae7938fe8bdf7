from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .tensorcore import unitarity_defect

UNITARY_TOL = 1e-9


@dataclass
class ControlSequence:
    """Unitary control gates applied to the target spin at times k_start..k_stop-1.

    The gate for time k acts on the state at time k, right before the
    circuit step that takes it to time k+1.
    """

    gates: np.ndarray  # (k_stop - k_start, d, d)
    k_start: int
    k_stop: int

    def __post_init__(self):
        self.gates = np.asarray(self.gates, dtype=np.complex128)
        if self.gates.ndim != 3:
            if self.gates.size == 0:
                self.gates = np.zeros((0, 2, 2), dtype=np.complex128)
            else:
                raise InvalidInputError("gates must be a stack of square matrices")
        if self.k_stop < self.k_start or self.k_start < 0:
            raise InvalidInputError(f"bad control window [{self.k_start}, {self.k_stop})")
        if self.gates.shape[0] != self.k_stop - self.k_start:
            raise InvalidInputError("number of gates does not match the window length")

    @property
    def window(self) -> tuple[int, int]:
        return self.k_start, self.k_stop

    def __len__(self) -> int:
        return self.k_stop - self.k_start

    def gate_at(self, k: int):
        if self.k_start <= k < self.k_stop:
            return self.gates[k - self.k_start]
        return None

    def max_unitarity_defect(self) -> float:
        return max((unitarity_defect(g) for g in self.gates), default=0.0)

    def validate(self, N: int | None = None, d: int = 2) -> None:
        if self.gates.shape[1:] != (d, d) and len(self):
            raise InvalidInputError(f"control gates must be {d}x{d}")
        if self.max_unitarity_defect() > UNITARY_TOL:
            raise InvalidInputError("control gates are not unitary")
        if N is not None and self.k_stop > N:
            raise InvalidInputError(f"control window [{self.k_start}, {self.k_stop}) exceeds [0, {N})")

    @classmethod
    def identity(cls, k_start: int, k_stop: int, d: int = 2) -> "ControlSequence":
        g = np.broadcast_to(np.eye(d, dtype=np.complex128), (k_stop - k_start, d, d)).copy()
        return cls(g, k_start, k_stop)

    @classmethod
    def single(cls, k: int, gate) -> "ControlSequence":
        return cls(np.asarray(gate, dtype=np.complex128)[None], k, k + 1)

    @classmethod
    def random(cls, k_start: int, k_stop: int, seed: int, d: int = 2) -> "ControlSequence":
        return cls(random_unitaries(k_stop - k_start, d, np.random.default_rng(seed)), k_start, k_stop)

    @classmethod
    def merge(cls, *seqs: "ControlSequence") -> "ControlSequence":
        """Concatenate sequences with disjoint windows into one (gaps padded by identities)."""
        seqs = [s for s in seqs if len(s)]
        if not seqs:
            return cls.identity(0, 0)
        lo = min(s.k_start for s in seqs)
        hi = max(s.k_stop for s in seqs)
        out = cls.identity(lo, hi, seqs[0].gates.shape[1])
        seen = np.zeros(hi - lo, dtype=bool)
        for s in seqs:
            sl = slice(s.k_start - lo, s.k_stop - lo)
            if seen[sl].any():
                raise InvalidInputError("overlapping control windows")
            seen[sl] = True
            out.gates[sl] = s.gates
        return out


def random_unitaries(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitaries via QR of complex Ginibre matrices."""
    z = (rng.standard_normal((count, d, d)) + 1j * rng.standard_normal((count, d, d))) / np.sqrt(2)
    out = np.empty_like(z)
    for i in range(count):
        q, r = np.linalg.qr(z[i])
        ph = np.diag(r) / np.abs(np.diag(r))
        out[i] = q * ph[None, :]
    return out
