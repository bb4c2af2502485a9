"""Counter-based random draws keyed by (stream key, element index, slot).

Every draw is a pure function of its key, so results do not depend on the
order in which elements are processed or on how work is split across workers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SLOT = np.uint64(0xD1B54A32D192ED03)


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(*parts) -> int:
    """Stable 64-bit key from arbitrary printable parts."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p.value if hasattr(p, "value") else p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    key: int

    @classmethod
    def from_parts(cls, *parts) -> "RngStream":
        return cls(derive_key(*parts))

    def child(self, *tags) -> "RngStream":
        return RngStream(derive_key(self.key, *tags))

    def bits(self, index, slot: int) -> np.ndarray:
        idx = np.asarray(index, dtype=np.uint64)
        with np.errstate(over="ignore"):
            h = _mix64(np.uint64(self.key) ^ ((idx + np.uint64(1)) * _GOLDEN))
            h = _mix64(h ^ (np.uint64(slot + 1) * _SLOT))
        return h

    def uniform(self, index, slot: int, low=0.0, high=1.0) -> np.ndarray:
        """Uniform draws in [low, high)."""
        u = (self.bits(index, slot) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return low + (high - low) * u

    def normal(self, index, slot: int) -> np.ndarray:
        """Standard normal draws (Box-Muller over slots ``slot`` and ``slot + 1``)."""
        u1 = 1.0 - self.uniform(index, slot)
        u2 = self.uniform(index, slot + 1)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def integers(self, index, slot: int, low: int, high: int) -> np.ndarray:
        """Integers in [low, high]."""
        return low + np.floor(self.uniform(index, slot) * (high - low + 1)).astype(np.int64)

    def scalar(self, slot: int, index: int = 0, low=0.0, high=1.0) -> float:
        return float(self.uniform(np.array([index]), slot, low, high)[0])
