"""Counter-based random streams keyed by (seed, tags, group element).

Every draw is a pure function of its key, so a color at ``g`` does not depend
on which window is being sampled, and disjoint keys give independent values.
The mixer is the splitmix64 finalizer applied as a fold over key words.
"""
from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)


def mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = z + _GAMMA
        z = (z ^ (z >> _S30)) * _C1
        z = (z ^ (z >> _S27)) * _C2
        return z ^ (z >> _S31)


def _u64(v) -> np.uint64:
    return np.uint64(int(v) & _M64)


def fold(seed, tags=(), cols: np.ndarray | None = None, mask: np.ndarray | None = None,
         n: int | None = None) -> np.ndarray:
    """Hash ``(seed, *tags, row of cols)`` for every row of ``cols``.

    Masked-out entries leave the running hash untouched.
    """
    if cols is None:
        cols = np.zeros((n or 1, 0), dtype=np.int64)
    rows = cols.shape[0]
    h = np.full(rows, _u64(seed), dtype=np.uint64)
    h = mix(h)
    for t in tags:
        h = mix(h ^ _u64(t))
    c = cols.astype(np.int64).view(np.uint64)
    for j in range(c.shape[1]):
        nxt = mix(h ^ c[:, j])
        h = nxt if mask is None else np.where(mask[:, j], nxt, h)
    return mix(h)


def uniform53(h: np.ndarray) -> np.ndarray:
    """Uniform doubles in [0, 1) on the 2^-53 grid."""
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def dyadic(h: np.ndarray, depth: int = 30) -> np.ndarray:
    """Uniform dyadic rationals ``k / 2^depth``."""
    return (h >> np.uint64(64 - depth)).astype(np.float64) / float(1 << depth)


def element_hashes(group, elements, seed, tags=()) -> np.ndarray:
    cols, mask = group.key_columns(elements)
    return fold(seed, tags, cols, mask)


def derive_seed(seed, *tags) -> int:
    """A child seed, for splitting one master seed into named sub-streams."""
    return int(fold(seed, tags, n=1)[0])
