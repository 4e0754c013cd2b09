"""Counter-based random number generation for order-independent sampling.

Every random draw in the toolkit is a pure function of

    (master_seed, stream, subid, id, draw_index)

computed with Philox4x64-10, the same keyed block cipher exposed by
``numpy.random.Philox`` (the test suite checks word-for-word agreement).
Because there is no sequential generator state, work can be sharded over
ids in any order, by any number of workers, and the bytes that come out
are identical.

Layout: key = (master_seed, stream); counter = (draw_index, subid, 0, id).
Streams partition the seed's randomness between independent consumers
(train split, test split, group-task sampling); subid is a free tag for
nested structure within a stream.

The implementation is vectorized over ids with numpy uint64 arithmetic,
which wraps modulo 2^64 exactly as the cipher requires.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "RNG_ALGORITHM",
    "STREAM_TRAIN",
    "STREAM_TEST",
    "STREAM_GROUP",
    "philox4x64",
    "blocks",
    "words",
    "bounded_words",
]

RNG_ALGORITHM = "philox4x64-10"

STREAM_TRAIN = 0
STREAM_TEST = 1
STREAM_GROUP = 2

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)

_LO32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)


def _mulhi64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """High 64 bits of the 128-bit product, via 32-bit limbs."""
    a_lo = a & _LO32
    a_hi = a >> _SH32
    b_lo = b & _LO32
    b_hi = b >> _SH32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    cross = (lo_lo >> _SH32) + (hi_lo & _LO32) + lo_hi
    return a_hi * b_hi + (hi_lo >> _SH32) + (cross >> _SH32)


def philox4x64(counters: np.ndarray, key: tuple[int, int], rounds: int = 10) -> np.ndarray:
    """Apply the Philox4x64 block function to each row of `counters`.

    counters: (n, 4) uint64. Returns (n, 4) uint64 of output words in the
    same order numpy's Philox bit generator emits them.
    """
    counters = np.ascontiguousarray(counters, dtype=np.uint64)
    if counters.ndim != 2 or counters.shape[1] != 4:
        raise ValueError(f"counters must have shape (n, 4), got {counters.shape}")
    c0 = counters[:, 0].copy()
    c1 = counters[:, 1].copy()
    c2 = counters[:, 2].copy()
    c3 = counters[:, 3].copy()
    k0 = np.uint64(key[0] & 0xFFFFFFFFFFFFFFFF)
    k1 = np.uint64(key[1] & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        for _ in range(rounds):
            hi0 = _mulhi64(_M0, c0)
            lo0 = _M0 * c0
            hi1 = _mulhi64(_M1, c2)
            lo1 = _M1 * c2
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return np.stack([c0, c1, c2, c3], axis=1)


def blocks(
    master_seed: int,
    stream: int,
    ids: np.ndarray,
    draw: int | np.ndarray = 0,
    subid: int = 0,
) -> np.ndarray:
    """One 4-word block per id: (n, 4) uint64, pure in all arguments."""
    ids = np.ascontiguousarray(ids, dtype=np.uint64)
    n = ids.shape[0]
    counters = np.empty((n, 4), dtype=np.uint64)
    counters[:, 0] = np.asarray(draw, dtype=np.uint64)
    counters[:, 1] = np.uint64(subid)
    counters[:, 2] = 0
    counters[:, 3] = ids
    return philox4x64(counters, (master_seed, stream))


def words(
    master_seed: int,
    stream: int,
    ids: np.ndarray,
    n_words: int,
    subid: int = 0,
) -> np.ndarray:
    """(n, n_words) uint64 per id, from consecutive draw indices."""
    n_blocks = -(-n_words // 4)
    parts = [
        blocks(master_seed, stream, ids, draw=d, subid=subid) for d in range(n_blocks)
    ]
    return np.concatenate(parts, axis=1)[:, :n_words]


# Draw indices at and above this point are reserved for rejection redraws in
# bounded_words; primary draws stay well below it.
_REDRAW_BASE = 1 << 32


def bounded_words(
    master_seed: int,
    stream: int,
    ids: np.ndarray,
    n_values: int,
    bound: int,
    subid: int = 0,
    _limit: int | None = None,
) -> np.ndarray:
    """(n, n_values) integers uniform on [0, bound), exactly unbiased.

    Words >= the largest multiple of `bound` below 2^64 are rejected and
    redrawn from a reserved draw-index range (astronomically rare for small
    bounds; `_limit` exists so tests can force the redraw path).
    """
    if bound < 1:
        raise ValueError(f"bound must be >= 1, got {bound}")
    limit = (2**64 // bound) * bound if _limit is None else _limit
    if limit < bound or limit % bound != 0:
        raise ValueError("rejection limit must be a positive multiple of bound")
    limit_u = np.uint64(limit) if limit < 2**64 else None

    out = words(master_seed, stream, ids, n_values, subid=subid)
    if limit_u is not None:
        ids = np.ascontiguousarray(ids, dtype=np.uint64)
        n_blocks = -(-n_values // 4)
        rej_round = 0
        rejected = out >= limit_u
        while rejected.any():
            rows, cols = np.nonzero(rejected)
            draw = _REDRAW_BASE + rej_round * n_blocks + (cols // 4)
            counters = np.empty((rows.shape[0], 4), dtype=np.uint64)
            counters[:, 0] = draw.astype(np.uint64)
            counters[:, 1] = np.uint64(subid)
            counters[:, 2] = 0
            counters[:, 3] = ids[rows]
            fresh = philox4x64(counters, (master_seed, stream))
            out[rows, cols] = fresh[np.arange(rows.shape[0]), cols % 4]
            rejected = out >= limit_u
            rej_round += 1
            if rej_round > 128:
                raise RuntimeError("bounded_words rejection loop failed to terminate")
    return (out % np.uint64(bound)).astype(np.int64)
