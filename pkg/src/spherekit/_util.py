"""Shared small helpers: deterministic RNG splitting and dyadic ladders."""
from __future__ import annotations

import zlib

import numpy as np


def split_rng(seed: int, *keys) -> np.random.Generator:
    """Return a generator derived from `seed` and a tuple of split keys.

    Strings are hashed with crc32 so that call sites can label their streams;
    integers pass through.  The same (seed, keys) always yields the same
    stream, independently of any other stream drawn elsewhere.
    """
    ints = []
    for k in keys:
        if isinstance(k, str):
            ints.append(zlib.crc32(k.encode("utf8")))
        else:
            ints.append(int(k) & 0xFFFFFFFF)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(ints))
    return np.random.Generator(np.random.PCG64(ss))


def dyadic_ladder(lo: float, hi: float, factor: float = 2.0) -> np.ndarray:
    """Geometric ladder lo, lo*factor, ... capped at hi (hi always included)."""
    if not (lo > 0 and hi >= lo and factor > 1):
        raise ValueError("need 0 < lo <= hi and factor > 1")
    vals = [float(lo)]
    while vals[-1] * factor <= hi * (1 + 1e-12):
        vals.append(vals[-1] * factor)
    if vals[-1] < hi * (1 - 1e-12):
        vals.append(float(hi))
    return np.asarray(vals)
