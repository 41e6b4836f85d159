"""Seed derivation and counter-based random streams.

Every random decision in a campaign is drawn from a stream keyed by a
derived 64-bit seed. Child seeds are a hash of the parent seed and a tuple
of integer/string keys, so the value a run sees never depends on which
worker executed it or in what order.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(parent: int, *keys: object) -> int:
    """Hash ``parent`` and ``keys`` into a new unsigned 64-bit seed."""
    payload = repr((int(parent) & MASK64,) + tuple(_canonical(k) for k in keys))
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _canonical(key: object) -> object:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key)
    if isinstance(key, (float, np.floating)):
        f = float(key)
        return int(f) if f.is_integer() else f
    return str(key)


def stream(seed: int) -> np.random.Generator:
    """Philox (counter-based) generator keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


def mix64(z: int) -> int:
    """splitmix64 finaliser on Python ints; matches the in-kernel version."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix_value(key: int, counter: int) -> int:
    """Value ``counter`` of the splitmix64 stream keyed by ``key``."""
    return mix64((key + (counter + 1) * 0x9E3779B97F4A7C15) & MASK64)


def standard_normals(gen: np.random.Generator, size: int) -> np.ndarray:
    """Box-Muller transform of the generator's uniform draws.

    Consumes ``2 * ceil(size / 2)`` uniforms; pairs produce (cos, sin) variates.
    """
    half = (size + 1) // 2
    u = gen.random(2 * half)
    u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * half)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:size]
