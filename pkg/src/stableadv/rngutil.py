"""Seeding and sampling helpers shared by the generators and the harness.

Gaussian draws go through the inverse normal CDF applied to uniforms from
a PCG64 stream, so a seed pins the exact sample values independently of
NumPy's internal normal algorithm. Child seeds derive from a SHA-256 hash
of the master seed and a label path, giving reproducible yet decorrelated
streams per (method, grid cell, repeat).
"""
from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_U53 = float(2**53)


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit child seed from a master seed and a label path."""
    key = "\x1f".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def open_unit(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniforms on the open interval (0, 1)."""
    return (np.asarray(rng.integers(1, 2**53, size=size), dtype=np.float64)) / _U53


def normal(rng: np.random.Generator, loc=0.0, scale=1.0, size=None) -> np.ndarray:
    """Gaussian draws via the inverse-CDF transform."""
    return loc + scale * ndtri(open_unit(rng, size))


def categorical(rng: np.random.Generator, probs: np.ndarray, size: int) -> np.ndarray:
    """Inverse-CDF categorical draws for a probability vector."""
    edges = np.cumsum(probs)
    edges[-1] = 1.0  # guard the top edge against rounding
    return np.searchsorted(edges, open_unit(rng, size), side="left")
