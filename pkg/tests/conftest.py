from __future__ import annotations

import numpy as np
import pytest

from imhdc.hdvec import Hypervector


class NaiveVector:
    """One-uint8-per-component reference used as the oracle for packed ops."""

    def __init__(self, bits):
        self.bits = np.asarray(bits, dtype=np.uint8)

    def permute(self, k, mode):
        d = self.bits.size
        out = np.zeros_like(self.bits)
        for j in range(d):
            if mode == "circular":
                out[(j + k) % d] = self.bits[j]
            elif mode == "plain_right" and j + k < d:
                out[j + k] = self.bits[j]
            elif mode == "plain_left" and j - k >= 0:
                out[j - k] = self.bits[j]
        return NaiveVector(out)


def random_bits(rng: np.random.Generator, dim: int) -> np.ndarray:
    return rng.integers(0, 2, size=dim, dtype=np.uint8)


def padding_is_zero(v: Hypervector) -> bool:
    r = v.dim % 64
    if r == 0:
        return True
    return int(v.words[-1]) >> r == 0


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
