"""Exact Poisson sampling inside compiled kernels (numpy Generator streams)."""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def poisson_draw(rng, lam):
    """Poisson(lam) drawn from ``rng``.

    Inversion for lam < 30, Hormann's PTRS transformed rejection above.
    """
    if lam <= 0.0:
        return 0
    if lam < 30.0:
        u = rng.random()
        k = 0
        p = math.exp(-lam)
        cdf = p
        while u > cdf:
            k += 1
            p *= lam / k
            cdf += p
            if p == 0.0 and cdf < u:
                break
        return k
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return int(k)


@njit(cache=True, nogil=True)
def poisson_batch(rng, n, lam):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = poisson_draw(rng, lam)
    return out
