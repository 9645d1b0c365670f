"""Compactly supported test functions V and their lattice discretizations.

A :class:`TestFunction` is a small immutable record (kind, center, radius,
amplitude) so that it can be serialized into reports and passed to compiled
kernels as plain numbers.

Kinds
-----
``bump``
    ``a * exp(1 - 1/(1 - s^2))`` with ``s = |y - c| / r``; peak value ``a``.
``product-bump``
    ``a * prod_j exp(1 - 1/(1 - s_j^2))`` with ``s_j = |y_j - c_j| / r``.
``ball-indicator``
    ``a * 1{|y - c| < r}``.
``box-indicator``
    ``a * 1{max_j |y_j - c_j| <= r}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

KIND_CODES = {"bump": 0, "product-bump": 1, "ball-indicator": 2, "box-indicator": 3}


def _bump_profile(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported function on R^d.

    Parameters
    ----------
    kind : str
        One of ``bump``, ``product-bump``, ``ball-indicator``, ``box-indicator``.
    center : tuple of float
        Center point; its length fixes the dimension.
    radius : float
        Support radius (half side for the box and product kinds).
    amplitude : float
        Overall factor.
    """

    __test__ = False  # not a pytest class

    kind: str = "bump"
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    amplitude: float = 0.1
    _code: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "_code", KIND_CODES[self.kind])

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def is_radial(self) -> bool:
        return self.kind in ("bump", "ball-indicator")

    @property
    def support_radius(self) -> float:
        """Euclidean radius of a ball around ``center`` containing the support."""
        if self.kind in ("product-bump", "box-indicator"):
            return self.radius * math.sqrt(self.dimension)
        return self.radius

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        z = y - np.asarray(self.center)
        if self.kind == "bump":
            return self.amplitude * _bump_profile(np.linalg.norm(z, axis=-1) / self.radius)
        if self.kind == "product-bump":
            return self.amplitude * np.prod(_bump_profile(z / self.radius), axis=-1)
        if self.kind == "ball-indicator":
            return self.amplitude * (np.linalg.norm(z, axis=-1) < self.radius).astype(float)
        return self.amplitude * (np.max(np.abs(z), axis=-1) <= self.radius).astype(float)

    def radial(self, r) -> np.ndarray:
        """Profile as a function of the distance to the center (radial kinds only)."""
        if not self.is_radial:
            raise ValueError(f"{self.kind} is not radial")
        r = np.asarray(r, dtype=float)
        if self.kind == "bump":
            return self.amplitude * _bump_profile(r / self.radius)
        return self.amplitude * (r < self.radius).astype(float)

    def integral(self) -> float:
        """Exact integral over R^d (one-dimensional quadrature for bumps)."""
        d = self.dimension
        area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
        if self.kind == "bump":
            val, _ = integrate.quad(
                lambda s: math.exp(1.0 - 1.0 / (1.0 - s * s)) * s ** (d - 1), 0.0, 1.0,
                epsabs=1e-14, epsrel=1e-13)
            return self.amplitude * area * self.radius ** d * val
        if self.kind == "product-bump":
            val, _ = integrate.quad(lambda s: math.exp(1.0 - 1.0 / (1.0 - s * s)), -1.0, 1.0,
                                    epsabs=1e-14, epsrel=1e-13)
            return self.amplitude * (self.radius * val) ** d
        if self.kind == "ball-indicator":
            return self.amplitude * area / d * self.radius ** d
        return self.amplitude * (2.0 * self.radius) ** d

    def integral_of_square(self) -> float:
        sq = self.squared()
        return sq.integral()

    def squared(self) -> "TestFunction":
        """V**2 for bumps: the profile exponent doubles, handled by a helper kind."""
        if self.kind in ("ball-indicator", "box-indicator"):
            return TestFunction(self.kind, self.center, self.radius, self.amplitude ** 2)
        return _SquaredBump(self)

    def dilated(self, lam: float) -> "TestFunction":
        """The function y -> V(lam * y)."""
        return TestFunction(self.kind, tuple(c / lam for c in self.center),
                            self.radius / lam, self.amplitude)

    def moved(self, center) -> "TestFunction":
        return TestFunction(self.kind, tuple(center), self.radius, self.amplitude)

    def scaled(self, factor: float) -> "TestFunction":
        return TestFunction(self.kind, self.center, self.radius, self.amplitude * factor)

    def kernel_params(self) -> np.ndarray:
        """Flat float array ``[code, radius, amplitude, *center]`` for compiled kernels."""
        return np.array([self._code, self.radius, self.amplitude, *self.center], dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center),
                "radius": self.radius, "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, spec: dict, dimension: int = 3) -> "TestFunction":
        center = spec.get("center", [0.0] * dimension)
        if len(center) != dimension:
            raise ValueError("test function center has wrong dimension")
        return cls(spec.get("kind", "bump"), tuple(center),
                   float(spec.get("radius", 1.0)), float(spec.get("amplitude", 0.1)))


class _SquaredBump:
    """Square of a bump-type function, only used for integrals."""

    def __init__(self, base: TestFunction):
        self.base = base

    def __call__(self, y):
        return self.base(y) ** 2

    def integral(self) -> float:
        b = self.base
        d = b.dimension
        if b.kind == "bump":
            area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
            val, _ = integrate.quad(
                lambda s: math.exp(2.0 - 2.0 / (1.0 - s * s)) * s ** (d - 1), 0.0, 1.0,
                epsabs=1e-14, epsrel=1e-13)
            return b.amplitude ** 2 * area * b.radius ** d * val
        val, _ = integrate.quad(lambda s: math.exp(2.0 - 2.0 / (1.0 - s * s)), -1.0, 1.0,
                                epsabs=1e-14, epsrel=1e-13)
        return b.amplitude ** 2 * (b.radius * val) ** d


@dataclass(frozen=True)
class LatticeFunction:
    """Finitely supported function on the rescaled lattice L_N = Z^d / N.

    ``sites`` are integer points x; the function lives at y = x / N.
    """

    sites: np.ndarray
    values: np.ndarray
    N: int

    @property
    def dimension(self) -> int:
        return self.sites.shape[1]

    def __len__(self):
        return len(self.values)

    def abs(self) -> "LatticeFunction":
        return LatticeFunction(self.sites, np.abs(self.values), self.N)

    def scaled(self, factor: float) -> "LatticeFunction":
        return LatticeFunction(self.sites, factor * self.values, self.N)


def box_sites(lo, hi, d: int) -> np.ndarray:
    """All integer points of the box prod_j [lo_j, hi_j] in lexicographic order."""
    lo = np.broadcast_to(np.asarray(lo, dtype=np.int64), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.int64), (d,))
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def discretize(V: TestFunction, N: int, keep_zeros: bool = False) -> LatticeFunction:
    """Restrict V to L_N; by default only sites with V != 0 are kept."""
    d = V.dimension
    c = np.asarray(V.center)
    r = V.support_radius
    lo = np.ceil((c - r) * N - 1e-9).astype(np.int64)
    hi = np.floor((c + r) * N + 1e-9).astype(np.int64)
    sites = box_sites(lo, hi, d)
    vals = V(sites / N)
    if not keep_zeros:
        nz = vals != 0.0
        sites, vals = sites[nz], vals[nz]
    return LatticeFunction(sites, vals, int(N))
