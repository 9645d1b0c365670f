"""Deterministic reference values for the Monte Carlo checks.

All functions are pure: the same arguments give bit-identical results.

Normalizations (d = dimension, L_N = Z^d / N, <f, h>_{L_N} = N^-d sum f h):

* lattice Laplace exponent of <L^N, V> with level u:
  (u/d) N^{d-2} <V, (I - G_N V)^{-1} 1>_{L_N};
* continuum Laplace exponent of <L_alpha, V>: alpha <V, (I - G V)^{-1} 1>;
* cumulants of <L_alpha, V>: kappa_n = n! alpha <V, (G V)^{n-1} 1>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import fft as sfft
from scipy import integrate
from scipy.sparse.linalg import LinearOperator, gmres

from .fields import MollifierSpec, grid_points
from .potential import (DomainError, GreenTable, continuum_constant, green_continuum,
                        green_operator_norm, solve_resolvent_lattice)
from .testfunctions import LatticeFunction, TestFunction, discretize

NEUMANN_TERMS = 30


@dataclass(frozen=True)
class LaplaceExponentResult:
    """Exponent of a Laplace functional together with its validity data.

    ``value`` is ``None`` when the operator-norm condition fails.
    """

    value: float | None
    domain_ok: bool
    residual: float
    series_tail_bound: float
    norm: float
    method: str = ""
    details: dict = field(default_factory=dict)

    def mgf(self) -> float:
        if not self.domain_ok:
            raise DomainError(f"outside Laplace domain (norm {self.norm:.4g})")
        return math.exp(self.value)

    def to_dict(self) -> dict:
        return {"value": self.value, "domain_ok": self.domain_ok, "residual": self.residual,
                "series_tail_bound": self.series_tail_bound, "norm": self.norm,
                "method": self.method, **self.details}


def _as_lattice(V, N: int) -> LatticeFunction:
    if isinstance(V, LatticeFunction):
        if V.N != N:
            raise ValueError("lattice function has a different N")
        return V
    return discretize(V, N)


# ---------------------------------------------------------------------------
# lattice Laplace functional

def lattice_laplace_exponent(V, N: int, u: float, table: GreenTable, z: float = 1.0) -> LaplaceExponentResult:
    """log E exp{z <L^N, V>} at level u (with L^N = sum_x L_{x,u} delta_{x/N} / (d N^2))."""
    d = table.dimension
    lf = _as_lattice(V, N).scaled(z)
    norm = green_operator_norm(lf, table) if len(lf) else 0.0
    mass = float(np.sum(np.abs(lf.values))) / N ** d
    pref = u / d * N ** (d - 2)
    tail = pref * mass * norm ** NEUMANN_TERMS / (1.0 - norm) if norm < 1 else math.inf
    if norm >= 1.0:
        return LaplaceExponentResult(None, False, math.nan, tail, norm, "dense-resolvent")
    if len(lf) == 0:
        return LaplaceExponentResult(0.0, True, 0.0, 0.0, 0.0, "dense-resolvent")
    sol = solve_resolvent_lattice(lf, table)
    val = pref * math.fsum(lf.values * sol.values) / N ** d
    return LaplaceExponentResult(val, True, sol.residual, tail, norm, "dense-resolvent",
                                 {"N": N, "u": u, "z": z, "sites": len(lf)})


def _lattice_operator(lf: LatticeFunction, table: GreenTable) -> np.ndarray:
    d, N = table.dimension, lf.N
    return table.matrix(lf.sites) * (lf.values[None, :] / (d * N * N))


def lattice_series_coefficients(V, N: int, table: GreenTable, nmax: int) -> np.ndarray:
    """c_n = <V, (G_N V)^{n-1} 1>_{L_N} for n = 1..nmax."""
    lf = _as_lattice(V, N)
    d = table.dimension
    if len(lf) == 0:
        return np.zeros(nmax)
    M = _lattice_operator(lf, table)
    h = np.ones(len(lf))
    out = []
    for _ in range(nmax):
        out.append(math.fsum(lf.values * h) / N ** d)
        h = M @ h
    return np.array(out)


def neumann_laplace_exponent(V, N: int, u: float, table: GreenTable, z: float = 1.0,
                             terms: int = NEUMANN_TERMS) -> float:
    """Truncated series (u/d) N^{d-2} sum_{n<=terms} z^n c_n."""
    d = table.dimension
    c = lattice_series_coefficients(V, N, table, terms)
    return u / d * N ** (d - 2) * math.fsum(z ** (n + 1) * c[n] for n in range(terms))


def high_intensity_cumulants(V, N: int, u_N: float, table: GreenTable, orders=(1, 2, 3)) -> dict:
    """Exact cumulants of the centered, scaled <hat L^N, V>.

    kappa_1 = 0 and kappa_n = n! (u_N/d) N^{d-2} a_N^{-n} c_n for n >= 2 with
    a_N = ((2/d) N^{d-2} u_N)^{1/2}.
    """
    d = table.dimension
    a = math.sqrt(2.0 / d * N ** (d - 2) * u_N)
    c = lattice_series_coefficients(V, N, table, max(orders))
    out = {}
    for n in orders:
        out[n] = 0.0 if n == 1 else math.factorial(n) * u_N / d * N ** (d - 2) * c[n - 1] / a ** n
    return out


def lattice_variance(V, N: int, table: GreenTable) -> float:
    """<V, G_N V>_{L_N}: variance of <Phi^N, V> and of the high-intensity limit at level N."""
    return float(lattice_series_coefficients(V, N, table, 2)[1])


# ---------------------------------------------------------------------------
# continuum Laplace functional (Nystrom)

def self_cell_integral(h: float, d: int = 3) -> float:
    """Integral of G over a ball with the volume of a grid cell h^d."""
    omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    a = (h ** d / omega) ** (1.0 / d)
    area = d * omega
    return continuum_constant(d) * area * a * a / 2.0


@dataclass
class _NystromGrid:
    V: TestFunction
    h: float
    points: np.ndarray
    values: np.ndarray
    shape: tuple
    mask: np.ndarray
    kernel_hat: np.ndarray

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(G_h V f) at the grid points of the support (f given on the support)."""
        full = np.zeros(self.shape)
        full[self.mask] = self.values * f
        pad = tuple(2 * s for s in self.shape)
        conv = sfft.irfftn(sfft.rfftn(full, pad) * self.kernel_hat, pad)
        sl = tuple(slice(s - 1, 2 * s - 1) for s in self.shape)
        return conv[sl][self.mask]

    def potential_abs(self) -> np.ndarray:
        full = np.zeros(self.shape)
        full[self.mask] = np.abs(self.values)
        pad = tuple(2 * s for s in self.shape)
        conv = sfft.irfftn(sfft.rfftn(full, pad) * self.kernel_hat, pad)
        sl = tuple(slice(s - 1, 2 * s - 1) for s in self.shape)
        return conv[sl]


def _nystrom_grid(V: TestFunction, h: float) -> _NystromGrid:
    d = V.dimension
    c = np.asarray(V.center, dtype=float)
    r = V.support_radius
    lo = np.floor((c - r) / h).astype(int)
    hi = np.ceil((c + r) / h).astype(int)
    axes = [np.arange(a, b + 1) * h for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vals = V(pts)
    shape = tuple(len(a) for a in axes)
    mask = (vals != 0).reshape(shape)
    # kernel on offsets -(s-1)..(s-1), laid out for a linear convolution
    offs = [np.arange(-(s - 1), s) * h for s in shape]
    kmesh = np.meshgrid(*offs, indexing="ij")
    kpts = np.stack([m.ravel() for m in kmesh], axis=1)
    with np.errstate(divide="ignore"):
        ker = green_continuum(kpts, d) * h ** d
    ker[~np.isfinite(ker)] = self_cell_integral(h, d)
    ker = ker.reshape(tuple(2 * s - 1 for s in shape))
    pad = tuple(2 * s for s in shape)
    return _NystromGrid(V, h, pts[mask.ravel()], vals[mask.ravel()], shape, mask,
                        sfft.rfftn(ker, pad))


def _nystrom_value(V: TestFunction, alpha: float, h: float, z: float, tol: float):
    grid = _nystrom_grid(V.scaled(z), h)
    norm = float(np.max(grid.potential_abs()))
    n = len(grid.values)
    if norm >= 1.0:
        return None, norm, math.nan, n
    A = LinearOperator((n, n), matvec=lambda f: f - grid.apply(f), dtype=float)
    b = np.ones(n)
    sol, info = gmres(A, b, rtol=tol, atol=0.0, restart=60, maxiter=200)
    res = float(np.max(np.abs(A @ sol - b)))
    if info != 0:
        raise RuntimeError("Nystrom GMRES did not converge")
    val = alpha * math.fsum(grid.values * sol) * h ** V.dimension
    return val, norm, res, n


def continuum_laplace_exponent(V: TestFunction, alpha: float, grid_spacing: float, z: float = 1.0,
                               *, solver_tol: float = 1e-12, refine_tol: float = 5e-3) -> LaplaceExponentResult:
    """alpha <zV, (I - G zV)^{-1} 1> by Nystrom at spacings h and h/2.

    The off-diagonal kernel is G(y - y') h^d and the self cell uses the
    integral of G over the ball of volume h^d. The value at h/2 is returned;
    ``details['refinement_change']`` is |value(h) - value(h/2)| and is the
    discretization allowance. A relative change above ``refine_tol`` raises.
    """
    coarse, norm_c, _, _ = _nystrom_value(V, alpha, grid_spacing, z, solver_tol)
    fine, norm, res, n = _nystrom_value(V, alpha, grid_spacing / 2, z, solver_tol)
    if coarse is None or fine is None:
        return LaplaceExponentResult(None, False, math.nan, math.inf, max(norm, norm_c), "nystrom")
    change = abs(fine - coarse)
    if change > refine_tol * max(abs(fine), 1e-300):
        raise RuntimeError(f"Nystrom refinement changed the value by {change / abs(fine):.2%}; "
                           "use a smaller grid spacing")
    grid = _nystrom_grid(V, grid_spacing / 2)
    mass = alpha * abs(z) * float(np.sum(np.abs(grid.values))) * (grid_spacing / 2) ** V.dimension
    tail = mass * norm ** NEUMANN_TERMS / (1 - norm)
    return LaplaceExponentResult(fine, True, res, tail, norm, "nystrom",
                                 {"spacing": grid_spacing / 2, "coarse_value": coarse,
                                  "refinement_change": change, "points": n})


# ---------------------------------------------------------------------------
# radial (d = 3) quadrature oracles

_GLX, _GLW = leggauss(32)


def _radial_nodes(R: float, panels: int = 64):
    edges = np.linspace(0.0, R, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + half * _GLX).ravel(), (half * _GLW).ravel()


def _check_radial(V: TestFunction):
    if not V.is_radial or V.dimension != 3 or any(c != 0 for c in V.center):
        raise ValueError("radial oracles need a centered radial test function in d = 3")


def radial_potential(V: TestFunction, r) -> np.ndarray:
    """(G V)(r) = 2 int V(s) s^2 / max(r, s) ds for centered radial V in d = 3."""
    _check_radial(V)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    R = V.support_radius
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        a = min(ri, R)
        inner = 0.0
        if a > 0:
            s, w = _radial_nodes(a, 16)
            inner = np.sum(w * V.radial(s) * s * s) / ri
        outer = 0.0
        if ri < R:
            s, w = _radial_nodes(R - ri, 16)
            s = s + ri
            outer = np.sum(w * V.radial(s) * s)
        out[i] = 2.0 * (inner + outer)
    return out


def radial_series_coefficients(V: TestFunction, nmax: int = 3, panels: int = 64) -> np.ndarray:
    """<V, (G V)^{n-1} 1> for n = 1..nmax by iterated radial quadrature."""
    _check_radial(V)
    R = V.support_radius
    s, w = _radial_nodes(R, panels)
    v = V.radial(s)
    # potential of a radial density q at the nodes via cumulative sums
    def potential(q):
        vals = np.empty_like(s)
        for i, ri in enumerate(s):
            t, tw = _radial_nodes(ri, 8)
            qi = np.interp(t, s, q)
            inner = np.sum(tw * qi * t * t) / ri
            t, tw = _radial_nodes(R - ri, 8)
            t = t + ri
            qo = np.interp(t, s, q)
            vals[i] = 2.0 * (inner + np.sum(tw * qo * t))
        return vals
    h = np.ones_like(s)
    out = []
    for _ in range(nmax):
        out.append(4.0 * math.pi * np.sum(w * v * h * s * s))
        h = potential(v * h)
    return np.array(out)


def radial_laplace_exponent(V: TestFunction, alpha: float, z: float = 1.0, rtol: float = 1e-12) -> LaplaceExponentResult:
    """alpha <zV, (I - G zV)^{-1} 1> through the radial ODE h'' + (2/r) h' = -2 z V h.

    Integrating from h(0) = 1, h'(0) = 0 gives a multiple A h of the solution
    that tends to 1 at infinity; A = h(R) + R h'(R) at the support radius.
    """
    _check_radial(V)
    R = V.support_radius
    r0 = 1e-6 * R
    v0 = float(V.radial(np.array([0.0]))[0])

    def rhs(r, y):
        hv = float(V.radial(np.array([r]))[0])
        return [y[1], -2.0 / r * y[1] - 2.0 * z * hv * y[0], hv * y[0] * r * r]

    y0 = [1.0 - z * v0 * r0 ** 2 / 3.0, -2.0 * z * v0 * r0 / 3.0, v0 * r0 ** 3 / 3.0]
    sol = integrate.solve_ivp(rhs, (r0, R), y0, method="DOP853", rtol=rtol, atol=1e-14)
    h, dh, I = sol.y[:, -1]
    A = h + R * dh
    if A <= 0:
        return LaplaceExponentResult(None, False, math.nan, math.inf, math.nan, "radial-ode")
    return LaplaceExponentResult(alpha * z * 4.0 * math.pi * I / A, True, 0.0, 0.0, math.nan,
                                 "radial-ode", {"A": A})


def radial_fourier_transform(V: TestFunction, k) -> np.ndarray:
    """hat V(k) = (4 pi / k) int V(r) r sin(k r) dr for centered radial V in d = 3."""
    _check_radial(V)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    s, w = _radial_nodes(V.support_radius, 128)
    vs = V.radial(s) * s * w
    out = np.empty_like(k)
    for a in range(0, len(k), 2048):
        kk = k[a:a + 2048, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            val = 4 * math.pi * np.sum(vs * np.sin(kk * s), axis=1) / kk[:, 0]
        small = kk[:, 0] < 1e-12
        val[small] = 4 * math.pi * np.sum(vs * s)
        out[a:a + 2048] = val
    return out


def wick_square_variance_continuum(V: TestFunction, kmax: float = 800.0) -> float:
    """int int V(y) G^2(y - y') V(y') dy dy' = (1/4 pi^2) int hat V(k)^2 k dk (d = 3)."""
    edges = np.arange(0.0, kmax + 1.0, 1.0)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    k = (mid + half * _GLX).ravel()
    w = (half * _GLW).ravel()
    vh = radial_fourier_transform(V, k)
    return float(np.sum(w * vh * vh * k) / (4 * math.pi ** 2))


def green_pairing_radial(f: TestFunction, h: TestFunction, kmax: float = 800.0) -> float:
    """<f, G h> for two radial bumps with arbitrary centers (d = 3).

    <f, G h> = (1/pi^2) int hat f hat h sin(k D)/(k D) dk, D the center distance
    (hat G(k) = 2/|k|^2 for G = 1/(2 pi |y|)).
    """
    D = float(np.linalg.norm(np.subtract(f.center, h.center)))
    f0 = f.moved((0.0,) * 3)
    h0 = h.moved((0.0,) * 3)
    edges = np.arange(0.0, kmax + 1.0, 1.0)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    k = (mid + half * _GLX).ravel()
    w = (half * _GLW).ravel()
    ph = np.sinc(k * D / math.pi) if D > 0 else np.ones_like(k)
    return float(np.sum(w * radial_fourier_transform(f0, k) * radial_fourier_transform(h0, k) * ph)
                 / math.pi ** 2)


def capacity_oracle_ball(radius: float, d: int = 3) -> float:
    """cap(B(0, r)) = r^{d-2}/c_d; equals 2 pi r in d = 3."""
    return radius ** (d - 2) / continuum_constant(d)


# ---------------------------------------------------------------------------
# variance asymptotics

def b_n(N: int, d: int) -> float:
    if d == 3:
        return float(N) ** 4
    if d == 4:
        return float(N) ** 4 * math.log(N)
    return float(N) ** d


@dataclass(frozen=True)
class VarianceSum:
    """(2/b_N) sum V(x/N) g^2(x - x') V(x'/N) with its limit target when available."""

    N: int
    d: int
    value: float
    target: float | None
    target_tail_bound: float
    b_N: float

    @property
    def error(self) -> float | None:
        return None if self.target is None else abs(self.value - self.target)


def _grid_values(V: TestFunction, N: int):
    d = V.dimension
    lf = discretize(V, N)
    if len(lf) == 0:
        return np.zeros((1,) * d)
    lo = lf.sites.min(axis=0)
    hi = lf.sites.max(axis=0)
    arr = np.zeros(tuple(hi - lo + 1))
    arr[tuple((lf.sites - lo).T)] = lf.values
    return arr


def _autocorrelation(arr: np.ndarray) -> np.ndarray:
    pad = tuple(2 * s for s in arr.shape)
    F = sfft.rfftn(arr, pad)
    ac = sfft.irfftn(F * np.conj(F), pad)
    ac = np.fft.fftshift(ac)
    # keep offsets -(s-1)..(s-1)
    sl = tuple(slice(1, 2 * s) for s in arr.shape)
    return ac[sl]


def green_square_sum(table: GreenTable) -> tuple[float, float]:
    """sum_x g(x)^2 over Z^d (d >= 5): direct sum on the table plus an integral tail.

    The tail over |x|_inf > R uses g ~ d c_d |x|^{2-d}:
    (d c_d)^2 2d int_{R+1/2}^inf t^{d-1} t^{4-2d} I dt with
    I = int_{[-1,1]^{d-1}} (1 + |v|^2)^{2-d} dv.
    """
    d, R = table.dimension, table.range
    if d < 5:
        raise ValueError("sum of g^2 diverges for d < 5")
    sites = _sorted_orbits(R, d)
    total = math.fsum(table(sites) ** 2 * _orbit_sizes(sites))
    pts, wts = leggauss(24)
    grids = np.meshgrid(*([pts] * (d - 1)), indexing="ij")
    wgrid = np.ones_like(grids[0])
    for g in np.meshgrid(*([wts] * (d - 1)), indexing="ij"):
        wgrid = wgrid * g
    rad2 = sum(g * g for g in grids)
    I = float(np.sum(wgrid * (1 + rad2) ** (2 - d)))
    tail = (d * continuum_constant(d)) ** 2 * 2 * d * I * (R + 0.5) ** (4 - d) / (d - 4)
    return total + tail, tail


def _sorted_orbits(R: int, d: int) -> np.ndarray:
    return np.array(list(combinations_with_replacement(range(R + 1), d)), dtype=np.int64)


def _orbit_sizes(sorted_abs: np.ndarray) -> np.ndarray:
    """Number of lattice points in each hyperoctahedral orbit."""
    d = sorted_abs.shape[1]
    out = np.empty(len(sorted_abs))
    for i, row in enumerate(sorted_abs):
        _, counts = np.unique(row, return_counts=True)
        perms = math.factorial(d)
        for c in counts:
            perms //= math.factorial(c)
        out[i] = perms * 2 ** int(np.count_nonzero(row))
    return out


def variance_b_n_sums(V: TestFunction, N: int, table: GreenTable, *, with_target: bool = True) -> VarianceSum:
    """(2/b_N) sum_{x,x'} V(x/N) g^2(x - x') V(x'/N) by exact lattice summation.

    Targets: d = 3, 18 int int V G^2 V; d >= 5, (2 sum g^2) int V^2; d = 4 none.
    d = 3 uses an FFT autocorrelation of the lattice values of V; d >= 5 needs
    a product bump and sums over orbits of the separable autocorrelation.
    """
    d = table.dimension
    if V.dimension != d:
        raise ValueError("test function and table dimensions differ")
    bN = b_n(N, d)
    if d >= 5:
        if V.kind != "product-bump" or any(c != 0 for c in V.center):
            raise ValueError("d >= 5 sums need a centered product bump")
        ngrid = int(math.ceil(V.radius * N))
        x = np.arange(-ngrid, ngrid + 1)
        prof = _product_profile(V, x / N)
        ac = np.correlate(prof, prof, mode="full")       # offsets -(2n)..(2n)
        mid = len(prof) - 1
        a = ac[mid:]                                     # a(|k|)
        K = len(a) - 1
        if K > table.range:
            raise ValueError("Green table range too small for this N")
        orb = _sorted_orbits(K, d)
        weights = np.prod(a[orb], axis=1) * _orbit_sizes(orb)
        val = 2.0 / bN * math.fsum(weights * table(orb) ** 2)
        if not with_target:
            return VarianceSum(N, d, val, None, math.nan, bN)
        s2, tail = green_square_sum(table)
        return VarianceSum(N, d, val, 2.0 * s2 * V.integral_of_square(), 2.0 * tail * V.integral_of_square(), bN)
    arr = _grid_values(V, N)
    ac = _autocorrelation(arr)
    half = np.array(arr.shape) - 1
    if np.any(half > table.range):
        raise ValueError("Green table range too small for this N")
    offs = [np.arange(-s, s + 1) for s in half]
    mesh = np.meshgrid(*offs, indexing="ij")
    k = np.stack([m.ravel() for m in mesh], axis=1)
    acf = ac.ravel()
    keep = np.abs(acf) > 0
    val = 2.0 / bN * math.fsum(acf[keep] * table(k[keep]) ** 2)
    target = None
    if d == 3 and with_target:
        target = 18.0 * wick_square_variance_continuum(V)
    return VarianceSum(N, d, val, target, 0.0, bN)


def _product_profile(V: TestFunction, t) -> np.ndarray:
    """One-dimensional factor f with V(y) = prod_j f(y_j) (amplitude split evenly)."""
    d = V.dimension
    pts = np.zeros((len(t), d))
    pts[:, 0] = t
    base = V(np.zeros((1, d)))[0]
    vals = V(pts)
    # V(t e_1) = f(t) f(0)^{d-1} and f(0)^d = V(0)
    f0 = abs(base) ** (1.0 / d) * (1 if base >= 0 else -1)
    return vals / f0 ** (d - 1)


# ---------------------------------------------------------------------------
# regularized determinant MGF

@dataclass(frozen=True)
class Det2Result:
    mgf: float
    log_det2: float
    exponent: float
    z: float
    z_max: float
    kind: str
    points: int


def _covariance_fn(kind: str, N: int, spec: MollifierSpec | None, table: GreenTable | None):
    if kind == "mollified":
        if spec is None:
            raise ValueError("mollified kind needs a MollifierSpec")
        return lambda diff: spec.green(np.linalg.norm(diff, axis=-1))
    if kind == "lattice":
        if table is None:
            raise ValueError("lattice kind needs a GreenTable")
        d = table.dimension
        return lambda diff: N ** (d - 2) * table(np.rint(diff * N).astype(np.int64)) / d
    raise ValueError("kind must be 'mollified' or 'lattice'")


def det2_norm(V: TestFunction, N: int, M: float, kind: str, *, spec=None, table=None) -> float:
    """sup_y N^-3 sum_{y'} C(y - y') |V(y')| over y in Lambda_N."""
    pts = grid_points(1.0 / N, -M, M)
    cov = _covariance_fn(kind, N, spec, table)
    v = np.abs(V(pts))
    sup = pts[v > 0]
    C = cov(pts[:, None, :] - sup[None, :, :])
    return float(np.max(C @ v[v > 0]) / N ** 3)


def det2_mgf_oracle(V: TestFunction, N: int, M: float, z: float, alpha: float, kind: str = "mollified",
                    *, spec: MollifierSpec | None = None, table: GreenTable | None = None,
                    enforce_norm: bool = True) -> Det2Result:
    """E exp{(z/2N^3) sum V :(F_y + sqrt(2 alpha))^2:} for the Gaussian field F on Lambda_N.

    F is Phi_{., eps} (kind 'mollified') or the rescaled lattice field (kind
    'lattice'); Lambda_N = [-M, M)^3 intersected with L_N and must contain the
    support of V. The value is exp{alpha z <V, (I - z C V)^{-1} 1>_{L_N}} /
    det2(K)^{1/2} with K = I - z C diag(V)/N^3 and det2(K) = det(K) exp(-Tr(K - I)).
    """
    if V.dimension != 3:
        raise ValueError("det2 oracle is implemented for d = 3")
    pts = grid_points(1.0 / N, -M, M)
    v = V(pts)
    if np.count_nonzero(v) != len(discretize(V, N)):
        raise ValueError("Lambda_N does not contain the support of V")
    norm = det2_norm(V, N, M, kind, spec=spec, table=table)
    z_max = 0.5 / norm if norm > 0 else math.inf
    if enforce_norm and abs(z) > z_max:
        raise DomainError(f"|z| = {abs(z):.4g} exceeds the admissible bound {z_max:.4g}")
    if z == 0:
        return Det2Result(1.0, 0.0, 0.0, 0.0, z_max, kind, len(pts))
    cov = _covariance_fn(kind, N, spec, table)
    C = cov(pts[:, None, :] - pts[None, :, :])
    B = z * C * (v[None, :] / N ** 3)
    K = np.eye(len(pts)) - B
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0:
        raise DomainError("non-positive determinant: z outside the admissible range")
    log_det2 = logdet + float(np.trace(B))
    h = np.linalg.solve(K, np.ones(len(pts)))
    exponent = alpha * z * math.fsum(v * h) / N ** 3
    return Det2Result(math.exp(exponent - 0.5 * log_det2), log_det2, exponent, z, z_max, kind, len(pts))


def det2_diagnostics(N: int, M: float, table: GreenTable, eps: float | None = None) -> tuple[float, float]:
    """N^-6 sums over Lambda_N^2 of (G_eps^2 + g_N^2) and of (G_eps - g_N)^2.

    Uses offset pair counts prod_j (2MN - |k_j|); eps defaults to N^{-1/4}.
    """
    if table.dimension != 3:
        raise ValueError("diagnostics are for d = 3")
    L = int(round(2 * M * N))
    if L - 1 > table.range:
        raise ValueError("Green table range too small")
    spec = MollifierSpec(eps if eps is not None else N ** -0.25)
    orb = _sorted_orbits(L - 1, 3)
    # pair counts summed over each orbit of offsets
    counts = np.zeros(len(orb))
    for i, row in enumerate(orb):
        c = 0.0
        for perm in set(permutations(tuple(row))):
            c += np.prod([L - p for p in perm]) * 2 ** int(np.count_nonzero(row))
        counts[i] = c
    gN = N * table(orb) / 3.0
    Ge = spec.green(np.linalg.norm(orb, axis=1) / N)
    bounded = math.fsum(counts * (Ge ** 2 + gN ** 2)) / N ** 6
    decay = math.fsum(counts * (Ge - gN) ** 2) / N ** 6
    return bounded, decay

