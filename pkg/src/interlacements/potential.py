"""Lattice and continuum potential theory.

The lattice Green function of simple random walk on Z^d is evaluated through
the continuous-time heat-kernel representation

    g(x) = int_0^inf prod_j exp(-t/d) I_{|x_j|}(t/d) dt,

which is the Fourier integral (2 pi)^-d int cos(x.theta) / (1 - phi(theta))
after integrating out the angles. The integral is split into dyadic
Gauss-Legendre panels on [0, T] and an asymptotic series on [T, inf).
A Fourier-side evaluator (:func:`green_lattice_fourier`) is kept as an
independent check.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg
from scipy.special import comb, ive

from .testfunctions import LatticeFunction

LOGGER = logging.getLogger(__name__)

CACHE_VERSION = 1
_TAIL_TERMS = 10


class DomainError(ValueError):
    """Raised when an operator-norm condition (Laplace domain) is violated."""


# ---------------------------------------------------------------------------
# continuum

def continuum_constant(d: int) -> float:
    """c_d = Gamma(d/2 - 1) / (2 pi^{d/2})."""
    if d < 3:
        raise ValueError("dimension must be at least 3")
    return math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))


@dataclass(frozen=True)
class ContinuumGreenParams:
    dimension: int
    constant: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "constant", continuum_constant(self.dimension))


def green_continuum(y, d: int | None = None):
    """G(y) = c_d |y|^{2-d}; ``inf`` at the origin.

    ``y`` may be a single point or an array of points along the last axis.
    """
    y = np.asarray(y, dtype=float)
    d = y.shape[-1] if d is None else d
    r = np.linalg.norm(y, axis=-1)
    with np.errstate(divide="ignore"):
        out = continuum_constant(d) * r ** (2.0 - d)
    if np.ndim(out) == 0:
        return float(out)
    return out


def capacity_ball_continuum(r: float, d: int) -> float:
    """Newtonian capacity r^{d-2}/c_d of a ball (2 pi r in d = 3)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    return r ** (d - 2) / continuum_constant(d)


# ---------------------------------------------------------------------------
# quadrature of the heat-kernel integral

@lru_cache(maxsize=None)
def _panel_nodes(T: float, m: int):
    x, w = leggauss(m)
    edges = [0.0, 1.0]
    while edges[-1] < T:
        edges.append(min(2 * edges[-1], T))
    t, wt = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        t.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wt.append(0.5 * (b - a) * w)
    return np.concatenate(t), np.concatenate(wt)


def _asymptotic_coefficients(nmax: int, K: int) -> np.ndarray:
    """ive(n, z) ~ (2 pi z)^{-1/2} sum_k C[n, k] z^{-k} for large z."""
    C = np.zeros((nmax + 1, K + 1))
    C[:, 0] = 1.0
    mu = 4.0 * np.arange(nmax + 1) ** 2
    for k in range(1, K + 1):
        C[:, k] = -C[:, k - 1] * (mu - (2 * k - 1) ** 2) / (8.0 * k)
    return C


def _tail(points: np.ndarray, d: int, T: float, K: int = _TAIL_TERMS) -> np.ndarray:
    """Integral over [T, inf) from the product of the Bessel asymptotic series."""
    C = _asymptotic_coefficients(int(points.max(initial=0)), K)
    poly = np.zeros((len(points), K + 1))
    poly[:, 0] = 1.0
    for j in range(d):
        c = C[points[:, j]]
        new = np.zeros_like(poly)
        for k in range(K + 1):
            new[:, k:] += poly[:, k:k + 1] * c[:, :K + 1 - k]
        poly = new
    k = np.arange(K + 1)
    weights = d ** k * T ** (1 - d / 2 - k) / (d / 2 + k - 1)
    return (d / (2 * math.pi)) ** (d / 2) * poly @ weights


def _quadrature_T(rmax: int) -> float:
    return float(max(4096, 64 * rmax * rmax))


def _heat_kernel_green(points: np.ndarray, d: int, m: int, T: float,
                       chunk: int = 4096) -> np.ndarray:
    """g at nonnegative integer points (rows), all with a common cutoff T."""
    points = np.asarray(points, dtype=np.int64)
    t, w = _panel_nodes(T, m)
    nmax = int(points.max(initial=0))
    bessel = ive(np.arange(nmax + 1)[:, None], t[None, :] / d)
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk]
        prod = bessel[p[:, 0]].copy()
        for j in range(1, d):
            prod *= bessel[p[:, j]]
        out[s:s + chunk] = prod @ w
    return out + _tail(points, d, T)


def green_lattice(x, d: int | None = None, tol: float = 1e-10) -> float:
    """Lattice Green function g(x) of simple random walk on Z^d.

    Parameters
    ----------
    x : sequence of int
        Lattice offset.
    d : int, optional
        Dimension; defaults to ``len(x)``.
    tol : float
        Absolute tolerance. The panel order is doubled until two successive
        values agree to ``tol / 10``.

    Returns
    -------
    float
        g(x), the expected number of visits to x of the walk started at 0.
    """
    x = np.abs(np.asarray(x, dtype=np.int64)).reshape(1, -1)
    d = x.shape[1] if d is None else d
    if d < 3:
        raise ValueError("simple random walk is recurrent for d < 3")
    if x.shape[1] != d:
        raise ValueError("offset dimension does not match d")
    if tol <= 0:
        raise ValueError("tol must be positive")
    T = _quadrature_T(int(x.max()))
    prev = _heat_kernel_green(x, d, 16, T)[0]
    for m in (24, 32, 48, 64, 96):
        cur = _heat_kernel_green(x, d, m, T)[0]
        if abs(cur - prev) <= tol / 10:
            return float(cur)
        prev = cur
    raise RuntimeError(f"green_lattice did not reach tol={tol} at x={x[0].tolist()}")


def green_lattice_fourier(x, d: int | None = None, order: int = 48) -> float:
    """g(x) by direct quadrature of the Fourier integral.

    The cube [0, pi]^d is split into d pyramids with apex at the singular
    point theta = 0; the Duffy map theta = s * (v, 1) cancels the
    1/|theta|^2 singularity so tensor Gauss-Legendre converges
    exponentially. Intended for small |x| (the integrand oscillates).
    """
    x = np.asarray(x, dtype=float)
    d = len(x) if d is None else d
    if d < 3:
        raise ValueError("simple random walk is recurrent for d < 3")
    u, w = leggauss(order)
    s = 0.5 * math.pi * (u + 1.0)
    ws = 0.5 * math.pi * w
    v = 0.5 * (u + 1.0)
    wv = 0.5 * w
    grids = np.meshgrid(*([v] * (d - 1)), indexing="ij")
    V = np.stack([g.ravel() for g in grids], axis=1)
    WV = np.prod(np.stack(np.meshgrid(*([wv] * (d - 1)), indexing="ij")), axis=0).ravel()
    total = 0.0
    for apex in range(d):
        theta = np.empty((len(s), len(V), d))
        others = [j for j in range(d) if j != apex]
        theta[:, :, apex] = s[:, None]
        theta[:, :, others] = s[:, None, None] * V[None, :, :]
        denom = 1.0 - np.cos(theta).mean(axis=2)
        num = np.prod(np.cos(theta * x), axis=2) * s[:, None] ** (d - 1)
        total += float(np.einsum("i,ij,j->", ws, num / denom, WV))
    return total / math.pi ** d


# ---------------------------------------------------------------------------
# tabulation

def _multiset_rank(sorted_abs: np.ndarray, binom: np.ndarray) -> np.ndarray:
    """Rank of ascending-sorted tuples in the combinatorial number system."""
    d = sorted_abs.shape[-1]
    rank = np.zeros(sorted_abs.shape[:-1], dtype=np.int64)
    for j in range(d):
        rank += binom[j, sorted_abs[..., j] + j]
    return rank


def default_cache_dir() -> Path:
    env = os.environ.get("INTERLACEMENTS_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "interlacements"


@dataclass(frozen=True, eq=False)
class GreenTable:
    """Tabulated lattice Green function on the cube |x|_inf <= range.

    Values are stored once per hyperoctahedral orbit (ascending-sorted
    absolute offsets, ranked in the combinatorial number system), which
    makes d = 5 tables practical. Lookups of offsets outside the range use
    ``d * G(x)`` when ``tail_mode == "asymptotic"`` or the quadrature when
    ``tail_mode == "exact"``.
    """

    dimension: int
    range: int
    values: np.ndarray
    tol: float
    tail_mode: str = "asymptotic"

    def __post_init__(self):
        if self.tail_mode not in ("asymptotic", "exact"):
            raise ValueError("tail_mode must be 'asymptotic' or 'exact'")
        self.values.setflags(write=False)

    @cached_property
    def _binom(self) -> np.ndarray:
        d, R = self.dimension, self.range
        b = np.zeros((d, R + d + 1), dtype=np.int64)
        for j in range(d):
            b[j] = comb(np.arange(R + d + 1), j + 1, exact=False).round().astype(np.int64)
        return b

    @property
    def g0(self) -> float:
        return float(self.values[0])

    def __call__(self, x) -> np.ndarray:
        """g at integer offsets ``x`` (last axis = coordinates)."""
        x = np.asarray(x)
        if x.shape[-1] != self.dimension:
            raise ValueError("offset dimension does not match table")
        if not np.issubdtype(x.dtype, np.integer):
            xr = np.rint(x)
            if np.any(np.abs(x - xr) > 1e-9):
                raise ValueError("lattice offsets must be integers")
            x = xr
        a = np.sort(np.abs(x.astype(np.int64)), axis=-1)
        inside = a[..., -1] <= self.range
        out = np.empty(a.shape[:-1])
        out[inside] = self.values[_multiset_rank(a[inside], self._binom)]
        if not np.all(inside):
            far = a[~inside]
            if self.tail_mode == "asymptotic":
                out[~inside] = self.dimension * green_continuum(far.astype(float))
            else:
                out[~inside] = _heat_kernel_green(far, self.dimension, 48,
                                                  _quadrature_T(int(far.max())))
        return out if out.ndim else float(out)

    def value(self, x) -> float:
        return float(self(np.asarray(x)))

    def matrix(self, a, b=None) -> np.ndarray:
        """Green matrix (g(a_i - b_j))."""
        a = np.asarray(a, dtype=np.int64)
        b = a if b is None else np.asarray(b, dtype=np.int64)
        return self(a[:, None, :] - b[None, :, :])

    def rescaled(self, y, y2, N: int) -> float:
        """g_N(y, y') = N^{d-2} g(N y - N y') / d for points of L_N."""
        return green_rescaled(y, y2, N, self)

    # persistence ---------------------------------------------------------

    @staticmethod
    def cache_name(d: int, R: int, tol: float) -> str:
        return f"green_v{CACHE_VERSION}_d{d}_R{R}_tol{tol:.0e}.npz"

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            np.savez(fh, values=self.values,
                     meta=np.array([CACHE_VERSION, self.dimension, self.range], dtype=np.int64),
                     tol=np.array([self.tol]))
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, tail_mode: str = "asymptotic") -> "GreenTable":
        with np.load(path) as data:
            version, d, R = (int(v) for v in data["meta"])
            if version != CACHE_VERSION:
                raise ValueError(f"cache version {version} != {CACHE_VERSION}")
            return cls(d, R, data["values"].copy(), float(data["tol"][0]), tail_mode)


def build_green_table(d: int = 3, R: int = 64, tol: float = 1e-10, *,
                      tail_mode: str = "asymptotic", cache: bool = True,
                      cache_dir=None, order: int = 24) -> GreenTable:
    """Build (or load from the cache) the Green table for |x|_inf <= R.

    The panel order is checked against a refined run on the extreme orbits;
    a discrepancy above ``tol`` raises.
    """
    if d < 3:
        raise ValueError("simple random walk is recurrent for d < 3")
    path = Path(cache_dir or default_cache_dir()) / GreenTable.cache_name(d, R, tol)
    if cache and path.exists():
        try:
            table = GreenTable.load(path, tail_mode)
            if table.dimension == d and table.range == R:
                return table
        except (OSError, ValueError, KeyError) as exc:
            LOGGER.warning("ignoring unreadable Green cache %s (%s)", path, exc)
    pts = np.array(list(itertools.combinations_with_replacement(range(R + 1), d)),
                   dtype=np.int64)
    T = _quadrature_T(R)
    vals = _heat_kernel_green(pts, d, order, T)
    probe = np.array([[0] * d, [0] * (d - 1) + [1], [R] * d, [0] * (d - 1) + [R]],
                     dtype=np.int64)
    check = _heat_kernel_green(probe, d, 2 * order, T)
    probe_sorted = np.sort(probe, axis=1)
    table = GreenTable(d, R, np.empty(len(pts)), tol, tail_mode)
    ranks = _multiset_rank(pts, table._binom)
    values = np.empty(len(pts))
    values[ranks] = vals
    err = np.max(np.abs(values[_multiset_rank(probe_sorted, table._binom)] - check))
    if err > tol:
        raise RuntimeError(f"Green table quadrature error {err:.2e} exceeds tol={tol:.1e}")
    table = GreenTable(d, R, values, tol, tail_mode)
    if cache:
        try:
            table.save(path)
        except OSError as exc:
            LOGGER.warning("could not write Green cache %s (%s)", path, exc)
    return table


def harmonicity_residual(table: GreenTable, radius: int) -> float:
    """max |(1/2d) sum_e g(x+e) - g(x) + 1{x=0}| over |x|_inf <= radius."""
    d = table.dimension
    from .testfunctions import box_sites
    x = box_sites(-radius, radius, d)
    avg = np.zeros(len(x))
    for j in range(d):
        e = np.zeros(d, dtype=np.int64)
        e[j] = 1
        avg += table(x + e) + table(x - e)
    avg /= 2 * d
    origin = np.all(x == 0, axis=1)
    return float(np.max(np.abs(avg - table(x) + origin)))


# ---------------------------------------------------------------------------
# rescaled kernels and operators

def _as_lattice(y, N: int) -> np.ndarray:
    x = np.asarray(y, dtype=float) * N
    xr = np.rint(x)
    if np.any(np.abs(x - xr) > 1e-9):
        raise ValueError("points are not on the lattice L_N")
    return xr.astype(np.int64)


def green_rescaled(y, y2, N: int, table: GreenTable) -> float:
    """g_N(y, y') = N^{d-2} g(N(y - y')) / d for y, y' in L_N."""
    d = table.dimension
    x = _as_lattice(y, N) - _as_lattice(y2, N)
    return N ** (d - 2) * table(x) / d


def apply_green_operator_lattice(f: LatticeFunction, table: GreenTable, eval_sites) -> np.ndarray:
    """G_N f at the integer sites ``eval_sites`` (points eval_sites / N).

    G_N f(y) = N^{-d} sum_{y'} g_N(y, y') f(y') = (1 / (d N^2)) sum_x g(Ny - x) f(x/N).
    """
    eval_sites = np.asarray(eval_sites, dtype=np.int64).reshape(-1, table.dimension)
    if len(f) == 0:
        return np.zeros(len(eval_sites))
    d, N = table.dimension, f.N
    return table.matrix(eval_sites, f.sites) @ f.values / (d * N * N)


def _outer_boundary(sites: np.ndarray) -> np.ndarray:
    d = sites.shape[1]
    have = {tuple(s) for s in sites.tolist()}
    out = set()
    for s in sites.tolist():
        for j in range(d):
            for sgn in (-1, 1):
                t = list(s)
                t[j] += sgn
                t = tuple(t)
                if t not in have:
                    out.add(t)
    return np.array(sorted(out), dtype=np.int64).reshape(-1, d)


def inner_boundary(sites: np.ndarray) -> np.ndarray:
    """Boolean mask of sites of K having a nearest neighbour outside K."""
    sites = np.asarray(sites, dtype=np.int64)
    d = sites.shape[1]
    have = {tuple(s) for s in sites.tolist()}
    mask = np.zeros(len(sites), dtype=bool)
    for i, s in enumerate(sites.tolist()):
        for j in range(d):
            for sgn in (-1, 1):
                t = list(s)
                t[j] += sgn
                if tuple(t) not in have:
                    mask[i] = True
    return mask


def green_operator_norm(V: LatticeFunction, table: GreenTable) -> float:
    """||G_N |V| ||_{L^inf -> L^inf}, exact.

    G_N|V| is harmonic off supp V and vanishes at infinity, so its supremum
    is attained on the support or its outer boundary.
    """
    if len(V) == 0:
        return 0.0
    sites = np.vstack([V.sites, _outer_boundary(V.sites)])
    return float(np.max(apply_green_operator_lattice(V.abs(), table, sites)))


@dataclass(frozen=True, eq=False)
class ResolventSolution:
    """h = (I - G_N V)^{-1} rhs on supp V, extendable to any site."""

    V: LatticeFunction
    values: np.ndarray
    norm: float
    residual: float
    table: GreenTable
    rhs: object

    def extend(self, sites) -> np.ndarray:
        """One Neumann step: h(y) = rhs(y) + G_N(V h)(y) at arbitrary sites."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.table.dimension)
        Vh = LatticeFunction(self.V.sites, self.V.values * self.values, self.V.N)
        return _rhs_values(self.rhs, sites, self.V.N) + apply_green_operator_lattice(Vh, self.table, sites)


def _rhs_values(rhs, sites, N) -> np.ndarray:
    if rhs is None:
        return np.ones(len(sites))
    if callable(rhs):
        return np.asarray(rhs(sites / N), dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 0:
        return np.full(len(sites), float(rhs))
    if len(rhs) != len(sites):
        raise ValueError("rhs length does not match the support of V")
    return rhs


def solve_resolvent_lattice(V: LatticeFunction, table: GreenTable, rhs=None,
                            solver_tol: float = 1e-10, max_norm: float = 1.0) -> ResolventSolution:
    """(I - G_N V)^{-1} rhs restricted to the support of V.

    Parameters
    ----------
    V : LatticeFunction
        Finitely supported potential on L_N.
    table : GreenTable
    rhs : None, float, array or callable
        Right-hand side on the support (``None`` means the constant 1; a
        callable is evaluated at the points y = x/N).
    solver_tol : float
        Bound on the relative residual of the dense solve.
    max_norm : float
        Operator-norm threshold; ``||G_N|V|| >= max_norm`` raises
        :class:`DomainError`.
    """
    norm = green_operator_norm(V, table)
    if norm >= max_norm:
        raise DomainError(f"outside Laplace domain: ||G_N|V||| = {norm:.4g} >= {max_norm}")
    b = _rhs_values(rhs, V.sites, V.N)
    if len(V) == 0:
        return ResolventSolution(V, b.copy(), 0.0, 0.0, table, rhs)
    d, N = table.dimension, V.N
    M = table.matrix(V.sites) * (V.values[None, :] / (d * N * N))
    A = np.eye(len(V)) - M
    h = linalg.solve(A, b)
    res = float(np.max(np.abs(A @ h - b)) / max(1.0, np.max(np.abs(b))))
    if res > solver_tol:
        raise RuntimeError(f"resolvent residual {res:.2e} above tolerance")
    return ResolventSolution(V, h, norm, res, table, rhs)


# ---------------------------------------------------------------------------
# equilibrium measure and hitting

@dataclass(frozen=True, eq=False)
class EquilibriumData:
    """Equilibrium measure of a finite set K: G_K e = 1, cap(K) = sum e."""

    sites: np.ndarray
    weights: np.ndarray
    capacity: float
    residual: float
    _lu: tuple = field(repr=False)

    @cached_property
    def green_inverse(self) -> np.ndarray:
        return linalg.lu_solve(self._lu, np.eye(len(self.sites)))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(G_K)^{-1} rhs without forming the inverse."""
        return linalg.lu_solve(self._lu, rhs)


def equilibrium_measure_lattice(K, table: GreenTable, solver_tol: float = 1e-9) -> EquilibriumData:
    """Solve G_K e = 1 by dense LU.

    Weights that come out negative by less than ``solver_tol`` (interior
    sites, where the exact value is zero) are clamped to 0.
    """
    K = np.asarray(K, dtype=np.int64).reshape(-1, table.dimension)
    if len(K) == 0:
        raise ValueError("K must be nonempty")
    if len({tuple(s) for s in K.tolist()}) != len(K):
        raise ValueError("K contains repeated sites")
    G = table.matrix(K)
    lu = linalg.lu_factor(G)
    if np.min(np.abs(np.diag(lu[0]))) < 1e-12 * np.max(np.abs(np.diag(lu[0]))):
        raise RuntimeError("singular Green matrix; Green table is inaccurate")
    e = linalg.lu_solve(lu, np.ones(len(K)))
    residual = float(np.max(np.abs(G @ e - 1.0)))
    if residual > solver_tol:
        raise RuntimeError(f"equilibrium residual {residual:.2e} above solver_tol")
    if np.min(e) < -solver_tol:
        raise RuntimeError(f"negative equilibrium weight {np.min(e):.3e}")
    e = np.where(e < 0, 0.0, e)
    return EquilibriumData(K, e, float(math.fsum(e)), residual, lu)


def hitting_kernel(x, eq: EquilibriumData, table: GreenTable, tol: float = 1e-9) -> np.ndarray:
    """P_x[H_K < inf, X_{H_K} = z] for z in K, from x outside K.

    First-entrance decomposition gives g(x - .) = H(x, .) G_K on K.
    """
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    if np.any(np.all(eq.sites == x, axis=1)):
        raise ValueError("starting point lies in K")
    row = table(eq.sites - x)
    h = eq.solve(row)
    if np.min(h) < -tol:
        raise RuntimeError(f"hitting kernel entry {np.min(h):.3e} below -tol")
    return np.clip(h, 0.0, 1.0)
