"""Occupation field of random interlacements restricted to a finite window.

Only trajectories that hit the window K matter. Their number is
Poisson(u cap(K)), they enter K according to e_K / cap(K) and from then on
are simple random walks. Each visit to a site carries an independent Exp(1)
holding time, so the expected total time at x equals g and E[L_x] = u.

Walks live on the ball B(0, R_escape). On leaving it at y, the exact mode
uses the hitting kernel P_y[H_K < inf, X_{H_K} = .] to either teleport the
walk to its next entrance point in K or to let it escape for good. The
kernel only charges the inner boundary of K, so it is precomputed for all
exit sites against that boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit
from scipy import linalg

from ._poisson import poisson_draw
from .potential import EquilibriumData, GreenTable, equilibrium_measure_lattice, inner_boundary
from .seeding import block_rng, run_blocks
from .testfunctions import LatticeFunction, TestFunction, box_sites

DEFAULT_ESCAPE_FACTOR = 4.0


# ---------------------------------------------------------------------------
# windows

def box_window(side: int, d: int = 3) -> np.ndarray:
    """Centered box with ``side`` sites per axis (odd side centers at 0)."""
    lo = -((side - 1) // 2)
    return box_sites(lo, lo + side - 1, d)


def ball_window(radius: float, d: int = 3) -> np.ndarray:
    """Integer points with |x| < radius."""
    r = int(math.ceil(radius))
    pts = box_sites(-r, r, d)
    return pts[np.einsum("ij,ij->i", pts, pts) < radius * radius]


def support_window(V: TestFunction, N: int) -> np.ndarray:
    """Sites x with V(x/N) != 0."""
    from .testfunctions import discretize
    return discretize(V, N).sites


# ---------------------------------------------------------------------------
# data types

@dataclass
class OccupationField:
    """Occupation times of the sites of a window at level u.

    ``times`` is dense over ``window`` (same order); :meth:`as_dict` gives
    the sparse map of visited sites.
    """

    window: np.ndarray
    level: float
    times: np.ndarray
    trajectory_count: int

    def as_dict(self) -> dict:
        nz = np.nonzero(self.times)[0]
        return {tuple(self.window[i].tolist()): float(self.times[i]) for i in nz}


@dataclass(frozen=True)
class RescaledMeasure:
    """Atoms y = x/N of L^N (constant regime) or its centered version."""

    N: int
    level: float
    sites: np.ndarray
    masses: np.ndarray
    normalization: str

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses)


def build_rescaled_measure(field: OccupationField, N: int, regime: str, u_N: float) -> RescaledMeasure:
    """L^N = (1/dN^2) sum L_x delta_{x/N}; the high regime is centered and scaled.

    The centered measure is sqrt(d / (2 N^{d-2} u_N)) (L^N - u_N/(dN^2) per site).
    """
    if not math.isclose(field.level, u_N, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(f"field level {field.level} does not match u_N = {u_N}")
    d = field.window.shape[1]
    masses = rescaled_masses(field.times, N, d, regime, u_N)
    return RescaledMeasure(N, u_N, field.window, masses, regime)


def rescaled_masses(times: np.ndarray, N: int, d: int, regime: str, u_N: float) -> np.ndarray:
    """Array version of :func:`build_rescaled_measure` (last axis = sites)."""
    base = np.asarray(times, dtype=float) / (d * N * N)
    if regime == "constant":
        return base
    if regime == "high":
        return high_intensity_scale(N, d, u_N) * (base - u_N / (d * N * N))
    raise ValueError("regime must be 'constant' or 'high'")


def high_intensity_scale(N: int, d: int, u_N: float) -> float:
    return math.sqrt(d / (2.0 * N ** (d - 2) * u_N))


def pair_measure(measure: RescaledMeasure, V) -> float:
    """<measure, V> = sum of atom masses times V(atom)."""
    vals = np.asarray(V(measure.sites / measure.N), dtype=float)
    _check_support(V, measure.sites, measure.N)
    return math.fsum(measure.masses * vals)


def _check_support(V, sites, N):
    if isinstance(V, TestFunction):
        full = support_window(V, N)
        have = {tuple(s) for s in np.asarray(sites).tolist()}
        if any(tuple(s) not in have for s in full.tolist()):
            raise ValueError("test function support exceeds the sampled window")


# ---------------------------------------------------------------------------
# geometry of the walk

@dataclass(frozen=True, eq=False)
class WalkGeometry:
    """Index grids, exit shell and hitting kernels for one window."""

    sites: np.ndarray
    escape_radius: float
    lo: np.ndarray
    strides: np.ndarray
    code: np.ndarray          # flat grid: K index, -1 elsewhere
    shell_code: np.ndarray    # flat grid: exit-shell index, -1 elsewhere
    shell_sites: np.ndarray
    shell_cdf: np.ndarray     # (|S|, |B|) cumulative hitting probabilities
    shell_mass: np.ndarray
    boundary: np.ndarray      # K indices of the inner boundary
    max_exit_green: float     # max g(y - x) over exit sites y and x in K


def window_radius(sites: np.ndarray) -> float:
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", sites, sites))))


def build_walk_geometry(eq: EquilibriumData, table: GreenTable, escape_radius: float,
                        tol: float = 1e-9) -> WalkGeometry:
    sites = eq.sites
    d = sites.shape[1]
    if escape_radius <= window_radius(sites):
        raise ValueError("escape radius must exceed the window radius")
    Rc = int(math.floor(escape_radius)) + 1
    lo = np.full(d, -Rc, dtype=np.int64)
    shape = (2 * Rc + 1,) * d
    strides = np.array([int(np.prod(shape[j + 1:])) for j in range(d)], dtype=np.int64)
    code = np.full(int(np.prod(shape)), -1, dtype=np.int32)
    code[(sites - lo) @ strides] = np.arange(len(sites), dtype=np.int32)

    grid = box_sites(-Rc, Rc, d)
    r2 = np.einsum("ij,ij->i", grid, grid)
    R2 = escape_radius * escape_radius
    outside = r2 > R2
    near = np.zeros(len(grid), dtype=bool)
    for j in range(d):
        for s in (-1, 1):
            nb = grid.copy()
            nb[:, j] += s
            near |= np.einsum("ij,ij->i", nb, nb) <= R2
    shell = grid[outside & near]
    shell_code = np.full(code.size, -1, dtype=np.int32)
    shell_code[(shell - lo) @ strides] = np.arange(len(shell), dtype=np.int32)

    bmask = inner_boundary(sites)
    bidx = np.nonzero(bmask)[0]
    B = sites[bidx]
    gB = table.matrix(B)
    rows = linalg.solve(gB, table.matrix(B, shell), assume_a="pos").T
    if np.min(rows) < -tol:
        raise RuntimeError(f"hitting kernel entry {np.min(rows):.2e} below tolerance")
    rows = np.clip(rows, 0.0, 1.0)
    cdf = np.cumsum(rows, axis=1)
    mass = cdf[:, -1].copy()
    if np.max(mass) > 1 + tol:
        raise RuntimeError("hitting probability above one")
    max_g = float(np.max(table.matrix(shell, sites)))
    return WalkGeometry(sites, float(escape_radius), lo, strides, code, shell_code, shell,
                        cdf, np.minimum(mass, 1.0), bidx.astype(np.int64), max_g)


# ---------------------------------------------------------------------------
# compiled walk

@njit(cache=True, nogil=True)
def _search(cdf, u):
    lo, hi = 0, cdf.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True, nogil=True)
def _rw_block(rng, n, levels, mean_count, start_cdf, sites, lo, strides, code, R2,
              shell_code, shell_cdf, shell_mass, boundary, exact, weights, out_func,
              out_counts, store, out_fields):
    L = levels.size
    m, d = sites.shape
    nf = weights.shape[0]
    umax = levels[L - 1]
    occ = np.zeros((L, m))
    cnt = np.zeros(L, dtype=np.int64)
    pos = np.zeros(d, dtype=np.int64)
    for i in range(n):
        occ[:, :] = 0.0
        cnt[:] = 0
        ntraj = poisson_draw(rng, mean_count)
        for _ in range(ntraj):
            label = umax * rng.random()
            l0 = 0
            while levels[l0] < label:
                l0 += 1
            cnt[l0] += 1
            k = _search(start_cdf, rng.random() * start_cdf[m - 1])
            r2 = 0
            flat = 0
            for j in range(d):
                pos[j] = sites[k, j]
                r2 += pos[j] * pos[j]
                flat += (pos[j] - lo[j]) * strides[j]
            occ[l0, k] -= math.log(1.0 - rng.random())
            while True:
                dr = int(rng.random() * 2 * d)
                j = dr >> 1
                s = 2 * (dr & 1) - 1
                r2 += 2 * s * pos[j] + 1
                pos[j] += s
                flat += s * strides[j]
                if r2 > R2:
                    if not exact:
                        break
                    e = shell_code[flat]
                    u = rng.random()
                    if u >= shell_mass[e]:
                        break
                    b = _search(shell_cdf[e], u)
                    k = boundary[b]
                    r2 = 0
                    flat = 0
                    for jj in range(d):
                        pos[jj] = sites[k, jj]
                        r2 += pos[jj] * pos[jj]
                        flat += (pos[jj] - lo[jj]) * strides[jj]
                    occ[l0, k] -= math.log(1.0 - rng.random())
                    continue
                c = code[flat]
                if c >= 0:
                    occ[l0, c] -= math.log(1.0 - rng.random())
        for l in range(1, L):
            cnt[l] += cnt[l - 1]
            for x in range(m):
                occ[l, x] += occ[l - 1, x]
        for l in range(L):
            out_counts[i, l] = cnt[l]
            for f in range(nf):
                acc = 0.0
                for x in range(m):
                    acc += weights[f, x] * occ[l, x]
                out_func[i, l, f] = acc
            if store:
                for x in range(m):
                    out_fields[i, l, x] = occ[l, x]


# ---------------------------------------------------------------------------
# sampler

def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(eq=False)
class InterlacementSampler:
    """Sampler of (L_{x,u})_{x in K} for one window K.

    Parameters
    ----------
    K : array (m, d)
        Window sites.
    table : GreenTable
    escape_radius : float, optional
        Radius of the walking ball; defaults to ``escape_factor`` times the
        window radius (at least window radius + 1).
    mode : {"exact", "truncated"}
    """

    K: np.ndarray
    table: GreenTable
    escape_radius: float | None = None
    mode: str = "exact"
    escape_factor: float = DEFAULT_ESCAPE_FACTOR
    eq: EquilibriumData | None = None
    geometry: WalkGeometry = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("exact", "truncated"):
            raise ValueError("mode must be 'exact' or 'truncated'")
        self.K = np.asarray(self.K, dtype=np.int64)
        if self.eq is None:
            self.eq = equilibrium_measure_lattice(self.K, self.table)
        rad = window_radius(self.K)
        if self.escape_radius is None:
            self.escape_radius = max(self.escape_factor * rad, rad + 1.0)
        self.geometry = build_walk_geometry(self.eq, self.table, self.escape_radius)

    @property
    def capacity(self) -> float:
        return self.eq.capacity

    @cached_property
    def _start_cdf(self) -> np.ndarray:
        return np.cumsum(self.eq.weights)

    def truncation_bias_bound(self, u: float) -> float:
        """Bound on the per-site mean deficit of truncated mode.

        Each trajectory leaves B(0, R) at most once before being killed and
        the expected time it would still spend at x is at most g(y - x).
        """
        if self.mode == "exact":
            return 0.0
        return u * self.capacity * self.geometry.max_exit_green

    def run_block(self, rng, n: int, levels, weights=None, store_fields: bool = False):
        """Draw ``n`` independent fields for all ``levels`` with common randomness.

        ``rng`` is a :class:`numpy.random.Generator` (or an int seed).

        Returns
        -------
        functionals : (n, L, F) array
            ``sum_x weights[f, x] L_{x, levels[l]}``.
        counts : (n, L) int array
            Number of trajectories with label <= level.
        fields : (n, L, m) array or None
        """
        rng = _as_rng(rng)
        levels = np.asarray(levels, dtype=float).reshape(-1)
        if np.any(np.diff(levels) < 0) or np.any(levels < 0):
            raise ValueError("levels must be nonnegative and sorted")
        m = len(self.K)
        if weights is None:
            weights = np.zeros((0, m))
        weights = np.ascontiguousarray(np.atleast_2d(weights), dtype=float)
        if weights.shape[1] != m:
            raise ValueError("weights must have one column per window site")
        L = len(levels)
        out_func = np.zeros((n, L, weights.shape[0]))
        out_counts = np.zeros((n, L), dtype=np.int64)
        out_fields = np.zeros((n, L, m) if store_fields else (1, 1, 1))
        if levels[-1] > 0 and n > 0:
            g = self.geometry
            _rw_block(rng, n, levels, levels[-1] * self.capacity, self._start_cdf,
                      self.K, g.lo, g.strides, g.code, g.escape_radius ** 2, g.shell_code,
                      g.shell_cdf, g.shell_mass, g.boundary, self.mode == "exact", weights,
                      out_func, out_counts, store_fields, out_fields)
        return out_func, out_counts, (out_fields if store_fields else None)

    def functionals(self, levels, weights, n: int, seed: int, stream: str = "rw",
                    workers: int = 1):
        """Per-draw functionals for ``n`` draws, independent of ``workers``."""
        def work(b, start, stop):
            return self.run_block(block_rng(seed, stream, b), stop - start, levels, weights)[:2]
        parts = run_blocks(work, n, workers)
        return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))

    def fields(self, u: float, n: int, seed: int, stream: str = "rw-fields", workers: int = 1):
        """Dense (n, m) array of occupation fields at level u."""
        def work(b, start, stop):
            return self.run_block(block_rng(seed, stream, b), stop - start, [u],
                                  store_fields=True)[2][:, 0, :]
        return np.concatenate(run_blocks(work, n, workers)) if n else np.zeros((0, len(self.K)))


def sample_occupation_field(K, u: float, table: GreenTable, seed: int, *,
                            eq: EquilibriumData | None = None, escape_radius: float | None = None,
                            mode: str = "exact") -> OccupationField:
    """One draw of (L_{x,u})_{x in K}."""
    if u < 0:
        raise ValueError("level must be nonnegative")
    sampler = InterlacementSampler(np.asarray(K), table, escape_radius, mode, eq=eq)
    _, counts, fields = sampler.run_block(seed, 1, [u], store_fields=True)
    return OccupationField(sampler.K, float(u), fields[0, 0], int(counts[0, 0]))


def lattice_weights(V: TestFunction | LatticeFunction, K: np.ndarray, N: int) -> np.ndarray:
    """Row vector V(x/N) over the window, with a support check."""
    if isinstance(V, LatticeFunction):
        idx = {tuple(s): i for i, s in enumerate(np.asarray(K).tolist())}
        w = np.zeros(len(K))
        for s, v in zip(V.sites.tolist(), V.values):
            if tuple(s) not in idx:
                raise ValueError("test function support exceeds the sampled window")
            w[idx[tuple(s)]] = v
        return w
    _check_support(V, K, N)
    return V(np.asarray(K) / N)
