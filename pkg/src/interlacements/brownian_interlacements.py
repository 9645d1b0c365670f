"""Occupation measure of Brownian interlacements inside an observation ball.

Trajectories meeting B(0, rho) form a Poisson(alpha cap(B(0, rho))) family
whose forward parts start uniformly on the sphere (the equilibrium measure
of a ball) and are standard Brownian motions. The backward parts never
enter the ball and are not simulated.

Paths are advanced by exact Gaussian increments of variance ``delta`` per
coordinate and the occupation functional is the left Riemann sum
``delta * sum_k V(X_k)``. When a path leaves B(0, R_escape) at x, it comes
back to the ball with probability (rho/|x|)^{d-2}, re-entering at a point
drawn from the exterior Poisson kernel of the sphere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._poisson import poisson_batch, poisson_draw
from .potential import capacity_ball_continuum
from .seeding import block_rng, run_blocks
from .testfunctions import TestFunction


@dataclass
class BrownianCloudSample:
    """One cloud: trajectory count and the accumulated functionals."""

    level: float
    rho: float
    delta: float
    trajectory_count: int
    functionals: np.ndarray
    cells: np.ndarray | None = None
    paths: np.ndarray | None = None


# ---------------------------------------------------------------------------
# compiled helpers

@njit(cache=True, nogil=True, inline="always")
def _eval_v(params, f, pos):
    code = int(params[f, 0])
    r = params[f, 1]
    d = pos.size
    if code == 0 or code == 2:
        s2 = 0.0
        for j in range(d):
            z = pos[j] - params[f, 3 + j]
            s2 += z * z
        s2 /= r * r
        if s2 >= 1.0:
            return 0.0
        if code == 2:
            return params[f, 2]
        return params[f, 2] * math.exp(1.0 - 1.0 / (1.0 - s2))
    val = params[f, 2]
    for j in range(d):
        s = abs(pos[j] - params[f, 3 + j]) / r
        if code == 1:
            if s >= 1.0:
                return 0.0
            val *= math.exp(1.0 - 1.0 / (1.0 - s * s))
        elif s > 1.0:
            return 0.0
    return val


@njit(cache=True, nogil=True)
def _uniform_sphere(rng, out, radius):
    d = out.size
    s = 0.0
    for j in range(d):
        out[j] = rng.standard_normal()
        s += out[j] * out[j]
    s = radius / math.sqrt(s)
    for j in range(d):
        out[j] *= s


@njit(cache=True, nogil=True)
def _reentry(rng, pos, rho, tmp):
    """Overwrite ``pos`` (|pos| > rho) with a point of the sphere drawn from
    the exterior Poisson kernel, density proportional to |pos - xi|^{-d}."""
    d = pos.size
    r = 0.0
    for j in range(d):
        r += pos[j] * pos[j]
    r = math.sqrt(r)
    if d == 3:
        # closed-form inverse CDF of the cosine of the angle to pos
        a = r * r + rho * rho
        b = 2.0 * r * rho
        q = 1.0 / (r + rho) + rng.random() * (1.0 / (r - rho) - 1.0 / (r + rho))
        c = (a - 1.0 / (q * q)) / b
        c = min(1.0, max(-1.0, c))
        # uniform direction orthogonal to pos
        while True:
            dot = 0.0
            for j in range(d):
                tmp[j] = rng.standard_normal()
                dot += tmp[j] * pos[j]
            nrm = 0.0
            for j in range(d):
                tmp[j] -= dot * pos[j] / (r * r)
                nrm += tmp[j] * tmp[j]
            if nrm > 1e-300:
                break
        nrm = math.sqrt(nrm)
        sn = math.sqrt(max(0.0, 1.0 - c * c))
        for j in range(d):
            pos[j] = rho * (c * pos[j] / r + sn * tmp[j] / nrm)
        return
    # rejection from the uniform law on the sphere
    while True:
        _uniform_sphere(rng, tmp, rho)
        dist2 = 0.0
        for j in range(d):
            z = pos[j] - tmp[j]
            dist2 += z * z
        if rng.random() <= ((r - rho) ** 2 / dist2) ** (d / 2.0):
            for j in range(d):
                pos[j] = tmp[j]
            return


@njit(cache=True, nogil=True)
def _bm_block(rng, n, levels, mean_count, rho, delta, R2, exact, vparams,
              out_func, out_counts, cell_h, ncell, out_cells):
    L = levels.size
    nf = vparams.shape[0]
    d = vparams.shape[1] - 3
    amax = levels[L - 1]
    sd = math.sqrt(delta)
    rho2 = rho * rho
    pos = np.zeros(d)
    tmp = np.zeros(d)
    acc = np.zeros((L, nf))
    cnt = np.zeros(L, dtype=np.int64)
    use_cells = ncell > 0
    for i in range(n):
        acc[:, :] = 0.0
        cnt[:] = 0
        ntraj = poisson_draw(rng, mean_count)
        for _ in range(ntraj):
            label = amax * rng.random()
            l0 = 0
            while levels[l0] < label:
                l0 += 1
            cnt[l0] += 1
            _uniform_sphere(rng, pos, rho)
            while True:
                r2 = 0.0
                for j in range(d):
                    r2 += pos[j] * pos[j]
                if r2 < rho2:
                    for f in range(nf):
                        acc[l0, f] += delta * _eval_v(vparams, f, pos)
                    if use_cells:
                        flat = 0
                        ok = True
                        for j in range(d):
                            c = int(math.floor((pos[j] + rho) / cell_h))
                            if c < 0 or c >= ncell:
                                ok = False
                            flat = flat * ncell + c
                        if ok:
                            out_cells[i, flat] += delta
                elif r2 > R2:
                    if not exact:
                        break
                    if rng.random() >= (rho2 / r2) ** ((d - 2) / 2.0):
                        break
                    _reentry(rng, pos, rho, tmp)
                    continue
                for j in range(d):
                    pos[j] += sd * rng.standard_normal()
        for l in range(L):
            if l > 0:
                cnt[l] += cnt[l - 1]
                for f in range(nf):
                    acc[l, f] += acc[l - 1, f]
            out_counts[i, l] = cnt[l]
            for f in range(nf):
                out_func[i, l, f] = acc[l, f]


@njit(cache=True, nogil=True)
def _bm_paths(rng, mean_count, rho, delta, R2, exact, d, max_steps):
    """Record polylines of one cloud: rows (path id, step, x_1..x_d)."""
    ntraj = poisson_draw(rng, mean_count)
    rows = np.zeros((max_steps, d + 2))
    pos = np.zeros(d)
    tmp = np.zeros(d)
    sd = math.sqrt(delta)
    k = 0
    for p in range(ntraj):
        _uniform_sphere(rng, pos, rho)
        step = 0
        while k < max_steps:
            rows[k, 0] = p
            rows[k, 1] = step
            for j in range(d):
                rows[k, 2 + j] = pos[j]
            k += 1
            step += 1
            r2 = 0.0
            for j in range(d):
                r2 += pos[j] * pos[j]
            if r2 > R2:
                if not exact or rng.random() >= (rho * rho / r2) ** ((d - 2) / 2.0):
                    break
                _reentry(rng, pos, rho, tmp)
                continue
            for j in range(d):
                pos[j] += sd * rng.standard_normal()
    return ntraj, rows[:k]


@njit(cache=True, nogil=True)
def _reentry_batch(rng, x, rho, n):
    d = x.size
    out = np.zeros((n, d))
    pos = np.zeros(d)
    tmp = np.zeros(d)
    for i in range(n):
        for j in range(d):
            pos[j] = x[j]
        _reentry(rng, pos, rho, tmp)
        for j in range(d):
            out[i, j] = pos[j]
    return out


# ---------------------------------------------------------------------------
# python API

def default_delta(rho: float) -> float:
    return (rho / 100.0) ** 2


def _vparams(V_list, d, rho):
    if not V_list:
        return np.zeros((0, 3 + d))
    rows = []
    for V in V_list:
        if V.dimension != d:
            raise ValueError("test function dimension mismatch")
        c = np.asarray(V.center)
        if np.linalg.norm(c) + V.support_radius > rho * (1 + 1e-12):
            raise ValueError("test function support is not inside the observation ball")
        rows.append(V.kernel_params())
    return np.ascontiguousarray(np.array(rows))


@dataclass(eq=False)
class BrownianSampler:
    """Sampler of <L_alpha, V> for a list of test functions.

    Parameters
    ----------
    rho : float
        Observation radius; every V must be supported in B(0, rho).
    V_list : list of TestFunction
    delta : float, optional
        Time step, default (rho/100)^2.
    escape_radius : float, optional
        Default 4 rho.
    mode : {"exact", "truncated"}
    d : int
    """

    rho: float
    V_list: list
    delta: float | None = None
    escape_radius: float | None = None
    mode: str = "exact"
    d: int = 3

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.delta is None:
            self.delta = default_delta(self.rho)
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.escape_radius is None:
            self.escape_radius = 4.0 * self.rho
        if self.escape_radius <= self.rho:
            raise ValueError("escape radius must exceed rho")
        if self.mode not in ("exact", "truncated"):
            raise ValueError("mode must be 'exact' or 'truncated'")
        self._params = _vparams(list(self.V_list), self.d, self.rho)

    @property
    def capacity(self) -> float:
        return capacity_ball_continuum(self.rho, self.d)

    def run_block(self, rng, n: int, levels, cell_size: float | None = None):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        levels = np.asarray(levels, dtype=float).reshape(-1)
        if np.any(np.diff(levels) < 0) or np.any(levels < 0):
            raise ValueError("levels must be nonnegative and sorted")
        L, nf = len(levels), len(self._params)
        out_func = np.zeros((n, L, nf))
        out_counts = np.zeros((n, L), dtype=np.int64)
        ncell = 0 if cell_size is None else int(math.ceil(2 * self.rho / cell_size))
        out_cells = np.zeros((n, ncell ** self.d) if ncell else (1, 1))
        if levels[-1] > 0 and n > 0:
            _bm_block(rng, n, levels, levels[-1] * self.capacity, self.rho,
                      self.delta, self.escape_radius ** 2, self.mode == "exact", self._params,
                      out_func, out_counts, float(cell_size or 1.0), ncell, out_cells)
        return out_func, out_counts, (out_cells if ncell else None)

    def functionals(self, levels, n: int, seed: int, stream: str = "bm", workers: int = 1):
        def work(b, start, stop):
            return self.run_block(block_rng(seed, stream, b), stop - start, levels)[:2]
        parts = run_blocks(work, n, workers, block_size=512)
        return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def sample_brownian_cloud(alpha: float, rho: float, seed: int, V_list=(), *, delta=None,
                          escape_radius=None, mode: str = "exact", d: int = 3,
                          cell_size: float | None = None, record_paths: int = 0) -> BrownianCloudSample:
    """One cloud of Brownian interlacements seen from B(0, rho).

    ``record_paths > 0`` additionally returns up to that many polyline rows
    (path id, step, coordinates) of an independent cloud with the same law.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    s = BrownianSampler(rho, list(V_list), delta, escape_radius, mode, d)
    func, counts, cells = s.run_block(seed, 1, [alpha], cell_size)
    paths = None
    if record_paths:
        _, paths = _bm_paths(np.random.default_rng([seed, 1]), alpha * s.capacity, rho, s.delta,
                             s.escape_radius ** 2, mode == "exact", d, int(record_paths))
    return BrownianCloudSample(float(alpha), rho, s.delta, int(counts[0, 0]), func[0, 0],
                               None if cells is None else cells[0], paths)


def sample_reentry_points(x, rho: float, n: int, seed: int) -> np.ndarray:
    """n draws from the hitting distribution of the sphere seen from x (|x| > rho)."""
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) <= rho:
        raise ValueError("starting point must lie outside the ball")
    return _reentry_batch(np.random.default_rng(seed), x, rho, n)


def vacant_probe(alpha: float, radius: float, n_clouds: int, seed: int, d: int = 3,
                 thickening: float = 0.0, probe: str = "ball"):
    """Fraction of clouds with no trajectory entering the ball K_r.

    Returns (estimate, standard error, exact value e^{-alpha cap(K_r)}).
    """
    if probe != "ball":
        raise ValueError("only ball probes have a closed-form capacity")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    cap = capacity_ball_continuum(radius + thickening, d)
    counts = poisson_batch(block_rng(seed, "vacant", 0), int(n_clouds), alpha * cap)
    p = float(np.mean(counts == 0))
    se = math.sqrt(max(p * (1 - p), 1e-300) / n_clouds)
    return p, se, math.exp(-alpha * cap)


@dataclass
class ScalingProbe:
    """Samples of both sides of the Brownian scaling identity.

    Side A is <L_alpha, V> (observation ball rho, step delta). Side B is
    lam^2 <L_{lam^{d-2} alpha}, V(lam .)>, sampled with ball rho/lam and step
    delta/lam^2, so both sides use the same resolution relative to V.
    """

    side_a: np.ndarray
    side_b: np.ndarray
    convention: str


def scaling_invariance_probe(alpha: float, lam: float, V: TestFunction, delta: float, n: int,
                             seed: int, rho: float | None = None, escape_factor: float = 4.0,
                             workers: int = 1) -> ScalingProbe:
    if lam <= 0:
        raise ValueError("lam must be positive")
    d = V.dimension
    rho = rho or (np.linalg.norm(V.center) + V.support_radius)
    A = BrownianSampler(rho, [V], delta, escape_factor * rho, "exact", d)
    a, _ = A.functionals([alpha], n, seed, "scaling-A", workers)
    Vb = V.dilated(lam)
    B = BrownianSampler(rho / lam, [Vb], delta / lam ** 2, escape_factor * rho / lam, "exact", d)
    b, _ = B.functionals([lam ** (d - 2) * alpha], n, seed, "scaling-B", workers)
    conv = ("L_alpha equals in law lam^2 times the image of L_{lam^(d-2) alpha} under y -> lam*y; "
            "side B = lam^2 <L_{lam^(d-2) alpha}, V(lam .)>")
    return ScalingProbe(a[:, 0, 0], lam ** 2 * b[:, 0, 0], conv)
