"""Gaussian free fields on finite index sets and their Wick squares.

Two kinds of field are sampled from an explicit covariance matrix:

* the lattice GFF phi on a window of Z^d, covariance g(x - x');
* the mollified continuum field Phi_{y, eps} on points of R^3, covariance
  G_eps(y - y') = (G * rho_eps * rho_eps)(y - y').

For a radial mollifier, psi = rho * rho is radial too and the shell theorem
gives G_1(r) = 2 int psi(s) s^2 / max(r, s) ds, with G_eps(r) = G_1(r/eps)/eps.
In particular G_eps = G beyond 2 eps.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, linalg
from scipy.special import exp1

from .potential import GreenTable, green_continuum
from .seeding import block_rng, run_blocks
from .testfunctions import LatticeFunction, TestFunction, discretize

_GL_X, _GL_W = leggauss(48)


def _gl(a, b):
    """Gauss-Legendre nodes/weights on [a, b] (broadcast over arrays a, b)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return half * _GL_X + 0.5 * (a + b), half * _GL_W


# ---------------------------------------------------------------------------
# mollifier

@dataclass(frozen=True)
class MollifierSpec:
    """rho_eps(z) = eps^-3 rho(z/eps) with rho = C exp(-1/(1-|z|^2)) on B(0,1)."""

    eps: float
    profile: str = "bump"

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.profile != "bump":
            raise ValueError("only the standard bump profile is implemented")

    @cached_property
    def norm_constant(self) -> float:
        val, _ = integrate.quad(lambda s: math.exp(-1.0 / (1.0 - s * s)) * s * s, 0.0, 1.0,
                                epsabs=1e-15, epsrel=1e-14)
        return 1.0 / (4.0 * math.pi * val)

    def density(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        s2 = np.sum(z * z, axis=-1) / self.eps ** 2
        out = np.zeros_like(s2)
        m = s2 < 1
        out[m] = np.exp(-1.0 / (1.0 - s2[m]))
        return out * self.norm_constant / self.eps ** 3

    def _rho1(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        m = np.abs(s) < 1
        out[m] = self.norm_constant * np.exp(-1.0 / (1.0 - s[m] ** 2))
        return out

    def _Q(self, a):
        """int_0^a rho_1(s) s ds in closed form (exponential integral)."""
        a = np.clip(np.asarray(a, dtype=float), 0.0, 1.0)
        w = 1.0 - a * a

        def F(w):
            w = np.asarray(w, dtype=float)
            out = np.zeros_like(w)
            m = w > 0
            out[m] = w[m] * np.exp(-1.0 / w[m]) - exp1(1.0 / w[m])
            return out
        return 0.5 * self.norm_constant * (F(1.0) - F(w))

    def _psi(self, t):
        """(rho_1 * rho_1)(t), radial profile on [0, 2]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        small = t < 1e-7
        if np.any(small):
            out[small] = self._psi0
        tt = t[~small & (t < 2.0)]
        if tt.size:
            total = np.zeros_like(tt)
            # split [0, 1] at the kinks r = t and r = 1 - t
            cuts = np.sort(np.stack([np.zeros_like(tt), np.clip(tt, 0, 1), np.clip(1 - tt, 0, 1),
                                     np.ones_like(tt)], axis=1), axis=1)
            for k in range(3):
                r, w = _gl(cuts[:, k], cuts[:, k + 1])
                T = tt[:, None]
                inner = self._Q(np.minimum(T + r, 1.0)) - self._Q(np.minimum(np.abs(T - r), 1.0))
                total += np.sum(w * self._rho1(r) * r * inner, axis=1)
            out[~small & (t < 2.0)] = 2.0 * math.pi / tt * total
        return out

    @cached_property
    def _psi0(self) -> float:
        val, _ = integrate.quad(lambda s: (self.norm_constant * math.exp(-1.0 / (1.0 - s * s))) ** 2 * s * s,
                                0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
        return 4.0 * math.pi * val

    def _green_unit(self, r):
        """G_1(r) = (2/r) int_0^r psi s^2 ds + 2 int_r^2 psi s ds."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        far = r >= 2.0
        out[far] = 1.0 / (2.0 * math.pi * r[far])
        near = ~far
        if np.any(near):
            rr = r[near]
            acc = np.zeros_like(rr)
            # panels keep the quadrature accurate near both endpoints
            edges = np.linspace(0.0, 1.0, 5)
            for a, b in zip(edges[:-1], edges[1:]):
                s, w = _gl(a * rr, b * rr)
                psi = self._psi(s.ravel()).reshape(s.shape)
                acc += 2.0 * np.sum(w * psi * s * s, axis=1) / np.where(rr > 0, rr, 1.0) * (rr > 0)
                s, w = _gl(rr + a * (2.0 - rr), rr + b * (2.0 - rr))
                psi = self._psi(s.ravel()).reshape(s.shape)
                acc += 2.0 * np.sum(w * psi * s, axis=1)
            out[near] = acc
        return out

    @cached_property
    def green_at_zero(self) -> float:
        """G_eps(0) = G_1(0) / eps."""
        return float(self._green_unit(np.array([0.0]))[0]) / self.eps

    def green(self, r) -> np.ndarray:
        """G_eps as a function of the distance r (vectorized, unique values cached)."""
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        key = np.round(flat / self.eps, 12)
        uniq, inv = np.unique(key, return_inverse=True)
        memo = self._memo
        todo = np.array([k for k in uniq.tolist() if k not in memo])
        if todo.size:
            for k, v in zip(todo.tolist(), self._green_unit(todo).tolist()):
                memo[k] = v
        vals = np.array([memo[k] for k in uniq.tolist()]) / self.eps
        return vals[inv].reshape(r.shape)

    @cached_property
    def _memo(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"eps": self.eps, "profile": "exp(-1/(1-|z|^2)) normalized"}


def mollified_green(y, spec: MollifierSpec, d: int = 3):
    """G_eps(y) for y in R^3 (last axis = coordinates)."""
    if d != 3:
        raise ValueError("mollified Green function is implemented for d = 3")
    y = np.asarray(y, dtype=float)
    out = spec.green(np.linalg.norm(y, axis=-1))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Gaussian sampling

class FactorizationError(RuntimeError):
    pass


@dataclass(eq=False)
class GaussianSampler:
    """Centered Gaussian vectors with covariance ``cov`` via one cached factor.

    Cholesky is tried first; if it fails, a pivoted LDL^T decomposition is
    accepted when the negative part of D is below ``psd_tol`` times the
    largest pivot (then clipped to zero).
    """

    cov: np.ndarray
    psd_tol: float = 1e-10
    advice: str = ""
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        self.cov = cov
        try:
            self.factor = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            lu, dmat, perm = linalg.ldl(cov, lower=True)
            ev = np.linalg.eigvalsh(dmat)
            if ev.min() < -self.psd_tol * max(ev.max(), 1e-300):
                raise FactorizationError(
                    f"covariance is not positive semidefinite (min pivot {ev.min():.3e}). "
                    + self.advice) from None
            w, q = np.linalg.eigh(dmat)
            self.factor = lu @ q @ np.diag(np.sqrt(np.clip(w, 0, None)))

    @property
    def dimension(self) -> int:
        return self.cov.shape[0]

    def sample(self, rng, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.dimension))
        return z @ self.factor.T

    def functionals(self, fn, n: int, seed: int, stream: str, workers: int = 1,
                    block_size: int = 2048) -> np.ndarray:
        """Concatenate ``fn(block_of_samples)`` over blocks of derived seeds."""
        def work(b, start, stop):
            return np.asarray(fn(self.sample(block_rng(seed, stream, b), stop - start)))
        parts = run_blocks(work, n, workers, block_size)
        return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class FieldSample:
    """Draws of a Gaussian field: ``values[i, k]`` is draw i at index k."""

    index_set: np.ndarray
    values: np.ndarray
    kind: str
    params: dict
    variance: float

    def __len__(self):
        return self.values.shape[0]


def discrete_gff_sampler(window, table: GreenTable) -> GaussianSampler:
    window = np.asarray(window, dtype=np.int64)
    return GaussianSampler(table.matrix(window),
                           advice="The Green table is probably inaccurate.")


def sample_discrete_gff(window, table: GreenTable, n: int, seed: int, *, workers: int = 1,
                        sampler: GaussianSampler | None = None) -> FieldSample:
    """n draws of the lattice GFF restricted to ``window`` (full-space covariance)."""
    window = np.asarray(window, dtype=np.int64)
    sampler = sampler or discrete_gff_sampler(window, table)
    vals = sampler.functionals(lambda x: x, n, seed, "gff", workers) if n else np.zeros((0, len(window)))
    return FieldSample(window, vals.reshape(n, len(window)), "discrete-GFF",
                       {"d": table.dimension}, table.g0)


def mollified_gff_sampler(points, spec: MollifierSpec) -> GaussianSampler:
    points = np.asarray(points, dtype=float)
    diff = points[:, None, :] - points[None, :, :]
    cov = spec.green(np.linalg.norm(diff, axis=-1))
    return GaussianSampler(cov, advice="Use a larger eps relative to the grid spacing.")


def sample_mollified_gff(points, spec: MollifierSpec, n: int, seed: int, *, spacing=None,
                         workers: int = 1, sampler: GaussianSampler | None = None) -> FieldSample:
    """n draws of Phi_{., eps} at the given points of R^3."""
    points = np.asarray(points, dtype=float)
    sampler = sampler or mollified_gff_sampler(points, spec)
    vals = sampler.functionals(lambda x: x, n, seed, "mollified-gff", workers) if n else np.zeros((0, len(points)))
    return FieldSample(points, vals.reshape(n, len(points)), "mollified-continuum-GFF",
                       {"eps": spec.eps, "spacing": spacing}, spec.green_at_zero)


def rescale_lattice_field(sample: FieldSample, N: int) -> FieldSample:
    """phi_{y,N} = sqrt(N^{d-2}/d) phi_{Ny}, indexed by the lattice sites x = Ny."""
    if sample.kind != "discrete-GFF":
        raise ValueError("only lattice fields can be rescaled")
    d = sample.index_set.shape[1]
    c = math.sqrt(N ** (d - 2) / d)
    return FieldSample(sample.index_set, c * sample.values, "rescaled-lattice-GFF",
                       {"d": d, "N": N}, c * c * sample.variance)


# ---------------------------------------------------------------------------
# Wick squares and pairings

def wick_square(sample: FieldSample) -> np.ndarray:
    """:phi^2: = phi^2 - Var(phi) pointwise."""
    return sample.values ** 2 - sample.variance


def shifted_wick_square(sample: FieldSample, shift: float) -> np.ndarray:
    """:(phi + s)^2: = :phi^2: + 2 s phi + s^2."""
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    return wick_square(sample) + 2.0 * shift * sample.values + shift * shift


def field_weights(sample_or_index, V, N: int | None = None, spacing: float | None = None) -> np.ndarray:
    """Cell-weighted values of V on the index set (N^-d V(x/N) or h^d V(y)).

    Rejects V whose lattice/grid support is not contained in the index set.
    """
    index = getattr(sample_or_index, "index_set", sample_or_index)
    index = np.asarray(index)
    d = index.shape[1]
    if N is not None:
        if isinstance(V, LatticeFunction):
            lf = V
        else:
            lf = discretize(V, N)
        pos = {tuple(s): i for i, s in enumerate(index.tolist())}
        w = np.zeros(len(index))
        for s, v in zip(lf.sites.tolist(), lf.values):
            if tuple(s) not in pos:
                raise ValueError("test function support exceeds the sampled window")
            w[pos[tuple(s)]] = v
        return w / N ** d
    if spacing is None:
        raise ValueError("give N (lattice) or spacing (grid)")
    vals = V(index)
    if isinstance(V, TestFunction):
        # every grid point of the support must be present
        c = np.asarray(V.center)
        r = V.support_radius
        lo = np.ceil((c - r) / spacing - 1e-9)
        hi = np.floor((c + r) / spacing + 1e-9)
        axes = [np.arange(a, b + 1) * spacing for a, b in zip(lo, hi)]
        full = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        need = full[V(full) != 0]
        have = {tuple(np.round(p / spacing).astype(np.int64)) for p in index}
        if any(tuple(np.round(p / spacing).astype(np.int64)) not in have for p in need):
            raise ValueError("test function support exceeds the sampled grid")
    return vals * spacing ** d


def pair_field_with_test_function(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-draw pairing sum_k weights[k] values[i, k]."""
    return np.asarray(values) @ np.asarray(weights)


def lattice_field_pairing(sample: FieldSample, V, N: int) -> np.ndarray:
    """<Phi^N, V> = (d^{-1/2} N^{-d/2-1}) sum_x phi_x V(x/N) for each draw."""
    d = sample.index_set.shape[1]
    w = field_weights(sample, V, N=N) * N ** d
    return sample.values @ w / (math.sqrt(d) * N ** (d / 2 + 1))


def dump_samples(sample: FieldSample, path, max_draws: int | None = None) -> None:
    """Columnar dump: draw, coordinates..., value."""
    d = sample.index_set.shape[1]
    n = len(sample) if max_draws is None else min(max_draws, len(sample))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw"] + [f"x{j}" for j in range(d)] + ["value"])
        for i in range(n):
            for k, p in enumerate(sample.index_set.tolist()):
                w.writerow([i, *p, repr(float(sample.values[i, k]))])


def grid_points(spacing: float, lo: float, hi: float, d: int = 3) -> np.ndarray:
    """Points k*spacing with lo <= k*spacing < hi in every coordinate (a box of L_N)."""
    k = np.arange(math.ceil(lo / spacing - 1e-9), math.ceil(hi / spacing - 1e-9))
    mesh = np.meshgrid(*([k] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1) * spacing


def continuum_green_matrix(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return green_continuum(points[:, None, :] - points[None, :, :])
