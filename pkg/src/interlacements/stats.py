"""Estimators with jackknife standard errors and SE-based verdicts.

All sums go through :func:`math.fsum`, so every estimate is independent of
the order of the samples (and hence of how they were split over workers).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sstats

DEFAULT_K = 3.0
GRID_K = 4.0
# two-sided level of a single 3-SE check
THREE_SIGMA_LEVEL = 2.0 * sstats.norm.sf(3.0)


class MGFDomainError(ValueError):
    """Raised for z values where e^{z X} overflows or leaves the admissible interval."""


def _fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel())


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


@dataclass
class MomentReport:
    """Sample moments with jackknife standard errors and an MGF table."""

    n: int
    mean: Estimate
    variance: Estimate
    third_cumulant: Estimate
    mgf_grid: list = field(default_factory=list)  # (z, mgf, se)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Verdict:
    """pass iff |statistic - oracle| <= tolerance, tolerance = k * se + allowance."""

    experiment: str
    name: str
    statistic: float
    oracle: float
    se: float
    k: float
    allowance: float = 0.0
    gating: bool = True
    note: str = ""

    @property
    def tolerance(self) -> float:
        return self.k * self.se + self.allowance

    @property
    def deviation(self) -> float:
        return abs(self.statistic - self.oracle)

    @property
    def passed(self) -> bool:
        return bool(self.deviation <= self.tolerance)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "name": self.name, "statistic": self.statistic,
                "oracle": self.oracle, "se": self.se, "k": self.k, "allowance": self.allowance,
                "tolerance": self.tolerance, "deviation": self.deviation, "pass": self.passed,
                "gating": self.gating, "note": self.note}


def check(experiment: str, name: str, statistic: float, oracle: float, se: float, k: float = DEFAULT_K,
          allowance: float = 0.0, gating: bool = True, note: str = "") -> Verdict:
    return Verdict(experiment, name, float(statistic), float(oracle), float(se), float(k),
                   float(allowance), gating, note)


def bonferroni_multiplier(m: int, family_level: float = THREE_SIGMA_LEVEL) -> float:
    """SE multiple giving two-sided family-wise level ``family_level`` over m checks."""
    if m < 1:
        raise ValueError("family size must be positive")
    return float(sstats.norm.isf(family_level / (2.0 * m)))


# ---------------------------------------------------------------------------
# moments

def _jackknife_se(theta_loo: np.ndarray) -> float:
    n = len(theta_loo)
    centered = theta_loo - _fsum(theta_loo) / n
    return math.sqrt((n - 1) / n * _fsum(centered * centered))


def mean_estimate(x) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    m = _fsum(x) / n
    y = x - m
    return Estimate(m, math.sqrt(_fsum(y * y) / (n - 1) / n))


def _cumulants_loo(y: np.ndarray, P2: float, P3: float, n: int):
    """Leave-one-out k-statistics k2, k3 from power sums of centered data."""
    m = n - 1
    mu = -y / m
    p2 = (P2 - y * y) / m
    p3 = (P3 - y ** 3) / m
    c2 = p2 - mu * mu
    c3 = p3 - 3 * mu * p2 + 2 * mu ** 3
    k2 = c2 * m / (m - 1)
    k3 = c3 * m * m / ((m - 1) * (m - 2))
    return k2, k3


def cumulant_loo(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leave-one-out mean, variance and third cumulant for each sample.

    Jackknife SEs of smooth combinations of several statistics computed on
    the same draws follow from these arrays via :func:`jackknife_se`.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    m = _fsum(x) / n
    y = x - m
    y = y - _fsum(y) / n
    P2, P3 = _fsum(y * y), _fsum(y ** 3)
    k2, k3 = _cumulants_loo(y, P2, P3, n)
    return m - y / (n - 1), k2, k3


def jackknife_se(theta_loo) -> float:
    return _jackknife_se(np.asarray(theta_loo, dtype=float))


def cumulant_estimates(x) -> tuple[Estimate, Estimate, Estimate]:
    """Mean, variance and third cumulant (k-statistics) with jackknife SEs."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        raise ValueError("need at least four samples")
    mean = mean_estimate(x)
    y = x - mean.value
    # remove the rounding residue of the centering
    y = y - _fsum(y) / n
    P2, P3 = _fsum(y * y), _fsum(y ** 3)
    k2 = P2 / (n - 1)
    k3 = P3 / n * n * n / ((n - 1) * (n - 2))
    k2_loo, k3_loo = _cumulants_loo(y, P2, P3, n)
    return mean, Estimate(k2, _jackknife_se(k2_loo)), Estimate(k3, _jackknife_se(k3_loo))


def empirical_mgf(samples, z_grid, admissible: tuple[float, float] | None = None) -> MomentReport:
    """Moments plus mean of e^{z X} (with SE) for each z in the grid.

    ``admissible`` is the open interval supplied by the relevant oracle; z
    outside it, or z making e^{z X} overflow, raises :class:`MGFDomainError`.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    mean, var, k3 = cumulant_estimates(x)
    grid = []
    xmax, xmin = float(np.max(x)), float(np.min(x))
    for z in z_grid:
        z = float(z)
        if admissible is not None and not (admissible[0] < z < admissible[1]):
            raise MGFDomainError(f"z = {z} outside the admissible interval {admissible}")
        if max(z * xmax, z * xmin) > 700.0:
            bound = 700.0 / max(abs(xmax), abs(xmin), 1e-300)
            raise MGFDomainError(f"e^(z X) overflows at z = {z}; |z| must stay below {bound:.4g}"
                                 + (f" (admissible interval {admissible})" if admissible else ""))
        if z == 0.0:
            grid.append((0.0, 1.0, 0.0))
            continue
        e = mean_estimate(np.exp(z * x))
        grid.append((z, e.value, e.se))
    return MomentReport(n, mean, var, k3, grid)


def bootstrap_se(x, statistic, n_boot: int, rng: np.random.Generator) -> float:
    """Plain nonparametric bootstrap SE (used to sanity-check the jackknife)."""
    x = np.asarray(x, dtype=float)
    vals = np.array([statistic(x[rng.integers(0, len(x), len(x))]) for _ in range(n_boot)])
    return float(np.std(vals, ddof=1))


# ---------------------------------------------------------------------------
# tests

def compare_reports(experiment: str, label: str, a: MomentReport, b: MomentReport, k: float,
                    gating: bool = True) -> list[Verdict]:
    out = []
    for name in ("mean", "variance", "third_cumulant"):
        ea, eb = getattr(a, name), getattr(b, name)
        out.append(check(experiment, f"{label}{name}", ea.value - eb.value, 0.0,
                         math.hypot(ea.se, eb.se), k, gating=gating))
    for (z, ma, sa), (_, mb, sb) in zip(a.mgf_grid, b.mgf_grid):
        if z == 0.0:
            out.append(check(experiment, f"{label}mgf[z=0]", ma - mb, 0.0, 0.0, k, gating=gating))
            continue
        out.append(check(experiment, f"{label}mgf[z={z:g}]", ma - mb, 0.0, math.hypot(sa, sb), k,
                         gating=gating))
    return out


def two_sample_identity_test(samples_a, samples_b, z_grid, moments_upto: int = 3, *, k: float = GRID_K,
                             experiment: str = "", label: str = "",
                             admissible: tuple[float, float] | None = None) -> list[Verdict]:
    """Verdicts for 'A and B have the same law' from independent samples.

    Means, variances, third cumulants and MGF values at each z are compared
    at ``k`` standard errors of the difference; the note of each verdict
    records the Bonferroni bound on the family-wise error at that multiple.
    """
    if moments_upto != 3:
        raise ValueError("moments up to order 3 are compared")
    z_grid = list(z_grid)
    fam = 3 + sum(1 for z in z_grid if z != 0)
    kk = float(k)
    ra = empirical_mgf(samples_a, z_grid, admissible)
    rb = empirical_mgf(samples_b, z_grid, admissible)
    level = fam * 2.0 * sstats.norm.sf(kk)
    out = compare_reports(experiment, label, ra, rb, kk)
    return [Verdict(v.experiment, v.name, v.statistic, v.oracle, v.se, v.k, v.allowance, v.gating,
                    f"family of {fam}, Bonferroni level <= {level:.2e}") for v in out]


def gaussian_limit_test(samples, target_variance: float, z_grid, *, k: float = DEFAULT_K,
                        experiment: str = "", target_third_cumulant: float = 0.0,
                        variance_allowance: float = 0.0, mgf_gating: bool = False,
                        label: str = "") -> list[Verdict]:
    """Mean ~ 0, variance ~ target, third cumulant ~ its exact value, MGF ~ e^{z^2 s^2/2}.

    The MGF comparison with the Gaussian limit is not exact at finite N and is
    reported as non-gating unless ``mgf_gating`` is set.
    """
    rep = empirical_mgf(samples, z_grid)
    out = [
        check(experiment, f"{label}mean", rep.mean.value, 0.0, rep.mean.se, k),
        check(experiment, f"{label}variance", rep.variance.value, target_variance, rep.variance.se, k,
              variance_allowance),
        check(experiment, f"{label}third_cumulant", rep.third_cumulant.value, target_third_cumulant,
              rep.third_cumulant.se, k),
    ]
    for z, m, se in rep.mgf_grid:
        out.append(check(experiment, f"{label}mgf[z={z:g}]", m, math.exp(0.5 * z * z * target_variance),
                         se, k, gating=mgf_gating))
    return out


def ks_normal_pvalue(samples, variance: float) -> float:
    """Kolmogorov-Smirnov p-value against N(0, variance); a non-gating diagnostic."""
    x = np.sort(np.asarray(samples, dtype=float))
    return float(sstats.kstest(x, "norm", args=(0.0, math.sqrt(variance))).pvalue)


def refinement_allowance(coarse: float, fine: float) -> float:
    """Bias allowance |m_coarse - m_fine| / 3 for a first-order scheme refined 4x."""
    return abs(coarse - fine) / 3.0
