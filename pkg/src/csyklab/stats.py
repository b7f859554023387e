"""Statistics of low-rank couplings.

A low-rank coupling is a normalized sum of ``R`` products of independent
Gaussians ``N(0, sigma^2)``::

    Y = R^(-1/2) * sum_a X_a X'_a

This module gives the exact densities (modified Bessel functions), their
characteristic functions, the large-R Edgeworth-type expansions, entropy and
KL divergence to the Gaussian limit, plus samplers and a chi-square harness
used as Monte-Carlo oracles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy import stats as sps

from .errors import ConfigError


@dataclass(frozen=True)
class ProductGaussianLaw:
    sigma: float = 1.0
    rank_r: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.rank_r < 1:
            raise ConfigError("rank_r must be >= 1")

    @property
    def variance(self) -> float:
        return self.sigma**4


def _gauss(y, var):
    return np.exp(-0.5 * y**2 / var) / np.sqrt(2 * np.pi * var)


# --- exact densities ------------------------------------------------------

def pdf_single_product(y, sigma: float = 1.0):
    """Density of X1*X2; diverges logarithmically (integrably) at y = 0."""
    y = np.abs(np.asarray(y, dtype=float))
    s2 = sigma**2
    with np.errstate(divide="ignore"):
        return special.k0(y / s2) / (np.pi * s2)


def pdf_sum_r(y, law: ProductGaussianLaw):
    """Exact density of the normalized R-sum of Gaussian products."""
    s2, r = law.sigma**2, law.rank_r
    if r == 1:
        return pdf_single_product(y, law.sigma)
    y = np.abs(np.asarray(y, dtype=float))
    nu = 0.5 * (r - 1)
    log_pref = 0.5 * np.log(r) - 0.5 * np.log(np.pi) - np.log(s2) - special.gammaln(0.5 * r)
    z = np.sqrt(r) * y / s2
    with np.errstate(divide="ignore", invalid="ignore"):
        # (z/2)^nu K_nu(z), using the scaled Bessel function to avoid underflow
        logk = nu * np.log(z / 2) + np.log(special.kve(nu, z)) - z
    at_zero = special.gammaln(nu) - np.log(2.0)
    logk = np.where(z == 0, at_zero, logk)
    return np.exp(log_pref + logk)


def characteristic_function(s, law: ProductGaussianLaw):
    s = np.asarray(s, dtype=float)
    return (1 + law.sigma**4 * s**2 / law.rank_r) ** (-0.5 * law.rank_r)


def characteristic_function_numeric(s: float, law: ProductGaussianLaw) -> float:
    """Fourier transform of :func:`pdf_sum_r` by cosine-weighted quadrature."""
    f = lambda y: pdf_sum_r(y, law)
    if s == 0:
        val, _ = integrate.quad(f, 0, np.inf, limit=400)
        return 2 * val
    # split off the neighbourhood of the origin where the R = 1 density is singular
    head, _ = integrate.quad(lambda y: f(y) * np.cos(s * y), 0, 1.0, limit=400, epsabs=1e-13)
    tail, _ = integrate.quad(f, 1.0, np.inf, weight="cos", wvar=s, limlst=200, epsabs=1e-13)
    return 2 * (head + tail)


def pdf_from_characteristic(y: float, law: ProductGaussianLaw) -> float:
    """Inverse Fourier transform of the characteristic function (R >= 2)."""
    phi = lambda s: characteristic_function(s, law)
    if y == 0:
        val, _ = integrate.quad(phi, 0, np.inf, limit=400, epsabs=1e-13)
    else:
        val, _ = integrate.quad(phi, 0, np.inf, weight="cos", wvar=abs(y), limlst=200, epsabs=1e-13)
    return val / np.pi


# --- large-R expansions ---------------------------------------------------

def pdf_sum_r_expansion(y, law: ProductGaussianLaw, order: int = 2):
    if order not in (0, 1, 2):
        raise ConfigError("order must be 0, 1 or 2")
    y = np.asarray(y, dtype=float)
    v, r = law.sigma**4, law.rank_r
    u = y**2 / v
    corr = np.ones_like(y)
    if order >= 1:
        corr = corr + (0.75 - 1.5 * u + 0.25 * u**2) / r
    if order >= 2:
        corr = corr + (25 / 32 - 45 / 8 * u + 65 / 16 * u**2 - 17 / 24 * u**3 + u**4 / 32) / r**2
    return _gauss(y, v) * corr


def pdf_joint_shared(y1, y2, sigma: float = 1.0):
    """Joint density of (X1*X3, X2*X3): uncorrelated but not independent."""
    rho = np.hypot(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
    s2 = sigma**2
    with np.errstate(divide="ignore"):
        return np.exp(-rho / s2) / (2 * np.pi * s2 * rho)


def pdf_joint_shared_expansion(y1, y2, sigma: float, rank_r: float):
    v = sigma**4
    q = (np.asarray(y1, dtype=float) ** 2 + np.asarray(y2, dtype=float) ** 2) / v
    base = np.exp(-0.5 * q) / (2 * np.pi * v)
    return base * (1 + (2 - 2 * q + 0.25 * q**2) / rank_r)


def pdf_joint_local_effective_expansion(x, y, sigma: float, rank_r: float):
    """Joint density of a single local coupling sum and the effective product sum."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, b = x**2 / sigma**2, y**2 / sigma**4
    base = np.exp(-0.5 * a - 0.5 * b) / (2 * np.pi * sigma**3)
    return base * (1 + (1.25 - 0.5 * a - 2 * b + 0.5 * a * b + 0.25 * b**2) / rank_r)


# --- information measures -------------------------------------------------

def _support(law: ProductGaussianLaw) -> float:
    # beyond this the density is below ~1e-16 of its peak for any R
    return 40.0 * law.sigma**2


def _sym_quad(f, law):
    top = _support(law)
    total = 0.0
    for a, b in ((0.0, 1e-3 * law.sigma**2), (1e-3 * law.sigma**2, law.sigma**2), (law.sigma**2, top)):
        val, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)
        total += val
    return 2 * total


def gaussian_entropy(sigma: float) -> float:
    return 0.5 * (1 + np.log(2 * np.pi * sigma**4))


def shannon_entropy(law: ProductGaussianLaw, method: str = "analytic_expansion") -> float:
    if method == "analytic_expansion":
        return gaussian_entropy(law.sigma) - 0.75 / law.rank_r**2
    if method == "quadrature":
        def f(y):
            p = pdf_sum_r(y, law)
            return -p * np.log(p) if p > 0 else 0.0

        return _sym_quad(f, law)
    raise ConfigError(f"unknown method {method!r}")


def kl_to_gaussian(law: ProductGaussianLaw, method: str = "analytic_expansion") -> float:
    """KL divergence D(Q || P_R) with Q the Gaussian of equal variance."""
    if method == "analytic_expansion":
        return 0.75 / law.rank_r**2
    if method == "quadrature":
        v = law.variance

        def f(y):
            q = _gauss(y, v)
            if q == 0:
                return 0.0
            return q * (np.log(q) - np.log(pdf_sum_r(y, law)))

        return _sym_quad(f, law)
    raise ConfigError(f"unknown method {method!r}")


# --- samplers -------------------------------------------------------------

def sample_sum_r(rng: np.random.Generator, n: int, law: ProductGaussianLaw, chunk: int = 250_000):
    out = np.empty(n)
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        x = rng.normal(0, law.sigma, size=(2, m, law.rank_r))
        out[start : start + m] = (x[0] * x[1]).sum(axis=1) / np.sqrt(law.rank_r)
    return out


def sample_joint_shared(rng: np.random.Generator, n: int, sigma: float = 1.0, rank_r: int = 1):
    """Samples of two R-sums sharing one Gaussian factor per term."""
    x = rng.normal(0, sigma, size=(3, n, rank_r))
    norm = np.sqrt(rank_r)
    return (x[0] * x[2]).sum(axis=1) / norm, (x[1] * x[2]).sum(axis=1) / norm


def sample_joint_local_effective(rng: np.random.Generator, n: int, sigma: float, rank_r: int):
    x = rng.normal(0, sigma, size=(2, n, rank_r))
    norm = np.sqrt(rank_r)
    return x[0].sum(axis=1) / norm, (x[0] * x[1]).sum(axis=1) / norm


# --- goodness of fit ------------------------------------------------------

def _bin_probability(pdf, a, b):
    pts = [0.0] if a < 0 < b else None
    val, _ = integrate.quad(pdf, a, b, points=pts, limit=200, epsabs=1e-13)
    return val


def chi2_test_1d(samples, pdf, bins: int = 100, span: float | None = None, min_expected: float = 5.0):
    """Pearson chi-square of a histogram against a density.

    Bins are equal-width on ``[-span, span]`` with the two open tails as extra
    bins; bins with expected count below ``min_expected`` are merged into their
    neighbours.  Returns ``(statistic, p_value, dof)``.
    """
    samples = np.asarray(samples)
    n = len(samples)
    if span is None:
        span = float(np.quantile(np.abs(samples), 0.999))
    edges = np.linspace(-span, span, bins + 1)
    probs = np.array([_bin_probability(pdf, a, b) for a, b in zip(edges[:-1], edges[1:])])
    tail = max(0.0, 1.0 - probs.sum()) / 2
    counts = np.histogram(samples, bins=edges)[0]
    obs = np.concatenate([[np.sum(samples < -span)], counts, [np.sum(samples >= span)]])
    exp = n * np.concatenate([[tail], probs, [tail]])
    return _chi2_merged(obs, exp, min_expected)


def _chi2_merged(obs, exp, min_expected):
    mo, me = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            mo.append(acc_o)
            me.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if me:
            mo[-1] += acc_o
            me[-1] += acc_e
        else:
            mo.append(acc_o)
            me.append(acc_e)
    mo, me = np.array(mo), np.array(me)
    stat = float(np.sum((mo - me) ** 2 / me))
    dof = len(mo) - 1
    return stat, float(sps.chi2.sf(stat, dof)), dof


def _cell_probabilities_2d(pdf2, xe, ye, nodes: int = 12):
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    hx = 0.5 * np.diff(xe)
    cx = 0.5 * (xe[:-1] + xe[1:])
    hy = 0.5 * np.diff(ye)
    cy = 0.5 * (ye[:-1] + ye[1:])
    px = cx[:, None] + hx[:, None] * gx[None, :]  # (nx, q)
    py = cy[:, None] + hy[:, None] * gx[None, :]
    vals = pdf2(px[:, None, :, None], py[None, :, None, :])  # (nx, ny, q, q)
    w = gw[:, None] * gw[None, :]
    return np.einsum("abij,ij->ab", vals, w) * hx[:, None] * hy[None, :]


def chi2_test_2d(x, y, pdf2, bins: int = 20, span: tuple[float, float] | None = None,
                 min_expected: float = 5.0, nodes: int = 12):
    """Pearson chi-square of a 2D histogram against a joint density.

    Cell probabilities come from a tensor Gauss-Legendre rule; the mass
    outside the square window is one extra bin.
    """
    x, y = np.asarray(x), np.asarray(y)
    n = len(x)
    if span is None:
        span = (float(np.quantile(np.abs(x), 0.995)), float(np.quantile(np.abs(y), 0.995)))
    xe = np.linspace(-span[0], span[0], bins + 1)
    ye = np.linspace(-span[1], span[1], bins + 1)
    probs = _cell_probabilities_2d(pdf2, xe, ye, nodes)
    counts = np.histogram2d(x, y, bins=[xe, ye])[0]
    inside = counts.sum()
    obs = np.concatenate([counts.ravel(), [n - inside]])
    exp = n * np.concatenate([probs.ravel(), [max(0.0, 1.0 - probs.sum())]])
    order = np.argsort(exp)[::-1]  # merge small cells together at the end
    return _chi2_merged(obs[order], exp[order], min_expected)


def total_variation_2d(x, y, pdf2, bins: int = 40, span: tuple[float, float] = (4.0, 4.0), nodes: int = 8):
    """Total-variation distance between a 2D histogram and a density on a window."""
    xe = np.linspace(-span[0], span[0], bins + 1)
    ye = np.linspace(-span[1], span[1], bins + 1)
    probs = _cell_probabilities_2d(pdf2, xe, ye, nodes)
    emp = np.histogram2d(x, y, bins=[xe, ye])[0] / len(x)
    return 0.5 * float(np.abs(emp - probs).sum())


def tabulate(pdf, y_grid):
    """(y, pdf) rows for plotting."""
    y_grid = np.asarray(y_grid, dtype=float)
    return np.column_stack([y_grid, pdf(y_grid)])
