"""Chaos and thermodynamic probes on sector Hamiltonians.

Spectral form factor (SFF), its Trotter deviation, the symmetrized OTOC of
two hopping operators, pooled spectral densities, thermal energies and the
edge/bulk density fits, plus effective temperatures of occupation product
states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special
from scipy import stats as sps

from . import fock
from .dynamics import SpectrumCache, TrotterPlan, diagonalize, error_series
from .errors import ConfigError, FitError

__all__ = [
    "SpectrumCache", "diagonalize", "sff", "sff_series", "reference_times", "delta_sff", "otoc", "hop_pair_operator",
    "spectral_density", "ks_distance", "skewness", "thermal_energy", "fit_thermal_energy",
    "fit_schwarzian_edge", "fit_dssyk_bulk", "fit_linear_high_t", "product_state_diagnostics",
]


def _spec(h) -> SpectrumCache:
    return h if isinstance(h, SpectrumCache) else diagonalize(h)


# --- spectral form factor -------------------------------------------------

def sff(spec, t, beta: float = 0.0):
    """``|Z(beta + i t)|^2 / Z(beta)^2``, vectorized over ``t``."""
    e = _spec(spec).eigenvalues
    t = np.asarray(t, dtype=float)
    if beta == 0.0:
        z = np.exp(-1j * np.multiply.outer(t, e)).sum(axis=-1)
        return np.abs(z) ** 2 / len(e) ** 2
    w = np.exp(-beta * (e - e.min()))
    z = (w * np.exp(-1j * np.multiply.outer(t, e))).sum(axis=-1)
    return np.abs(z) ** 2 / w.sum() ** 2


def log_time_grid(t_min: float = 0.1, t_max: float = 1e4, points: int = 200) -> np.ndarray:
    return np.logspace(np.log10(t_min), np.log10(t_max), points)


def reference_times(times, rescale: float = 0.7) -> np.ndarray:
    """Reference-model times shown at ``times`` when its axis is compressed by ``rescale``.

    The reference curve is drawn at ``t_shown = rescale * t_ref``, which
    compensates the slower dynamics left after mean subtraction.
    """
    if rescale <= 0:
        raise ConfigError("time rescale must be positive")
    return np.asarray(times, dtype=float) / rescale


def sff_series(spectra, times, beta: float = 0.0) -> np.ndarray:
    """Ensemble-averaged SFF on a time grid."""
    return np.mean([sff(s, times, beta) for s in spectra], axis=0)


def sff_time_average(spec, t_start: float, t_stop: float, points: int = 4000, seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of the SFF over random times in ``[t_start, t_stop]``."""
    ts = np.random.default_rng(seed).uniform(t_start, t_stop, points)
    vals = sff(spec, ts)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(points))


def delta_sff(h_eff, factors, plan: TrotterPlan) -> float:
    """Average over n = 1..n_max of ``|SFF_eff(n dt) - SFF_T(n)|``."""
    s = error_series(h_eff, factors, plan)
    return float(np.abs(s["sff_eff"] - s["sff_trotter"]).mean())


# --- OTOC -----------------------------------------------------------------

def hop_pair_operator(sector: fock.FockSector, a: int, b: int) -> np.ndarray:
    """Hermitian hop ``c+_a c_b + c+_b c_a``."""
    op = fock.hopping_operator(sector, a, b)
    return op + op.conj().T


def otoc(h, sector: fock.FockSector, times, pairs=((0, 1), (2, 3)), imag_tol: float = 1e-10) -> np.ndarray:
    """``Tr[W(t) V W(t) V + V(t) W V(t) W] / (2 Tr[W^2 V^2])`` at infinite temperature."""
    (a, b), (c, d) = pairs
    if {a, b} & {c, d}:
        raise ConfigError("OTOC hopping pairs must act on different sites")
    spec = _spec(h)
    vecs, e = spec.eigenvectors, spec.eigenvalues
    w = vecs.conj().T @ hop_pair_operator(sector, a, b) @ vecs
    v = vecs.conj().T @ hop_pair_operator(sector, c, d) @ vecs
    norm = np.trace(w @ w @ v @ v)
    if abs(norm) < 1e-12:
        raise ConfigError("degenerate OTOC normalization Tr[W^2 V^2] = 0")
    out = np.empty(len(np.atleast_1d(times)))
    de = e[:, None] - e[None, :]
    for k, t in enumerate(np.atleast_1d(times)):
        ph = np.exp(1j * de * t)
        wt = ph * w
        vt = ph * v
        x = wt @ v
        y = vt @ w
        val = (np.sum(x * x.T) + np.sum(y * y.T)) / (2 * norm)
        if abs(val.imag) > imag_tol * max(1.0, abs(val.real)):
            raise FitError(f"OTOC has imaginary part {val.imag:.2e}")
        out[k] = val.real
    return out


# --- densities ------------------------------------------------------------

@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def pooled_eigenvalues(spectra, center: bool = False) -> np.ndarray:
    """Concatenate eigenvalues; ``center`` removes each realization's mean (a trace shift)."""
    out = []
    for s in spectra:
        e = _spec(s).eigenvalues if not isinstance(s, np.ndarray) or s.ndim != 1 else s
        out.append(e - e.mean() if center else e)
    if not out:
        raise ConfigError("empty ensemble")
    return np.concatenate(out)


def spectral_density(spectra, bins: int = 100, center: bool = False, range_=None) -> Histogram:
    e = pooled_eigenvalues(spectra, center)
    counts, edges = np.histogram(e, bins=bins, range=range_)
    density = counts / (counts.sum() * np.diff(edges))
    return Histogram(edges, density, counts)


def ks_distance(a, b) -> float:
    return float(sps.ks_2samp(a, b).statistic)


def skewness(x) -> float:
    return float(sps.skew(np.asarray(x)))


# --- thermodynamics -------------------------------------------------------

def thermal_energy(spec, beta):
    """``sum E exp(-beta E) / sum exp(-beta E)``, stable for large beta."""
    e = spec if isinstance(spec, np.ndarray) and spec.ndim == 1 else _spec(spec).eigenvalues
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    logw = -np.multiply.outer(beta, e)
    w = np.exp(logw - special.logsumexp(logw, axis=-1, keepdims=True))
    out = w @ e
    return out if out.size > 1 else float(out[0])


def fit_thermal_energy(energies, betas) -> dict:
    """Fit ``E0 + pi^2 / (calE beta^2) + c / beta`` to E(beta) on the given betas."""
    betas = np.asarray(betas, dtype=float)
    y = thermal_energy(energies, betas)
    a = np.column_stack([np.ones_like(betas), 1 / betas**2, 1 / betas])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    if coef[1] <= 0:
        raise FitError("non-positive 1/beta^2 coefficient in thermal-energy fit")
    return {"E0": float(coef[0]), "calE": float(np.pi**2 / coef[1]), "c": float(coef[2]),
            "residual": float(np.sqrt(np.mean((a @ coef - y) ** 2)))}


def trim_lowest(energies, count: int = 40) -> np.ndarray:
    e = np.sort(np.asarray(energies))
    return e[count:]


def _sch_model(e, amp, e0, scale):
    return amp * np.sinh(2 * np.pi * np.sqrt(np.clip(e - e0, 0, None) / scale))


def fit_schwarzian_edge(hist: Histogram, window: tuple[float, float], p0=None) -> dict:
    """Least-squares fit of ``A sinh(2 pi sqrt((E - E0)/calE))`` on the density window."""
    c = hist.centers
    sel = (c >= window[0]) & (c <= window[1])
    x, y = c[sel], hist.density[sel]
    if len(x) < 4 or np.any(hist.counts[sel] == 0):
        raise FitError("Schwarzian window has empty bins or too few points")
    if p0 is None:
        p0 = (y.max() / np.sinh(2 * np.pi), x[0] - 0.5 * (x[1] - x[0]), max(x[-1] - x[0], 1e-3))
    try:
        popt, pcov = optimize.curve_fit(_sch_model, x, y, p0=p0, maxfev=20000,
                                        bounds=([0, -np.inf, 1e-6], [np.inf, x[0], np.inf]))
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Schwarzian fit failed: {exc}") from exc
    err = np.sqrt(np.diag(pcov))
    return {"A": float(popt[0]), "E0": float(popt[1]), "calE": float(popt[2]),
            "stderr": {"E0": float(err[1]), "calE": float(err[2])}, "window": list(window)}


def _dssyk_model(e, amp, scale, shift):
    x = np.clip((e - shift) / scale, -1.0, 1.0)
    return amp * np.exp(-np.arcsin(x) ** 2)


def fit_dssyk_bulk(hist: Histogram, window: float | None = None) -> dict:
    """Fit ``A exp(-arcsin^2((E - E_c)/calE~))`` to the bulk of the density.

    The fit uses bins with ``|E - E_c| < window`` (default one standard
    deviation of the histogram), where the arcsin is defined.
    """
    if hist.counts.sum() == 0:
        raise FitError("empty histogram")
    c, y = hist.centers, hist.density
    mean = float(np.sum(c * y) / np.sum(y))
    sd = float(np.sqrt(np.sum((c - mean) ** 2 * y) / np.sum(y)))
    w = sd if window is None else window
    sel = np.abs(c - mean) < w
    if sel.sum() < 4:
        raise FitError("too few bins in the bulk window")
    try:
        popt, pcov = optimize.curve_fit(_dssyk_model, c[sel], y[sel], p0=(y.max(), 1.5 * sd, mean),
                                        bounds=([0, w, -np.inf], [np.inf, np.inf, np.inf]), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"bulk fit failed: {exc}") from exc
    return {"calE_tilde": float(popt[1]), "center": float(popt[2]), "A": float(popt[0]),
            "stderr": float(np.sqrt(pcov[1, 1])), "window": w}


def fit_linear_high_t(energies, betas) -> dict:
    """High-temperature slope ``E(beta) ~ E_c - calE~^2 beta / 2``."""
    betas = np.asarray(betas, dtype=float)
    y = thermal_energy(energies, betas)
    slope, intercept = np.polyfit(betas, y, 1)
    if slope >= 0:
        raise FitError("thermal energy not decreasing at high temperature")
    return {"calE_tilde": float(np.sqrt(-2 * slope)), "intercept": float(intercept)}


# --- product states -------------------------------------------------------

@dataclass
class ProductStateReport:
    labels: list
    energies: np.ndarray
    beta_eff: np.ndarray
    overlap_hist: np.ndarray
    bin_edges: np.ndarray
    weights: np.ndarray  # |<E_n|Psi>|^2, shape (states, D)


def solve_beta(spec_e: np.ndarray, target: float, beta_max: float = 1e3) -> float:
    """beta >= 0 with ``E(beta) = target``; 0 when the target is at or above ``E(0)``."""
    if target >= spec_e.mean():
        return 0.0
    if target <= spec_e.min():
        return np.inf
    hi = 1.0
    while thermal_energy(spec_e, hi) > target:
        hi *= 2
        if hi > beta_max:
            return np.inf
    return optimize.brentq(lambda b: thermal_energy(spec_e, b) - target, 0.0, hi, xtol=1e-12)


def product_state_diagnostics(spec, sector: fock.FockSector, bins: int = 50) -> ProductStateReport:
    """Energy, effective temperature and eigenstate-weight histogram of every basis state."""
    s = _spec(spec)
    weights = np.abs(s.eigenvectors) ** 2  # [basis state, eigenstate]
    energies = weights @ s.eigenvalues
    beta = np.array([solve_beta(s.eigenvalues, e) for e in energies])
    edges = np.linspace(s.eigenvalues[0], s.eigenvalues[-1], bins + 1)
    idx = np.clip(np.searchsorted(edges, s.eigenvalues, side="right") - 1, 0, bins - 1)
    hist = np.zeros((sector.dimension, bins))
    for b in range(bins):
        hist[:, b] = weights[:, idx == b].sum(axis=1)
    labels = [sector.label(i) for i in range(sector.dimension)]
    return ProductStateReport(labels, energies, beta, hist, edges, weights)
