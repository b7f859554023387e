"""Speckle-disordered detuning fields and the trap-mode couplings they induce.

A speckle field is the modulus of the Fourier transform of a circular
aperture filled with random unit phases, rescaled to unit spatial mean and
offset by one, so that ``values = Delta_ad(r) / Delta_ad >= 1`` with mean 2.
Couplings between 2D harmonic-trap eigenmodes are midpoint-rule integrals
over the pixel grid, evaluated separably in x and y.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import fft

from .errors import ConfigError, FitError
from .rng import stream

if TYPE_CHECKING:
    from .lindblad import CavityParams


@dataclass(frozen=True)
class SpeckleConfig:
    n_grid: int = 200
    dim_grid: float = 10.0
    mask_radius_px: float = 6.0

    def __post_init__(self):
        if self.n_grid < 2 or self.dim_grid <= 0:
            raise ConfigError("n_grid must be >= 2 and dim_grid positive")
        if not 0 < self.mask_radius_px < self.n_grid / 2:
            raise ConfigError("mask radius must lie in (0, n_grid/2)")

    @property
    def dx(self) -> float:
        return self.dim_grid / self.n_grid

    def axis(self) -> np.ndarray:
        """Pixel-centre coordinates in trap lengths."""
        return -0.5 * self.dim_grid + (np.arange(self.n_grid) + 0.5) * self.dx

    def mask(self) -> np.ndarray:
        p = np.arange(self.n_grid) - self.n_grid // 2
        return p[:, None] ** 2 + p[None, :] ** 2 <= self.mask_radius_px**2


@dataclass(frozen=True, eq=False)
class SpeckleField:
    config: SpeckleConfig
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    index: int = 0

    @classmethod
    def constant(cls, config: SpeckleConfig, value: float = 2.0) -> "SpeckleField":
        return cls(config, np.full((config.n_grid, config.n_grid), float(value)))


def _finish(amplitude: np.ndarray) -> np.ndarray:
    mean = amplitude.mean(axis=(-2, -1), keepdims=True)
    return amplitude / mean + 1.0


def speckle_from_phases(config: SpeckleConfig, phases: np.ndarray) -> np.ndarray:
    """Field values for given mask phases (one phase per mask pixel)."""
    a = np.zeros((config.n_grid, config.n_grid), dtype=complex)
    a[config.mask()] = np.exp(1j * np.asarray(phases))
    return _finish(np.abs(fft.fft2(a)))


def generate_speckle(config: SpeckleConfig, seed: int, index: int = 0) -> SpeckleField:
    mask = config.mask()
    phases = stream(seed, index, "speckle").uniform(0.0, 2 * np.pi, size=int(mask.sum()))
    return SpeckleField(config, speckle_from_phases(config, phases), seed, index)


def generate_speckle_batch(config: SpeckleConfig, seed: int, indices, workers: int = 1) -> np.ndarray:
    """Stack of field values for realization ``indices``; identical to per-call generation."""
    mask = config.mask()
    count = int(mask.sum())
    idx = list(indices)
    a = np.zeros((len(idx), config.n_grid, config.n_grid), dtype=complex)
    for b, i in enumerate(idx):
        a[b][mask] = np.exp(1j * stream(seed, i, "speckle").uniform(0.0, 2 * np.pi, size=count))
    return _finish(np.abs(fft.fft2(a, axes=(-2, -1), workers=workers)))


# --- trap modes -----------------------------------------------------------

@dataclass(frozen=True)
class TrapModeIndex:
    flat_index: int
    nx: int
    ny: int

    @property
    def energy_level(self) -> int:
        return self.nx + self.ny


def trap_modes(n_sites: int) -> list[TrapModeIndex]:
    """First ``n_sites`` 2D modes ordered by level, then by nx ascending."""
    out = []
    level = 0
    while len(out) < n_sites:
        for nx in range(level + 1):
            if len(out) == n_sites:
                break
            out.append(TrapModeIndex(len(out), nx, level - nx))
        level += 1
    return out


def hermite_functions(n_max: int, x) -> np.ndarray:
    """Normalized 1D oscillator eigenfunctions h_0..h_n_max at ``x``, shape (n_max+1, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = np.empty((n_max + 1,) + x.shape)
    h[0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if n_max >= 1:
        h[1] = np.sqrt(2.0) * x * h[0]
    for n in range(1, n_max):
        h[n + 1] = x * np.sqrt(2.0 / (n + 1)) * h[n] - np.sqrt(n / (n + 1)) * h[n - 1]
    return h


def trap_mode_value(mode: TrapModeIndex, x, y):
    n = max(mode.nx, mode.ny)
    hx = hermite_functions(n, x)[mode.nx]
    hy = hermite_functions(n, y)[mode.ny]
    out = hx * hy
    return out if out.size > 1 else float(out.reshape(()))


def _support_check(config: SpeckleConfig, modes, strict: bool):
    top = max(m.energy_level for m in modes)
    if top > config.dim_grid**2 / 8:
        msg = f"mode level {top} exceeds grid support bound {config.dim_grid**2 / 8:.1f}"
        if strict:
            raise ConfigError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def mode_matrix(weight: np.ndarray, config: SpeckleConfig, n_sites: int) -> np.ndarray:
    """``M_ik = sum_pixels weight * phi_i * phi_k * dx^2`` for the first n_sites modes."""
    modes = trap_modes(n_sites)
    top = max(max(m.nx, m.ny) for m in modes)
    h = hermite_functions(top, config.axis())  # (n1, grid)
    n1 = top + 1
    pair = (h[:, None, :] * h[None, :, :]).reshape(n1 * n1, -1)  # (a,c) x grid
    b = pair @ weight  # contracts x: (n1*n1, grid_y)
    full = (b @ pair.T).reshape(n1, n1, n1, n1)  # [a, c, b, d]
    nx = np.array([m.nx for m in modes])
    ny = np.array([m.ny for m in modes])
    return full[nx[:, None], nx[None, :], ny[:, None], ny[None, :]] * config.dx**2


def coherent_couplings(fld: SpeckleField, n_sites: int, strict: bool = False) -> np.ndarray:
    """``J_ik = 1/2 sum (Delta_ad / Delta_ad(r)) phi_i phi_k dx^2`` (real symmetric)."""
    _support_check(fld.config, trap_modes(n_sites), strict)
    j = 0.5 * mode_matrix(1.0 / fld.values, fld.config, n_sites)
    return 0.5 * (j + j.T)


def coherent_couplings_batch(values: np.ndarray, config: SpeckleConfig, n_sites: int) -> np.ndarray:
    """Coupling matrices for a stack of field values, shape (B, n_sites, n_sites)."""
    return np.stack([0.5 * mode_matrix(1.0 / v, config, n_sites) for v in values])


def dissipative_couplings(fld: SpeckleField, params: "CavityParams", n_sites: int,
                          trace_removed: bool = False, strict: bool = False) -> np.ndarray:
    """Photon-loss jump couplings K_ij in the trap basis (complex symmetric)."""
    _support_check(fld.config, trap_modes(n_sites), strict)
    pref = np.sqrt(params.kappa) * params.omega_d * params.omega_c / (
        2 * (params.delta_cd - 0.5j * params.kappa))
    weight = 1.0 / (params.delta_ad * fld.values + 0.5j * params.gamma)
    k = pref * mode_matrix(weight, fld.config, n_sites)
    if trace_removed:
        k = k - np.trace(k) / n_sites * np.eye(n_sites)
    return k


# --- dynamical determination of N ----------------------------------------

@dataclass
class NFit:
    anchor: int
    n: float
    intercept: float
    residual: float
    n_points: int


def coupling_rows(values: np.ndarray, config: SpeckleConfig, anchors, j_max: int,
                  subtract_mean: bool = True) -> np.ndarray:
    """Rows J[anchor, 0:j_max] for one field; shape (len(anchors), j_max)."""
    modes = trap_modes(j_max)
    top = max(max(m.nx, m.ny) for m in modes)
    h = hermite_functions(top, config.axis())
    nx = np.array([m.nx for m in modes])
    ny = np.array([m.ny for m in modes])
    w = 0.5 / values
    rows = np.empty((len(anchors), j_max))
    for r, i in enumerate(anchors):
        phi_i = h[nx[i]][:, None] * h[ny[i]][None, :]
        c = h @ (w * phi_i) @ h.T  # [a, b] = sum_xy h_a(x) w phi_i h_b(y)
        rows[r] = c[nx, ny] * config.dx**2
        if subtract_mean:
            rows[r, i] -= 0.25
    return rows


def mean_square_rows(fields, anchors, j_max: int, subtract_mean: bool = True) -> np.ndarray:
    acc = None
    n = 0
    for f in fields:
        values, config = (f.values, f.config) if isinstance(f, SpeckleField) else f
        rows = coupling_rows(values, config, anchors, j_max, subtract_mean) ** 2
        acc = rows if acc is None else acc + rows
        n += 1
    if n == 0:
        raise ConfigError("empty field ensemble")
    return acc / n


def fit_n(mean_sq: np.ndarray, anchor: int, floor: float = 1e-14, max_residual: float = 5.0) -> NFit:
    """Least-squares fit of log<J^2_ij> = c - |sqrt(i) - sqrt(j)| / sqrt(N)."""
    j = np.arange(len(mean_sq))
    keep = mean_sq > floor
    x = np.abs(np.sqrt(anchor) - np.sqrt(j[keep]))
    y = np.log(mean_sq[keep])
    if keep.sum() < 3:
        raise FitError("too few usable points for the N fit")
    a = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = float(np.sqrt(np.mean((a @ coef - y) ** 2)))
    if coef[1] <= 0:
        raise FitError(f"non-positive decay slope for anchor {anchor}")
    if res > max_residual:
        raise FitError(f"fit residual {res:.3g} exceeds {max_residual}")
    return NFit(anchor, float(1.0 / coef[1] ** 2), float(coef[0]), res, int(keep.sum()))


def determine_n(fields, anchors, j_max: int, subtract_mean: bool = True, min_ensemble: int = 50) -> list[NFit]:
    fields = list(fields)
    if len(fields) < min_ensemble:
        raise ConfigError(f"ensemble of {len(fields)} fields is below the minimum {min_ensemble}")
    if any(not 0 <= a < j_max for a in anchors):
        raise ConfigError("anchors must lie in [0, j_max)")
    ms = mean_square_rows(fields, anchors, j_max, subtract_mean)
    return [fit_n(ms[r], a) for r, a in enumerate(anchors)]
