"""Hamiltonians of the low-rank complex SYK model and its reference ensemble.

A realization ``alpha`` is a real symmetric hopping matrix ``J^alpha``; its
Hamiltonian is ``H_alpha = prefactor * A^2`` with ``A = sum_ik J_ik c+_i c_k``.
Summing R realizations (optionally with a ``1/sqrt(R)`` normalization) gives
the effective quartic model whose couplings approach independent Gaussians.
Operators are left exactly as written (not normal ordered); the one-body
remainder produced by normal ordering is quantified by
:func:`syk2_contamination_variance`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import fock
from .errors import ConfigError
from .rng import stream

NORMALIZATIONS = ("raw", "inv_sqrt_R")
SPECKLE_MEAN = 0.25


@dataclass(frozen=True)
class ModelParams:
    j_scale: float = 1.0
    n_sites: int = 8
    rank_r: int = 8
    filling: int | None = None
    normalization: str = "inv_sqrt_R"
    mean_subtraction: bool = True
    energy_prefactor: float = 1.0

    def __post_init__(self):
        if self.j_scale < 0:
            raise ConfigError("j_scale must be non-negative")
        if self.n_sites < 1 or self.rank_r < 1:
            raise ConfigError("n_sites and rank_r must be >= 1")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if self.filling is not None and not 0 <= self.filling <= self.n_sites:
            raise ConfigError("filling out of range")

    @property
    def m(self) -> int:
        return self.n_sites // 2 if self.filling is None else self.filling

    @property
    def hopping_variance(self) -> float:
        return np.sqrt(2.0) * self.j_scale / self.n_sites**1.5

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def energy_prefactor(omega_d: float, omega_c: float, delta_cd: float, delta_ad: float) -> float:
    """Cavity-mediated energy scale Omega_d^2 Omega_c^2 / (Delta_cd Delta_ad^2)."""
    return omega_d**2 * omega_c**2 / (delta_cd * delta_ad**2)


@dataclass(frozen=True, eq=False)
class HoppingMatrix:
    entries: np.ndarray = field(repr=False)
    origin: str = "synthetic"
    realization_index: int = 0

    @property
    def n_sites(self) -> int:
        return self.entries.shape[0]


def sample_hopping(params: ModelParams, seed: int, alpha: int) -> HoppingMatrix:
    """Real symmetric Gaussian couplings, i.i.d. on and above the diagonal."""
    n = params.n_sites
    rng = stream(seed, alpha, "hopping")
    x = rng.normal(0.0, np.sqrt(params.hopping_variance), size=(n, n))
    upper = np.triu(x)
    return HoppingMatrix(upper + np.triu(x, 1).T, "synthetic", alpha)


def sample_factors(params: ModelParams, seed: int) -> list[HoppingMatrix]:
    return [sample_hopping(params, seed, a) for a in range(params.rank_r)]


def _check_dims(sector: fock.FockSector, h: HoppingMatrix) -> None:
    if h.n_sites != sector.n_modes:
        raise ConfigError(f"hopping matrix has {h.n_sites} sites, sector has {sector.n_modes} modes")


def default_prefactor(origin: str, params: ModelParams | None = None) -> float:
    if origin == "speckle":
        return -(params.energy_prefactor if params is not None else 1.0)
    return 1.0


def sparse_hamiltonian(sector: fock.FockSector, h: HoppingMatrix, prefactor: float = 1.0) -> np.ndarray:
    """``prefactor * A @ A`` with ``A`` the one-body operator of ``h``."""
    _check_dims(sector, h)
    a = fock.one_body(sector, h.entries)
    return prefactor * (a @ a)


def normalization_factor(rank_r: int, normalization: str) -> float:
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
    return 1.0 if normalization == "raw" else 1.0 / np.sqrt(rank_r)


def coupling_tensor(factors: list[HoppingMatrix], normalization: str = "inv_sqrt_R") -> np.ndarray:
    """Dense ``T[i1, i2, k1, k2] = c * sum_a J^a[i1, k1] J^a[i2, k2]``."""
    js = np.stack([f.entries for f in factors])
    return normalization_factor(len(factors), normalization) * np.einsum("aik,ajl->ijkl", js, js)


def _check_origin(factors):
    if not factors:
        raise ConfigError("empty factor list")
    origins = {f.origin for f in factors}
    if len(origins) > 1:
        raise ConfigError(f"mixed-origin factors: {sorted(origins)}")


def effective_hamiltonian(sector: fock.FockSector, factors: list[HoppingMatrix], prefactor: float = 1.0,
                          normalization: str = "inv_sqrt_R") -> np.ndarray:
    """Normalized sum of the per-realization Hamiltonians, assembled from the tensor."""
    _check_origin(factors)
    for f in factors:
        _check_dims(sector, f)
    return prefactor * fock.quartic_sum(sector, coupling_tensor(factors, normalization))


def factor_hamiltonians(sector: fock.FockSector, factors: list[HoppingMatrix], prefactor: float = 1.0,
                        normalization: str = "inv_sqrt_R") -> list[np.ndarray]:
    """Per-realization Hamiltonians carrying the normalization, so they sum to H_eff."""
    _check_origin(factors)
    c = normalization_factor(len(factors), normalization)
    return [sparse_hamiltonian(sector, f, c * prefactor) for f in factors]


def mean_hamiltonian(sector: fock.FockSector, params: ModelParams, entry_variance: float | None = None) -> np.ndarray:
    """Disorder average of a single synthetic realization on the sector.

    For symmetric couplings with ``E[J_ik J_lj] = v (d_il d_kj + d_ij d_kl)``
    off the diagonal, ``E[A^2] = v (N*Nhat - Nhat^2 + Nhat)``.  With the
    default ``v = sqrt(2) J / N^2`` this is
    ``sqrt(2) J (Nhat/N - Nhat^2/N^2 + Nhat/N^2)``; pass
    ``entry_variance=params.hopping_variance`` for the average of
    :func:`sample_hopping` draws.
    """
    n, m = sector.n_modes, sector.n_particles
    v = np.sqrt(2.0) * params.j_scale / n**2 if entry_variance is None else entry_variance
    return v * (n * m - m * m + m) * np.eye(sector.dimension)


def subtract_speckle_mean(h: HoppingMatrix) -> HoppingMatrix:
    """Shift the diagonal by its disorder-free mean 1/4.

    The one-body remainder proportional to ``sum J_ik c+_i c_k`` that this
    shift generates in the cavity Hamiltonian is assumed to be cancelled
    experimentally and is not added back.
    """
    if h.origin != "speckle":
        raise ConfigError("mean subtraction applies to speckle couplings only")
    return HoppingMatrix(h.entries - SPECKLE_MEAN * np.eye(h.n_sites), "speckle", h.realization_index)


def reference_csyk4(sector: fock.FockSector, j_scale: float, seed: int, index: int = 0) -> np.ndarray:
    """Dense complex-SYK4 reference: i.i.d. real couplings of variance 2J^2/N^3, hermitized."""
    n = sector.n_modes
    rng = stream(seed, index, "csyk4")
    t = rng.normal(0.0, np.sqrt(2.0 / n**3) * j_scale, size=(n, n, n, n))
    h = fock.quartic_sum(sector, t)
    return 0.5 * (h + h.conj().T)


def syk2_contamination_variance(params: ModelParams) -> float:
    """Variance of the off-diagonal one-body couplings left by normal ordering."""
    return 2.0 * params.j_scale**2 / params.n_sites**2


def syk2_contamination_samples(params: ModelParams, seed: int, n_draws: int, i1: int = 0, k2: int = 1):
    """Monte-Carlo draws of R^-1/2 sum_a sum_i2 J^a_{i1 i2} J^a_{i2 k2} for i1 != k2."""
    out = np.empty(n_draws)
    r = params.rank_r
    for d in range(n_draws):
        acc = 0.0
        for a in range(r):
            j = sample_hopping(params, seed, d * r + a).entries
            acc += j[i1] @ j[:, k2]
        out[d] = acc / np.sqrt(r)
    return out
