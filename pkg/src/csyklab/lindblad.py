"""Open-system dynamics with cavity photon-loss jump operators.

Density matrices on a sector of dimension D are vectorized by column
stacking: ``|i><j|`` maps to index ``j*D + i``, so ``vec(A X B) =
(B^T kron A) vec(X)``.  Rates and energies are angular frequencies in
units of 1/us (MHz values multiplied by 2 pi).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import fock
from .couplings import HoppingMatrix, subtract_speckle_mean
from .errors import ConfigError, NumericError
from .speckle import SpeckleConfig, coherent_couplings, dissipative_couplings, generate_speckle

MAX_DIMENSION = 64
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class CavityParams:
    kappa: float = TWO_PI * 0.16
    gamma: float = TWO_PI * 5.86
    delta_cd: float = TWO_PI * 20.0
    delta_ad: float = TWO_PI * 80.0
    omega_d: float = TWO_PI * 1000.0
    omega_c: float = TWO_PI * 2.05

    def __post_init__(self):
        for name in ("kappa", "gamma", "delta_cd", "delta_ad", "omega_d", "omega_c"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def cooperativity(self) -> float:
        return 4 * self.omega_c**2 / (self.kappa * self.gamma)

    @property
    def energy_scale(self) -> float:
        """Coherent prefactor Omega_d^2 Omega_c^2 / (Delta_cd Delta_ad^2)."""
        return self.omega_d**2 * self.omega_c**2 / (self.delta_cd * self.delta_ad**2)


# --- superoperators -------------------------------------------------------

def _check(h, jumps):
    d = h.shape[0]
    if h.shape != (d, d) or any(j.shape != (d, d) for j in jumps):
        raise ConfigError("Hamiltonian and jump operators must share one square shape")
    if d > MAX_DIMENSION:
        raise ConfigError(f"sector dimension {d} exceeds the superoperator cap {MAX_DIMENSION}")
    return d


def hamiltonian_part(h: np.ndarray) -> np.ndarray:
    """``-i[H, .]`` as a D^2 x D^2 matrix."""
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def dissipator(jump: np.ndarray) -> np.ndarray:
    """``L . L+ - 1/2 {L+ L, .}`` as a D^2 x D^2 matrix."""
    eye = np.eye(jump.shape[0])
    ll = jump.conj().T @ jump
    return np.kron(jump.conj(), jump) - 0.5 * (np.kron(eye, ll) + np.kron(ll.T, eye))


def build_lindbladian(h: np.ndarray, jumps=()) -> np.ndarray:
    _check(h, jumps)
    out = hamiltonian_part(h)
    for j in jumps:
        out = out + dissipator(j)
    return out


def vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return v.reshape(d, d, order="F")


def apply_lindbladian(h: np.ndarray, jumps, rho: np.ndarray) -> np.ndarray:
    """Direct matrix action of the generator on ``rho`` (reference for the vectorized form)."""
    out = -1j * (h @ rho - rho @ h)
    for j in jumps:
        ll = j.conj().T @ j
        out = out + j @ rho @ j.conj().T - 0.5 * (ll @ rho + rho @ ll)
    return out


# --- spectrum -------------------------------------------------------------

@dataclass
class LindbladSpectrum:
    eigenvalues: np.ndarray  # sorted by real part, descending
    right: np.ndarray | None
    gap: float
    n_zero: int


def lindblad_spectrum(l: np.ndarray, vectors: bool = False, zero_tol: float = 1e-8) -> LindbladSpectrum:
    try:
        if vectors:
            w, v = linalg.eig(l)
        else:
            w, v = linalg.eigvals(l), None
    except linalg.LinAlgError as exc:
        raise NumericError(f"superoperator eigensolver failed: {exc}") from exc
    order = np.lexsort((w.imag, -w.real))
    w = w[order]
    v = v[:, order] if v is not None else None
    nonzero = np.abs(w) > zero_tol
    gap = float(-w.real[nonzero].max()) if nonzero.any() else 0.0
    return LindbladSpectrum(w, v, gap, int((~nonzero).sum()))


def conjugation_closed(w: np.ndarray, tol: float = 1e-8) -> bool:
    """Every eigenvalue has a partner at its complex conjugate."""
    w = np.asarray(w)
    scale = max(1.0, float(np.abs(w).max()))
    dist = np.abs(w[:, None] - w.conj()[None, :]).min(axis=1)
    return bool(np.all(dist <= tol * scale))


# --- propagation ----------------------------------------------------------

class Propagator:
    """``exp(t L)`` from a cached eigendecomposition, falling back to ``expm``."""

    def __init__(self, l: np.ndarray, cond_limit: float = 1e8):
        self.l = l
        w, v = linalg.eig(l)
        self.cond = float(np.linalg.cond(v))
        self.use_eig = self.cond <= cond_limit
        if self.use_eig:
            self.w, self.v, self.vinv = w, v, np.linalg.inv(v)

    def matrix(self, t: float) -> np.ndarray:
        if self.use_eig:
            return (self.v * np.exp(self.w * t)) @ self.vinv
        return linalg.expm(self.l * t)

    def apply(self, rho: np.ndarray, t: float) -> np.ndarray:
        if self.use_eig:
            c = self.vinv @ vec(rho)
            return unvec(self.v @ (np.exp(self.w * t) * c))
        return unvec(linalg.expm(self.l * t) @ vec(rho))


def evolve_density(l, rho0: np.ndarray, times) -> list[np.ndarray]:
    prop = l if isinstance(l, Propagator) else Propagator(l)
    return [prop.apply(rho0, t) for t in times]


def trotterized_lindblad_step(factor_ls, dt: float, cycles: int = 1) -> np.ndarray:
    """``(prod_alpha exp(dt L_alpha))^cycles``; the first factor acts first."""
    if not factor_ls:
        raise ConfigError("empty factor list")
    cycle = np.eye(factor_ls[0].shape[0], dtype=complex)
    for f in factor_ls:
        cycle = linalg.expm(dt * f) @ cycle
    return np.linalg.matrix_power(cycle, cycles)


# --- fidelities -----------------------------------------------------------

def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def fidelities(l, psi: np.ndarray, h: np.ndarray, times) -> dict:
    """Survival ``<psi|sigma(t)|psi>`` and coherent ``Tr[sigma(t) U rho0 U+]`` fidelities."""
    prop = l if isinstance(l, Propagator) else Propagator(l)
    rho0 = np.outer(psi, psi.conj())
    e, v = np.linalg.eigh(h)
    c = v.conj().T @ psi
    f0, f = [], []
    for t in times:
        sigma = prop.apply(rho0, t)
        phi = v @ (np.exp(-1j * e * t) * c)
        f0.append(np.real(psi.conj() @ sigma @ psi))
        f.append(np.real(phi.conj() @ sigma @ phi))
    return {"t": np.asarray(times, dtype=float), "F0": np.array(f0), "F": np.array(f)}


def fidelity_window(t, f, dim: int, upper: float = 0.9, lower_frac: float = 0.1) -> tuple[float, float]:
    """From the first time ``F < upper`` until ``F`` reaches ``1/D + lower_frac (1 - 1/D)``."""
    floor = 1 / dim + lower_frac * (1 - 1 / dim)
    start = np.flatnonzero(f < upper)
    if len(start) == 0:
        raise NumericError("fidelity never drops below the window start")
    i0 = start[0]
    below = np.flatnonzero(f[i0:] <= floor)
    i1 = i0 + below[0] if len(below) else len(f) - 1
    return float(t[i0]), float(t[i1])


def fit_fidelity_decay(t, f, dim: int, window=None) -> dict:
    """Exponential fit of ``F(t) - 1/D`` on the window; returns rate, tau and R^2."""
    t = np.asarray(t)
    f = np.asarray(f)
    lo, hi = fidelity_window(t, f, dim) if window is None else window
    sel = (t >= lo) & (t <= hi) & (f - 1 / dim > 0)
    if sel.sum() < 3:
        raise NumericError("too few points in the fidelity fit window")
    y = np.log(f[sel] - 1 / dim)
    slope, intercept = np.polyfit(t[sel], y, 1)
    pred = slope * t[sel] + intercept
    r2 = 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
    return {"rate": float(-slope), "tau": float(-1 / slope) if slope < 0 else np.inf,
            "r2": float(r2), "window": [lo, hi], "amplitude": float(np.exp(intercept))}


# --- timescales -----------------------------------------------------------

def timescales(params: CavityParams, gamma_ratio: float = 1.0) -> dict:
    """Unitary and dissipative time scales at ``gamma = R/N`` and their ratio."""
    p = params
    od2oc2 = p.omega_d**2 * p.omega_c**2
    t_u = p.delta_ad**2 * p.delta_cd / (np.sqrt(gamma_ratio) * od2oc2)
    t_d = (4 * p.delta_cd**2 + p.kappa**2) * p.delta_ad**2 / (gamma_ratio * p.kappa * od2oc2)
    ratio = (4 * p.delta_cd**2 + p.kappa**2) / (np.sqrt(gamma_ratio) * p.delta_cd * p.kappa)
    return {"t_unitary": float(t_u), "t_dissipative": float(t_d), "ratio": float(ratio)}


# --- speckle model --------------------------------------------------------

@dataclass
class SpeckleOpenModel:
    sector: fock.FockSector
    hamiltonians: list  # per-pattern H_alpha
    jumps: list  # per-pattern L_alpha

    @property
    def hamiltonian(self) -> np.ndarray:
        return sum(self.hamiltonians)

    def lindbladian(self) -> np.ndarray:
        return build_lindbladian(self.hamiltonian, self.jumps)

    def factor_lindbladians(self) -> list[np.ndarray]:
        return [build_lindbladian(h, [j]) for h, j in zip(self.hamiltonians, self.jumps)]


def speckle_open_model(n_sites: int, rank_r: int, seed: int, realization: int = 0,
                       params: CavityParams | None = None, config: SpeckleConfig | None = None,
                       trace_removed: bool = True) -> SpeckleOpenModel:
    """H_alpha = -E A_alpha^2 from mean-subtracted speckle couplings, one jump K_alpha per pattern.

    Pattern ``alpha`` of realization ``realization`` uses speckle index
    ``realization * rank_r + alpha``.
    """
    params = params or CavityParams()
    config = config or SpeckleConfig()
    sector = fock.build_sector(n_sites, n_sites // 2, MAX_DIMENSION)
    hs, ls = [], []
    for a in range(rank_r):
        fld = generate_speckle(config, seed, realization * rank_r + a)
        j = subtract_speckle_mean(HoppingMatrix(coherent_couplings(fld, n_sites), "speckle", a))
        op = fock.one_body(sector, j.entries)
        hs.append(-params.energy_scale * (op @ op))
        k = dissipative_couplings(fld, params, n_sites, trace_removed=trace_removed)
        ls.append(fock.one_body(sector, k))
    return SpeckleOpenModel(sector, hs, ls)
