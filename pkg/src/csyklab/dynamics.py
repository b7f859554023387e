"""Exact and Trotterized unitary evolution, error metrics and the Lipschitz experiment.

Time convention: one Trotter cycle applies ``exp(-i H_alpha dt)`` for every
factor in ``factor_order`` and advances physical time by ``dt``; the target
evolution is ``exp(-i H_eff t)`` with ``H_eff = sum_alpha H_alpha`` (any
``1/sqrt(R)`` normalization lives inside the factors).  Norms are the
normalized Frobenius norm ``sqrt(Tr(A^+ A) / D)``, so unitaries have norm 1.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import ConfigError, NumericError
from .rng import stream


def frobenius_norm(a: np.ndarray) -> float:
    a = np.asarray(a)
    return float(np.linalg.norm(a) / np.sqrt(a.shape[0]))


@dataclass(frozen=True, eq=False)
class SpectrumCache:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    source_hash: str = ""

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    def propagator(self, t: float) -> np.ndarray:
        v = self.eigenvectors
        return (v * np.exp(-1j * self.eigenvalues * t)) @ v.conj().T

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def matrix_hash(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()[:16]


def diagonalize(h: np.ndarray, check: bool = True) -> SpectrumCache:
    h = np.asarray(h)
    try:
        e, v = linalg.eigh(h)
    except linalg.LinAlgError as exc:
        raise NumericError(f"Hermitian eigensolver failed (D={h.shape[0]}): {exc}") from exc
    cache = SpectrumCache(e, v, matrix_hash(h))
    if check:
        scale = max(np.linalg.norm(h), 1e-300)
        err = np.linalg.norm(cache.reconstruct() - h) / scale
        if err > 1e-10:
            raise NumericError(f"eigendecomposition reconstruction error {err:.2e}")
    return cache


def exact_propagator(h, t: float) -> np.ndarray:
    cache = h if isinstance(h, SpectrumCache) else diagonalize(h)
    return cache.propagator(t)


@dataclass(frozen=True)
class TrotterPlan:
    dt: float
    n_max: int = 500
    factor_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")

    def order(self, r: int) -> tuple[int, ...]:
        if self.factor_order is None:
            return tuple(range(r))
        if sorted(self.factor_order) != list(range(r)):
            raise ConfigError("factor_order must be a permutation of the factor indices")
        return tuple(self.factor_order)


def trotter_cycle(factors, plan: TrotterPlan) -> np.ndarray:
    """One cycle ``E_last ... E_first`` (the first factor in the order acts first)."""
    caches = [f if isinstance(f, SpectrumCache) else diagonalize(f) for f in factors]
    d = caches[0].dimension
    c = np.eye(d, dtype=complex)
    for a in plan.order(len(caches)):
        c = caches[a].propagator(plan.dt) @ c
    return c


def _polar(u: np.ndarray) -> np.ndarray:
    w, _, vh = np.linalg.svd(u)
    return w @ vh


def cycle_powers(cycle: np.ndarray, n_max: int, reunitarize_every: int = 100, tol: float = 1e-8):
    """Yield ``cycle**n`` for n = 1..n_max by repeated multiplication with polar correction."""
    d = cycle.shape[0]
    u = np.eye(d, dtype=complex)
    eye = np.eye(d)
    for n in range(1, n_max + 1):
        u = cycle @ u
        if n % reunitarize_every == 0 and frobenius_norm(u.conj().T @ u - eye) > tol:
            u = _polar(u)
        yield u


def trotter_propagator(factors, plan: TrotterPlan, cycles: int) -> np.ndarray:
    cycle = trotter_cycle(factors, plan)
    if cycles == 0:
        return np.eye(cycle.shape[0], dtype=complex)
    for u in cycle_powers(cycle, cycles):
        pass
    return u


@dataclass(frozen=True, eq=False)
class UnitarySpectrum:
    """Eigenphases (eigenvalues ``exp(i * phases)``) and eigenvectors of a unitary."""

    phases: np.ndarray
    vectors: np.ndarray = field(repr=False)


def unitary_spectrum(u: np.ndarray) -> UnitarySpectrum:
    t, z = linalg.schur(u, output="complex")
    off = np.linalg.norm(np.triu(t, 1))
    if off > 1e-8 * np.sqrt(u.shape[0]):
        raise NumericError(f"matrix is not normal to working precision (off-diagonal Schur mass {off:.2e})")
    return UnitarySpectrum(np.angle(np.diag(t)), z)


def error_series(h_eff, factors, plan: TrotterPlan, method: str = "spectral"):
    """Per-cycle ``||U_eff(n dt) - U_T(n)||`` plus both SFF series at beta = 0.

    ``spectral`` diagonalizes the cycle unitary once and evaluates every power
    in closed form; ``product`` multiplies cycles explicitly.  Returns a dict
    of arrays indexed by n = 1..n_max.
    """
    heff = h_eff if isinstance(h_eff, SpectrumCache) else diagonalize(h_eff)
    d = heff.dimension
    n = np.arange(1, plan.n_max + 1)
    t = n * plan.dt
    cycle = trotter_cycle(factors, plan)
    z_eff = np.exp(-1j * np.outer(t, heff.eigenvalues)).sum(axis=1)
    if method == "spectral":
        us = unitary_spectrum(cycle)
        overlap = np.abs(heff.eigenvectors.conj().T @ us.vectors) ** 2  # [k, l]
        a = np.exp(1j * np.outer(t, heff.eigenvalues))  # conj of eff phases
        b = np.exp(1j * np.outer(n, us.phases))
        tr = np.einsum("nk,kl,nl->n", a, overlap, b)  # Tr(U_eff^+ U_T)
        z_t = b.sum(axis=1)
    elif method == "product":
        tr = np.empty(plan.n_max, dtype=complex)
        z_t = np.empty(plan.n_max, dtype=complex)
        v = heff.eigenvectors
        for i, u in enumerate(cycle_powers(cycle, plan.n_max)):
            ue = (v * np.exp(-1j * heff.eigenvalues * t[i])) @ v.conj().T
            tr[i] = np.vdot(ue, u)
            z_t[i] = np.trace(u)
    else:
        raise ConfigError(f"unknown method {method!r}")
    dist = np.sqrt(np.maximum(2.0 - 2.0 * tr.real / d, 0.0))
    return {
        "n": n,
        "t": t,
        "distance": dist,
        "sff_eff": np.abs(z_eff) ** 2 / d**2,
        "sff_trotter": np.abs(z_t) ** 2 / d**2,
    }


def delta_u(h_eff, factors, plan: TrotterPlan, method: str = "spectral") -> float:
    """Average over n = 1..n_max of ``||U_eff(n dt) - U_T(n)||``."""
    return float(error_series(h_eff, factors, plan, method)["distance"].mean())


def commutator_sum(factors) -> np.ndarray:
    """``sum_{a<b} [H_a, H_b]`` computed as ``sum_a [H_a, H_{a+1} + ... + H_R]``."""
    out = np.zeros_like(np.asarray(factors[0]), dtype=complex)
    tail = np.zeros_like(out)
    for h in reversed(factors):
        out += h @ tail - tail @ h
        tail = tail + h
    return out


def commutator_error_norm(factors) -> float:
    """Squared normalized Frobenius norm of the summed pairwise commutators."""
    if len(factors) < 2:
        return 0.0
    return frobenius_norm(commutator_sum(factors)) ** 2


def required_steps(t: float, eps: float, j_scale: float, rank_r: int, n_sites: int) -> int:
    """Cycle count ``ceil(10 t^2 J^2 R / (eps N))``, at least 1."""
    if eps <= 0:
        raise ConfigError("tolerance must be positive")
    val = 10.0 * t**2 * j_scale**2 * rank_r / (eps * n_sites)
    return max(1, int(np.ceil(val - 1e-9 * val)))


# --- Lipschitz experiment -------------------------------------------------

def haar_unitaries(rng: np.random.Generator, d: int, count: int) -> np.ndarray:
    z = (rng.normal(size=(count, d, d)) + 1j * rng.normal(size=(count, d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r, axis1=1, axis2=2)
    return q * (ph / np.abs(ph))[:, None, :]


def _phase_distance(delta, g):
    return np.sqrt(np.mean(4 * np.sin(0.5 * delta * g) ** 2))


def calibrate_step(g: np.ndarray, target: float) -> float:
    """Scale ``delta`` so that diag phases perturbed by ``delta*g`` sit at distance ``target``."""
    f = lambda s: _phase_distance(s, g) - target
    hi = target / max(np.sqrt(np.mean(g**2)), 1e-12)
    lo = 0.0
    while f(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            raise NumericError("cannot reach target distance")
    return optimize.brentq(f, lo, hi, xtol=1e-14)


@dataclass
class LipschitzResult:
    dims: np.ndarray
    kappa_max: np.ndarray
    a: float
    b: float
    max_ratio_to_bound: float
    n_samples: int


def lipschitz_experiment(d_range, samples: int, delta_u: float = 0.1, seed: int = 0,
                         batch: int = 500, basis: str = "between") -> LipschitzResult:
    """Largest ratio |SFF(U1) - SFF(U2)| / ||U1 - U2|| over random unitary pairs.

    For each D the eigenphases of U1 are uniform and those of U2 are shifted by
    a Gaussian perturbation calibrated so that the two phase sets sit at
    distance ``delta_u``.  With ``basis="between"`` a Haar unitary P is the
    change of basis from U1 to U2 (``U1 = diag``, ``U2 = P diag' P^+``); with
    ``basis="shared"`` both are conjugated by the same P, so the pair distance
    equals ``delta_u``.  ``kappa_max = A / D^B`` is fitted on logs.
    """
    if basis not in ("between", "shared"):
        raise ConfigError("basis must be 'between' or 'shared'")
    dims = np.array(list(d_range), dtype=int)
    kmax = np.empty(len(dims))
    worst = 0.0
    for i, d in enumerate(dims):
        rng = stream(seed, int(d), "lipschitz")
        best = 0.0
        done = 0
        while done < samples:
            m = min(batch, samples - done)
            theta = rng.uniform(0, 2 * np.pi, size=(m, d))
            g = rng.normal(size=(m, d))
            deltas = np.array([calibrate_step(g[k], delta_u) for k in range(m)])
            theta2 = theta + deltas[:, None] * g
            p = haar_unitaries(rng, d, m)
            pd = p.conj().transpose(0, 2, 1)
            u2 = (p * np.exp(1j * theta2)[:, None, :]) @ pd
            if basis == "shared":
                u1 = (p * np.exp(1j * theta)[:, None, :]) @ pd
            else:
                u1 = np.zeros_like(u2)
                diag = np.arange(d)
                u1[:, diag, diag] = np.exp(1j * theta)
            sff1 = np.abs(np.trace(u1, axis1=1, axis2=2)) ** 2 / d**2
            sff2 = np.abs(np.trace(u2, axis1=1, axis2=2)) ** 2 / d**2
            dist = np.linalg.norm(u1 - u2, axis=(1, 2)) / np.sqrt(d)
            kappa = np.abs(sff1 - sff2) / dist
            best = max(best, float(kappa.max()))
            worst = max(worst, float((kappa / (2 * (d - 1) / d)).max()))
            done += m
        kmax[i] = best
    if len(dims) < 2:
        return LipschitzResult(dims, kmax, np.nan, np.nan, worst, samples)
    slope, intercept = np.polyfit(np.log(dims), np.log(kmax), 1)
    return LipschitzResult(dims, kmax, float(np.exp(intercept)), float(-slope), worst, samples)
