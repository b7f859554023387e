"""Fixed-particle-number fermionic sectors and operator matrices.

Basis states are occupation bitsets (bit ``b`` = mode ``b``) listed in
ascending integer order.  Fermionic signs follow the Jordan-Wigner ordering
by mode index, so ``c^dag_i c_k`` picks up the parity of the occupied modes
strictly between ``i`` and ``k``.

Besides the per-term builders (:func:`hopping_operator`,
:func:`quartic_operator`) the module provides vectorized assemblers
(:func:`one_body`, :func:`quartic_sum`) that build full Hamiltonians from
coupling arrays without looping over terms.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .errors import ConfigError

MAX_MODES = 24
DEFAULT_DIMENSION_CAP = 5000


def popcount(x):
    """Number of set bits, elementwise for integer arrays."""
    x = np.asarray(x, dtype=np.int64)
    count = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        count += x & 1
        x = x >> 1
    return count


def _parity_between(states, lo, hi):
    """Parity of occupied modes strictly between ``lo`` and ``hi``."""
    lo_, hi_ = np.minimum(lo, hi), np.maximum(lo, hi)
    # bits lo_+1 .. hi_-1
    mask = np.where(hi_ > lo_ + 1, ((1 << hi_) - 1) ^ ((1 << (lo_ + 1)) - 1), 0)
    return popcount(states & mask) & 1


def _parity_below(states, mode):
    return popcount(states & ((1 << np.asarray(mode, dtype=np.int64)) - 1)) & 1


@dataclass(frozen=True, eq=False)
class FockSector:
    """Basis of ``n_modes`` fermionic modes holding ``n_particles`` fermions."""

    n_modes: int
    n_particles: int
    states: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return len(self.states)

    def index_of(self, occupation):
        """Basis index of one or more occupation bitsets."""
        occ = np.asarray(occupation, dtype=np.int64)
        idx = np.searchsorted(self.states, occ)
        idx_c = np.clip(idx, 0, self.dimension - 1)
        if np.any(self.states[idx_c] != occ):
            raise KeyError("occupation not in sector")
        return idx_c if idx_c.ndim else int(idx_c)

    def occupation_of(self, index):
        return self.states[index]

    def occupations(self) -> np.ndarray:
        """(D, N) array of 0/1 occupation numbers."""
        bits = np.arange(self.n_modes, dtype=np.int64)
        return ((self.states[:, None] >> bits[None, :]) & 1).astype(np.int8)

    def label(self, index: int) -> str:
        """Ket label with mode 0 first, e.g. ``'10'`` for mode 0 occupied."""
        occ = int(self.states[index])
        return "".join(str((occ >> b) & 1) for b in range(self.n_modes))

    def __hash__(self):
        return hash((self.n_modes, self.n_particles))

    def __eq__(self, other):
        return (
            isinstance(other, FockSector)
            and other.n_modes == self.n_modes
            and other.n_particles == self.n_particles
        )


def build_sector(n_modes: int, n_particles: int, max_dimension: int = DEFAULT_DIMENSION_CAP) -> FockSector:
    if not (0 <= n_particles <= n_modes <= MAX_MODES):
        raise ConfigError(
            f"need 0 <= n_particles <= n_modes <= {MAX_MODES}, got ({n_modes}, {n_particles})"
        )
    dim = comb(n_modes, n_particles)
    if dim > max_dimension:
        raise ConfigError(f"sector dimension {dim} exceeds cap {max_dimension}")
    states = np.array(
        sorted(sum(1 << b for b in occ) for occ in itertools.combinations(range(n_modes), n_particles)),
        dtype=np.int64,
    )
    return FockSector(n_modes, n_particles, states)


def _check_modes(sector: FockSector, *modes: int) -> None:
    for m in modes:
        if not 0 <= m < sector.n_modes:
            raise IndexError(f"mode index {m} out of range [0, {sector.n_modes})")


def _hop_elements(sector: FockSector, i: int, k: int):
    """Nonzero entries (rows, cols, signs) of c^dag_i c_k in the sector."""
    s = sector.states
    if i == k:
        cols = np.nonzero((s >> k) & 1)[0]
        return cols, cols, np.ones(len(cols))
    sel = (((s >> k) & 1) == 1) & (((s >> i) & 1) == 0)
    cols = np.nonzero(sel)[0]
    src = s[cols]
    dst = (src ^ (1 << k)) | (1 << i)
    rows = np.searchsorted(s, dst)
    signs = 1.0 - 2.0 * _parity_between(src, i, k)
    return rows, cols, signs


def hopping_operator(sector: FockSector, i: int, k: int) -> np.ndarray:
    """Dense matrix of ``c^dag_i c_k``."""
    _check_modes(sector, i, k)
    d = sector.dimension
    out = np.zeros((d, d), dtype=complex)
    rows, cols, signs = _hop_elements(sector, i, k)
    out[rows, cols] = signs
    return out


def quartic_operator(sector: FockSector, i1: int, k1: int, i2: int, k2: int) -> np.ndarray:
    """Dense matrix of ``c^dag_i1 c_k1 c^dag_i2 c_k2`` as an operator product."""
    _check_modes(sector, i1, k1, i2, k2)
    return hopping_operator(sector, i1, k1) @ hopping_operator(sector, i2, k2)


def number_operator(sector: FockSector) -> np.ndarray:
    return sector.n_particles * np.eye(sector.dimension, dtype=complex)


@lru_cache(maxsize=16)
def _one_body_table(sector: FockSector):
    n = sector.n_modes
    rows, cols, signs, pairs = [], [], [], []
    for i in range(n):
        for k in range(n):
            r, c, sg = _hop_elements(sector, i, k)
            rows.append(r)
            cols.append(c)
            signs.append(sg)
            pairs.append(np.full(len(r), i * n + k))
    d = sector.dimension
    flat = np.concatenate(rows) * d + np.concatenate(cols)
    return flat, np.concatenate(pairs), np.concatenate(signs)


def one_body(sector: FockSector, h: np.ndarray) -> np.ndarray:
    """Dense matrix of ``sum_ik h[i, k] c^dag_i c_k``."""
    h = np.asarray(h)
    n, d = sector.n_modes, sector.dimension
    if h.shape != (n, n):
        raise ValueError(f"coupling matrix shape {h.shape} does not match {n} modes")
    flat, pairs, signs = _one_body_table(sector)
    w = signs * h.reshape(-1)[pairs]
    if np.iscomplexobj(w):
        out = np.bincount(flat, weights=w.real, minlength=d * d) + 1j * np.bincount(
            flat, weights=w.imag, minlength=d * d
        )
    else:
        out = np.bincount(flat, weights=w, minlength=d * d)
    return out.reshape(d, d)


@lru_cache(maxsize=8)
def _two_body_table(sector: FockSector):
    """Matrix elements of c^dag_a c^dag_b c_d c_c with a<b, c<d.

    Returns flat indices, (a,b) pair ids, (c,d) pair ids and signs.
    """
    n, s = sector.n_modes, sector.states
    pair_list = [(a, b) for a in range(n) for b in range(a + 1, n)]
    flat_parts, out_parts, in_parts, sign_parts = [], [], [], []
    d = sector.dimension
    for pin, (c, dd) in enumerate(pair_list):
        sel = (((s >> c) & 1) == 1) & (((s >> dd) & 1) == 1)
        cols = np.nonzero(sel)[0]
        if len(cols) == 0:
            continue
        y = s[cols]
        # c_d c_c acting on y: first c_c, then c_d
        par = _parity_below(y, c)
        y1 = y ^ (1 << c)
        par = par + _parity_below(y1, dd)
        y2 = y1 ^ (1 << dd)
        for pout, (a, b) in enumerate(pair_list):
            ok = (((y2 >> a) & 1) == 0) & (((y2 >> b) & 1) == 0)
            if not np.any(ok):
                continue
            yy = y2[ok]
            p = par[ok] + _parity_below(yy, b)
            yy = yy | (1 << b)
            p = p + _parity_below(yy, a)
            yy = yy | (1 << a)
            rows = np.searchsorted(s, yy)
            flat_parts.append(rows * d + cols[ok])
            out_parts.append(np.full(len(rows), pout))
            in_parts.append(np.full(len(rows), pin))
            sign_parts.append(1.0 - 2.0 * (p & 1))
    if not flat_parts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, np.zeros(0), pair_list
    return (
        np.concatenate(flat_parts),
        np.concatenate(out_parts),
        np.concatenate(in_parts),
        np.concatenate(sign_parts),
        pair_list,
    )


def quartic_sum(sector: FockSector, tensor: np.ndarray) -> np.ndarray:
    """Dense matrix of ``sum T[i1,i2,k1,k2] c^dag_i1 c_k1 c^dag_i2 c_k2``.

    Uses ``c^dag_i1 c_k1 c^dag_i2 c_k2 = delta_{k1 i2} c^dag_i1 c_k2
    + c^dag_i1 c^dag_i2 c_k2 c_k1`` and precomputed pair-operator tables, so
    the cost per call is linear in the number of nonzero matrix elements.
    """
    t = np.asarray(tensor)
    n, d = sector.n_modes, sector.dimension
    if t.shape != (n, n, n, n):
        raise ValueError(f"tensor shape {t.shape} does not match {n} modes")
    out = one_body(sector, np.einsum("ijjk->ik", t))
    if sector.n_particles < 2:
        return out
    flat, pout, pin, signs, pair_list = _two_body_table(sector)
    a = np.array([p[0] for p in pair_list])
    b = np.array([p[1] for p in pair_list])
    # c^dag_i1 c^dag_i2 c_k2 c_k1 -> canonical c^dag_a c^dag_b c_d c_c (a<b, c<d):
    # swapping creators flips sign, swapping annihilators flips sign.
    w = t[a[:, None], b[:, None], a[None, :], b[None, :]]
    w = w - t[b[:, None], a[:, None], a[None, :], b[None, :]]
    w = w - t[a[:, None], b[:, None], b[None, :], a[None, :]]
    w = w + t[b[:, None], a[:, None], b[None, :], a[None, :]]
    vals = signs * w[pout, pin]
    if np.iscomplexobj(vals):
        two = np.bincount(flat, weights=vals.real, minlength=d * d) + 1j * np.bincount(
            flat, weights=vals.imag, minlength=d * d
        )
    else:
        two = np.bincount(flat, weights=vals, minlength=d * d)
    return out + two.reshape(d, d)


# --- full Fock-space oracle -------------------------------------------------

def full_fock_annihilators(n_modes: int) -> list[np.ndarray]:
    """Explicit 2^N x 2^N annihilation matrices (Jordan-Wigner, mode 0 first).

    Independent of the sector machinery; used as a brute-force oracle.
    """
    if n_modes > 10:
        raise ConfigError("full Fock oracle limited to 10 modes")
    dim = 1 << n_modes
    ops = []
    for j in range(n_modes):
        c = np.zeros((dim, dim))
        for state in range(dim):
            if (state >> j) & 1:
                sign = (-1) ** bin(state & ((1 << j) - 1)).count("1")
                c[state ^ (1 << j), state] = sign
        ops.append(c)
    return ops


def restrict_to_sector(full_op: np.ndarray, sector: FockSector) -> np.ndarray:
    idx = sector.states
    return full_op[np.ix_(idx, idx)]
