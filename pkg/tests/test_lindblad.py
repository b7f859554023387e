import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from csyklab import fock, lindblad
from csyklab.errors import ConfigError, NumericError
from csyklab.lindblad import CavityParams
from csyklab.speckle import SpeckleConfig

SMALL = SpeckleConfig(n_grid=64, dim_grid=10.0, mask_radius_px=4.0)


def random_ops(d, k, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = a + a.conj().T
    jumps = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(k)]
    return h, jumps


def random_rho(d, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_vectorized_matches_direct(d, k, seed):
    h, jumps = random_ops(d, k, seed)
    rho = random_rho(d, seed + 1)
    l = lindblad.build_lindbladian(h, jumps)
    assert np.allclose(lindblad.unvec(l @ lindblad.vec(rho)), lindblad.apply_lindbladian(h, jumps, rho), atol=1e-10)


def test_vec_column_stacking():
    rho = np.arange(4.0).reshape(2, 2)
    assert np.array_equal(lindblad.vec(rho), [0.0, 2.0, 1.0, 3.0])
    assert np.array_equal(lindblad.unvec(lindblad.vec(rho)), rho)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_trace_and_hermiticity_preserved(d, seed):
    h, jumps = random_ops(d, 2, seed)
    l = lindblad.build_lindbladian(h, jumps)
    # trace preservation: vec(I)^+ L = 0
    assert np.allclose(lindblad.vec(np.eye(d)) @ l, 0, atol=1e-10)
    rho = random_rho(d, seed)
    out = lindblad.unvec(l @ lindblad.vec(rho))
    assert np.allclose(out, out.conj().T, atol=1e-10)


def test_unitary_spectrum_differences():
    h, _ = random_ops(4, 0, 3)
    e = np.linalg.eigvalsh(h)
    w = lindblad.lindblad_spectrum(lindblad.build_lindbladian(h)).eigenvalues
    expected = (1j * (e[:, None] - e[None, :])).ravel()
    assert np.allclose(np.sort_complex(np.round(w, 9)), np.sort_complex(np.round(expected, 9)), atol=1e-8)


def test_jump_scaling_quadratic():
    h, jumps = random_ops(3, 1, 4)
    d1 = lindblad.dissipator(jumps[0])
    assert np.allclose(lindblad.dissipator(2.5 * jumps[0]), 6.25 * d1)


def test_dimension_checks():
    with pytest.raises(ConfigError):
        lindblad.build_lindbladian(np.eye(3), [np.eye(2)])
    with pytest.raises(ConfigError):
        lindblad.build_lindbladian(np.eye(lindblad.MAX_DIMENSION + 1))


def test_spectrum_gap_and_zero_count():
    d = 2
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # decay |1> -> |0>
    l = lindblad.build_lindbladian(np.zeros((d, d)), [sm])
    s = lindblad.lindblad_spectrum(l)
    assert s.n_zero == 1
    assert s.gap == pytest.approx(0.5)
    assert np.allclose(sorted(s.eigenvalues.real), [-1.0, -0.5, -0.5, 0.0])
    assert lindblad.conjugation_closed(s.eigenvalues)
    assert not lindblad.conjugation_closed(np.array([1j, 0.0]))


def test_propagator_against_expm_and_fallback():
    h, jumps = random_ops(3, 2, 5)
    l = lindblad.build_lindbladian(h, jumps)
    p = lindblad.Propagator(l)
    assert p.use_eig
    assert np.allclose(p.matrix(0.3), linalg.expm(0.3 * l), atol=1e-10)
    q = lindblad.Propagator(l, cond_limit=0.0)
    assert not q.use_eig
    rho = random_rho(3, 0)
    assert np.allclose(q.apply(rho, 0.3), p.apply(rho, 0.3), atol=1e-10)
    states = lindblad.evolve_density(p, rho, [0.0, 0.3])
    assert np.allclose(states[0], rho)


def test_trotterized_step():
    h, jumps = random_ops(3, 2, 6)
    ls = [lindblad.build_lindbladian(h / 2, [jumps[0]]), lindblad.build_lindbladian(h / 2, [jumps[1]])]
    step = lindblad.trotterized_lindblad_step(ls, 0.01, 3)
    cycle = linalg.expm(0.01 * ls[1]) @ linalg.expm(0.01 * ls[0])
    assert np.allclose(step, np.linalg.matrix_power(cycle, 3))
    with pytest.raises(ConfigError):
        lindblad.trotterized_lindblad_step([], 0.1)


def test_trotterized_first_order():
    h, jumps = random_ops(3, 2, 7)
    ls = [lindblad.build_lindbladian(h / 2, [jumps[0]]), lindblad.build_lindbladian(h / 2, [jumps[1]])]
    total = linalg.expm(0.2 * sum(ls))
    e1 = np.linalg.norm(lindblad.trotterized_lindblad_step(ls, 0.002, 100) - total)
    e2 = np.linalg.norm(lindblad.trotterized_lindblad_step(ls, 0.001, 200) - total)
    assert e1 / e2 == pytest.approx(2.0, rel=0.05)


def test_fidelities_unitary_limit():
    h, _ = random_ops(4, 0, 8)
    psi = lindblad.random_pure_state(4, np.random.default_rng(0))
    f = lindblad.fidelities(lindblad.build_lindbladian(h), psi, h, np.linspace(0, 2, 5))
    assert np.allclose(f["F"], 1.0, atol=1e-10)
    assert f["F0"][0] == pytest.approx(1.0)


def test_fidelity_fit_exact_exponential():
    d = 8
    t = np.linspace(0, 10, 400)
    f = 1 / d + (1 - 1 / d) * np.exp(-0.7 * t)
    fit = lindblad.fit_fidelity_decay(t, f, d)
    assert fit["rate"] == pytest.approx(0.7, rel=1e-8)
    assert fit["r2"] == pytest.approx(1.0)
    with pytest.raises(NumericError):
        lindblad.fidelity_window(t, np.ones_like(t), d)


def test_timescales():
    p = CavityParams()
    ts = lindblad.timescales(p)
    assert ts["ratio"] == pytest.approx(500.0, rel=1e-3)
    assert ts["t_dissipative"] / ts["t_unitary"] == pytest.approx(ts["ratio"])
    q = lindblad.timescales(p, 4.0)
    assert q["ratio"] == pytest.approx(ts["ratio"] / 2)
    assert q["t_dissipative"] == pytest.approx(ts["t_dissipative"] / 4)


def test_cavity_params():
    p = CavityParams()
    assert p.cooperativity == pytest.approx(4 * 2.05**2 / (0.16 * 5.86))
    with pytest.raises(ConfigError):
        CavityParams(kappa=0.0)


def test_speckle_model_structure():
    m = lindblad.speckle_open_model(4, 2, 0, 0, config=SMALL)
    assert m.sector.dimension == 6 and len(m.hamiltonians) == 2 and len(m.jumps) == 2
    h = m.hamiltonian
    assert np.allclose(h, h.conj().T)
    l = m.lindbladian()
    s = lindblad.lindblad_spectrum(l)
    assert s.eigenvalues.real.max() < 1e-8
    assert s.n_zero == 1
    assert lindblad.conjugation_closed(s.eigenvalues)
    assert np.allclose(sum(m.factor_lindbladians()), l)


def test_identity_stationary_without_atomic_loss():
    # with gamma -> 0 the jump couplings are a complex multiple of a real symmetric matrix,
    # so every jump is normal and the maximally mixed state is exactly stationary
    p = CavityParams(gamma=1e-30)
    m = lindblad.speckle_open_model(4, 2, 1, 0, params=p, config=SMALL)
    d = m.sector.dimension
    out = lindblad.apply_lindbladian(m.hamiltonian, m.jumps, np.eye(d) / d)
    scale = np.abs(m.lindbladian()).max()
    assert np.abs(out).max() < 1e-13 * scale


def test_one_body_jump_commutes_with_number():
    m = lindblad.speckle_open_model(4, 1, 2, 0, config=SMALL)
    n = fock.number_operator(m.sector)
    assert np.allclose(m.jumps[0] @ n, n @ m.jumps[0])
