"""End-to-end acceptance criteria, one test per criterion.

Every test prints a single PASS/FAIL line (also collected in the terminal
summary) and asserts the criterion at its stated tolerance.
"""
import time

import numpy as np
import pytest
from scipy import linalg

from csyklab import couplings, dynamics, fock, lindblad, probes, speckle, stats
from csyklab.couplings import HoppingMatrix, ModelParams
from csyklab.rng import stream

pytestmark = pytest.mark.acceptance


def fmt(x, spec=".4g"):
    return format(float(x), spec)


# --- 1, 2: Trotter error and SFF deviation ---------------------------------

@pytest.fixture(scope="module")
def trotter_ensemble():
    n, r = 8, 8
    sector = fock.build_sector(n, n // 2)
    params = ModelParams(n_sites=n, rank_r=r)
    out = []
    for k in range(20):
        fs = [couplings.sample_hopping(params, 0, k * r + a) for a in range(r)]
        hs = couplings.factor_hamiltonians(sector, fs)
        out.append((dynamics.diagonalize(sum(hs)), [dynamics.diagonalize(h) for h in hs]))
    return sector, out


def _ensemble_series(ensemble, dt, n_max):
    du, ds = [], []
    for heff, caches in ensemble:
        s = dynamics.error_series(heff, caches, dynamics.TrotterPlan(dt, n_max))
        du.append(s["distance"].mean())
        ds.append(np.abs(s["sff_eff"] - s["sff_trotter"]).mean())
    return float(np.mean(du)), float(np.mean(ds))


def test_criterion_01_trotter_error_scaling(trotter_ensemble, report):
    t0 = time.perf_counter()
    _, ens = trotter_ensemble
    dts = [0.025, 0.05, 0.1, 0.2, 0.4]
    small = dts[:3]
    checks = []
    for total in (10.0, 100.0):
        du = [_ensemble_series(ens, dt, int(round(total / dt)))[0] for dt in dts]
        mono = all(b > a for a, b in zip(du, du[1:]))
        slope = np.polyfit(np.log(small), np.log(du[:3]), 1)[0]
        sat = _ensemble_series(ens, 5.0, max(1, int(round(total / 5.0))))[0]
        checks += [(f"Jt={total:g} monotone", mono, "[" + ", ".join(fmt(x, ".3g") for x in du) + "]"),
                   (f"Jt={total:g} slope", abs(slope - 1.0) <= 0.3, fmt(slope, ".3f")),
                   (f"Jt={total:g} dU(dt=5)", abs(sat - np.sqrt(2)) <= 0.1, fmt(sat, ".4f"))]
    elapsed = time.perf_counter() - t0
    checks.append(("runtime_s", elapsed <= 1800, fmt(elapsed, ".0f")))
    assert report(1, "Trotter error scaling", checks)


def test_criterion_02_delta_sff_plateau(trotter_ensemble, report):
    sector, ens = trotter_ensemble
    inv_d = 1 / sector.dimension
    checks = []
    for dt in (1.0, 2.0):
        _, ds = _ensemble_series(ens, dt, 500)
        checks.append((f"dSFF(dt={dt:g})*D", abs(ds / inv_d - 1) <= 0.3, fmt(ds / inv_d, ".3f")))
    du, ds = _ensemble_series(ens, 0.1, 500)
    checks += [("dSFF(dt=0.1)", ds <= 1e-3, fmt(ds, ".3e")), ("dU(dt=0.1)", du >= 1e-2, fmt(du, ".3e"))]
    assert report(2, "Delta SFF plateau", checks)


# --- 3: commutator bound ---------------------------------------------------

def test_criterion_03_commutator_bound(report):
    # bound convention: unnormalized factors with per-entry variance sqrt(2) J / N^2
    checks = []
    for n, r in ((6, 6), (8, 8)):
        sector = fock.build_sector(n, n // 2)
        params = ModelParams(n_sites=n, rank_r=r, normalization="raw")
        scale = (np.sqrt(2.0) / n**2 / params.hopping_variance) ** 0.5
        vals = []
        for k in range(50):
            fs = [HoppingMatrix(scale * couplings.sample_hopping(params, 1, k * r + a).entries) for a in range(r)]
            vals.append(dynamics.commutator_error_norm(couplings.factor_hamiltonians(sector, fs, 1.0, "raw")))
        bound = 200 * params.j_scale**4 * r**2 / n**2
        checks.append((f"(N,R)=({n},{r}) mean/bound", np.mean(vals) <= bound,
                       f"{fmt(np.mean(vals))}/{fmt(bound)}"))
    assert report(3, "Commutator bound", checks)


# --- 4: coupling statistics ------------------------------------------------

def test_criterion_04_coupling_statistics(report):
    checks = []
    g = stream(21, 0, "acceptance-single").normal(size=(2, 1_000_000))
    x = g[0] * g[1]
    _, p, _ = stats.chi2_test_1d(x, lambda y: stats.pdf_single_product(y, 1.0))
    checks.append(("chi2 single p", p > 0.01, fmt(p, ".3f")))
    for r in (1, 4, 16):
        law = stats.ProductGaussianLaw(1.0, r)
        x = stats.sample_sum_r(stream(21, r, "acceptance-sum"), 1_000_000, law)
        _, p, _ = stats.chi2_test_1d(x, lambda y, law=law: stats.pdf_sum_r(y, law))
        checks.append((f"chi2 R={r} p", p > 0.01, fmt(p, ".3f")))
    a, b = stats.sample_joint_shared(stream(21, 0, "acceptance-joint"), 1_000_000)
    _, p, _ = stats.chi2_test_2d(a, b, stats.pdf_joint_shared)
    checks.append(("chi2 joint p", p > 0.01, fmt(p, ".3f")))
    dev = {r: stats.shannon_entropy(stats.ProductGaussianLaw(1.0, r), "quadrature")
           - stats.shannon_entropy(stats.ProductGaussianLaw(1.0, r)) for r in (10, 20)}
    ratio = dev[10] / dev[20]
    checks.append(("entropy dev ratio R10/R20", ratio >= 4 * 0.5, fmt(ratio, ".3f")))
    for r in (10, 20):
        kl = stats.kl_to_gaussian(stats.ProductGaussianLaw(1.0, r), "quadrature")
        target = 3 / (4 * r**2)
        checks.append((f"KL R={r} vs 3/(4R^2)", abs(kl / target - 1) <= 0.2, f"{fmt(kl)}/{fmt(target)}"))
    assert report(4, "Coupling statistics", checks)


# --- 5, 6: speckle pipeline ------------------------------------------------

def test_criterion_05_speckle_pipeline(report):
    cfg = speckle.SpeckleConfig()
    j33, j47, worst = [], [], 0.0
    total, batch = 100_000, 500
    for start in range(0, total, batch):
        fields = speckle.generate_speckle_batch(cfg, 0, range(start, start + batch))
        worst = max(worst, float(np.abs(fields.mean(axis=(1, 2)) - 2.0).max()))
        js = speckle.coherent_couplings_batch(fields, cfg, 8)
        j33.extend(js[:, 3, 3])
        j47.extend(js[:, 4, 7])
    j33, j47 = np.array(j33), np.array(j47)
    checks = [("mean J33", abs(j33.mean() / 0.26 - 1) <= 0.1, fmt(j33.mean())),
              ("std J33", abs(j33.std() / 0.015 - 1) <= 0.3, fmt(j33.std())),
              ("|mean J47|", abs(j47.mean()) < 1e-3, fmt(abs(j47.mean()), ".2e")),
              ("std J47", abs(j47.std() / 0.010 - 1) <= 0.3, fmt(j47.std())),
              ("max |field mean - 2|", worst <= 1e-10, fmt(worst, ".1e"))]
    assert report(5, "Speckle pipeline", checks)


def test_criterion_06_dynamical_n(report):
    anchors = [0, 50, 100, 200]
    fits = {}
    for radius in (6.0, 15.0):
        cfg = speckle.SpeckleConfig(mask_radius_px=radius)
        fields = [(v, cfg) for v in speckle.generate_speckle_batch(cfg, 3, range(100))]
        fits[radius] = [f.n for f in speckle.determine_n(fields, anchors, 1000)]
    checks = []
    for radius, ns in fits.items():
        checks.append((f"r={radius:g} increasing", all(b > a for a, b in zip(ns, ns[1:])),
                       "[" + ", ".join(fmt(x, ".1f") for x in ns) + "]"))
    checks.append(("N(r=15) > N(r=6)", all(b > a for a, b in zip(fits[6.0], fits[15.0])), "all anchors"))
    checks.append(("N_0(r=6)", 10 <= fits[6.0][0] <= 30, fmt(fits[6.0][0], ".1f")))
    assert report(6, "Dynamical N", checks)


# --- 7: chaos benchmarks ---------------------------------------------------

def test_criterion_07_chaos_benchmarks(report):
    n = 8
    sector = fock.build_sector(n, n // 2)
    d = sector.dimension

    def lowrank(r, count):
        p = ModelParams(n_sites=n, rank_r=r)
        return [dynamics.diagonalize(couplings.effective_hamiltonian(
            sector, [couplings.sample_hopping(p, 0, k * r + a) for a in range(r)])) for k in range(count)]

    ref = [dynamics.diagonalize(couplings.reference_csyk4(sector, 1.0, 0, k)) for k in range(200)]
    low_n, low_1 = lowrank(n, 200), lowrank(1, 200)

    to = np.linspace(0.0, 10.0, 101)

    def otoc_avg(specs, ts):
        return np.mean([probes.otoc(s, sector, ts) for s in specs[:50]], axis=0)

    o_n, o_1 = otoc_avg(low_n, to), otoc_avg(low_1, to)
    o_ref = otoc_avg(ref, probes.reference_times(to))
    ts = probes.log_time_grid(0.1, 1e4, 200)
    s_n, s_1 = probes.sff_series(low_n, ts), probes.sff_series(low_1, ts)
    s_ref = probes.sff_series(ref, probes.reference_times(ts))
    l2 = lambda a, b: float(np.sqrt(np.mean((a - b) ** 2)))
    plateau = float(s_n[ts > 1e3].mean())
    checks = [("OTOC(0)-1", abs(o_n[0] - 1) < 1e-12 and abs(o_1[0] - 1) < 1e-12, fmt(abs(o_n[0] - 1), ".1e")),
              ("OTOC L2 R=N < R=1", l2(o_n, o_ref) < l2(o_1, o_ref), f"{fmt(l2(o_n, o_ref), '.3f')} < {fmt(l2(o_1, o_ref), '.3f')}"),
              ("SFF L2 R=N < R=1", l2(s_n, s_ref) < l2(s_1, s_ref), f"{fmt(l2(s_n, s_ref), '.3f')} < {fmt(l2(s_1, s_ref), '.3f')}"),
              ("SFF plateau*D", abs(plateau * d - 1) <= 0.2, fmt(plateau * d, ".3f"))]
    assert report(7, "Chaos benchmarks", checks)


# --- 8, 9: state preparation and thermodynamics ----------------------------

def test_criterion_08_state_preparation(report):
    sector = fock.build_sector(12, 6)
    h = couplings.reference_csyk4(sector, 1.0, 0, 0)
    rep = probes.product_state_diagnostics(dynamics.diagonalize(h), sector)
    hot = float(np.mean(rep.beta_eff <= 1e-2))
    norm_err = float(np.abs(rep.overlap_hist.sum(axis=1) - 1).max())
    checks = [("states", len(rep.labels) == 924, str(len(rep.labels))),
              ("fraction J beta_eff <= 1e-2", hot >= 0.5, fmt(hot, ".3f")),
              ("max |hist norm - 1|", norm_err <= 1e-8, fmt(norm_err, ".1e"))]
    assert report(8, "State preparation", checks)


def test_criterion_09_thermodynamic_fits(report):
    sector = fock.build_sector(12, 6)
    e = probes.pooled_eigenvalues([np.linalg.eigvalsh(couplings.reference_csyk4(sector, 1.0, 0, k))
                                   for k in range(100)])
    e = probes.trim_lowest(e, 40)
    hist = probes.spectral_density([e], 100)
    sch = probes.fit_schwarzian_edge(hist, (e[0], e[0] + 0.8))
    bulk = probes.fit_dssyk_bulk(hist)
    checks = [("Schwarzian E0", abs(sch["E0"] + 1.62) <= 0.15, fmt(sch["E0"], ".3f")),
              ("Schwarzian calE", 1.3 <= sch["calE"] <= 3.3, fmt(sch["calE"], ".3f")),
              ("DSSYK calE~", 0.9 <= bulk["calE_tilde"] <= 1.4, fmt(bulk["calE_tilde"], ".3f"))]
    assert report(9, "Thermodynamic fits", checks)


# --- 10, 11: open-system structure -----------------------------------------

def test_criterion_10_lindblad_structure(report):
    t0 = time.perf_counter()
    n, count = 6, 20
    max_re, zero_ok, stat, closed, r2s, rate_ratio, gaps6 = -np.inf, True, 0.0, True, [], [], []
    for k in range(count):
        m = lindblad.speckle_open_model(n, 6, 0, k)
        l = m.lindbladian()
        s = lindblad.lindblad_spectrum(l)
        d = m.sector.dimension
        max_re = max(max_re, float(s.eigenvalues.real.max()))
        zero_ok &= s.n_zero == 1
        closed &= lindblad.conjugation_closed(s.eigenvalues)
        stat = max(stat, float(np.abs(l @ lindblad.vec(np.eye(d) / d)).max()))
        gaps6.append(s.gap)
        prop = lindblad.Propagator(l)
        psi = lindblad.random_pure_state(d, stream(0, k, "initial-state"))
        ts = np.linspace(0.0, 6.0 / s.gap, 600)
        fit = lindblad.fit_fidelity_decay(ts, lindblad.fidelities(prop, psi, m.hamiltonian, ts)["F"], d)
        r2s.append(fit["r2"])
        rate_ratio.append(fit["rate"] / s.gap)
    gaps12 = [lindblad.lindblad_spectrum(lindblad.speckle_open_model(n, 12, 0, k).lindbladian()).gap
              for k in range(count)]

    # Trotterized channel vs continuous evolution, realization 0
    m = lindblad.speckle_open_model(n, 6, 0, 0)
    l = m.lindbladian()
    gap = lindblad.lindblad_spectrum(l).gap
    prop = lindblad.Propagator(l)
    psi = lindblad.random_pure_state(m.sector.dimension, stream(0, 0, "initial-state"))
    rho0 = np.outer(psi, psi.conj())
    factor_ls = m.factor_lindbladians()
    devs = []
    for dt in (0.0025, 0.00125):
        n_cycles = int(round(2.0 / gap / dt))
        step = n_cycles // 50
        jump = lindblad.trotterized_lindblad_step(factor_ls, dt, step)
        v = lindblad.vec(rho0)
        dev = 0.0
        for j in range(1, 51):
            v = jump @ v
            exact = prop.apply(rho0, j * step * dt)
            dev = max(dev, abs(np.real(psi.conj() @ (lindblad.unvec(v) - exact) @ psi)))
        devs.append(dev)
    conv = devs[0] / devs[1]
    elapsed = time.perf_counter() - t0
    checks = [("max Re lambda", max_re <= 1e-8, fmt(max_re, ".1e")),
              ("one zero eigenvalue", zero_ok, "all realizations" if zero_ok else "violated"),
              ("max |L(I/D)|", stat <= 1e-8, fmt(stat, ".1e")),
              ("conjugation closed", closed, str(closed)),
              ("gap R=12 > R=6", np.mean(gaps12) > np.mean(gaps6), f"{fmt(np.mean(gaps12))} > {fmt(np.mean(gaps6))}"),
              ("min fit R^2", min(r2s) > 0.98, fmt(min(r2s), ".4f")),
              ("tau^-1/gap in [0.5,2]", all(0.5 <= x <= 2 for x in rate_ratio),
               f"[{fmt(min(rate_ratio), '.2f')}, {fmt(max(rate_ratio), '.2f')}]"),
              ("Trotter deviation ratio", abs(conv / 2 - 1) <= 0.3, fmt(conv, ".3f")),
              ("runtime_s", elapsed <= 3600, fmt(elapsed, ".0f"))]
    assert report(10, "Lindblad structure", checks)


def test_criterion_11_timescale_ratio(report):
    ratio = lindblad.timescales(lindblad.CavityParams())["ratio"]
    assert report(11, "Timescale ratio", [("ratio", abs(ratio / 500 - 1) <= 0.01, fmt(ratio, ".3f"))])


# --- 12, 13 -----------------------------------------------------------------

def test_criterion_12_lipschitz(report):
    res = dynamics.lipschitz_experiment(range(4, 41), 10_000, delta_u=0.1, seed=0)
    checks = [("B", abs(res.b - 1.1) <= 0.2, fmt(res.b, ".3f")),
              ("max kappa / (2(D-1)/D)", res.max_ratio_to_bound <= 1.0, fmt(res.max_ratio_to_bound, ".3f"))]
    assert report(12, "Lipschitz experiment", checks)


def _full_number(c):
    return sum(a.T @ a for a in c)


def test_criterion_13_oracle_equivalence(report):
    worst = {"operators": 0.0, "hamiltonians": 0.0, "propagators": 0.0}

    def note(kind, a, b):
        worst[kind] = max(worst[kind], float(np.abs(a - b).max()))

    for n in range(1, 5):
        c = fock.full_fock_annihilators(n)
        cd = [a.T for a in c]
        params = ModelParams(n_sites=n, rank_r=3)
        factors = couplings.sample_factors(params, 13)
        amps = [sum(f.entries[i, k] * cd[i] @ c[k] for i in range(n) for k in range(n)) for f in factors]
        h_full = sum(a @ a for a in amps) / np.sqrt(3)
        t4 = stream(13, 0, "csyk4").normal(0.0, np.sqrt(2.0 / n**3), size=(n, n, n, n))
        ref_full = sum(t4[i1, i2, k1, k2] * cd[i1] @ c[k1] @ cd[i2] @ c[k2]
                       for i1 in range(n) for i2 in range(n) for k1 in range(n) for k2 in range(n))
        ref_full = 0.5 * (ref_full + ref_full.conj().T)
        for m in range(n + 1):
            s = fock.build_sector(n, m)
            for i in range(n):
                for k in range(n):
                    note("operators", fock.hopping_operator(s, i, k), fock.restrict_to_sector(cd[i] @ c[k], s))
                    for i2 in range(n):
                        for k2 in range(n):
                            note("operators", fock.quartic_operator(s, i, k, i2, k2),
                                 fock.restrict_to_sector(cd[i] @ c[k] @ cd[i2] @ c[k2], s))
            note("operators", fock.number_operator(s), fock.restrict_to_sector(_full_number(c), s))
            h = couplings.effective_hamiltonian(s, factors)
            note("hamiltonians", h, fock.restrict_to_sector(h_full, s))
            note("hamiltonians", sum(couplings.factor_hamiltonians(s, factors)), fock.restrict_to_sector(h_full, s))
            ref = couplings.reference_csyk4(s, 1.0, 13, 0)
            note("hamiltonians", ref, fock.restrict_to_sector(ref_full, s))
            for t in (0.3, 2.0):
                note("propagators", dynamics.exact_propagator(h, t),
                     fock.restrict_to_sector(linalg.expm(-1j * t * h_full), s))
                note("propagators", dynamics.exact_propagator(ref, t),
                     fock.restrict_to_sector(linalg.expm(-1j * t * ref_full), s))
            plan = dynamics.TrotterPlan(0.1)
            hs = couplings.factor_hamiltonians(s, factors)
            cycle_full = np.eye(2**n, dtype=complex)
            for a in amps:
                cycle_full = linalg.expm(-0.1j * (a @ a) / np.sqrt(3)) @ cycle_full
            note("propagators", dynamics.trotter_propagator(hs, plan, 5),
                 fock.restrict_to_sector(np.linalg.matrix_power(cycle_full, 5), s))
    checks = [(f"max {k} error", v <= 1e-9, fmt(v, ".1e")) for k, v in worst.items()]
    assert report(13, "Oracle equivalence", checks)
