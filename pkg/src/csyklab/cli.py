"""Command-line entry point: ``csyklab <command> --config PATH [options]``.

Every command writes its data files plus ``manifest.json`` (inputs, code
version, wall time, output hashes) into ``--out``.  Exit codes: 0 success,
2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

THREAD_ENV = "CSYKLAB_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _cap_threads(n: int | None):
    n = n or (int(os.environ[THREAD_ENV]) if os.environ.get(THREAD_ENV) else None)
    if n:
        for var in _BLAS_VARS:
            os.environ[var] = str(n)
    return n


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, cwd=Path(__file__).resolve().parent, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# --- commands -------------------------------------------------------------
# Each takes (cfg, out_dir) and returns (summary dict, list of written paths).

def _factors(cfg, sector, realization: int):
    from . import couplings
    store_path = cfg.run.get("store")
    r = cfg.model.rank_r
    if store_path:
        from .store import RealizationStore
        if not Path(store_path).exists():
            from .errors import ConfigError
            raise ConfigError(f"realization store {store_path} does not exist")
        st = RealizationStore(store_path, _store_key(cfg))
        hs = [st.get(realization * r + a) for a in range(r)]
    else:
        hs = [couplings.sample_hopping(cfg.model, cfg.seed, realization * r + a) for a in range(r)]
    return hs


def _store_key(cfg) -> dict:
    d = cfg.to_dict()
    return {"model": d["model"], "seed": d["seed"]}


def _lowrank(cfg, sector, realization: int):
    from . import couplings
    hs = _factors(cfg, sector, realization)
    norm = cfg.model.normalization
    return (couplings.effective_hamiltonian(sector, hs, 1.0, norm),
            couplings.factor_hamiltonians(sector, hs, 1.0, norm))


def _sector(cfg):
    from . import fock
    return fock.build_sector(cfg.model.n_sites, cfg.model.m, int(cfg.run.get("max_dimension", 5000)))


def cmd_trotter_error(cfg, out: Path):
    import numpy as np

    from . import couplings, dynamics
    from .store import RealizationStore, write_csv
    sector = _sector(cfg)
    dts = [float(x) for x in cfg.run.get("dts", [0.025, 0.05, 0.1, 0.2, 0.4])]
    totals = [float(x) for x in cfg.run.get("total_times", [10.0, 100.0])]
    if cfg.run.get("save_store"):
        st = RealizationStore(out / "store", _store_key(cfg))
        for k in range(cfg.n_realizations * cfg.model.rank_r):
            st.put(couplings.sample_hopping(cfg.model, cfg.seed, k), cfg.seed)
    du = np.zeros((len(totals), len(dts), cfg.n_realizations))
    ds = np.zeros_like(du)
    comm = []
    for r in range(cfg.n_realizations):
        h_eff, hs = _lowrank(cfg, sector, r)
        heff = dynamics.diagonalize(h_eff)
        caches = [dynamics.diagonalize(h) for h in hs]
        comm.append(dynamics.commutator_error_norm(hs))
        for i, total in enumerate(totals):
            for j, dt in enumerate(dts):
                plan = dynamics.TrotterPlan(dt, max(1, int(round(total / dt))))
                s = dynamics.error_series(heff, caches, plan)
                du[i, j, r] = s["distance"].mean()
                ds[i, j, r] = np.abs(s["sff_eff"] - s["sff_trotter"]).mean()
    rows = []
    sem = np.sqrt(cfg.n_realizations) if cfg.n_realizations > 1 else 1.0
    for i, total in enumerate(totals):
        for j, dt in enumerate(dts):
            rows.append((total, dt, du[i, j].mean(), du[i, j].std(ddof=min(1, cfg.n_realizations - 1)) / sem,
                         ds[i, j].mean()))
    p = cfg.model
    bound = 200 * p.j_scale**4 * p.rank_r**2 / p.n_sites**2
    summary = {"commutator_norm_sq_mean": float(np.mean(comm)), "bound": bound,
               "bound_holds": bool(np.mean(comm) <= bound), "dimension": sector.dimension,
               "one_over_d": 1 / sector.dimension}
    return summary, [write_csv(out / "trotter_error.csv", ["total_time", "dt", "delta_u", "delta_u_sem", "delta_sff"], rows)]


def _reference_spectra(cfg, sector, count):
    from . import couplings, dynamics
    return [dynamics.diagonalize(couplings.reference_csyk4(sector, cfg.model.j_scale, cfg.seed, r))
            for r in range(count)]


def _lowrank_spectra(cfg, sector, count, rank_r=None):
    from . import couplings, dynamics
    c = cfg if rank_r is None else _with_rank(cfg, rank_r)
    out = []
    for r in range(count):
        hs = _factors(c, sector, r)
        out.append(dynamics.diagonalize(couplings.effective_hamiltonian(sector, hs, 1.0, c.model.normalization)))
    return out


def _with_rank(cfg, rank_r):
    import dataclasses
    return dataclasses.replace(cfg, model=cfg.model.with_(rank_r=int(rank_r)))


def cmd_sff(cfg, out: Path):
    import numpy as np

    from . import probes
    from .errors import ConfigError
    from .store import write_csv
    if cfg.n_realizations < 1:
        raise ConfigError("empty ensemble")
    sector = _sector(cfg)
    times = probes.log_time_grid(float(cfg.run.get("t_min", 0.1)), float(cfg.run.get("t_max", 1e4)),
                                 int(cfg.run.get("points", 200)))
    scale = float(cfg.run.get("time_rescale", 0.7))
    low = probes.sff_series(_lowrank_spectra(cfg, sector, cfg.n_realizations), times)
    one = probes.sff_series(_lowrank_spectra(cfg, sector, cfg.n_realizations, 1), times)
    ref_specs = _reference_spectra(cfg, sector, cfg.n_realizations)
    ref = probes.sff_series(ref_specs, probes.reference_times(times, scale))
    late = times > 0.5 * times[-1]
    summary = {"plateau_lowrank": float(low[late].mean()), "one_over_d": 1 / sector.dimension,
               "time_rescale": scale}
    rows = zip(times, low, one, ref)
    return summary, [write_csv(out / "sff.csv", ["t", "sff_rank_r", "sff_rank_1", "sff_reference"], rows)]


def cmd_otoc(cfg, out: Path):
    import numpy as np

    from . import probes
    from .errors import ConfigError
    from .store import write_csv
    if cfg.n_realizations < 1:
        raise ConfigError("empty ensemble")
    sector = _sector(cfg)
    times = np.linspace(0.0, float(cfg.run.get("t_max", 10.0)), int(cfg.run.get("points", 101)))
    pairs = tuple(tuple(p) for p in cfg.run.get("pairs", [[0, 1], [2, 3]]))
    scale = float(cfg.run.get("time_rescale", 0.7))

    def avg(specs, ts):
        return np.mean([probes.otoc(s, sector, ts, pairs) for s in specs], axis=0)

    low = avg(_lowrank_spectra(cfg, sector, cfg.n_realizations), times)
    one = avg(_lowrank_spectra(cfg, sector, cfg.n_realizations, 1), times)
    ref = avg(_reference_spectra(cfg, sector, cfg.n_realizations), probes.reference_times(times, scale))
    summary = {"otoc0": float(low[0]), "l2_rank_r": float(np.sqrt(np.mean((low - ref) ** 2))),
               "l2_rank_1": float(np.sqrt(np.mean((one - ref) ** 2))), "time_rescale": scale}
    return summary, [write_csv(out / "otoc.csv", ["t", "otoc_rank_r", "otoc_rank_1", "otoc_reference"],
                               zip(times, low, one, ref))]


def cmd_spectral_density(cfg, out: Path):
    from . import probes
    from .errors import ConfigError
    from .store import write_csv
    if cfg.n_realizations < 1:
        raise ConfigError("empty ensemble")
    sector = _sector(cfg)
    bins = int(cfg.run.get("bins", 100))
    center = bool(cfg.run.get("center", True))
    ranks = [int(r) for r in cfg.run.get("ranks", [1, cfg.model.n_sites])]
    ref_e = probes.pooled_eigenvalues(_reference_spectra(cfg, sector, cfg.n_realizations), center)
    summary = {"reference_skewness": probes.skewness(ref_e), "ranks": {}}
    paths = []
    for r in ranks:
        e = probes.pooled_eigenvalues(_lowrank_spectra(cfg, sector, cfg.n_realizations, r), center)
        hist = probes.spectral_density([e], bins)
        summary["ranks"][str(r)] = {"skewness": probes.skewness(e), "ks_to_reference": probes.ks_distance(e, ref_e)}
        paths.append(write_csv(out / f"density_R{r}.csv", ["E", "rho"], zip(hist.centers, hist.density)))
    hist = probes.spectral_density([ref_e], bins)
    paths.append(write_csv(out / "density_reference.csv", ["E", "rho"], zip(hist.centers, hist.density)))
    return summary, paths


def cmd_thermo(cfg, out: Path):
    import numpy as np

    from . import probes
    from .store import write_csv
    sector = _sector(cfg)
    e = np.sort(probes.pooled_eigenvalues(_reference_spectra(cfg, sector, cfg.n_realizations)))
    e = probes.trim_lowest(e, int(cfg.run.get("trim", 40)))
    hist = probes.spectral_density([e], int(cfg.run.get("bins", 100)))
    lo = float(e[0])
    window = cfg.run.get("edge_window", [lo, lo + float(cfg.run.get("edge_width", 0.8))])
    betas = np.linspace(10.0, 50.0, 41) / cfg.model.j_scale
    high = np.linspace(0.01, 0.1, 10) / cfg.model.j_scale
    summary = {"schwarzian": probes.fit_schwarzian_edge(hist, tuple(window)),
               "dssyk": probes.fit_dssyk_bulk(hist),
               "thermal": probes.fit_thermal_energy(e, betas),
               "high_t": probes.fit_linear_high_t(e, high)}
    curve = np.linspace(0.0, 50.0, 501)
    paths = [write_csv(out / "density.csv", ["E", "rho"], zip(hist.centers, hist.density)),
             write_csv(out / "thermal_energy.csv", ["beta", "E"], zip(curve, probes.thermal_energy(e, curve)))]
    return summary, paths


def cmd_speckle(cfg, out: Path):
    import numpy as np

    from . import speckle
    from .store import field_to_csv, save_field, write_csv
    n = cfg.model.n_sites
    pairs = [tuple(p) for p in cfg.run.get("pairs", [[3, 3], [4, 7]])]
    if cfg.run.get("constant_field"):
        fld = speckle.SpeckleField.constant(cfg.speckle)
        j = speckle.coherent_couplings(fld, n)
        return {"constant_field_couplings": j.tolist()}, []
    batch = int(cfg.run.get("batch", 64))
    vals = {p: [] for p in pairs}
    means = []
    for start in range(0, cfg.n_realizations, batch):
        idx = range(start, min(start + batch, cfg.n_realizations))
        fields = speckle.generate_speckle_batch(cfg.speckle, cfg.seed, idx)
        means.extend(fields.mean(axis=(1, 2)))
        js = speckle.coherent_couplings_batch(fields, cfg.speckle, n)
        for p in pairs:
            vals[p].extend(js[:, p[0], p[1]])
    paths = []
    if cfg.run.get("save_fields", 0):
        for k in range(int(cfg.run["save_fields"])):
            f = speckle.generate_speckle(cfg.speckle, cfg.seed, k)
            paths.append(save_field(out / f"field_{k:04d}.bin", f))
            paths.append(field_to_csv(out / f"field_{k:04d}.csv", f))
    summary = {"field_mean_max_error": float(np.max(np.abs(np.array(means) - 2.0))) if means else None,
               "couplings": {f"J_{a}{b}": {"mean": float(np.mean(v)), "std": float(np.std(v))}
                             for (a, b), v in vals.items() if v}}
    header = ["index"] + [f"J_{a}{b}" for a, b in pairs]
    rows = zip(range(cfg.n_realizations), *[vals[p] for p in pairs])
    paths.append(write_csv(out / "couplings.csv", header, rows))
    return summary, paths


def cmd_determine_n(cfg, out: Path):
    from . import speckle
    from .store import write_csv
    anchors = [int(a) for a in cfg.run.get("anchors", [0, 50, 100, 200])]
    j_max = int(cfg.run.get("j_max", 1000))
    fields = (speckle.generate_speckle(cfg.speckle, cfg.seed, k) for k in range(cfg.n_realizations))
    if cfg.n_realizations < int(cfg.run.get("min_ensemble", 50)):
        from .errors import ConfigError
        raise ConfigError(f"ensemble of {cfg.n_realizations} fields is below the minimum")
    fits = speckle.determine_n(fields, anchors, j_max, bool(cfg.run.get("subtract_mean", True)),
                               int(cfg.run.get("min_ensemble", 50)))
    rows = [(f.anchor, f.n, f.intercept, f.residual, f.n_points) for f in fits]
    summary = {"mask_radius_px": cfg.speckle.mask_radius_px, "N": {str(f.anchor): f.n for f in fits}}
    return summary, [write_csv(out / "determine_n.csv", ["anchor", "N", "intercept", "residual", "points"], rows)]


def cmd_state_prep(cfg, out: Path):
    import numpy as np

    from . import couplings, dynamics, probes
    from .store import write_csv
    sector = _sector(cfg)
    if cfg.run.get("hamiltonian", "reference") == "reference":
        h = couplings.reference_csyk4(sector, cfg.model.j_scale, cfg.seed, 0)
    else:
        h, _ = _lowrank(cfg, sector, 0)
    rep = probes.product_state_diagnostics(dynamics.diagonalize(h), sector, int(cfg.run.get("bins", 50)))
    hot = float(np.mean(rep.beta_eff * cfg.model.j_scale <= 1e-2))
    summary = {"states": len(rep.labels), "fraction_beta_le_1e-2": hot,
               "max_histogram_norm_error": float(np.abs(rep.overlap_hist.sum(axis=1) - 1).max())}
    rows = zip(rep.labels, rep.energies, rep.beta_eff)
    paths = [write_csv(out / "product_states.csv", ["state", "energy", "beta_eff"], rows)]
    hist_rows = ([rep.labels[i]] + list(rep.overlap_hist[i]) for i in range(len(rep.labels)))
    centers = 0.5 * (rep.bin_edges[:-1] + rep.bin_edges[1:])
    paths.append(write_csv(out / "overlap_histograms.csv", ["state"] + [f"{c:.17g}" for c in centers], hist_rows))
    return summary, paths


def cmd_lindblad(cfg, out: Path):
    import numpy as np

    from . import lindblad, rng
    from .store import write_csv
    n, r = cfg.model.n_sites, cfg.model.rank_r
    points = int(cfg.run.get("points", 600))
    spec_rows, fid_rows, reports = [], [], []
    for k in range(cfg.n_realizations):
        model = lindblad.speckle_open_model(n, r, cfg.seed, k, cfg.cavity, cfg.speckle)
        gen = model.lindbladian()
        s = lindblad.lindblad_spectrum(gen)
        spec_rows += [(k, w.real, w.imag) for w in s.eigenvalues]
        psi = lindblad.random_pure_state(model.sector.dimension, rng.stream(cfg.seed, k, "initial-state"))
        ts = np.linspace(0.0, float(cfg.run.get("t_gaps", 6.0)) / s.gap, points)
        f = lindblad.fidelities(lindblad.Propagator(gen), psi, model.hamiltonian, ts)
        fid_rows += [(k, t, a, b) for t, a, b in zip(ts, f["F0"], f["F"])]
        fit = lindblad.fit_fidelity_decay(ts, f["F"], model.sector.dimension)
        reports.append({"realization": k, "gap": s.gap, "n_zero": s.n_zero, "tau": fit["tau"],
                        "r2": fit["r2"], "window": fit["window"],
                        "max_real": float(s.eigenvalues.real.max())})
    summary = {"realizations": reports, "mean_gap": float(np.mean([x["gap"] for x in reports])) if reports else None,
               "timescales": lindblad.timescales(cfg.cavity, r / n), "cooperativity": cfg.cavity.cooperativity}
    return summary, [write_csv(out / "lindblad_spectrum.csv", ["realization", "re", "im"], spec_rows),
                     write_csv(out / "fidelities.csv", ["realization", "t", "F0", "F"], fid_rows)]


def cmd_stats(cfg, out: Path):
    import numpy as np

    from . import rng, stats
    from .store import write_csv
    ranks = [int(r) for r in cfg.run.get("ranks", [1, 4, 16])]
    samples = int(cfg.run.get("samples", 100_000))
    grid = np.linspace(-6, 6, int(cfg.run.get("grid", 241)))
    cols, tests = [], {}
    for r in ranks:
        law = stats.ProductGaussianLaw(1.0, r)
        cols.append(stats.pdf_sum_r(grid, law))
        x = stats.sample_sum_r(rng.stream(cfg.seed, r, "stats"), samples, law)
        stat, p, dof = stats.chi2_test_1d(x, lambda y, law=law: stats.pdf_sum_r(y, law))
        tests[str(r)] = {"chi2": stat, "p": p, "dof": dof}
    ent = {str(r): {"entropy": stats.shannon_entropy(stats.ProductGaussianLaw(1.0, r), "quadrature"),
                    "kl": stats.kl_to_gaussian(stats.ProductGaussianLaw(1.0, r), "quadrature")}
           for r in cfg.run.get("entropy_ranks", [10, 20])}
    path = write_csv(out / "pdf_sum_r.csv", ["y"] + [f"R{r}" for r in ranks], zip(grid, *cols))
    return {"chi2": tests, "entropy": ent}, [path]


def _json_mirror(path) -> Path:
    from .store import read_csv_text, write_json
    header, rows = read_csv_text(path)
    return write_json(Path(path).with_suffix(".json"), {"columns": header, "rows": rows})


COMMANDS = {
    "trotter-error": cmd_trotter_error, "sff": cmd_sff, "otoc": cmd_otoc,
    "spectral-density": cmd_spectral_density, "thermo": cmd_thermo, "speckle": cmd_speckle,
    "determine-n": cmd_determine_n, "state-prep": cmd_state_prep, "lindblad": cmd_lindblad, "stats": cmd_stats,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csyklab", description="Low-rank complex SYK numerical lab")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key = value or .json config file (defaults if omitted)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--realizations", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key, e.g. model.n_sites=6")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = _cap_threads(args.threads)
    from numpy.linalg import LinAlgError

    from . import config as cfgmod
    from .errors import ConfigError, NumericError
    from .store import sha256_file, write_json
    t0 = time.perf_counter()
    try:
        if args.config:
            base = cfgmod.load_config(args.config).to_dict()
        else:
            base = cfgmod.ExperimentConfig().to_dict()
        base["kind"] = args.command
        for item in args.set:
            for k, v in cfgmod.parse_text(item).items():
                if isinstance(v, dict):
                    base.setdefault(k, {}).update(v)
                else:
                    base[k] = v
        if args.seed is not None:
            base["seed"] = args.seed
        if args.realizations is not None:
            base["n_realizations"] = args.realizations
        if args.out is not None:
            base["out"] = args.out
        cfg = cfgmod.ExperimentConfig.from_dict(base)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        summary, paths = COMMANDS[args.command](cfg, out)
        if cfg.format == "json":
            paths += [_json_mirror(p) for p in paths if Path(p).suffix == ".csv"]
        paths.append(write_json(out / "summary.json", summary))
        (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
        (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ArithmeticError, LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    manifest = {
        "command": args.command, "config": cfg.to_dict(), "argv": list(argv if argv is not None else sys.argv[1:]),
        "code_version": git_describe(), "threads": threads, "wall_time_s": time.perf_counter() - t0,
        "outputs": {str(Path(p).relative_to(out)): sha256_file(p) for p in paths},
    }
    write_json(out / "manifest.json", manifest)
    print(f"{args.command}: wrote {len(paths)} files to {out}")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
