"""kst command-line interface.

Every subcommand takes ``--config FILE`` plus ``--key=value`` overrides and
writes into ``--out DIR`` (created if needed), together with the resolved
configuration and the tool version.  Failures print one line

    kst: error code=<code> message=<text>

to stderr and exit with 2 (usage / invalid input) or 1 (numerical failure).
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidInputError, KstError
from .io import RunConfig, read_array, read_csv, write_array, write_csv, write_sparse

SUBCOMMANDS = ("simulate", "tune", "basis", "generator", "eigs", "predict-obs", "predict-density", "mc", "report")
BYTES_PER_NNZ = 16 + 8  # complex value + int64 column index


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"kst: error code=usage message={message}\n")
        raise SystemExit(2)


def _make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kst", description="Koopman/Perron-Frobenius forecasts for driven incompressible flows.")
    p.add_argument("--version", action="version", version=f"kst {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--out", type=Path, default=Path("."))
        if name == "report":
            sp.add_argument("--in", dest="indir", type=Path, required=True)
        if name in ("generator", "eigs", "predict-obs", "predict-density"):
            sp.add_argument("--estimate", action="store_true",
                            help="print problem size and memory estimates, then exit")
    return p


def _split_overrides(argv):
    """Pull --key=value pairs that are config keys out of argv."""
    keep, over = [], []
    fixed = {"--config", "--out", "--in", "--estimate", "--version", "--help", "-h"}
    for a in argv:
        if a.startswith("--") and "=" in a and a.split("=", 1)[0] not in fixed:
            k, v = a[2:].split("=", 1)
            over.append((k, v))
        else:
            keep.append(a)
    return keep, over


# ---------------------------------------------------------------------------
# builders shared by several subcommands

def _truncation(cfg):
    from .core import TruncationParams

    return TruncationParams(cfg["ell_A"], cfg["ell_X1"], cfg["ell_X2"], ell_v=cfg["ell_v"],
                            fourier_A=cfg["flow"] in ("moving", "switching"))


def _vortex(cfg):
    from .analytic import VortexParams

    return VortexParams(omega=cfg["omega"], kappa=cfg["kappa"], C=cfg["C"], flavor=cfg["flow"],
                        zeta_scale=cfg["zeta_scale"])


def _snapshots(cfg):
    from .kernel import SnapshotSet
    from .refsim import integrate_l96

    if cfg["snapshots"]:
        return SnapshotSet(read_array(cfg["snapshots"]), cfg["tau"])
    s0 = np.zeros(2 * cfg["J"] + 1)
    s0[0] = 1.0
    return integrate_l96(s0, cfg["F"], cfg["tau"], cfg["n_samples"], spinup=cfg["spinup"])


def _basis(cfg, snaps):
    from .kernel import compute_basis

    n_eig = max(cfg["n_basis"], cfg["ell_A"], cfg["ell_v"] or 0)
    return compute_basis(snaps, n_eig, option=cfg["dirichlet_option"], k_nn_density=cfg["k_nn_density"],
                         k_nn_graph=cfg["k_nn_graph"], eps=cfg["eps"])


def _generator(cfg):
    from .analytic import assemble_generator_analytic
    from .datadriven import (assemble_generator_datadriven, assemble_wx_datadriven, finite_diff_generator,
                             velocity_coeffs_l96)
    from .kernel import triple_products

    t = _truncation(cfg)
    if t.fourier_A:
        return assemble_generator_analytic(_vortex(cfg), t, cfg["theta"]), None
    if cfg["flow"] != "l96":
        raise InvalidInputError(f"unknown flow {cfg['flow']!r}")
    snaps = _snapshots(cfg)
    basis, _ = _basis(cfg, snaps)
    lv = t.velocity_truncation
    U = finite_diff_generator(basis, snaps.tau, t.nA, antisymmetrize=cfg["antisymmetrize"])
    c = triple_products(basis, max(t.nA, lv))
    v = velocity_coeffs_l96(snaps.data, basis, cfg["J"], lv)
    WX = assemble_wx_datadriven(c, v, t)
    gen = assemble_generator_datadriven(U, WX, basis.eta[: t.nA], t, cfg["theta"], phi_A=basis.phi)
    return gen, basis


def estimate_resources(cfg) -> dict:
    """Problem size and memory for the configured generator (no assembly)."""
    t = _truncation(cfg)
    n = t.ell_total
    if t.fourier_A:
        # couplings with |dq|, |dr| where I_|dq| I_|dr| survives the drop tolerance
        from .analytic import DROP_TOL, bessel_in

        I = bessel_in(2 * max(t.ell_X1, t.ell_X2), cfg["kappa"])
        keep = int(np.sum(I[:, None] * I[None, :] / I[0] ** 2 > DROP_TOL))
        per_row = 1 + (2 if cfg["flow"] == "switching" else 1) * (2 * keep)
    else:
        lv = t.velocity_truncation
        per_row = t.nA + min(lv, t.nA) * min(2 * cfg["J"] + 1, t.nX1)
    nnz = n * per_row
    n_samples = 0 if t.fourier_A else cfg["n_samples"]
    kg = cfg["k_nn_graph"] or min(n_samples, max(500, n_samples // 10))
    est = {
        "ell_total": n,
        "nnz_upper": nnz,
        "generator_bytes": nnz * BYTES_PER_NNZ,
        "leja_vector_bytes": 4 * n * 16,
        "kernel_bytes": n_samples * kg * 24,
        "eigs_shift_invert_note": "sparse LU fill typically 10-100x nnz",
    }
    est["total_bytes_lower"] = est["generator_bytes"] + est["leja_vector_bytes"] + est["kernel_bytes"]
    return est


# ---------------------------------------------------------------------------
# subcommands

def _cmd_simulate(cfg, out):
    from .refsim import EnsembleState, FlowSpec, integrate_tracers

    if cfg["flow"] == "l96":
        snaps = _snapshots(cfg)
        write_array(out / "snapshots.kst", snaps.data)
        write_csv(out / "snapshots_meta.csv", ["key", "value"],
                  [["N", snaps.N], ["tau", snaps.tau], ["F", cfg["F"]], ["J", cfg["J"]]])
        return
    flow = FlowSpec(cfg["flow"], _vortex(cfg))
    g = 2 * np.pi * np.arange(cfg["n_grid"]) / cfg["n_grid"]
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    ens = EnsembleState(np.column_stack([X1.ravel(), X2.ravel()]), 0.0, cfg["a_center"])
    times = cfg["tilde_tau"] * np.arange(cfg["n_steps"] + 1)
    traj = integrate_tracers(flow, ens, times)
    write_array(out / "trajectories.kst", traj)
    write_array(out / "times.kst", times)


def _cmd_tune(cfg, out):
    from . import _accel
    from .kernel import estimate_density, knn_bandwidth, tune_bandwidth

    snaps = _snapshots(cfg)
    kg = cfg["k_nn_graph"] or min(snaps.N, max(500, snaps.N // 10))
    d2, idx = _accel.knn(snaps.data, max(kg, cfg["k_nn_density"]))
    rt = knn_bandwidth(snaps, cfg["k_nn_density"], knn_cache=(d2, idx))
    scan0 = tune_bandwidth(snaps, rt, pairs=d2 / (rt[:, None] * rt[idx]))
    _, r = estimate_density(snaps, rt, scan0.eps_star, scan0.dim_est, pairs=d2 / (rt[:, None] * rt[idx]))
    scan1 = tune_bandwidth(snaps, r, pairs=d2 / (r[:, None] * r[idx]))
    for name, sc in (("density", scan0), ("kernel", scan1)):
        rows = [[float(e), float(s), float(tt)] for e, s, tt in zip(sc.grid, sc.S, sc.T)]
        rows.append(["eps_star", sc.eps_star, ""])
        rows.append(["dim_est", sc.dim_est, ""])
        write_csv(out / f"bandwidth_scan_{name}.csv", ["eps", "S", "T"], rows)


def _write_basis(basis, out):
    write_array(out / "Lambda.kst", basis.Lambda)
    write_array(out / "phi.kst", basis.phi)
    write_array(out / "beta.kst", basis.beta)
    write_array(out / "eta.kst", basis.eta)
    (out / "basis_manifest.txt").write_text(
        f"N = {basis.N}\nn_eig = {basis.n_eig}\neps = {basis.eps:.17g}\noption = {basis.option}\n"
        "files = Lambda.kst phi.kst beta.kst eta.kst\n")


def _cmd_basis(cfg, out):
    basis, scans = _basis(cfg, _snapshots(cfg))
    _write_basis(basis, out)


def _cmd_generator(cfg, out):
    gen, basis = _generator(cfg)
    write_sparse(out / "W", gen.W)
    write_array(out / "eta_diag.kst", gen.eta_diag)
    if basis is not None:
        _write_basis(basis, out)


def _cmd_eigs(cfg, out):
    from .eigs import koopman_eigs, phi_coeffs

    gen, _ = _generator(cfg)
    sys_, pairs = koopman_eigs(gen, n_eig=cfg["n_eig"], target=cfg["target"])
    rows = [[k, p.lam.real, p.lam.imag, p.energy, p.residual] for k, p in enumerate(pairs)]
    write_csv(out / "eigs.csv", ["k", "re_lambda", "im_lambda", "energy", "residual"], rows)
    write_array(out / "eig_coeffs.kst", np.column_stack([phi_coeffs(p, sys_) for p in pairs]))


def _cmd_predict_obs(cfg, out):
    from .prediction import project_observable, tracer_position_estimate
    from .leja import LejaPropagator

    gen, basis = _generator(cfg)
    t = gen.trunc
    prop = LejaPropagator(gen.L, cfg["tilde_tau"], tol=cfg["tol"])
    b1 = project_observable("f1", t).b
    b2 = project_observable("f2", t).b
    g = 2 * np.pi * np.arange(cfg["n_grid"]) / cfg["n_grid"]
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    a = cfg["a_center"] if t.fourier_A else 0
    phi_A = None if basis is None else basis.phi
    rows = []
    for n in range(cfg["n_steps"] + 1):
        if n:
            b1, b2 = prop.apply(b1), prop.apply(b2)
        rows.append([n * cfg["tilde_tau"], float(np.linalg.norm(b1)), float(np.linalg.norm(b2))])
    pe = tracer_position_estimate(b1, b2, t, a, X1, X2, phi_A)
    write_csv(out / "obs_steps.csv", ["t", "norm_f1", "norm_f2"], rows)
    write_array(out / "f1_coeffs.kst", b1)
    write_array(out / "f2_coeffs.kst", b2)
    write_array(out / "positions.kst", np.stack([pe.x1, pe.x2, pe.low_confidence.astype(float)]))


def _cmd_predict_density(cfg, out):
    from .prediction import evolve_density, gaussian_initial_density, marginal_density

    gen, basis = _generator(cfg)
    t = gen.trunc
    if t.fourier_A:
        rho = gaussian_initial_density(cfg["kappa_tilde"], (cfg["xbar1"], cfg["xbar2"]), t, cfg["a_center"])
    else:
        snaps = _snapshots(cfg)
        rho = gaussian_initial_density(cfg["kappa_tilde"], (cfg["xbar1"], cfg["xbar2"]), t, basis=basis,
                                       anchor=snaps.data[-1])
    res = evolve_density(gen, rho, cfg["tilde_tau"], cfg["n_steps"], tol=cfg["tol"])
    rows = [[n * cfg["tilde_tau"], m.real, m.imag, nm] for n, (m, nm) in enumerate(zip(res.mass, res.norms))]
    write_csv(out / "density_steps.csv", ["t", "mass_re", "mass_im", "norm"], rows)
    md = marginal_density(res.states[-1], t, cfg["n_grid"])
    write_array(out / "sigma.kst", md.sigma)
    write_array(out / "sigma1.kst", md.sigma1)
    write_array(out / "sigma2.kst", md.sigma2)


def _cmd_mc(cfg, out):
    from .refsim import FlowSpec, integrate_tracers, monte_carlo_density, sample_initial_ensemble

    if cfg["flow"] not in ("moving", "switching"):
        raise InvalidInputError("mc supports the moving and switching flows")
    ens = sample_initial_ensemble(cfg["kappa_tilde"], (cfg["xbar1"], cfg["xbar2"]), cfg["M"], cfg["seed"],
                                  a_center=cfg["a_center"])
    T = cfg["tilde_tau"] * cfg["n_steps"]
    traj = integrate_tracers(FlowSpec(cfg["flow"], _vortex(cfg)), ens, [T])
    mc = monte_carlo_density(traj[-1], cfg["n_bins"])
    write_array(out / "mc_sigma.kst", mc.sigma)
    write_array(out / "mc_sigma1.kst", mc.sigma1)
    write_array(out / "mc_sigma2.kst", mc.sigma2)
    write_csv(out / "mc_meta.csv", ["key", "value"], [["seed", cfg["seed"]], ["M", cfg["M"]], ["t", T]])


def _cmd_report(indir, out):
    header, rows = read_csv(indir / "eigs.csv")
    col = {h: i for i, h in enumerate(header)}
    table = [[r[col["k"]], r[col["re_lambda"]], r[col["im_lambda"]], r[col["energy"]]] for r in rows]
    write_csv(out / "table_eigs.csv", ["k", "Re lambda", "Im lambda", "E"], table)


_DISPATCH = {
    "simulate": _cmd_simulate, "tune": _cmd_tune, "basis": _cmd_basis, "generator": _cmd_generator,
    "eigs": _cmd_eigs, "predict-obs": _cmd_predict_obs, "predict-density": _cmd_predict_density, "mc": _cmd_mc,
}


def _fail(code: str, message: str, status: int) -> int:
    msg = " ".join(str(message).split())
    sys.stderr.write(f"kst: error code={code} message={msg}\n")
    return status


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    keep, overrides = _split_overrides(argv)
    try:
        args = _make_parser().parse_args(keep)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.defaults()
        for k, v in overrides:
            cfg.set(k, v)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved_config.txt").write_text(cfg.dumps())
        (out / "VERSION").write_text(f"kst {__version__}\n")
        if getattr(args, "estimate", False):
            est = estimate_resources(cfg)
            rows = [[k, v] for k, v in est.items()]
            write_csv(out / "resources.csv", ["quantity", "value"], rows)
            for k, v in est.items():
                print(f"{k} = {v}")
            return 0
        t0 = time.perf_counter()
        if args.command == "report":
            _cmd_report(args.indir, out)
        else:
            _DISPATCH[args.command](cfg, out)
        print(f"kst {args.command}: done in {time.perf_counter() - t0:.2f} s -> {out}")
        return 0
    except KstError as exc:
        return _fail(exc.code, exc, exc.exit_code)
    except (FileNotFoundError, IsADirectoryError) as exc:
        return _fail("invalid_input", exc, 2)
    except MemoryError as exc:
        return _fail("resources", f"out of memory: {exc}", 1)


if __name__ == "__main__":
    raise SystemExit(main())
