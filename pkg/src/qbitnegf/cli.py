"""``qbitnegf`` command-line entry point.

Exit codes: 0 on success, 2 when the run finished with numerical warnings
(including failed sweep points), 1 on errors and usage errors.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .core import BiasPoint, fermi_dirac
from .manifest import RunManifest
from .negf import occupied_ldos, solve_g

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2
# arguments that never change numerical results (kept out of the manifest hash)
UNHASHED = {"out", "plot", "workers", "config", "command", "func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_range(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive) or a single value."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad range {text!r}") from exc
    if len(nums) == 1:
        return np.array(nums)
    if len(nums) != 3 or nums[2] <= 0 or nums[1] < nums[0]:
        raise UsageError(f"range must be start:stop:step with step > 0, got {text!r}")
    start, stop, step = nums
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def parse_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}") from exc


# -- shared plumbing ----------------------------------------------------------

class Run:
    """Resolved configuration, output directory and manifest for one command."""

    def __init__(self, args, cfg: RunConfig):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        cfg_snapshot = cfg.as_dict()
        cfg_snapshot["numerics"].pop("workers", None)
        hashed = {k: v for k, v in vars(args).items() if k not in UNHASHED}
        self.manifest = RunManifest(cfg_snapshot, args.command, hashed)

    @property
    def spec(self):
        return self.cfg.geometry

    @property
    def mat(self):
        return self.cfg.materials

    @property
    def num(self):
        return self.cfg.numerics

    @property
    def bias(self) -> BiasPoint:
        return self.cfg.bias

    def path(self, name: str) -> Path:
        return self.out / name

    def csv(self, name, columns, rows):
        return self.manifest.write_csv(self.path(name), columns, rows)

    def plot(self, fn, name, *a, **k):
        if self.args.plot:
            from . import plotting

            p = getattr(plotting, fn)(self.path(name), *a, **k)
            self.manifest.outputs.append(str(p))

    def workers(self) -> int:
        from .qubit import worker_count

        return worker_count(self.args.workers or self.num.workers or None)

    def scf(self, bias: BiasPoint | None = None, stage: str = "scf"):
        from .poisson import scf_iterate

        bias = self.bias if bias is None else bias
        with self.manifest.stage(stage):
            r = scf_iterate(self.spec, self.mat, bias, self.num)
        self.manifest.warn(r.warnings)
        if self.args.dump_hamiltonian:
            dump_hamiltonian(self, r)
        return r

    def finish(self) -> int:
        self.manifest.write_self(self.path(f"{self.args.command}_manifest.csv"))
        for w in self.manifest.warnings:
            print(f"warning: {w}", file=sys.stderr)
        return EXIT_WARN if self.manifest.warnings else EXIT_OK


def dump_hamiltonian(run: Run, r):
    ham = r.ham
    z = r.grid.z
    rows = []
    for m in range(ham.mode_count):
        for i in range(ham.n_sites):
            hop = -ham.t if i < ham.n_sites - 1 else math.nan
            rows.append((m + 1, i, z[i], ham.diag[m, i], hop))
    run.csv("hamiltonian.csv", ("mode", "site", "z_nm", "onsite_eV", "hopping_to_next_eV"), rows)


def pool_map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=1))
    return [fn(j) for j in jobs]


# -- subcommands --------------------------------------------------------------

def cmd_modes(run: Run) -> None:
    from .transverse import transverse_modes

    r = run.scf()
    grid, vals, vecs = transverse_modes(run.spec, run.mat, run.num.mode_count)
    z = r.grid.z
    rows = [(zi, n + 1, r.ladder.edges[n, i]) for n in range(r.ladder.mode_count) for i, zi in enumerate(z)]
    run.csv("modes_ladder.csv", ("z_nm", "n", "E_sub_eV"), rows)
    run.csv("modes_energies.csv", ("n", "E_n_eV"), [(n + 1, e) for n, e in enumerate(vals)])
    chi = np.asarray(vecs) / grid.spacing
    rows = [(grid.x[j], grid.y[j], n + 1, chi[j, n]) for n in range(chi.shape[1]) for j in range(chi.shape[0])]
    run.csv("modes_vectors.csv", ("x_nm", "y_nm", "n", "chi_per_nm"), rows)
    run.plot("xy", "modes_ladder.png", z, r.ladder.edges.T, "z (nm)", "E_sub (eV)")


def cmd_scf(run: Run) -> None:
    r = run.scf()
    z = r.grid.z
    e1 = float(r.ladder.transverse_energies[0])
    esub = r.band_edge
    ec = esub - e1
    rows = zip(z, ec, esub, r.state.phi, r.state.n_vol)
    run.csv("scf_band.csv", ("z_nm", "Ec_eV", "Esub1_eV", "phi_V", "n_cm3"), rows)
    res = r.state.residuals
    run.csv("scf_residuals.csv", ("iteration", "residual_V"), [(i + 1, v) for i, v in enumerate(res)])
    print(f"converged={r.converged} iterations={len(res)} I0_A={r.negf.current!r}")
    run.plot("band_profile", "scf_band.png", z, ec, esub, r.model.mu_s)
    run.plot("residuals", "scf_residuals.png", res)


def cmd_ldos(run: Run) -> None:
    r = run.scf()
    model, ham = r.model, r.ham
    de = run.args.de
    lo = float(r.ladder.edges[0].min()) - 0.05 if run.args.emin is None else run.args.emin
    hi = max(model.mu_s, model.mu_d) + 0.15 if run.args.emax is None else run.args.emax
    E = lo + de * np.arange(int(math.floor((hi - lo) / de)) + 1)
    fs = fermi_dirac(E, model.mu_s, model.temperature)
    fd = fermi_dirac(E, model.mu_d, model.temperature)
    D = np.zeros((ham.n_sites, E.size))
    with run.manifest.stage("ldos"):
        for m in range(ham.mode_count):
            ss, sd = model.sigmas(E, m)
            cols = solve_g(E, ham.diag[m], ham.t, ss, sd, eta=1e-6)
            D += occupied_ldos(cols, ss, sd, fs, fd, ham.spacing)
    z = r.grid.z
    rows = ((z[i], E[k], D[i, k]) for i in range(z.size) for k in range(E.size))
    run.csv("ldos.csv", ("z_nm", "E_eV", "D_per_eV_nm"), rows)
    if r.negf.bound_states:
        rows = [(b.energy, b.mode + 1, b.occupancy, b.residue) for b in r.negf.bound_states]
        run.csv("ldos_bound_states.csv", ("E_eV", "mode", "occupancy", "residue"), rows)
    run.plot("ldos_map", "ldos.png", z, E, D, r.band_edge)


def _current_point(job):
    spec, mat, num, bias = job
    from .poisson import scf_iterate

    try:
        r = scf_iterate(spec, mat, bias, num)
    except Exception as exc:  # reported as a hole
        return math.nan, False, f"{type(exc).__name__}: {exc}"
    return (r.negf.current, True, None) if r.converged else (math.nan, False, r.warnings[-1])


def cmd_iv(run: Run) -> None:
    vds = parse_range(run.args.vd_sweep)
    jobs = [(run.spec, run.mat, run.num, run.bias.with_(vd=float(v))) for v in vds]
    with run.manifest.stage("iv"):
        res = pool_map(_current_point, jobs, run.workers())
    for v, (_, ok, msg) in zip(vds, res):
        if not ok:
            run.manifest.warn(f"iv point vd={v:g} failed: {msg}")
    run.csv("iv.csv", ("V_D", "I0_A", "converged"), [(v, i, ok) for v, (i, ok, _) in zip(vds, res)])
    run.plot("xy", "iv.png", vds, [x[0] for x in res], "V_D (V)", "I0 (A)", marker="o-")


def cmd_pulse(run: Run) -> None:
    from .timedomain import drain_trace

    r = run.scf()
    t_max = None if run.args.tmax_ns is None else run.args.tmax_ns * 1e6
    with run.manifest.stage("time-domain"):
        tr = drain_trace(
            r.model, r.negf.grid.E, r.negf.current, eta=run.num.eta_iso,
            modes=r.negf.open_modes, t_max_fs=t_max, nt=run.args.nt,
        )
    run.manifest.warn(tr.warnings)
    run.csv("pulse.csv", ("t_ns", "I_A"), zip(tr.t_ns, tr.current))
    f = math.nan if tr.f_osc_mhz is None else tr.f_osc_mhz
    if tr.f_osc_mhz is None:
        run.manifest.warn("no dominant oscillation frequency found")
    run.csv(
        "pulse_summary.csv", ("f_osc_MHz", "T_rep_ns", "T_dephase_ns", "I0_A"),
        [(f, tr.t_rep_ns, tr.t_dephase_ns, tr.i0)],
    )
    print(f"f_osc_MHz={f:.6g} T_rep_ns={tr.t_rep_ns:.6g} T_dephase_ns={tr.t_dephase_ns:.6g} I0_A={tr.i0:.6g}")
    run.plot("xy", "pulse.png", tr.t_ns, tr.current, "t (ns)", "I (A)")


def cmd_phonon_scan(run: Run) -> None:
    from .phonon import gap_scan

    gaps = parse_list(run.args.gaps)
    r = run.scf()
    with run.manifest.stage("phonon"):
        rows = gap_scan(run.spec, run.mat, run.bias, run.num, [g * 1e-3 for g in gaps], phi=r.state.phi)
    out = [(row.gap * 1e3, row.current, row.current_free, row.rel_change) for row in rows]
    run.csv("phonon_scan.csv", ("gap_meV", "I_A", "I_phonon_free_A", "rel_change"), out)
    run.plot("phonon_scan", "phonon_scan.png", gaps, [x[3] for x in out])


def _zero_drain(run: Run, bias: BiasPoint) -> BiasPoint:
    if bias.vd != 0.0:
        run.manifest.warn(f"qubit-state analysis runs at V_D = 0 (ignoring vd = {bias.vd:g})")
    return bias.with_(vd=0.0)


def cmd_init_check(run: Run) -> None:
    from .qubit import qubit_state

    r = run.scf(_zero_drain(run, run.bias))
    st = qubit_state(r)
    z = r.grid.z
    p = np.zeros_like(z) if st.empty else st.p_z
    run.csv("init_check.csv", ("z_nm", "p_per_nm"), zip(z, p))
    nan = math.nan
    summary = (st.dot_charge, nan if st.empty else st.p_left, nan if st.empty else st.p_right,
               nan if st.empty else st.theta, (not st.empty) and st.p_left > 0.95)
    run.csv("init_check_summary.csv", ("dot_charge_e", "p_left", "p_right", "theta_rad", "initialized"), [summary])
    if st.empty:
        print(f"dots empty (charge {st.dot_charge:.3g} e): no initialization")
    else:
        print(f"p_left={st.p_left:.4f} p_right={st.p_right:.4f} theta={st.theta:.4f} initialized={summary[-1]}")
    run.plot("probability_family", "init_check.png", z, {"p(z)": p})


def _state_point(job):
    spec, mat, num, bias, where = job
    from .poisson import scf_iterate
    from .qubit import bloch_angles, qubit_state

    r = scf_iterate(spec, mat, bias, num)
    st = qubit_state(r)
    angles = bloch_angles(r, where) if where else None
    return st, angles, r.converged, r.warnings


def cmd_manipulate(run: Run) -> None:
    dv = parse_range(run.args.dvg2_sweep)
    base = _zero_drain(run, run.bias)
    jobs = [(run.spec, run.mat, run.num, base.with_(delta_vg2=float(d) * 1e-3), None) for d in dv]
    with run.manifest.stage("manipulate"):
        res = pool_map(_state_point, jobs, run.workers())
    prof, summ, curves = [], [], {}
    for d, (st, _, ok, warn) in zip(dv, res):
        run.manifest.warn(warn)
        if st.empty:
            summ.append((d, math.nan, math.nan, math.nan, st.dot_charge))
            continue
        summ.append((d, st.p_left, st.p_right, st.theta, st.dot_charge))
        z = np.arange(st.p_z.size) * run.spec.grid_spacing_a
        prof.extend((d, zi, pi) for zi, pi in zip(z, st.p_z))
        curves[f"{d:g} mV"] = st.p_z
    run.csv("manipulate.csv", ("dvg2_mV", "z_nm", "p_per_nm"), prof)
    run.csv("manipulate_summary.csv", ("dvg2_mV", "p_left", "p_right", "theta_rad", "dot_charge_e"), summ)
    if curves:
        z = np.arange(next(iter(curves.values())).size) * run.spec.grid_spacing_a
        run.plot("probability_family", "manipulate.png", z, curves)


def cmd_bloch(run: Run) -> None:
    vg1 = parse_range(run.args.vg1_sweep) if run.args.vg1_sweep else np.array([run.bias.vg1])
    vg2 = parse_range(run.args.vg2_sweep) if run.args.vg2_sweep else np.array([run.bias.vg2])
    base = _zero_drain(run, run.bias)
    jobs = [(run.spec, run.mat, run.num, base.with_(vg1=float(a), vg2=float(b)), run.args.point) for a in vg1 for b in vg2]
    with run.manifest.stage("bloch"):
        res = pool_map(_state_point, jobs, run.workers())
    rows = []
    for job, (st, ang, ok, warn) in zip(jobs, res):
        run.manifest.warn(warn)
        th, ph = (math.nan, math.nan) if ang is None else ang
        rows.append((job[3].vg1, job[3].vg2, th, ph))
    run.csv("bloch.csv", ("vg1", "vg2", "theta", "phi"), rows)
    run.plot("bloch_sphere", "bloch.png", [x[2] for x in rows], [x[3] for x in rows])


def cmd_stability(run: Run) -> None:
    from .qubit import stability_diagram

    vg1 = parse_range(run.args.vg1_range)
    vg2 = parse_range(run.args.vg2_range)
    vd = run.bias.vd
    if vd == 0.0:
        run.manifest.warn("V_D = 0: the current map is identically zero (pass --vd)")
    with run.manifest.stage("stability"):
        sm = stability_diagram(run.spec, run.mat, vg1, vg2, vd, run.num, workers=run.workers())
    rows = [
        (a, b, sm.current[i, j], "ok" if sm.converged[i, j] else "hole")
        for i, a in enumerate(sm.vg1) for j, b in enumerate(sm.vg2)
    ]
    run.csv("stability.csv", ("vg1", "vg2", "I0_A", "status"), rows)
    run.csv("stability_maxima.csv", ("rank", "vg1", "vg2", "I0_A"),
            [(k + 1, a, b, i) for k, (i, a, b) in enumerate(sm.maxima)])
    for a, b, msg in sm.holes:
        run.manifest.warn(f"hole at vg1={a:g} vg2={b:g}: {msg}")
    run.plot("stability_map", "stability.png", sm.vg1, sm.vg2, sm.current, sm.maxima)


def cmd_selftest(run: Run) -> None:
    from .selftest import run_all

    checks = run_all(print)
    run.csv("selftest.csv", ("check", "passed", "detail"), [(c.name, c.passed, c.detail) for c in checks])
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise RuntimeError(f"oracle checks failed: {', '.join(failed)}")


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="INI configuration file")
    g.add_argument("--out", default=".", help="output directory (default: current)")
    g.add_argument("--plot", action="store_true", help="also write PNG figures")
    g.add_argument("--workers", type=int, help="process count for sweeps (QBITNEGF_THREADS wins)")
    g.add_argument("--dump-hamiltonian", action="store_true", help="write the converged tridiagonal bands")
    gates = _Parser(add_help=False)
    gg = gates.add_argument_group("gates (override [bias])")
    gg.add_argument("--vg1", type=float)
    gg.add_argument("--vg2", type=float)
    b = common.add_argument_group("bias (override [bias])")
    b.add_argument("--dvg2", type=float, help="gate-2 manipulation pulse (V)")
    b.add_argument("--vd", type=float)
    n = common.add_argument_group("numerics (override [numerics])")
    n.add_argument("--tol", type=float)
    n.add_argument("--beta", type=float, help="potential mixing factor")
    n.add_argument("--max-iter", type=int)

    p = _Parser(prog="qbitnegf", description="NEGF-Poisson simulator of a dual-gate nanowire charge qubit")
    p.add_argument("--version", action="version", version=f"qbitnegf {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_, with_gates=True):
        s = sub.add_parser(name, parents=[common, gates] if with_gates else [common], help=help_)
        s.set_defaults(func=func)
        return s

    add("modes", cmd_modes, "transverse modes and sub-band ladder")
    add("scf", cmd_scf, "self-consistent band profile")
    s = add("ldos", cmd_ldos, "occupied local density of states D(E, z)")
    s.add_argument("--de", type=float, default=1e-3, help="energy step (eV)")
    s.add_argument("--emin", type=float)
    s.add_argument("--emax", type=float)
    s = add("iv", cmd_iv, "pulse-current amplitude versus drain bias")
    s.add_argument("--vd-sweep", default="0:0.1:0.01", help="start:stop:step (V)")
    s = add("pulse", cmd_pulse, "time-domain drain current")
    s.add_argument("--tmax-ns", type=float)
    s.add_argument("--nt", type=int, default=4096)
    s = add("phonon-scan", cmd_phonon_scan, "phonon current change versus sub-band gap")
    s.add_argument("--gaps", default="10,25,50,100,200,350,500", help="comma list (meV)")
    add("init-check", cmd_init_check, "dot occupation after initialization")
    s = add("manipulate", cmd_manipulate, "positional probability versus gate-2 pulse")
    s.add_argument("--dvg2-sweep", default="30:48:2", help="start:stop:step (mV)")
    s = add("bloch", cmd_bloch, "Bloch angles over a gate sweep")
    s.add_argument("--vg1-sweep", help="start:stop:step (V)")
    s.add_argument("--vg2-sweep", help="start:stop:step (V)")
    s.add_argument("--point", choices=("start", "central", "end"), default="central")
    s = add("stability", cmd_stability, "I0 map over (V_G1, V_G2)", with_gates=False)
    s.add_argument("--vg1", dest="vg1_range", default="1.12:1.16:0.002", help="start:stop:step (V)")
    s.add_argument("--vg2", dest="vg2_range", default="1.33:1.35:0.001", help="start:stop:step (V)")
    add("selftest", cmd_selftest, "run the closed-form oracle checks")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    bias = {"vg1": getattr(args, "vg1", None), "vg2": getattr(args, "vg2", None), "delta_vg2": args.dvg2, "vd": args.vd}
    cfg = cfg.override("bias", **bias)
    return cfg.override("numerics", tol=args.tol, mixing=args.beta, max_iter=args.max_iter, workers=args.workers)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
    except (UsageError, ConfigError) as exc:
        print(f"qbitnegf: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    run = Run(args, cfg)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            args.func(run)
        run.manifest.warn([str(w.message) for w in caught if not issubclass(w.category, DeprecationWarning)])
    except UsageError as exc:
        print(f"qbitnegf: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        run.manifest.warn(f"error: {type(exc).__name__}: {exc}")
        try:
            run.manifest.write_self(run.path(f"{args.command}_manifest.csv"))
        except OSError:
            pass
        print(f"qbitnegf: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run.finish()


if __name__ == "__main__":
    sys.exit(main())
