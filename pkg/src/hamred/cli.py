"""Experiment driver: config parsing, persistence, and the command surface.

Subcommands: ``fom`` (integrate and store snapshots), ``basis`` (build bases
and their quality report), ``run`` (evaluate ROM variants for one basis
kind), ``sweep`` (full cross product with optional threading), ``diagnose``
(self-check battery).  Configs are plain-text sections with key = value
lines; every report CSV gets a companion figure unless --no-plot is given.
"""

import argparse
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from configparser import ConfigParser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import basis as basis_mod
from . import io as io_mod
from . import metrics as metrics_mod
from . import opinf as opinf_mod
from . import rom as rom_mod
from .fom import (
    build_from_matrices,
    build_lattice_fom,
    build_wave_fom,
    integrate_midpoint,
    integrate_newmark,
)

RUN_COLUMNS = [
    "status", "fom_kind", "basis_kind", "n", "basis_centered", "rom_centered",
    "variant", "provenance", "velocity_source", "train_dt", "train_t_final",
    "test_dt", "test_t_final", "rel_l2", "ham_err_first", "ham_err_max",
    "test_rel_l2", "test_ham_err_first", "test_ham_err_max",
    "snapshot_energy", "projection_error", "proj_tail", "sigma_min_jhat",
    "canon_dev", "grad_norm", "eps_dt", "eps_a", "message",
]

BASIS_COLUMNS = [
    "kind", "n", "centered", "snapshot_energy", "projection_error",
    "sigma_min_jhat", "canon_dev",
]

_BASIS_BUILDERS = {
    basis_mod.KIND_POD: basis_mod.ordinary_pod,
    basis_mod.KIND_COTANGENT: basis_mod.cotangent_lift,
    basis_mod.KIND_COMPLEX: basis_mod.complex_svd,
    basis_mod.KIND_BLOCK_QP: basis_mod.block_qp,
}


# -- configuration -----------------------------------------------------------


@dataclass
class FomConfig:
    kind: str = "wave"
    num_cells: int = 500
    wave_speed: float = 0.1
    length: float = 1.0
    nx: int = 3
    ny: int = 3
    nz: int = 3
    stiffness: float = 1.0
    mass: float = 1.0
    clamped_face: str = "x-"
    kick_face: str = "x+"
    kick_speed: float = 1.0
    mass_path: Optional[str] = None
    stiffness_path: Optional[str] = None
    q0_path: Optional[str] = None
    qdot0_path: Optional[str] = None
    integrator: str = "midpoint"
    beta: float = 0.25
    gamma: float = 0.5
    dt: float = 0.02
    t_final: float = 10.0
    sample_every: int = 1
    seed: int = 0


@dataclass
class BasisConfig:
    kinds: tuple = (basis_mod.KIND_POD,)
    sizes: tuple = (10,)
    centered: bool = True


@dataclass
class RomConfig:
    variants: tuple = tuple(rom_mod.ALL_VARIANTS)
    centered: bool = True


@dataclass
class OpinfConfig:
    enabled: bool = False
    reprojected: bool = True
    velocity_source: str = opinf_mod.VELOCITY_EXACT


@dataclass
class TestConfig:
    dt: float
    t_final: float


@dataclass
class ExperimentConfig:
    fom: FomConfig
    basis: BasisConfig
    rom: RomConfig
    opinf: OpinfConfig
    test: Optional[TestConfig] = None
    output_dir: Path = Path("hamred_out")


def _parse_list(raw, convert):
    return tuple(convert(tok) for tok in raw.replace(",", " ").split())


def load_config(path, output_dir=None):
    """Parse a sectioned key = value config file into an ExperimentConfig."""
    parser = ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")

    fom = FomConfig()
    if parser.has_section("fom"):
        sec = parser["fom"]
        fom.kind = sec.get("kind", fom.kind)
        fom.num_cells = sec.getint("num_cells", fom.num_cells)
        fom.wave_speed = sec.getfloat("wave_speed", fom.wave_speed)
        fom.length = sec.getfloat("length", fom.length)
        fom.nx = sec.getint("nx", fom.nx)
        fom.ny = sec.getint("ny", fom.ny)
        fom.nz = sec.getint("nz", fom.nz)
        fom.stiffness = sec.getfloat("stiffness", fom.stiffness)
        fom.mass = sec.getfloat("mass", fom.mass)
        fom.clamped_face = sec.get("clamped_face", fom.clamped_face)
        fom.kick_face = sec.get("kick_face", fom.kick_face)
        fom.kick_speed = sec.getfloat("kick_speed", fom.kick_speed)
        fom.mass_path = sec.get("mass_path", fom.mass_path)
        fom.stiffness_path = sec.get("stiffness_path", fom.stiffness_path)
        fom.q0_path = sec.get("q0_path", fom.q0_path)
        fom.qdot0_path = sec.get("qdot0_path", fom.qdot0_path)
        fom.integrator = sec.get("integrator", fom.integrator)
        fom.beta = sec.getfloat("beta", fom.beta)
        fom.gamma = sec.getfloat("gamma", fom.gamma)
        fom.dt = sec.getfloat("dt", fom.dt)
        fom.t_final = sec.getfloat("t_final", fom.t_final)
        fom.sample_every = sec.getint("sample_every", fom.sample_every)
        fom.seed = sec.getint("seed", fom.seed)

    bas = BasisConfig()
    if parser.has_section("basis"):
        sec = parser["basis"]
        if sec.get("kinds", None) or sec.get("kind", None):
            bas.kinds = _parse_list(sec.get("kinds", sec.get("kind")), str)
        if sec.get("n", None):
            bas.sizes = _parse_list(sec["n"], int)
        bas.centered = sec.getboolean("centered", bas.centered)

    romc = RomConfig()
    if parser.has_section("rom"):
        sec = parser["rom"]
        if sec.get("variants", None) is not None:
            romc.variants = _parse_list(sec["variants"], str)
        romc.centered = sec.getboolean("centered", romc.centered)

    opc = OpinfConfig()
    if parser.has_section("opinf"):
        sec = parser["opinf"]
        opc.enabled = sec.getboolean("enabled", opc.enabled)
        opc.reprojected = sec.getboolean("reprojected", opc.reprojected)
        opc.velocity_source = sec.get("velocity_source", opc.velocity_source)

    test = None
    if parser.has_section("test"):
        sec = parser["test"]
        test = TestConfig(dt=sec.getfloat("dt"), t_final=sec.getfloat("t_final"))

    cfg = ExperimentConfig(fom, bas, romc, opc, test,
                           Path(output_dir) if output_dir else Path("hamred_out"))
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    for n in cfg.basis.sizes:
        if n <= 0 or n % 2:
            raise ValueError(f"basis sizes must be positive even integers, got {n}")
    for kind in cfg.basis.kinds:
        if kind not in _BASIS_BUILDERS:
            raise ValueError(f"unknown basis kind {kind!r}")
    for variant in cfg.rom.variants:
        if variant not in rom_mod.ALL_VARIANTS:
            raise ValueError(f"unknown ROM variant {variant!r}")
    if cfg.opinf.velocity_source not in (
        opinf_mod.VELOCITY_EXACT, opinf_mod.VELOCITY_CENTRAL2, opinf_mod.VELOCITY_FORWARD1
    ):
        raise ValueError(f"unknown velocity source {cfg.opinf.velocity_source!r}")
    if cfg.test is not None and cfg.test.dt < cfg.fom.dt:
        raise ValueError("the predictive grid must not be finer than the training grid")
    for path_attr in ("mass_path", "stiffness_path", "q0_path", "qdot0_path"):
        path = getattr(cfg.fom, path_attr)
        if path is not None and not Path(path).exists():
            raise ValueError(f"referenced file does not exist: {path}")


# -- system construction -----------------------------------------------------


def build_system(fom_cfg):
    if fom_cfg.kind == "wave":
        return build_wave_fom(fom_cfg.num_cells, fom_cfg.wave_speed, fom_cfg.length)
    if fom_cfg.kind == "lattice":
        return build_lattice_fom(
            fom_cfg.nx, fom_cfg.ny, fom_cfg.nz, fom_cfg.stiffness, fom_cfg.mass,
            fom_cfg.clamped_face, fom_cfg.kick_face, fom_cfg.kick_speed,
        )
    if fom_cfg.kind == "matrices":
        if not fom_cfg.mass_path or not fom_cfg.stiffness_path:
            raise ValueError("the matrices FOM needs mass_path and stiffness_path")
        mass = io_mod.load_matrix_market(fom_cfg.mass_path)
        stiff = io_mod.load_matrix_market(fom_cfg.stiffness_path)
        m = stiff.shape[0]
        q0 = np.loadtxt(fom_cfg.q0_path).ravel() if fom_cfg.q0_path else np.zeros(m)
        qdot0 = np.loadtxt(fom_cfg.qdot0_path).ravel() if fom_cfg.qdot0_path else np.zeros(m)
        return build_from_matrices(mass, stiff, q0, qdot0)
    raise ValueError(f"unknown FOM kind {fom_cfg.kind!r}")


def integrate_system(system, fom_cfg, dt=None, t_final=None):
    dt = fom_cfg.dt if dt is None else dt
    t_final = fom_cfg.t_final if t_final is None else t_final
    if fom_cfg.integrator == "midpoint":
        return integrate_midpoint(system, t_final, dt, fom_cfg.sample_every)
    if fom_cfg.integrator == "newmark":
        m = system.dim_half
        q0 = system.x0[:m]
        qdot0 = system.mass_solve(system.x0[m:])
        return integrate_newmark(
            system.mass_representation(), system.k_block, q0, qdot0,
            t_final, dt, fom_cfg.beta, fom_cfg.gamma, fom_cfg.sample_every,
        )
    raise ValueError(f"unknown integrator {fom_cfg.integrator!r}")


def build_basis(snaps, kind, n, centered):
    return _BASIS_BUILDERS[kind](snaps, n, centered=centered)


# -- case evaluation ----------------------------------------------------------


def _basis_diagnostics(the_basis):
    try:
        rsym = basis_mod.reduced_symplectic(the_basis)
        return rsym.sigma_min, rsym.canon_dev
    except basis_mod.DegenerateBasisError:
        return 0.0, float("inf")


def build_case_model(system, train_snaps, the_basis, variant, provenance, cfg):
    """Construct an intrusive or inferred model for one sweep case."""
    if provenance == rom_mod.PROV_INTRUSIVE:
        builder = {
            rom_mod.VARIANT_GALERKIN: rom_mod.build_galerkin,
            rom_mod.VARIANT_LSQ: rom_mod.build_lsq_ham,
            rom_mod.VARIANT_CONSISTENT: rom_mod.build_consistent_ham,
        }[variant]
        return builder(system, the_basis, centered=cfg.rom.centered), None
    reprojected = provenance == rom_mod.PROV_OPINF_REPROJECTED
    problem = opinf_mod.build_problem(
        train_snaps, the_basis, variant, system=system, reprojected=reprojected,
        centered=cfg.rom.centered, velocity_source=cfg.opinf.velocity_source,
    )
    a_bar = opinf_mod.infer_operator(problem, the_basis)
    shift = None
    if cfg.rom.centered:
        shift = opinf_mod.centered_shift_nonintrusive(
            problem.v0, train_snaps.states[:, 0], the_basis, variant
        )
    model = opinf_mod.assemble_opinf_rom(
        a_bar, shift, the_basis, variant, cfg.rom.centered,
        x0=train_snaps.states[:, 0], reprojected=reprojected,
    )
    return model, a_bar


def evaluate_case(system, train_snaps, test_snaps, the_basis, variant, provenance, cfg,
                  emit=None):
    """Run one (basis, variant, provenance) case and report its metrics row."""
    t_start = time.perf_counter()
    model, a_bar = build_case_model(system, train_snaps, the_basis, variant, provenance, cfg)
    center = model.x_ref if model.centered else None

    reduced = rom_mod.integrate_rom(model, cfg.fom.t_final, cfg.fom.dt, cfg.fom.sample_every)
    recon = rom_mod.reconstruct(the_basis, reduced, center=center)

    fd_used = provenance != rom_mod.PROV_INTRUSIVE \
        and cfg.opinf.velocity_source != opinf_mod.VELOCITY_EXACT
    vel_matrix = None
    if fd_used:
        vel_matrix = opinf_mod.finite_difference_velocity(
            train_snaps, cfg.opinf.velocity_source
        )
    provenance_info = {
        "variant": variant, "basis_kind": the_basis.kind, "n": the_basis.n,
        "centered": model.centered, "provenance": provenance,
        "velocity_source": cfg.opinf.velocity_source
        if provenance != rom_mod.PROV_INTRUSIVE else "none",
        "dt": cfg.fom.dt, "t_final": cfg.fom.t_final,
    }
    report = metrics_mod.bound_report(
        system, the_basis, model, train_snaps, recon,
        velocity_matrix=vel_matrix, inferred_op=a_bar,
        fd_scheme=cfg.opinf.velocity_source if fd_used else None,
        provenance=provenance_info,
    )

    test_report = None
    if test_snaps is not None:
        reduced_t = rom_mod.integrate_rom(model, cfg.test.t_final, cfg.test.dt, 1)
        recon_t = rom_mod.reconstruct(the_basis, reduced_t, center=center)
        test_report = metrics_mod.bound_report(
            system, the_basis, model, test_snaps, recon_t, provenance=provenance_info,
        )
    report.wall_time = time.perf_counter() - t_start

    if emit is not None:
        emit(model, recon, report, test_report)

    sigma_min, canon_dev = _basis_diagnostics(the_basis)
    row = {
        "status": "ok",
        "fom_kind": cfg.fom.kind,
        "basis_kind": the_basis.kind,
        "n": the_basis.n,
        "basis_centered": the_basis.center is not None,
        "rom_centered": model.centered,
        "variant": variant,
        "provenance": provenance,
        "velocity_source": provenance_info["velocity_source"],
        "train_dt": cfg.fom.dt,
        "train_t_final": cfg.fom.t_final,
        "test_dt": cfg.test.dt if cfg.test else float("nan"),
        "test_t_final": cfg.test.t_final if cfg.test else float("nan"),
        "rel_l2": report.rel_l2,
        "ham_err_first": report.ham_err_first,
        "ham_err_max": report.ham_err_max,
        "test_rel_l2": test_report.rel_l2 if test_report else float("nan"),
        "test_ham_err_first": test_report.ham_err_first if test_report else float("nan"),
        "test_ham_err_max": test_report.ham_err_max if test_report else float("nan"),
        "snapshot_energy": basis_mod.snapshot_energy(
            the_basis.singular_values, the_basis.mode_count()
        ),
        "projection_error": basis_mod.projection_error(train_snaps, the_basis),
        "proj_tail": report.bound_terms.proj_tail,
        "sigma_min_jhat": sigma_min,
        "canon_dev": canon_dev,
        "grad_norm": report.bound_terms.grad_norm,
        "eps_dt": report.bound_terms.eps_dt,
        "eps_a": report.bound_terms.eps_a,
        "message": "",
    }
    return row, report, test_report


def _error_row(cfg, kind, n, variant, provenance, exc):
    row = {col: float("nan") for col in RUN_COLUMNS}
    row.update({
        "status": "error", "fom_kind": cfg.fom.kind, "basis_kind": kind, "n": n,
        "basis_centered": cfg.basis.centered, "rom_centered": cfg.rom.centered,
        "variant": variant, "provenance": provenance,
        "velocity_source": cfg.opinf.velocity_source,
        "train_dt": cfg.fom.dt, "train_t_final": cfg.fom.t_final,
        "test_dt": cfg.test.dt if cfg.test else float("nan"),
        "test_t_final": cfg.test.t_final if cfg.test else float("nan"),
        "message": f"{variant}/n={n}: {exc}",
    })
    return row


def _provenances(cfg):
    provs = [rom_mod.PROV_INTRUSIVE]
    if cfg.opinf.enabled:
        provs.append(rom_mod.PROV_OPINF_REPROJECTED if cfg.opinf.reprojected
                     else rom_mod.PROV_OPINF)
    return provs


# -- subcommands ---------------------------------------------------------------


def snapshot_paths(out_dir):
    out_dir = Path(out_dir)
    return out_dir / "snapshots.hsnp", out_dir / "snapshots.json"


def cmd_fom(cfg):
    """Build the configured FOM, integrate it, and persist the snapshots."""
    system = build_system(cfg.fom)
    snaps = integrate_system(system, cfg.fom)
    bin_path, meta_path = snapshot_paths(cfg.output_dir)
    io_mod.write_snapshot_matrix(bin_path, snaps.states, snaps.velocities)
    energy = system.hamiltonian_columns(snaps.states)
    io_mod.write_sidecar(meta_path, {
        "kind": cfg.fom.kind,
        "rows": int(snaps.states.shape[0]),
        "cols": int(snaps.states.shape[1]),
        "dt": snaps.dt if snaps.dt is not None else 0.0,
        "t0": float(snaps.times[0]),
        "sample_every": cfg.fom.sample_every,
        "integrator": cfg.fom.integrator,
        "energy_trace": [float(v) for v in energy],
    })
    print(f"wrote {bin_path} ({snaps.states.shape[0]} x {snaps.states.shape[1]})")
    return bin_path


def load_snapshots(path):
    states, velocities = io_mod.read_snapshot_matrix(path)
    meta = io_mod.read_sidecar(Path(path).with_suffix(".json"))
    times = meta["t0"] + meta["dt"] * np.arange(states.shape[1])
    from .fom import SnapshotSet

    return SnapshotSet(states, times, velocities=velocities)


def _ensure_snapshots(cfg, snapshot_path):
    if snapshot_path and Path(snapshot_path).exists():
        return build_system(cfg.fom), load_snapshots(snapshot_path)
    system = build_system(cfg.fom)
    return system, integrate_system(system, cfg.fom)


def basis_file_name(kind, n):
    return f"basis_{kind}_n{n:04d}.hsnp"


def cmd_basis(cfg, snapshot_path=None, plot=True):
    """Build every configured basis, persist it, and write the quality report."""
    system, snaps = _ensure_snapshots(cfg, snapshot_path)
    out_dir = Path(cfg.output_dir)
    rows = []
    for kind in cfg.basis.kinds:
        for n in cfg.basis.sizes:
            the_basis = build_basis(snaps, kind, n, cfg.basis.centered)
            path = out_dir / basis_file_name(kind, n)
            io_mod.write_snapshot_matrix(path, the_basis.U)
            io_mod.write_sidecar(path.with_suffix(".json"), {
                "kind": kind, "n": n, "centered": cfg.basis.centered,
                "singular_values": [float(s) for s in the_basis.singular_values],
                "center": None if the_basis.center is None
                else [float(v) for v in the_basis.center],
            })
            sigma_min, canon_dev = _basis_diagnostics(the_basis)
            rows.append({
                "kind": kind, "n": n, "centered": cfg.basis.centered,
                "snapshot_energy": basis_mod.snapshot_energy(
                    the_basis.singular_values, the_basis.mode_count()),
                "projection_error": basis_mod.projection_error(snaps, the_basis),
                "sigma_min_jhat": sigma_min, "canon_dev": canon_dev,
            })
    rows.sort(key=lambda r: (r["kind"], r["n"]))
    csv_path = out_dir / "basis_report.csv"
    io_mod.write_csv(csv_path, BASIS_COLUMNS, rows)
    if plot:
        from . import plots

        plots.plot_basis_report(rows, out_dir / "basis_report.png")
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return csv_path


def load_basis(path):
    u, _ = io_mod.read_snapshot_matrix(path)
    meta = io_mod.read_sidecar(Path(path).with_suffix(".json"))
    center = None if meta.get("center") is None else np.asarray(meta["center"], dtype=float)
    return basis_mod.ReducedBasis(u, meta["kind"], np.asarray(meta["singular_values"]),
                                  center)


def _dedupe_cases(cases):
    seen = set()
    unique = []
    for case in cases:
        if case in seen:
            warnings.warn(f"duplicate sweep case {case} dropped", RuntimeWarning)
            continue
        seen.add(case)
        unique.append(case)
    return unique


def cmd_run(cfg, snapshot_path=None, basis_path=None, emit_trajectory=False,
            emit_ham_trace=False, plot=True):
    """Evaluate the configured variants for one basis kind; errors propagate."""
    if basis_path is None and len(cfg.basis.kinds) != 1:
        raise ValueError("the run command uses exactly one basis kind; use sweep instead")
    system, train_snaps = _ensure_snapshots(cfg, snapshot_path)
    test_snaps = None
    if cfg.test is not None:
        test_snaps = integrate_system(system, cfg.fom, dt=cfg.test.dt,
                                      t_final=cfg.test.t_final)
    out_dir = Path(cfg.output_dir)

    bases = {}
    if basis_path is not None:
        loaded = load_basis(basis_path)
        bases[(loaded.kind, loaded.n)] = loaded
        kinds, sizes = (loaded.kind,), (loaded.n,)
    else:
        kinds, sizes = cfg.basis.kinds, cfg.basis.sizes
        for n in sizes:
            bases[(kinds[0], n)] = build_basis(train_snaps, kinds[0], n,
                                               cfg.basis.centered)

    cases = _dedupe_cases([
        (kind, n, variant, prov)
        for kind in kinds for n in sizes
        for variant in cfg.rom.variants for prov in _provenances(cfg)
    ])

    rows = []
    traces = []
    for kind, n, variant, prov in cases:
        def emit(model, recon, report, test_report, _case=(kind, n, variant, prov)):
            tag = f"{_case[2]}_{_case[3]}_n{_case[1]:04d}"
            if emit_trajectory:
                io_mod.write_snapshot_matrix(out_dir / f"trajectory_{tag}.hsnp",
                                             recon.states)
            if emit_ham_trace:
                trace = test_report.ham_trace if test_report is not None \
                    else report.ham_trace
                io_mod.write_csv(
                    out_dir / f"ham_trace_{tag}.csv", ["t", "ham_error"],
                    [{"t": t, "ham_error": e} for t, e in trace],
                )
                traces.append((tag, trace))

        try:
            row, _, _ = evaluate_case(system, train_snaps, test_snaps, bases[(kind, n)],
                                      variant, prov, cfg, emit=emit)
        except Exception as exc:
            raise RuntimeError(f"{variant}/n={n} ({prov}): {exc}") from exc
        rows.append(row)

    rows.sort(key=lambda r: (r["basis_kind"], r["n"], r["variant"], r["provenance"]))
    csv_path = out_dir / "run_report.csv"
    io_mod.write_csv(csv_path, RUN_COLUMNS, rows)
    if plot:
        from . import plots

        plots.plot_error_sweep(rows, out_dir / "run_report.png")
        if traces:
            plots.plot_ham_trace(traces, out_dir / "ham_trace.png")
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return csv_path


def cmd_sweep(cfg, threads=1, plot=True):
    """Cross product of basis kind, size, variant, and provenance.

    Case failures become status != ok rows; the CSV row order is the
    lexicographic order of (kind, n, variant, provenance) regardless of the
    thread count, so identical configs give byte-identical output.
    """
    system = build_system(cfg.fom)
    train_snaps = integrate_system(system, cfg.fom)
    test_snaps = None
    if cfg.test is not None:
        test_snaps = integrate_system(system, cfg.fom, dt=cfg.test.dt,
                                      t_final=cfg.test.t_final)
    out_dir = Path(cfg.output_dir)

    cases = _dedupe_cases([
        (kind, n, variant, prov)
        for kind in sorted(cfg.basis.kinds) for n in sorted(cfg.basis.sizes)
        for variant in sorted(cfg.rom.variants) for prov in sorted(_provenances(cfg))
    ])

    bases = {}
    for kind in sorted(set(c[0] for c in cases)):
        for n in sorted(set(c[1] for c in cases)):
            try:
                bases[(kind, n)] = build_basis(train_snaps, kind, n, cfg.basis.centered)
            except Exception as exc:  # noqa: BLE001 - recorded per case below
                bases[(kind, n)] = exc

    def run_case(case):
        kind, n, variant, prov = case
        the_basis = bases[(kind, n)]
        if isinstance(the_basis, Exception):
            return _error_row(cfg, kind, n, variant, prov, the_basis)
        try:
            row, _, _ = evaluate_case(system, train_snaps, test_snaps, the_basis,
                                      variant, prov, cfg)
            return row
        except Exception as exc:  # noqa: BLE001 - partial failures become rows
            return _error_row(cfg, kind, n, variant, prov, exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_case, cases))
    else:
        rows = [run_case(case) for case in cases]

    rows.sort(key=lambda r: (str(r["basis_kind"]), int(r["n"]), str(r["variant"]),
                             str(r["provenance"])))
    csv_path = out_dir / "sweep.csv"
    io_mod.write_csv(csv_path, RUN_COLUMNS, rows)
    if plot:
        from . import plots

        plots.plot_error_sweep(rows, out_dir / "sweep.png")
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return csv_path


# -- diagnose -------------------------------------------------------------------


def _diagnostic_checks(seed):
    """Self-check battery over the core invariants; yields (name, value, limit)."""
    from .symplectic import apply_j, canonical_j
    from .opinf import kron_pair_solve, solve_lyapunov_sym, solve_sylvester_sym

    rng = np.random.default_rng(seed)

    v = rng.standard_normal(40)
    yield "j_involution", float(np.max(np.abs(apply_j(apply_j(v)) + v))), 0.0
    yield "j_isotropy", abs(float(v @ apply_j(v))), 1e-12

    system = build_wave_fom(100, 0.1, 1.0)
    snaps = integrate_midpoint(system, 2.0, 0.02)
    h0 = system.hamiltonian(system.x0)
    drift = np.max(np.abs(system.hamiltonian_columns(snaps.states) - h0))
    yield "midpoint_energy_drift", float(drift / max(1.0, abs(h0))), 1e-10

    from .fom import midpoint_stepper

    fwd = midpoint_stepper(system, 0.02)
    bwd = midpoint_stepper(system, -0.02)
    x = system.x0.copy()
    for _ in range(50):
        x = fwd(x)
    for _ in range(50):
        x = bwd(x)
    rev = np.linalg.norm(x - system.x0) / np.linalg.norm(system.x0)
    yield "midpoint_reversibility", float(rev), 1e-9

    pod = basis_mod.ordinary_pod(snaps, 10, centered=True)
    perr = basis_mod.projection_error(snaps, pod)
    tail = np.sqrt(np.sum(pod.singular_values[10:] ** 2))
    scale = max(np.sum(pod.singular_values**2), 1e-300)
    yield "pod_tail_identity", float(abs(perr**2 - tail**2) / scale), 1e-10

    lift = basis_mod.cotangent_lift(snaps, 10, centered=True)
    jn = canonical_j(10)
    yield "cotangent_equivariance", float(
        np.max(np.abs(lift.U.T @ apply_j(lift.U) - jn))), 1e-10

    worst = np.inf
    for _ in range(100):
        u = np.linalg.qr(rng.standard_normal((50, 10)))[0]
        worst = min(worst, np.linalg.svd(u.T @ apply_j(u), compute_uv=False)[-1])
    yield "haar_jhat_sigma_min", float(worst), None  # pass when > 1e-8

    worst_lyap = 0.0
    worst_syl = 0.0
    for n in (2, 4, 8):
        m = rng.standard_normal((n, 3 * n))
        s = m @ m.T
        c = rng.standard_normal((n, n))
        c = c + c.T
        worst_lyap = max(worst_lyap, float(np.max(np.abs(
            solve_lyapunov_sym(s, c) - kron_pair_solve(np.eye(n), s, c)))))
        g = rng.standard_normal((n, 3 * n))
        g = g @ g.T + n * np.eye(n)
        worst_syl = max(worst_syl, float(np.max(np.abs(
            solve_sylvester_sym(g, s, c) - kron_pair_solve(g, s, c)))))
    yield "lyapunov_vs_kronecker", worst_lyap, 1e-10
    yield "sylvester_vs_kronecker", worst_syl, 1e-10

    pod8 = basis_mod.ordinary_pod(snaps, 8, centered=True)
    problem = opinf_mod.build_problem(snaps, pod8, rom_mod.VARIANT_CONSISTENT,
                                      system=system, reprojected=True, centered=True)
    a_bar = opinf_mod.infer_consistent(problem, pod8)
    a_hat = pod8.U.T @ system.apply_quad(pod8.U)
    rec = np.linalg.norm(a_bar - a_hat) / np.linalg.norm(a_hat)
    yield "reprojected_operator_recovery", float(rec), 1e-10


def cmd_diagnose(output_dir, seed=0, plot=True):
    """Run the self-check battery, print pass/fail lines, write the CSV."""
    rows = []
    failed = 0
    for name, value, limit in _diagnostic_checks(seed):
        if name == "haar_jhat_sigma_min":
            ok = value > 1e-8
            limit_repr = 1e-8
        else:
            ok = value <= limit
            limit_repr = limit
        failed += not ok
        rows.append({"check": name, "value": value, "limit": limit_repr,
                     "status": "ok" if ok else "fail"})
        print(f"{'PASS' if ok else 'FAIL'} {name}: value={value:.3e} limit={limit_repr:.3e}")
    csv_path = Path(output_dir) / "diagnostics.csv"
    io_mod.write_csv(csv_path, ["check", "value", "limit", "status"], rows)
    print(f"wrote {csv_path} ({failed} failures)")
    return 1 if failed else 0


# -- entry point -----------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hamred",
        description="Structure-preserving model reduction for Hamiltonian systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config file")
        p.add_argument("--output", default="hamred_out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed override")

    p_fom = sub.add_parser("fom", help="integrate the FOM and store snapshots")
    add_common(p_fom)

    p_basis = sub.add_parser("basis", help="build reduced bases and their report")
    add_common(p_basis)
    p_basis.add_argument("--snapshots", default=None, help="snapshot file to reuse")
    p_basis.add_argument("--no-plot", action="store_true")

    p_run = sub.add_parser("run", help="evaluate ROM variants for one basis kind")
    add_common(p_run)
    p_run.add_argument("--snapshots", default=None)
    p_run.add_argument("--basis", default=None, help="basis file to reuse")
    p_run.add_argument("--emit-trajectory", action="store_true")
    p_run.add_argument("--emit-ham-trace", action="store_true")
    p_run.add_argument("--no-plot", action="store_true")

    p_sweep = sub.add_parser("sweep", help="full cross-product sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.add_argument("--no-plot", action="store_true")

    p_diag = sub.add_parser("diagnose", help="run the self-check battery")
    add_common(p_diag, config_required=False)

    args = parser.parse_args(argv)

    if args.command == "diagnose":
        seed = args.seed if args.seed is not None else 0
        Path(args.output).mkdir(parents=True, exist_ok=True)
        return cmd_diagnose(args.output, seed=seed)

    cfg = load_config(args.config, output_dir=args.output)
    if args.seed is not None:
        cfg.fom.seed = args.seed
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)

    if args.command == "fom":
        cmd_fom(cfg)
    elif args.command == "basis":
        cmd_basis(cfg, snapshot_path=args.snapshots, plot=not args.no_plot)
    elif args.command == "run":
        cmd_run(cfg, snapshot_path=args.snapshots, basis_path=args.basis,
                emit_trajectory=args.emit_trajectory,
                emit_ham_trace=args.emit_ham_trace, plot=not args.no_plot)
    elif args.command == "sweep":
        cmd_sweep(cfg, threads=args.threads, plot=not args.no_plot)
    return 0


if __name__ == "__main__":
    sys.exit(main())
