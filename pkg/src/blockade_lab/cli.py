"""Command-line front end: ``blockade-lab <simulate|grape|tomo|fit> --scenario FILE``.

Exit codes:
    0  success
    2  configuration or input error (message names file, section and key)
    3  integration failure in the master-equation solver
    4  optimizer or fit did not converge (only with ``--strict``)
    5  uninvertible tomography point set

Diagnostics go to stderr; stdout carries only the path of the summary file.
Output files contain no timestamps, so identical inputs and seeds give
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.integrate

from . import analysis, grape, lindblad, tomography
from .config import ConfigError, ConfigFile, Section, load_device
from .hamiltonian import (
    TWO_PI,
    BlockadeSpec,
    DeviceParams,
    build_blockade_hamiltonian,
    build_multimode_blockade_hamiltonian,
    dressed_single_photon_shifts,
    photon_number_projector,
    reduced_blockade_hamiltonian,
)
from .operators import (
    SystemLayout,
    cavity_state,
    fock_state,
    ket2dm,
    load_matrix,
    save_matrix,
)

log = logging.getLogger("blockade_lab")

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRATION, EXIT_CONVERGENCE, EXIT_UNINVERTIBLE = 0, 2, 3, 4, 5


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --- shared helpers ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def write_summary(path: Path, items: list[tuple[str, object]]) -> Path:
    path.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in items))
    return path


def _seed(args, sec: Section) -> int:
    if args.seed is not None:
        return int(args.seed)
    return sec.integer("seed", 0)


@dataclass
class Scenario:
    cfg: ConfigFile
    name: str
    kind: str
    params: DeviceParams | None

    @classmethod
    def load(cls, path) -> "Scenario":
        cfg = ConfigFile(path)
        sec = cfg.section("scenario")
        kind = sec.text("kind")
        dev_path = sec.path_value("device")
        params = None
        if dev_path is not None:
            params = load_device(dev_path)
        return cls(cfg, sec.text("name", cfg.path.stem), kind, params)

    def require_params(self) -> DeviceParams:
        if self.params is None:
            raise ConfigError(f"{self.cfg.path} [scenario] device: missing required key")
        return self.params

    def mode_indices(self, sec: Section, key: str = "modes") -> tuple[int, ...]:
        params = self.require_params()
        out = []
        for lab in sec.text(key).split():
            if lab not in params.labels:
                raise ConfigError(f"{sec.path} [{sec.name}] {key}: unknown mode {lab!r} (device has {' '.join(params.labels)})")
            out.append(params.labels.index(lab))
        return tuple(out)


def output_dir(args, scenario_name: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        base = os.environ.get("BLOCKADE_LAB_OUT")
        out = (Path(base) if base else Path("out")) / scenario_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _per_mode(sec: Section, key: str, n: int, default=None) -> list[float]:
    vals = sec.numbers(key, default)
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise ConfigError(f"{sec.path} [{sec.name}] {key}: expected 1 or {n} values, got {len(vals)}")
    return vals


# --- simulate ----------------------------------------------------------------------

@dataclass
class SimulationSetup:
    params: DeviceParams
    layout: SystemLayout
    labels: tuple[str, ...]
    spec: BlockadeSpec | None
    drift: np.ndarray
    generators: list
    pulse: lindblad.PulseSequence
    channels: list
    sample_times: np.ndarray
    target: tuple


def build_simulation(scn: Scenario) -> SimulationSetup:
    cfg = scn.cfg
    system = cfg.section("system")
    modes = scn.mode_indices(system)
    params = scn.require_params().subset(modes)
    n = len(modes)
    dims = [int(d) for d in _per_mode(system, "mode_dims", n)]
    layout = SystemLayout(system.integer("transmon_levels", 2), tuple(dims))

    blk = cfg.section("blockade", required=False)
    spec = None
    if blk.flag("enabled", bool(blk.raw)):
        det = blk.angular("detuning") if blk.has("detuning_hz") else None
        spec = BlockadeSpec(tuple(range(n)), blk.integer("n0"), blk.angular("omega"), det)
        if spec.n0 >= min(dims):
            raise ConfigError(f"{cfg.path} [blockade] n0: must be below every mode truncation {dims}")

    drive = cfg.section("drive")
    tune = drive.text("tune", "dressed")
    if tune not in ("dressed", "bare"):
        raise ConfigError(f"{cfg.path} [drive] tune: expected dressed or bare, got {tune!r}")
    names = [f"drive_{params.labels[m]}" for m in range(n)]
    pulse_path = drive.path_value("pulse_file")
    if pulse_path is not None:
        if not pulse_path.is_file():
            raise ConfigError(f"{cfg.path} [drive] pulse_file: {pulse_path} not found")
        try:
            pulse = lindblad.PulseSequence.load(pulse_path)
        except ValueError as exc:
            raise ConfigError(f"{pulse_path}: {exc}") from exc
        if len(pulse.names) != n:
            raise ConfigError(f"{pulse_path}: {len(pulse.names)} channels for {n} driven modes")
    else:
        amps = [TWO_PI * a for a in _per_mode(drive, "amplitude_hz", n)]
        phases = _per_mode(drive, "phase_rad", n, [0.0])
        pulse = lindblad.PulseSequence.constant(
            names, [a * np.exp(1j * p) for a, p in zip(amps, phases)], drive.seconds("duration")
        )

    if layout.transmon_levels != 2:
        raise ConfigError(f"{cfg.path} [system] transmon_levels: the blockade frame needs 2")
    if spec is None:
        spec_off = BlockadeSpec(tuple(range(n)), 1, 0.0, 0.0)
        drift, gens = build_multimode_blockade_hamiltonian(params, layout, spec_off)
    else:
        drift, gens = build_multimode_blockade_hamiltonian(params, layout, spec)
    if tune == "dressed":
        shifts = dressed_single_photon_shifts(drift, layout)
        s = spec if spec is not None else spec_off
        drift, gens = build_multimode_blockade_hamiltonian(params, layout, s, shifts)

    chans_sec = cfg.section("channels", required=False)
    channels = lindblad.standard_channels(params, layout) if chans_sec.flag("enabled", False) else []

    out = cfg.section("output", required=False)
    samples = out.integer("samples", 201)
    if samples < 2:
        raise ConfigError(f"{cfg.path} [output] samples: need at least 2")
    sample_times = np.linspace(0.0, pulse.duration, samples)
    target = tuple(out.text("target", "none").split())
    if target[0] not in ("none", "fock", "w"):
        raise ConfigError(f"{cfg.path} [output] target: expected none, fock N... or w")
    if target[0] == "fock" and len(target) != n + 1:
        raise ConfigError(f"{cfg.path} [output] target: fock needs one occupation per mode")
    return SimulationSetup(params, layout, params.labels, spec, drift, gens, pulse, channels, sample_times, target)


def run_simulation(setup: SimulationSetup) -> lindblad.TrajectoryResult:
    rho0 = ket2dm(fock_state(setup.layout, 0, (0,) * setup.layout.n_modes))
    try:
        return lindblad.evolve_master(
            setup.drift, setup.generators, setup.pulse, setup.channels, rho0, setup.sample_times
        )
    except lindblad.IntegrationError as exc:
        raise CommandError(f"integration failed at t = {exc.time!r} s: {exc}", EXIT_INTEGRATION) from exc


def _population_table(setup: SimulationSetup, traj: lindblad.TrajectoryResult):
    lay = setup.layout
    shape = (lay.transmon_levels, *lay.mode_dims)
    cols: dict[str, np.ndarray] = {}
    diag = np.array([np.real(np.diag(traj.density(k))) for k in range(len(traj.times))]).reshape(-1, *shape)
    cols["P_e"] = diag[:, 1:].reshape(len(traj.times), -1).sum(axis=1)
    for m, lab in enumerate(setup.labels):
        axes = tuple(i for i in range(1, diag.ndim) if i != m + 2)
        marg = diag.sum(axis=axes)
        for k in range(lay.mode_dims[m]):
            cols[f"P{lab}_{k}"] = marg[:, k]
    cav = diag.sum(axis=1)
    totals = sum(np.meshgrid(*[np.arange(d) for d in lay.mode_dims], indexing="ij"))
    for k in range(int(totals.max()) + 1):
        cols[f"Ntotal_{k}"] = cav[:, totals == k].sum(axis=1)
    if lay.n_modes > 1:
        for occ in itertools.product(*[range(min(d, 3)) for d in lay.mode_dims]):
            if sum(occ) <= 2:
                cols["P_" + "".join(map(str, occ))] = cav[(slice(None), *occ)]
    return cols


def _trajectory_csv(times, cols) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", *cols])
    for i, t in enumerate(times):
        w.writerow([repr(float(t))] + [repr(float(v[i])) for v in cols.values()])
    return buf.getvalue()


def target_fidelity(setup: SimulationSetup, rho: np.ndarray) -> tuple[str, float | None, tuple]:
    """Fidelity of the final state with the declared target.

    Fock targets use the cavity population.  W targets use the transmon
    ground-state block <g|rho|g> (not renormalised), maximised over the
    free W phases.
    """
    lay = setup.layout
    kind = setup.target[0]
    if kind == "none":
        return kind, None, ()
    if kind == "fock":
        occ = tuple(int(x) for x in setup.target[1:])
        cav = cavity_state(rho, lay)
        idx = int(np.ravel_multi_index(occ, lay.mode_dims))
        return kind, float(cav[idx, idx].real), ()
    cav_dim = int(np.prod(lay.mode_dims))
    ground = rho[:cav_dim, :cav_dim]
    f, phases = analysis.max_w_fidelity(ground, lay.n_modes, lay.mode_dims)
    return kind, f, phases


def cmd_simulate(args) -> Path:
    scn = Scenario.load(args.scenario)
    setup = build_simulation(scn)
    traj = run_simulation(setup)
    out = output_dir(args, scn.name)
    cols = _population_table(setup, traj)
    (out / "trajectory.csv").write_text(_trajectory_csv(traj.times, cols))
    final = traj.density(len(traj.times) - 1)
    save_matrix(out / "final_state.txt", final)

    items: list[tuple[str, object]] = [("scenario", scn.name), ("kind", "simulate"),
                                       ("modes", " ".join(setup.labels)),
                                       ("duration_s", setup.pulse.duration),
                                       ("channels", bool(setup.channels))]
    for key, vals in cols.items():
        if key.startswith("P") and "_" in key and not key.startswith("P_"):
            items.append((f"final_{key}", float(vals[-1])))
    items.append(("final_P_e", float(cols["P_e"][-1])))
    if setup.spec is not None:
        blocked = sum(v for k, v in cols.items() if k.startswith("Ntotal_") and int(k.split("_")[1]) >= setup.spec.n0)
        items.append(("max_P_blockaded", float(np.max(blocked))))
    if setup.layout.n_modes == 1:
        p1 = cols[f"P{setup.labels[0]}_1"]
        k = int(np.argmax(p1))
        items += [("peak_P1", float(p1[k])), ("peak_P1_time_s", float(traj.times[k]))]
    kind, fid, phases = target_fidelity(setup, final)
    items.append(("target", " ".join(setup.target)))
    if fid is not None:
        items.append(("fidelity", fid))
    if phases:
        items.append(("w_phases_rad", list(phases)))
    return write_summary(out / "summary.txt", items)


# --- grape -------------------------------------------------------------------------

def _grape_restart(job):
    problem, cfg, check = job
    res = grape.optimize_pulse(problem, cfg)
    score = res.closed_fidelity
    if check is not None:
        drift, gens, psi0, idx, dims = check
        traj = lindblad.evolve_schrodinger(drift, gens, res.pulse, psi0, [res.pulse.duration])
        amps = np.abs(traj.states[-1].reshape(dims)) ** 2
        score = float(amps[:, idx].sum())
    return res, score


def cmd_grape(args) -> Path:
    """Optimise on the reduced (or full) model, then re-evaluate on the full master equation.

    With ``restarts > 1`` each restart uses seed + k.  ``select = full``
    ranks restarts by the lossless full-model population of the target
    Fock state (the reduced model omits leakage into the blockaded pair);
    ``select = closed`` ranks by the optimiser's own model.
    """
    scn = Scenario.load(args.scenario)
    cfg = scn.cfg
    params = scn.require_params()
    blk = cfg.section("blockade")
    (mode,) = scn.mode_indices(blk, "mode")
    sub = params.subset((mode,))
    spec = BlockadeSpec((0,), blk.integer("n0"), blk.angular("omega"))
    g = cfg.section("grape")
    target_n = g.integer("target")
    if not 0 <= target_n < spec.n0:
        raise ConfigError(f"{cfg.path} [grape] target: must lie below the blockade level {spec.n0}")
    steps = args.steps if args.steps is not None else g.integer("steps", 500)
    model = g.text("model", "reduced")
    eval_dim = g.integer("evaluate_mode_dim", spec.n0 + 3)
    full_layout = SystemLayout(2, (eval_dim,))
    full_drift, full_gens = build_blockade_hamiltonian(sub, full_layout, spec, 0)
    if model == "reduced":
        drift, gens = reduced_blockade_hamiltonian(sub, spec, 0, stark="exact", include_kerr=True,
                                                  dressed_couplings=g.flag("dressed_couplings", True))
        initial, target = np.eye(spec.n0)[0], np.eye(spec.n0)[target_n]
        forbidden = ()
    elif model == "full":
        drift, gens = full_drift, full_gens
        initial = fock_state(full_layout, 0, (0,))
        target = fock_state(full_layout, 0, (target_n,))
        forbidden = [(photon_number_projector(full_layout, spec.n0), g.number("forbidden_weight", 10.0))]
    else:
        raise ConfigError(f"{cfg.path} [grape] model: expected reduced or full, got {model!r}")
    cap_mode = g.text("cap_mode", "quadrature")
    try:
        problem = grape.ControlProblem(
            drift, gens, initial, target, g.seconds("horizon"), steps, g.angular("cap"),
            forbidden=forbidden, channel_names=[f"drive_{sub.labels[0]}"], cap_mode=cap_mode,
        )
    except ValueError as exc:
        raise ConfigError(f"{cfg.path} [grape]: {exc}") from exc
    seed = _seed(args, cfg.section("scenario"))
    restarts = g.integer("restarts", 1)
    if restarts < 1:
        raise ConfigError(f"{cfg.path} [grape] restarts: must be >= 1")
    select = g.text("select", "closed")
    if select not in ("closed", "full"):
        raise ConfigError(f"{cfg.path} [grape] select: expected closed or full, got {select!r}")
    bandwidth = g.angular("bandwidth") if g.has("bandwidth_hz") else None
    if bandwidth is not None and bandwidth <= 0:
        raise ConfigError(f"{cfg.path} [grape] bandwidth_hz: must be positive")
    if bandwidth is not None and bandwidth >= np.pi / problem.dt:
        log.warning("bandwidth %.4g Hz is beyond the Nyquist frequency of %d steps; not applied",
                    bandwidth / TWO_PI, steps)
        bandwidth = None
    check = None
    if select == "full":
        check = (full_drift, full_gens, fock_state(full_layout, 0, (0,)), target_n, (2, eval_dim))
    jobs = [
        (problem, grape.OptimizerConfig(
            max_iterations=g.integer("max_iterations", 2000),
            target_fidelity=g.number("target_fidelity", 0.999),
            momentum=g.number("momentum", 0.0),
            seed=seed + k,
            bandwidth=bandwidth,
        ), check)
        for k in range(restarts)
    ]
    if args.jobs > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_grape_restart, jobs))
    else:
        results = [_grape_restart(j) for j in jobs]
    best = max(range(len(results)), key=lambda i: (results[i][1], -i))
    res = results[best][0]
    target_threshold = jobs[0][1].target_fidelity

    out = output_dir(args, scn.name)
    res.pulse.save(out / "pulse.csv")
    (out / "grape_log.csv").write_text(res.log_csv())

    items: list[tuple[str, object]] = [
        ("scenario", scn.name), ("kind", "grape"), ("model", model), ("target_fock", target_n),
        ("steps", steps), ("seed", seed), ("restarts", restarts), ("select", select),
        ("best_restart", best), ("restart_scores", [r[1] for r in results]),
        ("iterations", len(res.cost_history) - 1), ("converged", res.converged),
        ("closed_fidelity", res.closed_fidelity), ("final_gradient_norm", res.gradient_norm_final),
    ]
    halfwidth = g.angular("bandlimit_halfwidth", abs(sub.chi_m[0]) / TWO_PI / 2)
    if halfwidth < np.pi / problem.dt:
        limited = grape.bandlimit_pulse(res.pulse, 0.0, halfwidth, problem.amplitude_cap, cap_mode)
        limited.save(out / "pulse_bandlimited.csv")
        items += [("bandlimit_halfwidth_hz", halfwidth / TWO_PI),
                  ("bandlimited_closed_fidelity", grape.closed_fidelity(problem, limited))]

    if g.flag("evaluate_open", True):
        rho0 = ket2dm(fock_state(full_layout, 0, (0,)))
        idx = target_n
        for label, chans in (("lossless", []), ("open", lindblad.standard_channels(sub, full_layout))):
            try:
                traj = lindblad.evolve_master(full_drift, full_gens, res.pulse, chans, rho0,
                                              np.linspace(0, res.pulse.duration, 101))
            except lindblad.IntegrationError as exc:
                raise CommandError(f"integration failed at t = {exc.time!r} s: {exc}", EXIT_INTEGRATION) from exc
            cav = cavity_state(traj.density(len(traj.times) - 1), full_layout)
            items.append((f"{label}_fidelity", float(cav[idx, idx].real)))
            if label == "open":
                proj = np.diag(photon_number_projector(full_layout, spec.n0)).real
                pops = np.array([np.real(np.diag(traj.density(k))) @ proj for k in range(len(traj.times))])
                integrated = float(scipy.integrate.trapezoid(pops, traj.times) / res.pulse.duration)
                items.append(("integrated_blockaded_population", integrated))

    summary = write_summary(out / "summary.txt", items)
    if args.strict and not res.converged:
        raise CommandError(
            f"optimizer stopped at fidelity {res.closed_fidelity:.6f} below target {target_threshold}",
            EXIT_CONVERGENCE,
        )
    return summary


# --- tomo --------------------------------------------------------------------------

def _angle_sets(sec: Section, n_modes: int) -> list[tuple[float, ...]]:
    raw = sec.text("angle_sets_rad", " ".join([repr(np.pi)] * n_modes))
    sets = []
    for chunk in raw.split("|"):
        try:
            vals = tuple(float(x) for x in chunk.split())
        except ValueError as exc:
            raise ConfigError(f"{sec.path} [{sec.name}] angle_sets_rad: bad number in {chunk!r}") from exc
        if len(vals) != n_modes:
            raise ConfigError(f"{sec.path} [{sec.name}] angle_sets_rad: each set needs {n_modes} angles")
        sets.append(vals)
    return sets


def _design_mode(job):
    d, n_points, angles, seed, proposals = job
    ps = tomography.optimize_point_set(d, n_points, angles, seed=seed, proposals=proposals)
    pts = []
    for alphas, _ in ps.settings:
        if alphas[0] not in pts:
            pts.append(alphas[0])
    return pts


def tomo_design(scn: Scenario, args, out: Path) -> tuple[Path, list]:
    sec = scn.cfg.section("tomo")
    dims = [int(x) for x in sec.numbers("dims")]
    n = len(dims)
    n_points = sec.integer("n_points")
    proposals = sec.integer("proposals", 2000)
    seed = _seed(args, scn.cfg.section("scenario"))
    sets = _angle_sets(sec, n)
    jobs = [
        (dims[m], n_points, tuple(sorted({s[m] for s in sets})), seed + m, proposals)
        for m in range(n)
    ]
    if args.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            per_mode = list(ex.map(_design_mode, jobs))
    else:
        per_mode = [_design_mode(j) for j in jobs]
    ps = tomography.product_point_set(dims, per_mode, sets, sec.text("form", "joint"))
    tomography.build_measurement_matrix(ps)
    path = out / "point_set.csv"
    ps.save(path)
    items = [("scenario", scn.name), ("kind", "tomo design"), ("dims", dims),
             ("settings", ps.n_settings), ("condition_number", ps.condition_number)]
    if n > 1:
        items.append(("per_mode_condition_numbers",
                      tomography.per_mode_condition_numbers(ps, per_mode)))
    return write_summary(out / "design_summary.txt", items), items


def _resolve(sec: Section, key: str, out: Path, default_name: str) -> Path:
    p = sec.path_value(key)
    return p if p is not None else out / default_name


def _embed_cavity(cav: np.ndarray, src_dims, dst_dims) -> np.ndarray:
    src_dims, dst_dims = tuple(src_dims), tuple(dst_dims)
    if src_dims == dst_dims:
        return cav
    if len(src_dims) != len(dst_dims) or any(s > d for s, d in zip(src_dims, dst_dims)):
        raise ConfigError(f"state dims {src_dims} do not fit point-set dims {dst_dims}")
    idx = [int(np.ravel_multi_index(np.unravel_index(i, src_dims), dst_dims)) for i in range(int(np.prod(src_dims)))]
    full = np.zeros((int(np.prod(dst_dims)),) * 2, dtype=complex)
    full[np.ix_(idx, idx)] = cav
    return full


def _tomo_state(sec: Section, ps: tomography.WignerPointSet, seed: int):
    """Return (state handed to the readout, its transmon levels, its mode dims, cavity state in point-set dims)."""
    spec = sec.text("state", "vacuum").split()
    kind = spec[0]
    dims = ps.dims
    dim = ps.total_dim
    if kind == "vacuum":
        rho = np.zeros((dim, dim), complex)
        rho[0, 0] = 1
        return rho, 0, dims, rho
    if kind == "fock":
        occ = tuple(int(x) for x in spec[1:])
        if len(occ) != len(dims):
            raise ConfigError(f"{sec.path} [tomo] state: fock needs {len(dims)} occupations")
        idx = int(np.ravel_multi_index(occ, dims))
        rho = np.zeros((dim, dim), complex)
        rho[idx, idx] = 1
        return rho, 0, dims, rho
    if kind == "random":
        rank = int(spec[1]) if len(spec) > 1 else dim
        rng = np.random.default_rng(seed)
        g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        return rho, 0, dims, rho
    if kind == "file":
        p = sec.path_value("state_file")
        if p is None or not p.is_file():
            raise ConfigError(f"{sec.path} [tomo] state_file: missing or not found")
        rho = load_matrix(p)
        if rho.shape != (dim, dim):
            raise ConfigError(f"{p}: state shape {rho.shape} does not match point-set dim {dim}")
        return rho, 0, dims, rho
    if kind == "scenario":
        p = sec.path_value("state_scenario")
        if p is None:
            raise ConfigError(f"{sec.path} [tomo] state_scenario: missing required key")
        setup = build_simulation(Scenario.load(p))
        traj = run_simulation(setup)
        full = traj.density(len(traj.times) - 1)
        cav = _embed_cavity(cavity_state(full, setup.layout), setup.layout.mode_dims, dims)
        readout = sec.text("readout", "cavity")
        if readout == "transmon_sign":
            return full, setup.layout.transmon_levels, setup.layout.mode_dims, cav
        if readout != "cavity":
            raise ConfigError(f"{sec.path} [tomo] readout: expected cavity or transmon_sign")
        return cavity_state(full, setup.layout), 0, setup.layout.mode_dims, cav
    raise ConfigError(f"{sec.path} [tomo] state: unknown kind {kind!r}")


def _load_point_set(path: Path) -> tomography.WignerPointSet:
    if not path.is_file():
        raise ConfigError(f"point set {path} not found (run 'tomo design' first)")
    try:
        return tomography.WignerPointSet.load(path)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_tomo(args) -> Path:
    scn = Scenario.load(args.scenario)
    out = output_dir(args, scn.name)
    sec = scn.cfg.section("tomo")
    seed = _seed(args, scn.cfg.section("scenario"))
    try:
        if args.action == "design":
            summary, _ = tomo_design(scn, args, out)
            return summary
        ps = _load_point_set(_resolve(sec, "point_set", out, "point_set.csv"))
        if args.action == "simulate":
            state, levels, state_dims, cav = _tomo_state(sec, ps, seed)
            sigma = sec.number("noise_sigma", 0.0)
            rec = tomography.simulate_measurements(state, ps, sigma, seed=seed, state_dims=state_dims,
                                                   transmon_levels=levels)
            rec.save(out / "record.csv")
            save_matrix(out / "state_input.txt", cav)
            return write_summary(out / "simulate_summary.txt", [
                ("scenario", scn.name), ("kind", "tomo simulate"), ("settings", ps.n_settings),
                ("noise_sigma", sigma), ("seed", seed), ("state", sec.text("state", "vacuum")),
                ("readout", "transmon_sign" if levels else "cavity"),
            ])
        rec_path = _resolve(sec, "record", out, "record.csv")
        if not rec_path.is_file():
            raise ConfigError(f"record {rec_path} not found (run 'tomo simulate' first)")
        rec = tomography.MeasurementRecord.load(rec_path)
        target_path = _resolve(sec, "target", out, "state_input.txt")
        target = load_matrix(target_path) if target_path.is_file() else None
        res = tomography.reconstruct(ps, rec)
    except tomography.UninvertiblePointSetError as exc:
        raise CommandError(f"uninvertible point set: {exc}", EXIT_UNINVERTIBLE) from exc
    save_matrix(out / "rho.txt", res.rho)
    items: list[tuple[str, object]] = [("scenario", scn.name), ("kind", "tomo reconstruct")]
    report = res.report()
    if target is not None:
        if target.shape != res.rho.shape:
            raise ConfigError(f"{target_path}: target shape {target.shape} does not match {res.rho.shape}")
        report += f"fidelity = {float(analysis.state_fidelity(res.rho, target, 'uhlmann'))!r}\n"
        report += f"overlap = {float(analysis.state_fidelity(res.rho, target))!r}\n"
        report += f"trace_distance = {tomography.trace_distance(res.rho, target)!r}\n"
    if len(ps.dims) > 1:
        report += analysis.entanglement_witness(res.rho, len(ps.dims), ps.dims).report()
    (out / "report.txt").write_text(report)
    items.append(("report", "report.txt"))
    return write_summary(out / "reconstruct_summary.txt", items + [
        tuple(line.split(" = ", 1)) for line in report.splitlines()
    ])


# --- fit ---------------------------------------------------------------------------

def _read_fit_csv(path: Path):
    if not path.is_file():
        raise ConfigError(f"{path}: data file not found")
    text = path.read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ConfigError(f"{path}: data file is empty")
    header = [h.strip() for h in rows[0]]
    if header not in (["t_s", "y"], ["t_s", "alpha", "y"]):
        raise ConfigError(f"{path}: header must be 't_s,y' or 't_s,alpha,y', got {','.join(header)!r}")
    if len(rows) == 1:
        raise ConfigError(f"{path}: no data rows")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric value ({exc})") from exc
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: rows must have {len(header)} columns")
    return header, data


def cmd_fit(args) -> Path:
    if args.scenario:
        scn = Scenario.load(args.scenario)
        sec = scn.cfg.section("fit")
        name = scn.name
        model = args.model or sec.text("model")
        data = Path(args.data) if args.data else sec.path_value("data")
        if data is None:
            raise ConfigError(f"{scn.cfg.path} [fit] data: missing required key")
    else:
        if not (args.model and args.data):
            raise ConfigError("fit needs --scenario or both --model and --data")
        model, data, name = args.model, Path(args.data), Path(args.data).stem
    header, arr = _read_fit_csv(data)
    if model not in ("ramsey", "cavity_ramsey"):
        raise ConfigError(f"unknown fit model {model!r}")
    try:
        if model == "cavity_ramsey":
            if header != ["t_s", "alpha", "y"]:
                raise ConfigError(f"{data}: cavity_ramsey needs columns t_s,alpha,y")
            res = analysis.fit_oscillation(arr[:, 0], arr[:, 2], model, alpha=arr[:, 1])
        else:
            res = analysis.fit_oscillation(arr[:, 0], arr[:, -1], model)
    except ValueError as exc:
        raise ConfigError(f"{data}: {exc}") from exc
    out = output_dir(args, name)
    report = res.report()
    if "omega" in res.params:
        report += f"frequency_hz = {float(res.params['omega'] / TWO_PI)!r}\n"
    if "kerr" in res.params:
        report += f"kerr_hz = {float(res.params['kerr'] / TWO_PI)!r}\n"
    path = out / "fit_report.txt"
    path.write_text(report)
    if args.strict and (not res.converged or res.degenerate):
        raise CommandError("fit did not converge", EXIT_CONVERGENCE)
    return path


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockade-lab", description="Photon blockade laboratory")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario file (INI)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for parallel inner loops")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--strict", action="store_true", help="non-convergence is an error (exit 4)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="master-equation simulation")
    p = sub.add_parser("grape", parents=[common], help="optimal-control pulse synthesis")
    p.add_argument("--steps", type=int, default=None, help="override the number of time steps")
    p = sub.add_parser("tomo", parents=[common], help="Wigner tomography pipeline")
    p.add_argument("action", choices=["design", "simulate", "reconstruct"])
    p = sub.add_parser("fit", parents=[common], help="fit calibration data")
    p.add_argument("--model", choices=["ramsey", "cavity_ramsey"], default=None)
    p.add_argument("--data", default=None, help="CSV with columns t_s,y or t_s,alpha,y")
    return parser


COMMANDS = {"simulate": cmd_simulate, "grape": cmd_grape, "tomo": cmd_tomo, "fit": cmd_fit}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command != "fit" and not args.scenario:
        print(f"error: {args.command} needs --scenario FILE", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
