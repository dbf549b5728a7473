"""Preset experiments, their output files and the JSON manifest that indexes them.

Every random stream is derived from the master seed by
:func:`realization_seed`; realization ``r`` uses the same stream at every
sweep point, so sweeps compare like with like.
"""

from __future__ import annotations

import functools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    HusimiAverager,
    fidelity_time,
    fit_fidelity_decay,
    low_density_region,
    mass_near,
    median_with_error,
    quantum_second_moment,
    scaling_exponent,
)
from .circuit import build_map_circuit, nominal_count
from .classical import (
    EnsembleConfig,
    classical_phase_density,
    evolve_ensemble,
    fit_diffusion_coefficient,
    fit_power_law,
    random_phase_diffusion,
    slow_diffusion,
)
from .config import RunConfig, emit
from .hardware import NONE, ErrorMode, ImperfectEngine, run_imperfect_evolution
from .io import OutputError, ensure_dir, write_csv, write_husimi, write_json, write_matrix, write_moments_csv, write_pgm
from .lattice import LatticeLayout, route, routing_breakdown
from .state import ExactPropagator, SawtoothParams, init_momentum_eigenstate

FIDELITY_TOL = 1e-12
NORM_TOL = 1e-9
ORACLE_TOL = 1e-9

# (n_q, epsilon) anchors of the epsilon ~ n_q**-3 rule for phase-space panels
HUSIMI_ANCHORS = ((6, 2e-3), (9, 6e-4), (16, 1e-4))


class InvariantViolation(RuntimeError):
    """A computed quantity broke a property every correct run satisfies."""


class ManifestError(ValueError):
    """A manifest is empty or lacks entries needed for plot data."""


def realization_seed(master: int, realization: int) -> np.random.SeedSequence:
    """Independent stream for realization ``r``: ``SeedSequence(master, spawn_key=(r,))``."""
    return np.random.SeedSequence(master, spawn_key=(realization,))


def husimi_epsilon(n_q: int) -> float:
    """``C / n_q**3`` with ``C`` the geometric mean over the anchors; anchors map to themselves."""
    for q, eps in HUSIMI_ANCHORS:
        if q == n_q:
            return eps
    logs = [math.log(eps * q**3) for q, eps in HUSIMI_ANCHORS]
    return math.exp(sum(logs) / len(logs)) / n_q**3


@functools.lru_cache(maxsize=32)
def routed_circuit(n_q: int, K: float, n0: int | None):
    params = SawtoothParams(n_q, K, n0)
    layout = LatticeLayout.for_qubits(n_q)
    return params, layout, route(build_map_circuit(params), layout)


def _check_trace(trace, label: str) -> None:
    if abs(trace.f[0] - 1.0) > FIDELITY_TOL:
        raise InvariantViolation(f"{label}: f(0) = {trace.f[0]!r}, expected 1")
    if np.any(trace.f < 0) or np.any(trace.f > 1 + FIDELITY_TOL):
        raise InvariantViolation(f"{label}: fidelity left [0, 1]")


def _check_norm(result, label: str) -> None:
    for reg in (result.state, result.ideal):
        drift = abs(np.linalg.norm(reg.amplitudes) - 1.0)
        if drift > NORM_TOL:
            raise InvariantViolation(f"{label}: norm drift {drift:.3e} exceeds {NORM_TOL:g}")


def _pool_map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, tasks, chunksize=1))
    return [fn(t) for t in tasks]


def _mode_dict(mode: ErrorMode) -> dict:
    return {
        "kind": mode.kind,
        "epsilon": mode.epsilon,
        "tau_g": mode.tau_g,
        "coupling": mode.coupling,
        "all_qubits": mode.all_qubits,
    }


# -- presets ------------------------------------------------------------------


def _oracle_check(cfg: RunConfig, out: Path, jobs: int) -> dict:
    qubits = cfg.qubits or (cfg.n_q,)
    rows = []
    derived = {}
    for n_q in qubits:
        params, layout, circuit = routed_circuit(n_q, cfg.K, cfg.n0 if n_q == cfg.n_q else None)
        engine = ImperfectEngine(params, circuit, ErrorMode(), layout=layout)
        psi = init_momentum_eigenstate(params).amplitudes
        ideal = psi.copy()
        exact = ExactPropagator(params)
        worst = 0.0
        rows.append((n_q, 0, 0.0))
        for t in range(1, cfg.t_max + 1):
            engine.period(psi)
            ideal = exact.step(ideal)
            infid = 1.0 - abs(np.vdot(psi, ideal)) ** 2
            worst = max(worst, infid)
            rows.append((n_q, t, infid))
        derived[str(n_q)] = {
            "max_infidelity": worst,
            "routed_gates": circuit.gate_count,
            "nominal_gates": nominal_count(build_map_circuit(params)),
            "routing": routing_breakdown(circuit),
            "lattice": [layout.rows, layout.cols],
        }
    write_csv(out / "oracle.csv", ("n_q", "t", "infidelity"), rows)
    manifest = {"outputs": {"infidelity": "oracle.csv"}, "derived": derived}
    bad = {q: d["max_infidelity"] for q, d in derived.items() if d["max_infidelity"] >= ORACLE_TOL}
    if bad:
        manifest["violation"] = f"infidelity vs exact engine >= {ORACLE_TOL:g}: {bad}"
    return manifest


def _husimi_task(task):
    n_q, K, n0, mode, t_max, grid, window, seed = task
    params, layout, circuit = routed_circuit(n_q, K, n0)
    pert = HusimiAverager(n_q, grid, window, which="perturbed")
    ideal = HusimiAverager(n_q, grid, window, which="ideal")
    moments = []

    def second_moment(t, reg_eps, reg_ideal):
        if window[0] <= t <= window[1]:
            moments.append(
                (
                    quantum_second_moment(reg_ideal, params.p0, torus=True),
                    quantum_second_moment(reg_eps, params.p0, torus=True),
                )
            )

    res = run_imperfect_evolution(
        params, circuit, mode, t_max, seed, observers=(pert, ideal, second_moment), layout=layout
    )
    return params, circuit.gate_count, res, pert.result(), ideal.result(), np.mean(moments, axis=0)


def _husimi_panel(cfg: RunConfig, out: Path, jobs: int) -> dict:
    qubits = cfg.qubits or (cfg.n_q,)
    if cfg.epsilons and len(cfg.epsilons) != len(qubits):
        raise ValueError("husimi-panel needs one epsilon per entry of qubits (or none for the n_q**-3 rule)")
    eps = cfg.epsilons or tuple(husimi_epsilon(q) for q in qubits)
    t_max = max(cfg.t_max, cfg.window_stop)
    grid = (cfg.grid_theta, cfg.grid_p)
    window = (cfg.window_start, cfg.window_stop)
    tasks = [
        (q, cfg.K, cfg.n0 if q == cfg.n_q else None, cfg.error_mode(e), t_max, grid, window, realization_seed(cfg.seed, 0))
        for q, e in zip(qubits, eps)
    ]
    outputs, derived = {}, {}
    for (q, *_), e, (params, n_g, res, pert, ideal, m2) in zip(tasks, eps, _pool_map(_husimi_task, tasks, jobs)):
        _check_trace(res.trace, f"husimi n_q={q}")
        _check_norm(res, f"husimi n_q={q}")
        for g in (pert, ideal):
            total = g.probabilities().sum()
            if np.any(g.values < 0) or abs(total - 1) > 1e-6:
                raise InvariantViolation(f"Husimi grid n_q={q} not normalised (sum {total})")
        files = {
            "perturbed": write_husimi(out / f"husimi_nq{q}_eps", pert),
            "ideal": write_husimi(out / f"husimi_nq{q}_ideal", ideal),
        }
        ensemble = EnsembleConfig(cfg.trajectories, params.p0, cfg.K, t_max, seed=cfg.seed)
        density = classical_phase_density(ensemble, grid, window)
        write_matrix(out / f"classical_nq{q}.txt", density)
        cell = (2 * math.pi) ** 2 / (grid[0] * grid[1])
        write_pgm(out / f"classical_nq{q}.pgm", density / cell, {"window": list(window), "trajectories": cfg.trajectories})
        files["classical"] = {"matrix": f"classical_nq{q}.txt", "graymap": f"classical_nq{q}.pgm"}
        empty = low_density_region(ideal.values)
        p_ideal = ideal.probabilities()[empty].sum()
        p_pert = pert.probabilities()[empty].sum()
        outputs[str(q)] = files
        derived[str(q)] = {
            "epsilon": e,
            "routed_gates": n_g,
            "p0": params.p0,
            "final_fidelity": float(res.trace.f[-1]),
            "mass_near_p0_ideal": mass_near(ideal, params.p0),
            "mass_near_p0_perturbed": mass_near(pert, params.p0),
            "second_moment_ideal": float(m2[0]),
            "second_moment_perturbed": float(m2[1]),
            "low_density_mass_ideal": float(p_ideal),
            "low_density_mass_perturbed": float(p_pert),
            "injection_ratio": float(p_pert / p_ideal) if p_ideal > 0 else math.inf,
        }
    return {"outputs": outputs, "derived": derived}


def _trace_task(task):
    n_q, K, n0, mode, t_max, seed, stop_below = task
    params, layout, circuit = routed_circuit(n_q, K, n0)
    res = run_imperfect_evolution(params, circuit, mode, t_max, seed, layout=layout, stop_below=stop_below)
    _check_trace(res.trace, f"n_q={n_q} {mode.label} eps={mode.epsilon:g}")
    _check_norm(res, f"n_q={n_q} {mode.label} eps={mode.epsilon:g}")
    return res.trace, circuit.gate_count


def _fidelity_trace(cfg: RunConfig, out: Path, jobs: int) -> dict:
    epsilons = cfg.epsilons or (cfg.epsilon,)
    couplings = cfg.couplings or (cfg.coupling,)
    if cfg.mode != "static":
        couplings = (0.0,)
    curves = [(c, e, r) for c in couplings for e in epsilons for r in range(cfg.realizations)]
    tasks = [
        (cfg.n_q, cfg.K, cfg.n0, cfg.error_mode(e, c), cfg.t_max, realization_seed(cfg.seed, r), None)
        for c, e, r in curves
    ]
    results = _pool_map(_trace_task, tasks, jobs)
    rows = []
    summary = []
    for (c, e, r), (trace, n_g) in zip(curves, results):
        rows.extend((c, e, r, t, f) for t, f in zip(trace.t.tolist(), trace.f.tolist()))
        entry = {"coupling": c, "epsilon": e, "realization": r, "t_f": fidelity_time(trace, cfg.threshold)}
        try:
            fit = fit_fidelity_decay(trace, (cfg.fit_low, cfg.fit_high))
            entry.update(model=fit.model, rate=fit.rate, fit_points=fit.points)
        except ValueError as exc:
            entry.update(model=None, fit_error=str(exc))
        summary.append(entry)
    write_csv(out / "fidelity.csv", ("coupling", "epsilon", "realization", "t", "f"), rows)
    write_csv(
        out / "fidelity_times.csv",
        ("coupling", "epsilon", "realization", "t_f"),
        ((s["coupling"], s["epsilon"], s["realization"], s["t_f"]) for s in summary),
    )
    return {
        "outputs": {"traces": "fidelity.csv", "fidelity_times": "fidelity_times.csv"},
        "derived": {"routed_gates": results[0][1], "curves": summary, "mode": cfg.mode},
    }


def _tf_scaling(cfg: RunConfig, out: Path, jobs: int) -> dict:
    sweep_qubits = len(cfg.qubits) > 1
    if sweep_qubits:
        points = [(q, cfg.epsilon) for q in cfg.qubits]
    else:
        n_q = cfg.qubits[0] if cfg.qubits else cfg.n_q
        points = [(n_q, e) for e in (cfg.epsilons or (cfg.epsilon,))]
    if len(points) < 3:
        raise ValueError("tf-scaling needs at least 3 sweep points")
    tasks = []
    for q, e in points:
        for r in range(cfg.realizations):
            tasks.append(
                (q, cfg.K, cfg.n0 if q == cfg.n_q else None, cfg.error_mode(e), cfg.t_max, realization_seed(cfg.seed, r), cfg.threshold)
            )
    results = _pool_map(_trace_task, tasks, jobs)
    rows, table = [], []
    it = iter(results)
    for q, e in points:
        tfs = [fidelity_time(next(it)[0], cfg.threshold) for _ in range(cfg.realizations)]
        rows.extend((q, e, r, tf) for r, tf in enumerate(tfs))
        med, err = median_with_error(tfs)
        table.append({"n_q": q, "epsilon": e, "median_t_f": med, "stderr": err, "censored": sum(map(math.isinf, tfs))})
    write_csv(out / "tf_realizations.csv", ("n_q", "epsilon", "realization", "t_f"), rows)
    write_csv(
        out / "tf_scaling.csv",
        ("n_q", "epsilon", "median_t_f", "stderr"),
        ((t["n_q"], t["epsilon"], t["median_t_f"], t["stderr"]) for t in table),
    )
    x = [t["n_q"] if sweep_qubits else t["epsilon"] for t in table]
    y = [t["median_t_f"] for t in table]
    derived = {"variable": "n_q" if sweep_qubits else "epsilon", "points": table}
    try:
        slope, stderr = scaling_exponent(x, y)
        derived.update(slope=slope, slope_stderr=stderr)
    except ValueError as exc:
        derived.update(slope=None, slope_error=str(exc))
    return {"outputs": {"realizations": "tf_realizations.csv", "scaling": "tf_scaling.csv"}, "derived": derived}


def _classical_diffusion(cfg: RunConfig, out: Path, jobs: int) -> dict:
    ens = EnsembleConfig(cfg.trajectories, cfg.p0, cfg.classical_K, cfg.t_max, cfg.noise_amplitude, cfg.seed)
    moments = evolve_ensemble(ens, jobs=jobs)
    write_moments_csv(out / "moments.csv", moments)
    lo, hi = cfg.fit_t_min, min(cfg.fit_t_max, cfg.t_max)
    alpha, pref = fit_power_law(moments, lo, hi)
    derived = {
        "K": cfg.classical_K,
        "p0": cfg.p0,
        "alpha": alpha,
        "prefactor": pref,
        "fit_window": [lo, hi],
        "diffusion_coefficient": fit_diffusion_coefficient(moments, lo, hi),
    }
    # sensitivity of alpha to the lower window edge
    derived["alpha_by_window"] = {
        str(t0): fit_power_law(moments, t0, hi)[0] for t0 in (1, 10, 100) if t0 < hi and (hi - t0) >= 3
    }
    if cfg.classical_K > 1:
        derived["reference_D"] = random_phase_diffusion(cfg.classical_K)
    elif 0 < cfg.classical_K < 1:
        derived["reference_D"] = slow_diffusion(cfg.classical_K)
    return {"outputs": {"moments": "moments.csv"}, "derived": derived}


PRESET_RUNNERS = {
    "oracle-check": _oracle_check,
    "husimi-panel": _husimi_panel,
    "fidelity-trace": _fidelity_trace,
    "tf-scaling": _tf_scaling,
    "classical-diffusion": _classical_diffusion,
}


def run_experiment(cfg: RunConfig, out_dir=None, jobs: int = 1) -> dict:
    """Run ``cfg.experiment``, write its outputs, ``config.txt`` and ``manifest.json``.

    Raises :class:`InvariantViolation` after writing the manifest when a
    checked invariant fails.
    """
    out = ensure_dir(out_dir if out_dir is not None else cfg.out_dir)
    try:
        (out / "config.txt").write_text(emit(cfg), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {out / 'config.txt'}: {exc}") from exc
    body = PRESET_RUNNERS[cfg.experiment](cfg, out, max(1, int(jobs)))
    manifest = {
        "preset": cfg.experiment,
        "version": __version__,
        "seed": cfg.seed,
        "seed_rule": "SeedSequence(seed, spawn_key=(realization,))",
        "config": "config.txt",
        "params": {"n_q": cfg.n_q, "K": cfg.K, "n0": cfg.params().n0},
        "mode": _mode_dict(cfg.error_mode()) if cfg.mode != NONE else {"kind": NONE},
        **body,
    }
    write_json(out / "manifest.json", manifest)
    if "violation" in manifest:
        raise InvariantViolation(manifest["violation"])
    return manifest


# -- plot data ----------------------------------------------------------------


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return manifest, path.parent


def _need(d: dict, *keys):
    for k in keys:
        if not isinstance(d, dict) or k not in d:
            raise ManifestError(f"manifest lacks entry {k!r}")
        d = d[k]
    return d


def _read_rows(path: Path) -> list[list[str]]:
    if not path.exists():
        raise ManifestError(f"manifest refers to missing file {path.name}")
    lines = path.read_text(encoding="utf-8").splitlines()
    return [line.split(",") for line in lines[1:]]


def _plots_oracle(m, base):
    rows = _read_rows(base / _need(m, "outputs", "infidelity"))
    blocks = {}
    for n_q, t, v in rows:
        blocks.setdefault(n_q, []).append(f"{t} {v}")
    data = "\n\n\n".join(f"# n_q = {q}\n" + "\n".join(lines) for q, lines in blocks.items()) + "\n"
    script = (
        "set xlabel 't'\nset ylabel '1 - f'\nset logscale y\n"
        + "plot "
        + ", ".join(f"'oracle.dat' index {i} with lines title 'n_q={q}'" for i, q in enumerate(blocks))
        + "\n"
    )
    return {"oracle.dat": data, "oracle.gp": script}


def _plots_fidelity(m, base):
    rows = _read_rows(base / _need(m, "outputs", "traces"))
    blocks = {}
    for c, e, r, t, f in rows:
        blocks.setdefault((c, e, r), []).append(f"{t} {f}")
    data = "\n\n\n".join(f"# coupling={c} epsilon={e} realization={r}\n" + "\n".join(v) for (c, e, r), v in blocks.items())
    script = "set xlabel 't'\nset ylabel 'f'\nset yrange [0:1]\nplot " + ", ".join(
        f"'fidelity.dat' index {i} with lines title 'J/delta={c} eps={e}'" for i, (c, e, _) in enumerate(blocks)
    )
    return {"fidelity.dat": data + "\n", "fidelity.gp": script + "\n"}


def _plots_tf(m, base):
    rows = _read_rows(base / _need(m, "outputs", "scaling"))
    variable = _need(m, "derived", "variable")
    col = 0 if variable == "n_q" else 1
    pts = [(float(r[col]), float(r[2]), r[3]) for r in rows if math.isfinite(float(r[2]))]
    if not pts:
        raise ManifestError("no finite fidelity times to plot")
    x0, y0, _ = pts[0]
    lines = [f"# {variable} median_t_f stderr slope-1 slope-2"]
    for x, y, err in pts:
        lines.append(f"{x!r} {y!r} {err} {y0 * (x / x0) ** -1!r} {y0 * (x / x0) ** -2!r}")
    script = (
        f"set logscale xy\nset xlabel '{variable}'\nset ylabel 't_f'\n"
        "plot 'tf_scaling.dat' using 1:2:3 with yerrorbars title 'median t_f', "
        "'' using 1:4 with lines title 'slope -1', '' using 1:5 with lines title 'slope -2'\n"
    )
    return {"tf_scaling.dat": "\n".join(lines) + "\n", "tf_scaling.gp": script}


def _plots_husimi(m, base):
    out = {}
    for q, files in _need(m, "outputs").items():
        for which, entry in files.items():
            matrix = base / _need(entry, "matrix")
            if not matrix.exists():
                raise ManifestError(f"manifest refers to missing file {matrix.name}")
            values = np.loadtxt(matrix, ndmin=2)
            n_theta, n_p = values.shape
            name = f"husimi_nq{q}_{which}"
            # rows are momenta (vertical axis), columns are angles
            out[f"{name}.dat"] = "\n".join(" ".join("%.17g" % v for v in row) for row in values.T) + "\n"
            out[f"{name}.gp"] = (
                "set xlabel 'theta'\nset ylabel 'p'\nset xrange [0:2*pi]\nset yrange [-pi:pi]\n"
                f"plot '{name}.dat' matrix using (2*pi*$1/{n_theta}):(-pi+2*pi*$2/{n_p}):3 with image notitle\n"
            )
    if not out:
        raise ManifestError("husimi manifest lists no grids")
    return out


def _plots_classical(m, base):
    rows = _read_rows(base / _need(m, "outputs", "moments"))
    alpha = _need(m, "derived", "alpha")
    pref = _need(m, "derived", "prefactor")
    data = "# t m2\n" + "\n".join(f"{t} {v}" for t, v in rows if int(t) > 0) + "\n"
    script = (
        "set logscale xy\nset xlabel 't'\nset ylabel '<(p - p0)^2>'\n"
        f"plot 'moments.dat' with lines title 'ensemble', {pref!r}*x**{alpha!r} title 'fit alpha={alpha:.3f}'\n"
    )
    return {"moments.dat": data, "moments.gp": script}


_PLOTTERS = {
    "oracle-check": _plots_oracle,
    "husimi-panel": _plots_husimi,
    "fidelity-trace": _plots_fidelity,
    "tf-scaling": _plots_tf,
    "classical-diffusion": _plots_classical,
}


def emit_plot_data(manifest, out_dir=None, base_dir=None) -> list[Path]:
    """Write gnuplot data files and script stubs for a manifest (dict or path).

    Everything is assembled before the first file is written, so a bad
    manifest leaves no partial output behind.
    """
    if isinstance(manifest, (str, Path)):
        manifest, base = load_manifest(manifest)
    else:
        base = Path(base_dir) if base_dir is not None else None
    if not manifest:
        raise ManifestError("empty manifest")
    preset = _need(manifest, "preset")
    if preset not in _PLOTTERS:
        raise ManifestError(f"unknown preset {preset!r} in manifest")
    if base is None:
        raise ManifestError("manifest given as a dict needs base_dir")
    files = _PLOTTERS[preset](manifest, base)
    target = Path(out_dir) if out_dir is not None else base / "plots"
    try:
        ensure_dir(target)
        written = []
        for name, text in files.items():
            p = target / name
            p.write_text(text, encoding="utf-8")
            written.append(p)
    except OSError as exc:
        raise OutputError(f"cannot write plot data to {target}: {exc}") from exc
    return written
