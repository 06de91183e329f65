"""End-to-end experiment runner: evolve, extrapolate, verify, persist.

All artifacts (CSV data, SVG plots, JSON report) are deterministic for a
given configuration: no timestamps, sorted keys, 17-significant-digit
floats.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ExperimentSpec, dump_config, parse_expectations
from .errors import InsufficientDataError, ShockformError
from .models import HyperbolicSystem
from .similarity import (
    SimilarityPrediction,
    compute_c,
    fit_K,
    predict_first_derivative,
    rescale_and_collapse,
    solve_F,
)
from .singularity import ShockTrack, SingularityEstimate, analyze_track, detect_shocks
from .solver import Controls, Grid, RunResult, evolve
from .svgfig import Figure
from .synthetic import synthetic_snapshots, synthetic_track

__all__ = ["run_experiment", "verify_report", "write_synthetic_dataset"]


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    rows = len(columns[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in range(rows):
            fh.write(",".join(_fmt(float(col[r])) for col in columns) + "\n")


def write_monitor_csv(path: Path, result: RunResult, field_names):
    header = ["t"]
    cols = [result.times]
    for i, name in enumerate(field_names):
        header += [f"max_d1_{name}", f"argmax_x_{name}",
                   f"f_at_argmax_{name}", f"max_d2_{name}"]
        cols += [result.max_d1[:, i], result.argmax_x[:, i],
                 result.f_at_argmax[:, i], result.max_d2[:, i]]
    _write_csv(path, header, cols)


def write_peaks_csv(path: Path, result: RunResult):
    steps, comps, npk = result.peak_x.shape
    rows = []
    for s in range(steps):
        for i in range(comps):
            for p in range(npk):
                if np.isfinite(result.peak_x[s, i, p]):
                    rows.append(
                        (result.times[s], i, p, result.peak_x[s, i, p],
                         result.peak_d1[s, i, p], result.peak_f[s, i, p],
                         result.peak_d2[s, i, p], float(result.resolved[s]))
                    )
    arr = np.array(rows) if rows else np.zeros((0, 8))
    _write_csv(
        path,
        ["t", "component", "peak", "x", "d1", "f_value", "d2", "resolved"],
        [arr[:, j] for j in range(8)],
    )


def write_snapshot_csv(path: Path, snapshot, field_names):
    header = ["x"] + list(field_names)
    cols = [snapshot.grid.positions] + [snapshot.fields[i]
                                        for i in range(len(field_names))]
    _write_csv(path, header, cols)


def write_collapse_csv(path: Path, collapse, field_names, K: float):
    header = ["tau", "xi", "F_predicted"]
    taus, xis, preds = [], [], []
    for s, tau in enumerate(collapse.taus):
        xi = collapse.xi[s]
        taus.append(np.full(len(xi), tau))
        xis.append(xi)
        preds.append(solve_F(xi, K))
    cols = [np.concatenate(taus), np.concatenate(xis), np.concatenate(preds)]
    for i in range(len(field_names)):
        header.append(f"F_{field_names[i]}")
        cols.append(np.concatenate([collapse.F[s][i]
                                    for s in range(len(collapse.taus))]))
    _write_csv(path, header, cols)


def _loglog_plot(path, title, ylabel, field_names, comps, times, series,
                 t_star, prefactors, exponent):
    fig = Figure(title=title, xlabel="t* - t", ylabel=ylabel, xlog=True, ylog=True)
    for pos, i in enumerate(comps):
        tau = t_star - times[pos]
        ok = (tau > 0) & (series[pos] > 0)
        fig.add_line(tau[ok], series[pos][ok], label=f"run: {field_names[i]}")
        fig.add_line(
            tau[ok], prefactors[pos] * tau[ok] ** exponent,
            label=f"predicted: {field_names[i]}", dashed=True,
        )
    path.write_text(fig.render(), encoding="utf-8", newline="\n")


def _collapse_plot(path, collapse, field_names, K):
    fig = Figure(
        title=f"profile collapse (K = {K:.4g})",
        xlabel="xi", ylabel="F", xlog=False, ylog=False,
    )
    for s, tau in enumerate(collapse.taus):
        for i in collapse.components:
            fig.add_points(
                collapse.xi[s], collapse.F[s][i],
                label=f"{field_names[i]}, tau = {tau:.3g}",
            )
    xi_grid = np.linspace(collapse.xi[0].min(), collapse.xi[0].max(), 400)
    fig.add_line(xi_grid, solve_F(xi_grid, K), label="-xi = F + K F^3",
                 color="#e08214", dashed=True)
    path.write_text(fig.render(), encoding="utf-8", newline="\n")


def _collapse_snapshot_pick(result: RunResult, estimate, count: int):
    """Snapshots log-spaced over the last resolved decade of t* - t."""
    tau_lo, tau_hi = estimate.diagnostics["tau_window"]
    usable = [
        s for s in result.snapshots
        if 0.0 < estimate.t_star - s.time and result.resolved.size
    ]
    resolved_times = set(np.round(result.times[result.resolved], 15))
    usable = [s for s in usable
              if np.round(s.time, 15) in resolved_times
              and tau_lo <= estimate.t_star - s.time <= tau_hi * 1.5]
    if len(usable) <= count:
        return usable
    targets = np.geomspace(max(tau_lo, 1e-300), tau_hi, count)
    taus = np.array([estimate.t_star - s.time for s in usable])
    picked = []
    for target in targets:
        idx = int(np.argmin(np.abs(np.log(taus / target))))
        if usable[idx] not in picked:
            picked.append(usable[idx])
    picked.sort(key=lambda s: s.time)
    return picked


def _track_arrays(track: ShockTrack, estimate: SingularityEstimate):
    """Windowed per-component series (times, d1, d2) for the law fits."""
    t_lo, t_hi = estimate.diagnostics["window"]
    times, d1, d2 = [], [], []
    for i in range(track.num_components):
        t = track.times[i]
        mask = (t >= t_lo) & (t <= t_hi) & track.resolved[i]
        times.append(t[mask])
        d1.append(track.d1[i][mask])
        d2.append(track.d2[i][mask])
    return times, d1, d2


def analyze_run(
    system: HyperbolicSystem,
    result: RunResult,
    spec: ExperimentSpec,
):
    """Shock estimates plus similarity scoring for every detected shock."""
    tracks = detect_shocks(result, min_samples=spec.min_fit_points)
    analyses = []
    for track in tracks:
        estimate = analyze_track(
            system, result, track,
            fit_decades=spec.fit_decades, min_points=spec.min_fit_points,
        )
        c = compute_c(system.tensor(estimate.f_star), estimate.e, estimate.e_left)
        times, d1, d2 = _track_arrays(track, estimate)
        k_fit = fit_K(times, d2, estimate, c, min_points=spec.min_fit_points)
        first = predict_first_derivative(times, d1, estimate, c)
        snaps = _collapse_snapshot_pick(result, estimate, spec.collapse_snapshots)
        collapse = None
        if snaps:
            try:
                collapse = rescale_and_collapse(
                    snaps, estimate, c, k_fit.K, xi_max=spec.xi_max
                )
            except InsufficientDataError:
                collapse = None
        prediction = SimilarityPrediction.build(estimate, c, k_fit, first)
        loglog_d2 = k_fit.unconstrained_slope
        analyses.append(
            {
                "track": track,
                "estimate": estimate,
                "prediction": prediction,
                "collapse": collapse,
                "window_series": (times, d1, d2),
                "loglog_d1": first.loglog_slope,
                "loglog_d2": loglog_d2,
            }
        )
    analyses.sort(key=lambda a: a["estimate"].x_star)
    return analyses


def _estimate_json(analysis, field_names):
    est: SingularityEstimate = analysis["estimate"]
    pred: SimilarityPrediction = analysis["prediction"]
    collapse = analysis["collapse"]
    first = pred.first_deriv
    out = {
        "t_star": est.t_star,
        "x_star": est.x_star,
        "f_star": [float(v) for v in est.f_star],
        "lambda": est.lam,
        "family": est.family,
        "e": [float(v) for v in est.e],
        "e_left": [float(v) for v in est.e_left],
        "diagnostics": est.diagnostics,
        "similarity": {
            "c": pred.c,
            "K": pred.K,
            "K_by_component": [float(v) for v in pred.k_fit.K_by_component],
            "K_slope_unconstrained": [float(v)
                                      for v in pred.k_fit.unconstrained_slope],
            "K_slope_warning": pred.k_fit.slope_warning,
            "first_deriv_prefactors": [float(v)
                                       for v in pred.first_deriv_prefactors],
            "second_deriv_prefactors": [float(v)
                                        for v in pred.second_deriv_prefactors],
            "first_deriv_median_ratio": [float(v) for v in first.median_ratio],
            "first_deriv_ratio_spread": [float(v) for v in first.ratio_spread],
            "loglog_slope_d1": [float(v) for v in analysis["loglog_d1"]],
            "loglog_slope_d2": [float(v) for v in analysis["loglog_d2"]],
            "fitted_components": [field_names[i] for i in first.components],
        },
    }
    if collapse is not None:
        out["similarity"]["collapse_error"] = collapse.collapse_error
        out["similarity"]["collapse_taus"] = [float(v) for v in collapse.taus]
        out["similarity"]["collapse_rms_by_snapshot"] = [
            float(np.nanmax(collapse.rms_rel[s]))
            for s in range(len(collapse.taus))
        ]
    return out


def run_experiment(spec: ExperimentSpec, out_dir: str | Path) -> dict:
    """Run the full pipeline and persist every artifact under ``out_dir``.

    Returns the report dictionary (also written as report.json).  Stage
    errors are recorded in the report rather than raised; the CLI maps
    them to exit codes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "snapshots").mkdir(exist_ok=True)
    (out / "plots").mkdir(exist_ok=True)

    system = spec.build_system()
    field_names = list(system.field_names)
    report = {
        "config": {k: dict(v) for k, v in sorted(spec.raw.items())},
        "model": {"name": system.name, "field_names": field_names,
                  "dimension": system.dimension},
        "grid": {"num_points": spec.num_points,
                 "domain_length": spec.domain_length},
        "errors": [],
        "shocks": [],
        "checks": [],
        "files": [],
    }
    files = ["config.txt", "report.json"]
    (out / "config.txt").write_text(dump_config(spec.raw), encoding="utf-8",
                                    newline="\n")

    grid = Grid(spec.num_points, spec.domain_length)
    controls = Controls(
        cfl_number=spec.cfl_number,
        blowup_threshold=spec.blowup_threshold,
        dt_floor=spec.dt_floor,
        max_time=spec.max_time,
        growth_limit=spec.growth_limit,
        snapshot_growth=spec.snapshot_growth,
        tail_tol=spec.tail_tol,
    )

    result = None
    try:
        initial = spec.build_initial_fields(system)
        result = evolve(system, initial, grid, controls)
    except ShockformError as exc:
        report["errors"].append({"stage": "evolve", "error": str(exc)})
    except FloatingPointError as exc:
        report["errors"].append({"stage": "evolve", "error": str(exc)})

    analyses = []
    if result is not None:
        report["run"] = {
            "stop_reason": result.stop_reason.value,
            "stop_time": result.stop_time,
            "steps_accepted": result.steps_accepted,
            "steps_rejected": result.steps_rejected,
            "resolved_until": result.resolved_until(),
            "final_max_d1": [float(v) for v in result.max_d1[-1]],
        }
        write_monitor_csv(out / "monitors.csv", result, field_names)
        write_peaks_csv(out / "peaks.csv", result)
        files += ["monitors.csv", "peaks.csv"]
        snap_files = []
        for k, snap in enumerate(result.snapshots):
            name = f"snapshots/snapshot_{k:04d}.csv"
            write_snapshot_csv(out / name, snap, field_names)
            snap_files.append({"file": name, "t": snap.time})
            files.append(name)
        report["snapshots"] = snap_files

        if result.stop_reason.value == "derivative_threshold":
            try:
                analyses = analyze_run(system, result, spec)
            except ShockformError as exc:
                report["errors"].append({"stage": "analysis", "error": str(exc)})
        else:
            report["note"] = (
                "no shock detected: run stopped by "
                f"{result.stop_reason.value} before the derivative threshold"
            )

    for j, analysis in enumerate(analyses):
        entry = _estimate_json(analysis, field_names)
        sources = {"monitors": "monitors.csv", "peaks": "peaks.csv"}
        est = analysis["estimate"]
        pred = analysis["prediction"]
        times, d1, d2 = analysis["window_series"]
        comps = [i for i in range(len(field_names)) if len(times[i])]

        name = f"first_deriv_shock{j}.svg"
        _loglog_plot(
            out / "plots" / name,
            f"max |d f/dx| near x* = {est.x_star:.4f}",
            "max |df_i/dx|", field_names, comps,
            [times[i] for i in comps], [d1[i] for i in comps],
            est.t_star, [pred.first_deriv_prefactors[i] for i in comps], -1.0,
        )
        files.append(f"plots/{name}")
        sources["first_deriv_plot"] = f"plots/{name}"

        name = f"second_deriv_shock{j}.svg"
        _loglog_plot(
            out / "plots" / name,
            f"max |d2 f/dx2| near x* = {est.x_star:.4f}",
            "max |d2f_i/dx2|", field_names, comps,
            [times[i] for i in comps], [d2[i] for i in comps],
            est.t_star, [pred.second_deriv_prefactors[i] for i in comps], -2.5,
        )
        files.append(f"plots/{name}")
        sources["second_deriv_plot"] = f"plots/{name}"

        collapse = analysis["collapse"]
        if collapse is not None:
            cname = f"collapse_shock{j}.csv"
            collapse.F_pred = [solve_F(collapse.xi[s], pred.K)
                               for s in range(len(collapse.taus))]
            write_collapse_csv(out / cname, collapse, field_names)
            files.append(cname)
            sources["collapse"] = cname
            pname = f"collapse_shock{j}.svg"
            _collapse_plot(out / "plots" / pname, collapse, field_names, pred.K)
            files.append(f"plots/{pname}")
            sources["collapse_plot"] = f"plots/{pname}"
        entry["sources"] = sources
        report["shocks"].append(entry)

    report["files"] = sorted(files)
    report_text = json.dumps(report, sort_keys=True, indent=1)
    (out / "report.json").write_text(report_text, encoding="utf-8", newline="\n")
    return report


def _lookup(report: dict, path: str):
    node = report
    for part in path.split("."):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError) as exc:
                raise KeyError(path) from exc
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise KeyError(path)
    return node


def verify_report(report: dict, expectations: dict[str, tuple[float, float]]):
    """Compare report values against (value, tolerance) expectations.

    Returns (checks, all_passed); a missing report path is a config
    error, not a failed check.
    """
    checks = []
    ok = True
    for key in sorted(expectations):
        expected, tol = expectations[key]
        try:
            measured = float(_lookup(report, key))
        except KeyError:
            raise
        passed = abs(measured - expected) <= tol
        ok = ok and passed
        checks.append(
            {
                "name": key,
                "expected": expected,
                "tolerance": tol,
                "measured": measured,
                "deviation": measured - expected,
                "passed": bool(passed),
            }
        )
    return checks, ok


def write_synthetic_dataset(spec_raw: dict, out_dir: str | Path) -> dict:
    """The `synth` verb: exact-law monitor series and snapshots on disk."""
    synth = spec_raw.get("synth", {})

    def fval(key, default):
        return float(synth.get(key, default))

    e = np.array([float(v) for v in synth.get("e", "1").split()])
    f_star = np.array([float(v) for v in synth.get("f_star", "0").split()])
    if len(f_star) != len(e):
        raise ShockformError("synth e and f_star must have equal length")
    t_star = fval("t_star", 0.2)
    x_star = fval("x_star", 0.5)
    lam = fval("lambda", 0.0)
    c = fval("c", 1.0)
    K = fval("k", 0.2)
    tau_min = fval("tau_min", 1e-4)
    tau_max = fval("tau_max", 1e-1)
    samples = int(synth.get("samples", 200))
    noise = fval("noise", 0.0)
    seed = int(synth.get("seed", 0))
    grid_cfg = spec_raw.get("grid", {})
    num_points = int(grid_cfg.get("num_points", 1024))
    domain_length = float(grid_cfg.get("domain_length", 1.0))

    taus = np.geomspace(tau_max, tau_min, samples)
    rng = np.random.default_rng(seed)
    track = synthetic_track(
        t_star, x_star, lam, f_star, e, c, K, taus,
        domain_length=domain_length, noise=noise, rng=rng,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"f{i}" for i in range(len(e))]
    header = ["t"]
    cols = [track.times[0]]
    for i, nm in enumerate(names):
        header += [f"max_d1_{nm}", f"argmax_x_{nm}", f"f_at_argmax_{nm}",
                   f"max_d2_{nm}"]
        cols += [track.d1[i], np.mod(track.x[i], domain_length), track.f[i],
                 track.d2[i]]
    _write_csv(out / "monitors.csv", header, cols)

    grid = Grid(num_points, domain_length)
    snap_taus = np.geomspace(tau_max, tau_min, 3)
    snaps = synthetic_snapshots(grid, t_star, x_star, lam, f_star, e, c, K,
                                snap_taus)
    (out / "snapshots").mkdir(exist_ok=True)
    manifest = {"monitors": "monitors.csv", "snapshots": [],
                "parameters": {"t_star": t_star, "x_star": x_star,
                               "lambda": lam, "c": c, "k": K,
                               "e": e.tolist(), "f_star": f_star.tolist(),
                               "noise": noise, "seed": seed}}
    for kk, snap in enumerate(snaps):
        name = f"snapshots/snapshot_{kk:04d}.csv"
        write_snapshot_csv(out / name, snap, names)
        manifest["snapshots"].append({"file": name, "t": snap.time})
    (out / "synth.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8",
        newline="\n",
    )
    return manifest
