"""Extrapolation of singularity data (x*, t*, f*, wave family) from a run.

The monitors of a run diverge as the shock is approached; the similarity
structure makes their reciprocals and positions linear in t near t*, so
the singularity data can be read off by regression over the last
resolved portion of the series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenSystem, decompose
from .errors import AmbiguousFamilyError, InsufficientDataError
from .fitting import LineFit, line_fit
from .models import HyperbolicSystem
from .solver import RunResult

__all__ = [
    "ShockTrack",
    "TStarFit",
    "SingularityEstimate",
    "detect_shocks",
    "fit_t_star",
    "fit_x_star",
    "extrapolate_f_star",
    "identify_family",
    "analyze_track",
    "estimate_singularities",
]


@dataclass
class ShockTrack:
    """Per-component monitor samples attributed to one forming shock.

    Component arrays may have different lengths: a sample exists for a
    component at a given step only if that component had a local slope
    peak attached to this track there.  Positions are unwrapped around
    ``seed_x`` (minimal displacement), so they may leave [0, L).
    """

    seed_x: float
    domain_length: float
    times: list[np.ndarray]      # per component
    x: list[np.ndarray]          # per component, unwrapped
    d1: list[np.ndarray]         # per component, peak |df_i/dx|
    f: list[np.ndarray]          # per component, f_i at the peak
    d2: list[np.ndarray]         # per component, peak-local max |d2 f_i/dx2|
    resolved: list[np.ndarray]   # per component, bool

    @property
    def num_components(self) -> int:
        return len(self.times)

    def last_time(self) -> float:
        return max(float(t[-1]) for t in self.times if len(t))


def _circ_diff(a, b, length):
    """Signed minimal difference a - b on a circle of given length."""
    return (a - b + 0.5 * length) % length - 0.5 * length


def detect_shocks(
    result: RunResult,
    rel_strength: float = 0.5,
    min_samples: int = 8,
) -> list[ShockTrack]:
    """Cluster the recorded slope peaks into individual forming shocks.

    Seeds are the prominent peaks of the last resolved step; every peak
    sample is attached to the nearest seed within half the seed
    separation.  Tracks with fewer than ``min_samples`` resolved samples
    in every component are dropped, as are tracks whose peak slope never
    grew above twice its earliest sample (e.g. flattening rarefactions).
    """
    length = result.grid.domain_length
    num_steps, num_comp, _ = result.peak_x.shape
    resolved_idx = np.nonzero(result.resolved)[0]
    ref_step = int(resolved_idx[-1]) if len(resolved_idx) else num_steps - 1

    # Seed positions: strong peaks at the reference step, merged circularly.
    cand = []
    top = float(np.nanmax(result.peak_d1[ref_step])) if num_steps else 0.0
    for i in range(num_comp):
        for p in range(result.peak_x.shape[2]):
            xv, dv = result.peak_x[ref_step, i, p], result.peak_d1[ref_step, i, p]
            if np.isfinite(xv) and np.isfinite(dv) and dv >= rel_strength * top:
                cand.append((dv, xv))
    cand.sort(reverse=True)
    merge_eps = max(10 * result.grid.dx, 0.01 * length)
    seeds: list[float] = []
    for _, xv in cand:
        if all(abs(_circ_diff(xv, s, length)) > merge_eps for s in seeds):
            seeds.append(float(xv))
    if not seeds:
        return []

    if len(seeds) == 1:
        radius = 0.25 * length
    else:
        sep = min(
            abs(_circ_diff(a, b, length))
            for ai, a in enumerate(seeds)
            for b in seeds[ai + 1 :]
        )
        radius = 0.45 * sep

    tracks = []
    for seed in seeds:
        times = [[] for _ in range(num_comp)]
        xs = [[] for _ in range(num_comp)]
        d1s = [[] for _ in range(num_comp)]
        fs = [[] for _ in range(num_comp)]
        d2s = [[] for _ in range(num_comp)]
        res = [[] for _ in range(num_comp)]
        for s in range(num_steps):
            for i in range(num_comp):
                px = result.peak_x[s, i]
                ok = np.isfinite(px)
                if not np.any(ok):
                    continue
                offs = np.abs(_circ_diff(px[ok], seed, length))
                best = int(np.argmin(offs))
                if offs[best] > radius:
                    continue
                p = np.nonzero(ok)[0][best]
                times[i].append(result.times[s])
                xs[i].append(seed + _circ_diff(result.peak_x[s, i, p], seed, length))
                d1s[i].append(result.peak_d1[s, i, p])
                fs[i].append(result.peak_f[s, i, p])
                d2s[i].append(result.peak_d2[s, i, p])
                res[i].append(bool(result.resolved[s]))
        track = ShockTrack(
            seed_x=seed,
            domain_length=length,
            times=[np.array(v) for v in times],
            x=[np.array(v) for v in xs],
            d1=[np.array(v) for v in d1s],
            f=[np.array(v) for v in fs],
            d2=[np.array(v) for v in d2s],
            resolved=[np.array(v, dtype=bool) for v in res],
        )
        counts = [int(np.sum(r)) for r in track.resolved]
        if max(counts, default=0) < min_samples:
            continue
        growing = False
        for i in range(num_comp):
            d = track.d1[i][track.resolved[i]]
            if len(d) >= 2 and d[-1] > 2.0 * d[0]:
                growing = True
        if growing:
            tracks.append(track)
    return tracks


@dataclass
class TStarFit:
    """Blowup time from the reciprocal-slope regression."""

    t_star: float
    se: float
    t_star_by_component: np.ndarray
    se_by_component: np.ndarray
    slope_by_component: np.ndarray  # estimates c / |e_i|
    resid_rms_by_component: np.ndarray
    components: np.ndarray          # indices of the fitted components


def fit_t_star(
    times_by_component: list[np.ndarray],
    d1_by_component: list[np.ndarray],
    components: np.ndarray | None = None,
    min_points: int = 8,
) -> TStarFit:
    """Linear extrapolation of 1/max|df_i/dx| to zero.

    Each component series must be strictly increasing on its window; the
    per-component zero crossings are combined with inverse-variance
    weights.
    """
    if components is None:
        components = np.arange(len(times_by_component))
    t_stars, ses, slopes, resids = [], [], [], []
    for t, d1 in zip(times_by_component, d1_by_component):
        if len(t) < min_points:
            raise InsufficientDataError(
                f"need {min_points} samples per component, got {len(t)}"
            )
        if np.any(np.diff(d1) <= 0):
            raise InsufficientDataError("slope series is not strictly increasing")
        fit = line_fit(t, 1.0 / d1)
        t0, se = fit.zero_crossing()
        t_stars.append(t0)
        ses.append(max(se, 1e-300))
        slopes.append(abs(fit.slope))
        resids.append(fit.resid_rms)
    t_stars = np.array(t_stars)
    ses = np.array(ses)
    w = 1.0 / ses**2
    t_star = float(np.sum(w * t_stars) / np.sum(w))
    return TStarFit(
        t_star=t_star,
        se=float(1.0 / np.sqrt(np.sum(w))),
        t_star_by_component=t_stars,
        se_by_component=ses,
        slope_by_component=np.array(slopes),
        resid_rms_by_component=np.array(resids),
        components=np.asarray(components),
    )


def fit_x_star(
    times: np.ndarray, positions: np.ndarray, t_star: float, min_points: int = 8
) -> tuple[float, float, LineFit]:
    """Least squares x_peak = x* + lambda * (t* - t) on unwrapped positions.

    Returns (x_star, lambda, fit); note the peak moves at physical speed
    -lambda because the regression variable is t* - t.
    """
    if len(times) < min_points:
        raise InsufficientDataError(
            f"need {min_points} samples for the position fit, got {len(times)}"
        )
    tau = t_star - np.asarray(times, dtype=float)
    fit = line_fit(tau, positions)
    return fit.intercept, fit.slope, fit


def extrapolate_f_star(
    times_by_component: list[np.ndarray],
    f_by_component: list[np.ndarray],
    t_star: float,
    min_points: int = 8,
):
    """Intercepts of f_i = f*_i + a_i sqrt(t* - t), with the a_i kept.

    The a_i measure any sqrt-law offset of the field value at the peak;
    the matching argument says they vanish, so they are returned as a
    diagnostic together with their standard errors.
    """
    f_star, a, se_f, se_a = [], [], [], []
    for t, fv in zip(times_by_component, f_by_component):
        if len(t) < min_points:
            raise InsufficientDataError(
                f"need {min_points} samples per component, got {len(t)}"
            )
        s = np.sqrt(np.maximum(t_star - np.asarray(t, dtype=float), 0.0))
        fit = line_fit(s, fv)
        f_star.append(fit.intercept)
        a.append(fit.slope)
        se_f.append(fit.se_intercept)
        se_a.append(fit.se_slope)
    return (np.array(f_star), np.array(a), np.array(se_f), np.array(se_a))


def identify_family(
    eig: EigenSystem, lambda_fit: float, increment_direction: np.ndarray
) -> int:
    """Eigen family along which the shock forms.

    Picks the family maximizing |cos| with the spatial increment
    direction and, independently, the one whose eigenvalue matches the
    fitted peak speed; both must agree.
    """
    d = np.asarray(increment_direction, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise InsufficientDataError("zero increment direction")
    d = d / norm
    cosines = np.array(
        [
            abs(d @ eig.right(a)) / np.linalg.norm(eig.right(a))
            for a in range(eig.dimension)
        ]
    )
    by_direction = int(np.argmax(cosines))
    by_speed = int(np.argmin(np.abs(eig.eigenvalues - lambda_fit)))
    if by_direction != by_speed:
        raise AmbiguousFamilyError(
            f"direction picks family {by_direction} "
            f"(|cos| = {cosines[by_direction]:.4f}) but the fitted speed "
            f"{lambda_fit:g} picks family {by_speed}",
            by_direction=by_direction,
            by_speed=by_speed,
        )
    return by_direction


@dataclass
class SingularityEstimate:
    """Extrapolated shock singularity with fit diagnostics."""

    t_star: float
    x_star: float
    f_star: np.ndarray
    lam: float
    family: int
    e: np.ndarray
    e_left: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _monotone_suffix(values: np.ndarray) -> int:
    """Start index of the longest strictly increasing suffix."""
    start = len(values) - 1
    while start > 0 and values[start] > values[start - 1]:
        start -= 1
    return start


def _window_samples(track: ShockTrack, t_lo: float, t_hi: float, comp: int):
    t = track.times[comp]
    mask = (t >= t_lo) & (t <= t_hi) & track.resolved[comp] & (track.d1[comp] > 0)
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        return idx
    # Trim to the strictly increasing tail; interpolation jitter at the
    # resolution boundary must not poison the regression.
    vals = track.d1[comp][idx]
    return idx[_monotone_suffix(vals):]


def analyze_track(
    system: HyperbolicSystem,
    result: RunResult,
    track: ShockTrack,
    fit_decades: float = 1.0,
    min_points: int = 8,
) -> SingularityEstimate:
    """Full singularity estimate for one shock track.

    The fit window is the last ``fit_decades`` decades of t* - t inside
    the resolved regime, found iteratively: a provisional t* fit on the
    tail of the series fixes the window, then all fits are redone inside
    it.
    """
    num_comp = track.num_components
    usable = [
        i
        for i in range(num_comp)
        if np.sum(track.resolved[i] & (track.d1[i] > 0)) >= min_points
    ]
    if not usable:
        raise InsufficientDataError("no component has enough resolved samples")

    # Provisional t* from the tail of each usable component.
    prov_t, prov_d = [], []
    for i in usable:
        ok = np.nonzero(track.resolved[i] & (track.d1[i] > 0))[0]
        tail = ok[len(ok) // 2:]
        vals = track.d1[i][tail]
        tail = tail[_monotone_suffix(vals):]
        if len(tail) < min_points:
            tail = ok[_monotone_suffix(track.d1[i][ok]):]
        prov_t.append(track.times[i][tail])
        prov_d.append(track.d1[i][tail])
    provisional = fit_t_star(prov_t, prov_d, min_points=min_points)

    t_end = max(float(track.times[i][track.resolved[i]][-1]) for i in usable)
    tau_lo = provisional.t_star - t_end
    if tau_lo <= 0:
        tau_lo = 0.05 * (t_end - min(float(t[0]) for t in track.times if len(t)))
    t_lo = provisional.t_star - tau_lo * 10.0**fit_decades
    window = (t_lo, t_end)

    idx = {i: _window_samples(track, t_lo, t_end, i) for i in usable}
    usable = [i for i in usable if len(idx[i]) >= min_points]
    if not usable:
        raise InsufficientDataError("fit window contains too few samples")

    tfit = fit_t_star(
        [track.times[i][idx[i]] for i in usable],
        [track.d1[i][idx[i]] for i in usable],
        components=np.array(usable),
        min_points=min_points,
    )

    all_t = np.concatenate([track.times[i][idx[i]] for i in usable])
    all_x = np.concatenate([track.x[i][idx[i]] for i in usable])
    order = np.argsort(all_t)
    x_star_raw, lam, xfit = fit_x_star(
        all_t[order], all_x[order], tfit.t_star, min_points=min_points
    )

    f_star, q_offset, f_se, q_se = extrapolate_f_star(
        [track.times[i][idx[i]] for i in usable],
        [track.f[i][idx[i]] for i in usable],
        tfit.t_star,
        min_points=min_points,
    )
    # Components with no usable series fall back to the latest peak value.
    f_star_full = np.empty(num_comp)
    q_full = np.full(num_comp, np.nan)
    for pos, i in enumerate(usable):
        f_star_full[i] = f_star[pos]
        q_full[i] = q_offset[pos]
    for i in range(num_comp):
        if i not in usable:
            f_star_full[i] = track.f[i][-1] if len(track.f[i]) else np.nan

    eig = decompose(system.matrix(f_star_full))

    # Increment direction: spatial slope vector at the peak in the last
    # resolved snapshot (the profile derivative is parallel to e there).
    snap = result.snapshots[0]
    for s in result.snapshots:
        if s.time <= t_end + 1e-15:
            snap = s
    grid = result.grid
    ref_comp = usable[int(np.argmax([track.d1[i][idx[i]][-1] for i in usable]))]
    x_ref = track.x[ref_comp][idx[ref_comp]][-1] % grid.domain_length
    cell = int(round(x_ref / grid.dx)) % grid.num_points
    direction = snap.first_derivs[:, cell]
    family = identify_family(eig, lam, direction)
    e = eig.right(family)
    alignment = abs(direction @ e) / (np.linalg.norm(direction) * np.linalg.norm(e))

    diagnostics = {
        "window": (float(t_lo), float(t_end)),
        "tau_window": (float(tfit.t_star - t_end), float(tfit.t_star - t_lo)),
        "t_star_se": tfit.se,
        "t_star_by_component": tfit.t_star_by_component.tolist(),
        "slope_by_component": tfit.slope_by_component.tolist(),
        "inv_slope_resid_rms": tfit.resid_rms_by_component.tolist(),
        "x_star_se": xfit.se_intercept,
        "lambda_se": xfit.se_slope,
        "lambda_gap": float(abs(lam - eig.eigenvalues[family])),
        "alignment": float(alignment),
        "f_star_se": f_se.tolist(),
        "sqrt_offset": q_full.tolist(),
        "sqrt_offset_se": q_se.tolist(),
        "samples_by_component": [int(len(idx[i])) if i in usable else 0
                                 for i in range(num_comp)],
        "components": list(usable),
    }
    return SingularityEstimate(
        t_star=tfit.t_star,
        x_star=float(x_star_raw % grid.domain_length),
        f_star=f_star_full,
        lam=float(lam),
        family=int(family),
        e=e.copy(),
        e_left=eig.left(family).copy(),
        diagnostics=diagnostics,
    )


def estimate_singularities(
    system: HyperbolicSystem,
    result: RunResult,
    fit_decades: float = 1.0,
    min_points: int = 8,
) -> list[SingularityEstimate]:
    """Detect all forming shocks in a run and estimate each one."""
    estimates = [
        analyze_track(system, result, track, fit_decades, min_points)
        for track in detect_shocks(result, min_samples=min_points)
    ]
    estimates.sort(key=lambda est: est.x_star)
    return estimates
