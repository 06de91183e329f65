"""Method-of-lines evolution of quasilinear systems on periodic grids.

Fourier collocation in space, classical RK4 in time with CFL-based
adaptive steps.  Runs are deliberately stopped before the shock: the
point of a run is the pre-blowup monitor record, not a weak solution.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AdmissibilityError
from .models import HyperbolicSystem
from .spectral import derivative_factors, tail_energy_fraction

__all__ = [
    "Grid",
    "GridSnapshot",
    "Controls",
    "RunResult",
    "StopReason",
    "make_snapshot",
    "rhs",
    "step_rk4",
    "evolve",
    "converged_until",
]


class StopReason(enum.Enum):
    DERIVATIVE_THRESHOLD = "derivative_threshold"
    DT_FLOOR = "dt_floor"
    MAX_TIME = "max_time"
    ADMISSIBILITY_VIOLATION = "admissibility_violation"


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid x_m = m * dx on [0, L)."""

    num_points: int
    domain_length: float = 1.0

    def __post_init__(self):
        n = self.num_points
        if n < 4 or (n & (n - 1)) != 0:
            raise ValueError("num_points must be a power of two >= 4")
        if self.domain_length <= 0:
            raise ValueError("domain_length must be positive")

    @property
    def dx(self) -> float:
        return self.domain_length / self.num_points

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.num_points) * self.dx

    def wrap(self, x):
        return np.mod(x, self.domain_length)


@dataclass
class ComponentMonitors:
    """Per-component extrema of one snapshot, with sub-grid peak data.

    ``peak_*`` arrays hold up to ``max_peaks`` local maxima of |df_i/dx|
    per component (NaN-padded), so simultaneous shocks can be followed
    individually even though only the global maximum makes it into the
    monitor CSV.
    """

    max_d1: np.ndarray       # (N,)
    argmax_x: np.ndarray     # (N,) interpolated position of the global max
    f_at_argmax: np.ndarray  # (N,) field value at that position
    max_d2: np.ndarray       # (N,)
    peak_x: np.ndarray       # (N, P)
    peak_d1: np.ndarray      # (N, P)
    peak_f: np.ndarray       # (N, P)
    peak_d2: np.ndarray      # (N, P)
    tail_fraction: float


@dataclass
class GridSnapshot:
    """All fields at one time plus spectrally computed derivative arrays."""

    time: float
    grid: Grid
    fields: np.ndarray         # (N, n)
    first_derivs: np.ndarray   # (N, n)
    second_derivs: np.ndarray  # (N, n)
    monitors: ComponentMonitors


@dataclass
class Controls:
    """Tunable parameters of ``evolve``.

    ``blowup_threshold`` is an absolute bound on max |df_i/dx|; when None
    it defaults to 1e4 times the initial maximum slope (infinite for flat
    initial data).  ``growth_limit`` is the per-step fractional growth of
    the maximum slope beyond which a step is rejected and retried with
    half the step size.  ``tail_tol`` is the spectral-tail energy
    fraction above which a step is flagged as no longer resolved.
    """

    cfl_number: float = 0.3
    blowup_threshold: float | None = None
    dt_floor: float = 1e-10
    max_time: float = 10.0
    growth_limit: float = 0.02
    snapshot_growth: float = 1.25
    tail_tol: float = 1e-8
    peak_rel_threshold: float = 0.25
    max_peaks: int = 4
    max_steps: int = 5_000_000


@dataclass
class RunResult:
    """Dense monitor series, thinned snapshots and the stop condition."""

    grid: Grid
    system_name: str
    times: np.ndarray        # (S,)
    max_d1: np.ndarray       # (S, N)
    argmax_x: np.ndarray     # (S, N)
    f_at_argmax: np.ndarray  # (S, N)
    max_d2: np.ndarray       # (S, N)
    resolved: np.ndarray     # (S,) bool, spectral tail below tolerance
    peak_x: np.ndarray       # (S, N, P)
    peak_d1: np.ndarray      # (S, N, P)
    peak_f: np.ndarray       # (S, N, P)
    peak_d2: np.ndarray      # (S, N, P)
    snapshots: list[GridSnapshot] = field(default_factory=list)
    stop_reason: StopReason = StopReason.MAX_TIME
    stop_time: float = 0.0
    steps_accepted: int = 0
    steps_rejected: int = 0

    @property
    def num_components(self) -> int:
        return self.max_d1.shape[1]

    def resolved_until(self) -> float:
        """Last recorded time at which the run was still resolved."""
        idx = np.nonzero(self.resolved)[0]
        return float(self.times[idx[-1]]) if len(idx) else float(self.times[0])


def _quadratic_peak(y_minus: float, y_0: float, y_plus: float) -> tuple[float, float]:
    """Vertex offset in [-1/2, 1/2] and value of the parabola through 3 samples."""
    denom = y_minus - 2.0 * y_0 + y_plus
    if denom == 0.0:
        return 0.0, y_0
    delta = 0.5 * (y_minus - y_plus) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    value = y_0 - 0.25 * (y_minus - y_plus) * delta
    return delta, value


def _interp_at(values: np.ndarray, idx: int, delta: float) -> float:
    """Quadratic interpolation of a periodic array at grid offset idx+delta."""
    n = len(values)
    y_m, y_0, y_p = values[(idx - 1) % n], values[idx], values[(idx + 1) % n]
    return float(
        y_0 + 0.5 * delta * (y_p - y_m) + 0.5 * delta * delta * (y_p - 2.0 * y_0 + y_m)
    )


class _SpectralOps:
    """Cached derivative factors for one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.fac1 = derivative_factors(grid.num_points, grid.domain_length, 1)
        self.fac2 = derivative_factors(grid.num_points, grid.domain_length, 2)

    def d1(self, fields: np.ndarray) -> np.ndarray:
        spectra = np.fft.rfft(fields, axis=-1)
        return np.fft.irfft(spectra * self.fac1, n=self.grid.num_points, axis=-1)

    def all_derivs(self, fields: np.ndarray):
        """First/second derivatives and spectral tail fraction in one pass."""
        spectra = np.fft.rfft(fields, axis=-1)
        n = self.grid.num_points
        d1 = np.fft.irfft(spectra * self.fac1, n=n, axis=-1)
        d2 = np.fft.irfft(spectra * self.fac2, n=n, axis=-1)
        tail = tail_energy_fraction(spectra)
        return d1, d2, tail


def _component_monitors(
    grid: Grid,
    fields: np.ndarray,
    d1: np.ndarray,
    d2: np.ndarray,
    tail: float,
    rel_threshold: float = 0.25,
    max_peaks: int = 4,
) -> ComponentMonitors:
    num_comp, n = fields.shape
    dx = grid.dx
    max_d1 = np.empty(num_comp)
    argmax_x = np.empty(num_comp)
    f_at_argmax = np.empty(num_comp)
    max_d2 = np.empty(num_comp)
    peak_x = np.full((num_comp, max_peaks), np.nan)
    peak_d1 = np.full((num_comp, max_peaks), np.nan)
    peak_f = np.full((num_comp, max_peaks), np.nan)
    peak_d2 = np.full((num_comp, max_peaks), np.nan)

    for i in range(num_comp):
        a = np.abs(d1[i])
        top = float(a.max())
        max_d2[i] = float(np.max(np.abs(d2[i])))

        idx = int(np.argmax(a))
        delta, value = _quadratic_peak(a[(idx - 1) % n], a[idx], a[(idx + 1) % n])
        max_d1[i] = value if top > 0.0 else 0.0
        argmax_x[i] = grid.wrap((idx + delta) * dx)
        f_at_argmax[i] = _interp_at(fields[i], idx, delta)

        if top <= 0.0:
            continue
        prev_v = np.roll(a, 1)
        next_v = np.roll(a, -1)
        is_peak = (a > prev_v) & (a >= next_v) & (a >= rel_threshold * top)
        locs = np.nonzero(is_peak)[0]
        if len(locs) == 0:
            locs = np.array([idx])
        if len(locs) > max_peaks:
            locs = locs[np.argsort(a[locs])[::-1][:max_peaks]]
        locs = np.sort(locs)

        # Each peak owns the segment up to the midpoints towards its
        # neighbours (circular); |d2| is maximized on that segment.
        abs_d2 = np.abs(d2[i])
        for p, loc in enumerate(locs):
            dlt, val = _quadratic_peak(a[(loc - 1) % n], a[loc], a[(loc + 1) % n])
            peak_x[i, p] = grid.wrap((loc + dlt) * dx)
            peak_d1[i, p] = val
            peak_f[i, p] = _interp_at(fields[i], loc, dlt)
            if len(locs) == 1:
                peak_d2[i, p] = float(abs_d2.max())
            else:
                left = locs[p - 1]
                right = locs[(p + 1) % len(locs)]
                gap_l = (loc - left) % n
                gap_r = (right - loc) % n
                lo = (loc - gap_l // 2) % n
                hi = (loc + gap_r // 2) % n
                if lo <= hi:
                    seg = abs_d2[lo : hi + 1]
                else:
                    seg = np.concatenate([abs_d2[lo:], abs_d2[: hi + 1]])
                peak_d2[i, p] = float(seg.max())

    return ComponentMonitors(
        max_d1=max_d1,
        argmax_x=argmax_x,
        f_at_argmax=f_at_argmax,
        max_d2=max_d2,
        peak_x=peak_x,
        peak_d1=peak_d1,
        peak_f=peak_f,
        peak_d2=peak_d2,
        tail_fraction=tail,
    )


def make_snapshot(
    grid: Grid, time: float, fields: np.ndarray, controls: Controls | None = None
) -> GridSnapshot:
    """Build a snapshot with freshly computed derivatives and monitors."""
    controls = controls or Controls()
    fields = np.asarray(fields, dtype=float)
    ops = _SpectralOps(grid)
    d1, d2, tail = ops.all_derivs(fields)
    mon = _component_monitors(
        grid, fields, d1, d2, tail, controls.peak_rel_threshold, controls.max_peaks
    )
    return GridSnapshot(
        time=time, grid=grid, fields=fields, first_derivs=d1, second_derivs=d2,
        monitors=mon,
    )


def _rhs_arrays(
    system: HyperbolicSystem, ops: _SpectralOps, fields: np.ndarray
) -> np.ndarray:
    m = system.matrix(fields)  # raises AdmissibilityError with location
    dfdx = ops.d1(fields)
    return np.einsum("ijg,jg->ig", m, dfdx)


def rhs(system: HyperbolicSystem, snapshot: GridSnapshot) -> np.ndarray:
    """M(f(x)) . df/dx at every grid point, shape (N, n)."""
    ops = _SpectralOps(snapshot.grid)
    return _rhs_arrays(system, ops, snapshot.fields)


def _rk4(system, ops, fields, dt):
    k1 = _rhs_arrays(system, ops, fields)
    k2 = _rhs_arrays(system, ops, fields + 0.5 * dt * k1)
    k3 = _rhs_arrays(system, ops, fields + 0.5 * dt * k2)
    k4 = _rhs_arrays(system, ops, fields + dt * k3)
    return fields + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rk4(
    system: HyperbolicSystem, snapshot: GridSnapshot, dt: float
) -> GridSnapshot:
    """One classical RK4 step; derivative arrays and monitors recomputed."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ops = _SpectralOps(snapshot.grid)
    new_fields = _rk4(system, ops, snapshot.fields, dt)
    return make_snapshot(snapshot.grid, snapshot.time + dt, new_fields)


def evolve(
    system: HyperbolicSystem,
    initial_fields: np.ndarray | Sequence[np.ndarray],
    grid: Grid,
    controls: Controls | None = None,
) -> RunResult:
    """Integrate from smooth initial data until the verge of blowup.

    The step size is cfl_number * dx / (max wave speed); a step on which
    the maximum slope grows by more than ``growth_limit`` (or that leaves
    the admissible region, or produces non-finite values) is rejected and
    retried with dt/2.  Stops on the derivative threshold, on dt
    underflow, at max_time, or on an unrecoverable admissibility
    violation (partial result, never an exception).
    """
    controls = controls or Controls()
    fields = np.array(initial_fields, dtype=float)
    if fields.ndim == 1:
        fields = fields[None, :]
    if fields.shape != (system.dimension, grid.num_points):
        raise ValueError(
            f"initial fields must have shape {(system.dimension, grid.num_points)}"
        )
    system.check_state(fields)
    ops = _SpectralOps(grid)

    times = []
    rows_d1, rows_ax, rows_f, rows_d2 = [], [], [], []
    rows_px, rows_pd1, rows_pf, rows_pd2 = [], [], [], []
    resolved_flags = []
    snapshots: list[GridSnapshot] = []

    def record(t, mon):
        times.append(t)
        rows_d1.append(mon.max_d1)
        rows_ax.append(mon.argmax_x)
        rows_f.append(mon.f_at_argmax)
        rows_d2.append(mon.max_d2)
        rows_px.append(mon.peak_x)
        rows_pd1.append(mon.peak_d1)
        rows_pf.append(mon.peak_f)
        rows_pd2.append(mon.peak_d2)
        resolved_flags.append(mon.tail_fraction <= controls.tail_tol)

    def monitors_for(f):
        d1, d2, tail = ops.all_derivs(f)
        return _component_monitors(
            grid, f, d1, d2, tail, controls.peak_rel_threshold, controls.max_peaks
        ), d1, d2

    t = 0.0
    mon, d1, d2 = monitors_for(fields)
    record(t, mon)
    snapshots.append(
        GridSnapshot(t, grid, fields.copy(), d1, d2, mon)
    )
    global_max_d1 = float(np.max(mon.max_d1))
    last_snapshot_level = max(global_max_d1, 1e-300)

    if controls.blowup_threshold is not None:
        threshold = controls.blowup_threshold
    elif global_max_d1 > 0.0:
        threshold = 1e4 * global_max_d1
    else:
        threshold = np.inf

    def cfl_dt(f):
        speed = system.max_wave_speed(f)
        return controls.cfl_number * grid.dx / (speed + 1e-14)

    stop_reason = StopReason.MAX_TIME
    steps_accepted = 0
    steps_rejected = 0
    dt = min(cfl_dt(fields), controls.max_time)

    while True:
        if global_max_d1 >= threshold:
            stop_reason = StopReason.DERIVATIVE_THRESHOLD
            break
        if t >= controls.max_time:
            stop_reason = StopReason.MAX_TIME
            break
        if steps_accepted >= controls.max_steps:
            stop_reason = StopReason.MAX_TIME
            break
        dt = min(dt, controls.max_time - t)

        reject_cause = None
        try:
            candidate = _rk4(system, ops, fields, dt)
            if not np.all(np.isfinite(candidate)):
                reject_cause = "nonfinite"
            else:
                system.check_state(candidate)
        except AdmissibilityError:
            reject_cause = "admissibility"

        if reject_cause is None:
            cand_mon, cand_d1, cand_d2 = monitors_for(candidate)
            new_global = float(np.max(cand_mon.max_d1))
            if (
                global_max_d1 > 0.0
                and new_global > (1.0 + controls.growth_limit) * global_max_d1
            ):
                reject_cause = "growth"

        if reject_cause is not None:
            steps_rejected += 1
            dt *= 0.5
            if dt < controls.dt_floor:
                stop_reason = (
                    StopReason.ADMISSIBILITY_VIOLATION
                    if reject_cause == "admissibility"
                    else StopReason.DT_FLOOR
                )
                break
            continue

        fields = candidate
        mon, d1, d2 = cand_mon, cand_d1, cand_d2
        t += dt
        steps_accepted += 1
        global_max_d1 = new_global
        record(t, mon)

        if global_max_d1 >= controls.snapshot_growth * last_snapshot_level:
            snapshots.append(GridSnapshot(t, grid, fields.copy(), d1, d2, mon))
            last_snapshot_level = global_max_d1

        dt = min(cfl_dt(fields), dt * 1.25)

    if snapshots[-1].time < t:
        snapshots.append(GridSnapshot(t, grid, fields.copy(), d1, d2, mon))

    return RunResult(
        grid=grid,
        system_name=system.name,
        times=np.array(times),
        max_d1=np.array(rows_d1),
        argmax_x=np.array(rows_ax),
        f_at_argmax=np.array(rows_f),
        max_d2=np.array(rows_d2),
        resolved=np.array(resolved_flags, dtype=bool),
        peak_x=np.array(rows_px),
        peak_d1=np.array(rows_pd1),
        peak_f=np.array(rows_pf),
        peak_d2=np.array(rows_pd2),
        snapshots=snapshots,
        stop_reason=stop_reason,
        stop_time=t,
        steps_accepted=steps_accepted,
        steps_rejected=steps_rejected,
    )


def converged_until(
    coarse: RunResult, fine: RunResult, rel_tol: float = 0.01
) -> float:
    """Time up to which a run agrees with a doubled-resolution reference.

    Compares the per-component maximum-slope series (the fine series is
    interpolated onto the coarse times) and returns the last coarse time
    before their relative difference first exceeds ``rel_tol``.
    """
    t = coarse.times
    limit = min(coarse.times[-1], fine.times[-1])
    usable = t <= limit
    t = t[usable]
    worst = np.zeros(len(t))
    for i in range(coarse.num_components):
        ref = np.interp(t, fine.times, fine.max_d1[:, i])
        cur = coarse.max_d1[usable, i]
        scale = np.maximum(np.abs(ref), 1e-300)
        worst = np.maximum(worst, np.abs(cur - ref) / scale)
    bad = np.nonzero(worst > rel_tol)[0]
    if len(bad) == 0:
        return float(t[-1])
    if bad[0] == 0:
        return float(t[0])
    return float(t[bad[0] - 1])
