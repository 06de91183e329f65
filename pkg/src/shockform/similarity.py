"""The universal similarity solution and instruments that test a run against it.

Near a forming shock the solution collapses onto

    f(x, t) = f* + (t*-t)^(1/2) F(xi) e,
    xi = (x - x* - lambda (t*-t)) / (c (t*-t)^(3/2)),
    -xi = F + K F^3,

where (lambda, e) is the eigenpair of M(f*) along which the shock forms,
c is computable from M and its derivative tensor, and K > 0 is the one
data-dependent constant.  Everything here is invariant under the gauge
freedom (e, c, K) -> (mu e, mu c, mu^2 K).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCaseError, InsufficientDataError
from .fitting import line_fit
from .singularity import SingularityEstimate
from .solver import GridSnapshot

__all__ = [
    "SECOND_DERIV_COEF",
    "compute_c",
    "solve_F",
    "F_derivative_extrema",
    "fit_K",
    "KFit",
    "predict_first_derivative",
    "FirstDerivComparison",
    "similarity_fields",
    "rescale_and_collapse",
    "ProfileCollapse",
    "SimilarityPrediction",
    "GAUGE_COMPONENT_THRESHOLD",
]

# max |d2F/dxi2| = SECOND_DERIV_COEF * sqrt(K); the extremum of
# 6KF/(1+3KF^2)^3 sits at F^2 = 1/(15K).
SECOND_DERIV_COEF = 25.0 * np.sqrt(15.0) / 108.0

# Components of e smaller than this fraction of ||e||_inf carry no
# leading-order signal and are excluded from fits and collapses.
GAUGE_COMPONENT_THRESHOLD = 1e-6


def compute_c(tensor: np.ndarray, e: np.ndarray, e_left: np.ndarray) -> float:
    """The coordinate-rescaling constant of the similarity solution.

    c = - (sum_ijk dM_ij/df_k w_i e_j e_k) / (sum_i w_i e_i), evaluated
    at the singular state.  Scales linearly with the gauge of e.
    """
    t = np.asarray(tensor, dtype=float)
    e = np.asarray(e, dtype=float)
    w = np.asarray(e_left, dtype=float)
    num = float(np.einsum("ijk,i,j,k->", t, w, e, e))
    den = float(w @ e)
    if abs(den) < 1e-300:
        raise DegenerateCaseError("left and right eigenvectors are orthogonal")
    abs_num = float(np.einsum("ijk,i,j,k->", np.abs(t), np.abs(w), np.abs(e), np.abs(e)))
    if abs_num == 0.0 or abs(num) < 1e-10 * abs_num:
        raise DegenerateCaseError(
            "cubic coupling vanishes at the singular state; the quadratic "
            "similarity analysis does not apply (higher-order case)"
        )
    return -num / den


def solve_F(xi, K: float):
    """The unique real root F of K F^3 + F + xi = 0 (scalar or array).

    The map F -> -F - K F^3 is strictly decreasing for K > 0, so the
    root is unique; it is computed on the xi <= 0 branch by Newton from
    an analytic upper bound (monotone by convexity) and reflected, which
    makes the result odd in xi by construction.
    """
    if not K > 0.0:
        raise ValueError("profile constant K must be positive (multivalued otherwise)")
    xi_arr = np.asarray(xi, dtype=float)
    scalar = xi_arr.ndim == 0
    a = np.abs(np.atleast_1d(xi_arr))
    # On the positive branch F + K F^3 = a, so F <= min(a, (a/K)^(1/3)).
    F = np.minimum(a, np.cbrt(a / K))
    for _ in range(80):
        g = K * F**3 + F - a
        F_new = F - g / (3.0 * K * F**2 + 1.0)
        if np.all(np.abs(F_new - F) <= 1e-16 * (1.0 + F)):
            F = F_new
            break
        F = F_new
    resid = np.max(np.abs(K * F**3 + F - a) / (1.0 + a))
    if resid > 1e-13:
        raise FloatingPointError(f"cubic solve residual {resid:g} above tolerance")
    out = -np.sign(np.atleast_1d(xi_arr)) * F
    return float(out[0]) if scalar else out.reshape(xi_arr.shape)


def F_derivative_extrema(K: float) -> tuple[float, float]:
    """(max |dF/dxi|, max |d2F/dxi2|) of the profile.

    The slope extremum is exactly 1 (at xi = 0, from dF/dxi =
    -(1+3KF^2)^-1); the curvature extremum is SECOND_DERIV_COEF*sqrt(K).
    """
    if not K > 0.0:
        raise ValueError("profile constant K must be positive")
    return 1.0, SECOND_DERIV_COEF * np.sqrt(K)


def usable_components(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    return np.nonzero(np.abs(e) >= GAUGE_COMPONENT_THRESHOLD * np.max(np.abs(e)))[0]


@dataclass
class KFit:
    """Profile constant from the second-derivative blowup law."""

    K: float
    K_by_component: np.ndarray
    components: np.ndarray
    unconstrained_slope: np.ndarray  # should be -5/2
    slope_warning: bool
    intercept_se: np.ndarray


def fit_K(
    times_by_component: list[np.ndarray],
    d2_by_component: list[np.ndarray],
    estimate: SingularityEstimate,
    c: float,
    slope_tolerance: float = 0.15,
    min_points: int = 8,
) -> KFit:
    """K from max|d2 f_i/dx2| = |e_i| c^-2 COEF sqrt(K) (t*-t)^(-5/2).

    The log-log regression is constrained to slope -5/2; the intercept
    gives K per usable component and the results are combined with
    inverse-variance weights.  The unconstrained slope is kept as a
    diagnostic and flags the fit when it strays from -5/2.
    """
    comps = usable_components(estimate.e)
    ks, ses, slopes, used = [], [], [], []
    for pos, i in enumerate(comps):
        if i >= len(times_by_component):
            continue
        t = np.asarray(times_by_component[i], dtype=float)
        y = np.asarray(d2_by_component[i], dtype=float)
        good = (y > 0) & (t < estimate.t_star)
        t, y = t[good], y[good]
        if len(t) < min_points:
            continue
        tau = estimate.t_star - t
        log_tau = np.log(tau)
        log_y = np.log(y)
        # Constrained fit: intercept of log y + (5/2) log tau.
        shifted = log_y + 2.5 * log_tau
        b = float(np.mean(shifted))
        se_b = float(np.std(shifted, ddof=1) / np.sqrt(len(shifted)))
        amp = abs(estimate.e[i]) / c**2 * SECOND_DERIV_COEF
        ks.append((np.exp(b) / amp) ** 2)
        ses.append(max(se_b, 1e-300))
        slopes.append(line_fit(log_tau, log_y).slope)
        used.append(i)
    if not ks:
        raise InsufficientDataError("no usable component for the K fit")
    ks = np.array(ks)
    ses = np.array(ses)
    w = 1.0 / ses**2
    K = float(np.sum(w * ks) / np.sum(w))
    slopes = np.array(slopes)
    return KFit(
        K=K,
        K_by_component=ks,
        components=np.array(used),
        unconstrained_slope=slopes,
        slope_warning=bool(np.any(np.abs(slopes + 2.5) > slope_tolerance)),
        intercept_se=ses,
    )


@dataclass
class FirstDerivComparison:
    """Observed/predicted ratios for the parameter-free first-derivative law."""

    components: np.ndarray
    predicted_prefactor: np.ndarray   # |e_i / c|
    median_ratio: np.ndarray
    ratio_spread: np.ndarray          # interquartile range
    ratios: list[np.ndarray]
    loglog_slope: np.ndarray


def predict_first_derivative(
    times_by_component: list[np.ndarray],
    d1_by_component: list[np.ndarray],
    estimate: SingularityEstimate,
    c: float,
) -> FirstDerivComparison:
    """Compare max|df_i/dx| against |e_i/c| / (t*-t), which has no free
    parameters once the singularity data are known."""
    comps = usable_components(estimate.e)
    med, spread, ratios, slopes, used, prefs = [], [], [], [], [], []
    for i in comps:
        if i >= len(times_by_component):
            continue
        t = np.asarray(times_by_component[i], dtype=float)
        y = np.asarray(d1_by_component[i], dtype=float)
        good = (y > 0) & (t < estimate.t_star)
        t, y = t[good], y[good]
        if len(t) == 0:
            continue
        tau = estimate.t_star - t
        pref = abs(estimate.e[i] / c)
        r = y * tau / pref
        med.append(float(np.median(r)))
        q75, q25 = np.percentile(r, [75, 25])
        spread.append(float(q75 - q25))
        ratios.append(r)
        slopes.append(line_fit(np.log(tau), np.log(y)).slope if len(t) >= 3 else np.nan)
        prefs.append(pref)
        used.append(i)
    if not used:
        raise InsufficientDataError("no usable component for the prediction table")
    return FirstDerivComparison(
        components=np.array(used),
        predicted_prefactor=np.array(prefs),
        median_ratio=np.array(med),
        ratio_spread=np.array(spread),
        ratios=ratios,
        loglog_slope=np.array(slopes),
    )


def similarity_fields(
    x: np.ndarray,
    tau: float,
    x_star: float,
    lam: float,
    f_star: np.ndarray,
    e: np.ndarray,
    c: float,
    K: float,
    domain_length: float | None = None,
) -> np.ndarray:
    """Evaluate the similarity solution at positions x and t = t* - tau."""
    x = np.asarray(x, dtype=float)
    dx = x - x_star - lam * tau
    if domain_length is not None:
        dx = (dx + 0.5 * domain_length) % domain_length - 0.5 * domain_length
    xi = dx / (c * tau**1.5)
    F = solve_F(xi, K)
    return np.asarray(f_star, dtype=float)[:, None] + np.sqrt(tau) * np.outer(
        np.asarray(e, dtype=float), F
    )


@dataclass
class ProfileCollapse:
    """Rescaled profile samples against the universal curve."""

    taus: np.ndarray                 # (S,)
    xi: list[np.ndarray]             # per snapshot
    F: list[np.ndarray]              # per snapshot, (N, len(xi)) NaN if unusable
    rms_rel: np.ndarray              # (S, N) relative RMS distance, NaN if unusable
    profile_scale: float
    components: np.ndarray
    collapse_error: float            # max over snapshots and usable components
    excluded_components: list[int]


def rescale_and_collapse(
    snapshots: list[GridSnapshot],
    estimate: SingularityEstimate,
    c: float,
    K: float,
    xi_max: float = 10.0,
) -> ProfileCollapse:
    """Map snapshots into (xi, F) and score the distance to the profile.

    F_i = (f_i - f*_i) / (e_i (t*-t)^(1/2)) for components with a
    significant e_i; the error is the RMS distance to solve_F over
    |xi| <= xi_max, relative to the profile scale on that window.
    """
    comps = usable_components(estimate.e)
    excluded = [i for i in range(len(estimate.e)) if i not in comps]
    num_comp = len(estimate.e)
    profile_scale = abs(solve_F(xi_max, K))

    taus, xis, Fs, rms = [], [], [], []
    for snap in snapshots:
        tau = estimate.t_star - snap.time
        if tau <= 0:
            continue
        grid = snap.grid
        x = grid.positions
        dx = x - estimate.x_star - estimate.lam * tau
        dx = (dx + 0.5 * grid.domain_length) % grid.domain_length - 0.5 * grid.domain_length
        xi = dx / (c * tau**1.5)
        sel = np.abs(xi) <= xi_max
        if np.count_nonzero(sel) < 4:
            continue
        xi = xi[sel]
        order = np.argsort(xi)
        xi = xi[order]
        F_pred = solve_F(xi, K)
        F_data = np.full((num_comp, len(xi)), np.nan)
        row = np.full(num_comp, np.nan)
        for i in comps:
            F_data[i] = (snap.fields[i][sel][order] - estimate.f_star[i]) / (
                estimate.e[i] * np.sqrt(tau)
            )
            row[i] = float(
                np.sqrt(np.mean((F_data[i] - F_pred) ** 2)) / profile_scale
            )
        taus.append(tau)
        xis.append(xi)
        Fs.append(F_data)
        rms.append(row)
    if not taus:
        raise InsufficientDataError("no snapshot lies inside the similarity window")
    rms = np.array(rms)
    return ProfileCollapse(
        taus=np.array(taus),
        xi=xis,
        F=Fs,
        rms_rel=rms,
        profile_scale=float(profile_scale),
        components=comps,
        collapse_error=float(np.nanmax(rms)),
        excluded_components=excluded,
    )


@dataclass
class SimilarityPrediction:
    """Universal-law prediction attached to one singularity estimate."""

    c: float
    K: float
    lam: float
    e: np.ndarray
    e_left: np.ndarray
    first_deriv_prefactors: np.ndarray   # |e_i / c| per component
    second_deriv_prefactors: np.ndarray  # |e_i| c^-2 COEF sqrt(K) per component
    k_fit: KFit
    first_deriv: FirstDerivComparison

    @classmethod
    def build(cls, estimate: SingularityEstimate, c: float, k_fit: KFit,
              first_deriv: FirstDerivComparison) -> "SimilarityPrediction":
        e = np.asarray(estimate.e, dtype=float)
        return cls(
            c=c,
            K=k_fit.K,
            lam=estimate.lam,
            e=e,
            e_left=np.asarray(estimate.e_left, dtype=float),
            first_deriv_prefactors=np.abs(e / c),
            second_deriv_prefactors=np.abs(e) / c**2
            * SECOND_DERIV_COEF * np.sqrt(k_fit.K),
            k_fit=k_fit,
            first_deriv=first_deriv,
        )
