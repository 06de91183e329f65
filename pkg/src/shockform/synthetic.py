"""Exact-law synthetic data for exercising the fitting instruments.

Series and snapshots produced here follow the similarity laws by
construction, so fitters run on them must recover the generating
parameters; they back the round-trip self-tests and the `synth` CLI verb.
"""

from __future__ import annotations

import numpy as np

from .similarity import SECOND_DERIV_COEF, similarity_fields
from .singularity import ShockTrack
from .solver import Grid, GridSnapshot, make_snapshot

__all__ = ["synthetic_track", "synthetic_snapshots"]


def synthetic_track(
    t_star: float,
    x_star: float,
    lam: float,
    f_star: np.ndarray,
    e: np.ndarray,
    c: float,
    K: float,
    taus: np.ndarray,
    domain_length: float = 1.0,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ShockTrack:
    """Monitor series drawn exactly from the similarity laws.

    max|df_i/dx| = |e_i/c| / tau, max|d2f_i/dx2| = |e_i| c^-2 COEF
    sqrt(K) / tau^(5/2), peak at x* + lam tau with field value f*_i.
    Optional multiplicative log-normal noise of relative size ``noise``.
    """
    taus = np.sort(np.asarray(taus, dtype=float))[::-1]
    if np.any(taus <= 0):
        raise ValueError("all tau samples must be positive")
    e = np.asarray(e, dtype=float)
    f_star = np.asarray(f_star, dtype=float)
    times = t_star - taus
    if rng is None:
        rng = np.random.default_rng(0)

    def jitter(shape):
        return np.exp(noise * rng.standard_normal(shape)) if noise > 0 else 1.0

    times_by, x_by, d1_by, f_by, d2_by, res_by = [], [], [], [], [], []
    for i in range(len(e)):
        d1 = np.abs(e[i] / c) / taus * jitter(len(taus))
        d2 = (
            np.abs(e[i]) / c**2 * SECOND_DERIV_COEF * np.sqrt(K)
            / taus**2.5 * jitter(len(taus))
        )
        times_by.append(times.copy())
        x_by.append(x_star + lam * taus)
        d1_by.append(d1)
        f_by.append(np.full(len(taus), f_star[i]))
        d2_by.append(d2)
        res_by.append(np.ones(len(taus), dtype=bool))
    return ShockTrack(
        seed_x=x_star % domain_length,
        domain_length=domain_length,
        times=times_by,
        x=x_by,
        d1=d1_by,
        f=f_by,
        d2=d2_by,
        resolved=res_by,
    )


def synthetic_snapshots(
    grid: Grid,
    t_star: float,
    x_star: float,
    lam: float,
    f_star: np.ndarray,
    e: np.ndarray,
    c: float,
    K: float,
    taus: np.ndarray,
) -> list[GridSnapshot]:
    """Grid snapshots sampled exactly from the similarity solution."""
    snaps = []
    for tau in np.sort(np.asarray(taus, dtype=float))[::-1]:
        fields = similarity_fields(
            grid.positions, tau, x_star, lam, f_star, e, c, K,
            domain_length=grid.domain_length,
        )
        snaps.append(make_snapshot(grid, t_star - tau, fields))
    return snaps
