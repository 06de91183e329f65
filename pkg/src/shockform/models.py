"""Quasilinear model definitions: systems of the form df/dt = M(f) df/dx.

A model supplies the coefficient matrix M(f) and its derivative tensor
dM_ij/df_k.  Evaluators are vectorized: a state argument of shape (N,)
returns (N, N) / (N, N, N); a batch of states of shape (N, m) returns
(N, N, m) / (N, N, N, m).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AdmissibilityError

__all__ = [
    "HyperbolicSystem",
    "burgers",
    "shallow_water",
    "polynomial_system",
    "numeric_tensor_check",
]


@dataclass(frozen=True)
class HyperbolicSystem:
    """A quasilinear system df/dt = M(f) df/dx on N fields.

    ``matrix_eval`` / ``tensor_eval`` must be pure and accept batched
    states.  ``bounds`` are simple per-component admissibility limits
    (lo, hi), used to keep runs inside the region where M is smooth and
    strictly hyperbolic; either limit may be infinite.
    """

    name: str
    dimension: int
    matrix_eval: Callable[[np.ndarray], np.ndarray]
    tensor_eval: Callable[[np.ndarray], np.ndarray]
    field_names: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("system dimension must be >= 1")
        if len(self.field_names) != self.dimension:
            raise ValueError("field_names must have one label per component")
        if self.bounds is None:
            object.__setattr__(
                self, "bounds", ((-np.inf, np.inf),) * self.dimension
            )
        if len(self.bounds) != self.dimension:
            raise ValueError("bounds must have one (lo, hi) pair per component")

    # -- state checks ---------------------------------------------------

    def check_state(self, f: np.ndarray) -> np.ndarray:
        """Validate shape, finiteness and admissibility of a state (batch)."""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.dimension:
            raise ValueError(
                f"state has {f.shape[0]} components, model '{self.name}' has "
                f"{self.dimension}"
            )
        if not np.all(np.isfinite(f)):
            raise AdmissibilityError(f"non-finite state for model '{self.name}'")
        for i, (lo, hi) in enumerate(self.bounds):
            comp = np.atleast_1d(f[i])
            bad = (comp < lo) | (comp > hi)
            if np.any(bad):
                where = int(np.argmax(bad))
                raise AdmissibilityError(
                    f"component '{self.field_names[i]}' = {comp[where]:g} violates "
                    f"admissible bounds [{lo:g}, {hi:g}] of model '{self.name}'",
                    location=where,
                )
        return f

    # -- evaluators -----------------------------------------------------

    def matrix(self, f: np.ndarray) -> np.ndarray:
        """M(f); raises AdmissibilityError outside the admissible region."""
        f = self.check_state(f)
        return self.matrix_eval(f)

    def tensor(self, f: np.ndarray) -> np.ndarray:
        """dM_ij/df_k at f, shape (N, N, N) (batched: trailing state axes)."""
        f = self.check_state(f)
        return self.tensor_eval(f)

    def max_wave_speed(self, f: np.ndarray) -> float:
        """Upper bound on max |eigenvalue of M| over a batch of states.

        Exact for N <= 2; Gershgorin row-sum bound for larger systems.
        """
        m = self.matrix(f)
        if self.dimension == 1:
            return float(np.max(np.abs(m)))
        if self.dimension == 2:
            a, b = m[0, 0], m[0, 1]
            c, d = m[1, 0], m[1, 1]
            disc = 0.25 * (a - d) ** 2 + b * c
            if np.any(disc < 0):
                raise AdmissibilityError(
                    f"model '{self.name}' lost hyperbolicity (complex wave speeds)"
                )
            root = np.sqrt(disc)
            mean = 0.5 * (a + d)
            return float(np.max(np.maximum(np.abs(mean + root), np.abs(mean - root))))
        return float(np.max(np.sum(np.abs(m), axis=1)))


def _broadcast_entry(value, shape):
    out = np.empty(shape)
    out[...] = value
    return out


def burgers() -> HyperbolicSystem:
    """Inviscid Burgers' equation du/dt = -u du/dx as a 1x1 system."""

    def matrix_eval(f):
        u = f[0]
        m = np.empty((1, 1) + np.shape(u))
        m[0, 0] = -u
        return m

    def tensor_eval(f):
        shape = (1, 1, 1) + np.shape(f[0])
        t = np.zeros(shape)
        t[0, 0, 0] = -1.0
        return t

    return HyperbolicSystem(
        name="burgers",
        dimension=1,
        matrix_eval=matrix_eval,
        tensor_eval=tensor_eval,
        field_names=("u",),
    )


def shallow_water(min_height: float = 1e-8) -> HyperbolicSystem:
    """Nondimensional shallow water equations for (u, eta).

    du/dt = -u du/dx - d(eta)/dx,  d(eta)/dt = -eta du/dx - u d(eta)/dx.
    Heights at or below ``min_height`` are inadmissible.
    """

    def matrix_eval(f):
        u, eta = f[0], f[1]
        m = np.empty((2, 2) + np.shape(u))
        m[0, 0] = -u
        m[0, 1] = _broadcast_entry(-1.0, np.shape(u))
        m[1, 0] = -eta
        m[1, 1] = -u
        return m

    def tensor_eval(f):
        shape = (2, 2, 2) + np.shape(f[0])
        t = np.zeros(shape)
        t[0, 0, 0] = -1.0
        t[1, 1, 0] = -1.0
        t[1, 0, 1] = -1.0
        return t

    return HyperbolicSystem(
        name="shallow_water",
        dimension=2,
        matrix_eval=matrix_eval,
        tensor_eval=tensor_eval,
        field_names=("u", "eta"),
        bounds=((-np.inf, np.inf), (min_height, np.inf)),
    )


# A polynomial matrix entry is a sum of monomials coeff * prod_k f_k**p_k.
Monomial = tuple[float, tuple[int, ...]]


def _poly_eval(terms: Sequence[Monomial], f: np.ndarray) -> np.ndarray:
    out = np.zeros(np.shape(f[0]))
    for coeff, powers in terms:
        term = np.full(np.shape(f[0]), coeff)
        for k, p in enumerate(powers):
            if p:
                term = term * f[k] ** p
        out = out + term
    return out


def _poly_diff(terms: Sequence[Monomial], k: int) -> list[Monomial]:
    out = []
    for coeff, powers in terms:
        if powers[k] == 0:
            continue
        new_powers = list(powers)
        new_powers[k] -= 1
        out.append((coeff * powers[k], tuple(new_powers)))
    return out


def polynomial_system(
    name: str,
    entries: Sequence[Sequence[Sequence[Monomial]]],
    field_names: Sequence[str] | None = None,
    bounds: Sequence[tuple[float, float]] | None = None,
) -> HyperbolicSystem:
    """User-defined model with polynomial matrix entries.

    ``entries[i][j]`` is a list of monomials (coeff, powers) for M_ij(f);
    the derivative tensor is produced by exact polynomial differentiation.
    """
    n = len(entries)
    if any(len(row) != n for row in entries):
        raise ValueError("entries must form a square matrix")
    entries = tuple(
        tuple(tuple((float(c), tuple(int(p) for p in pw)) for c, pw in cell)
              for cell in row)
        for row in entries
    )
    for row in entries:
        for cell in row:
            for _, powers in cell:
                if len(powers) != n:
                    raise ValueError(
                        "each monomial needs one exponent per component"
                    )
                if any(p < 0 for p in powers):
                    raise ValueError("monomial exponents must be non-negative")
    diff = tuple(
        tuple(tuple(_poly_diff(cell, k) for k in range(n)) for cell in row)
        for row in entries
    )

    def matrix_eval(f):
        m = np.empty((n, n) + np.shape(f[0]))
        for i in range(n):
            for j in range(n):
                m[i, j] = _poly_eval(entries[i][j], f)
        return m

    def tensor_eval(f):
        t = np.empty((n, n, n) + np.shape(f[0]))
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    t[i, j, k] = _poly_eval(diff[i][j][k], f)
        return t

    if field_names is None:
        field_names = tuple(f"f{i}" for i in range(n))
    return HyperbolicSystem(
        name=name,
        dimension=n,
        matrix_eval=matrix_eval,
        tensor_eval=tensor_eval,
        field_names=tuple(field_names),
        bounds=None if bounds is None else tuple(bounds),
    )


def numeric_tensor_check(
    system: HyperbolicSystem, f: np.ndarray, h: float = 1e-5
) -> float:
    """Max relative deviation between the analytic tensor and central differences.

    Returns max over (i, j, k) of |analytic - numeric| / (1 + |analytic|).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    f = system.check_state(np.asarray(f, dtype=float))
    analytic = system.tensor(f)
    n = system.dimension
    numeric = np.empty_like(analytic)
    for k in range(n):
        fp = f.copy()
        fm = f.copy()
        fp[k] += h
        fm[k] -= h
        numeric[:, :, k] = (system.matrix(fp) - system.matrix(fm)) / (2 * h)
    return float(np.max(np.abs(analytic - numeric) / (1.0 + np.abs(analytic))))


BUILTIN_MODELS: dict[str, Callable[[], HyperbolicSystem]] = {
    "burgers": burgers,
    "shallow_water": shallow_water,
}
