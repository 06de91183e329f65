"""Small least-squares helpers shared by the extrapolation fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError

__all__ = ["LineFit", "line_fit"]


@dataclass(frozen=True)
class LineFit:
    """Ordinary least squares y = intercept + slope * x with uncertainties."""

    intercept: float
    slope: float
    se_intercept: float
    se_slope: float
    cov_ab: float
    resid_rms: float
    n: int

    def zero_crossing(self) -> tuple[float, float]:
        """x at which the fitted line crosses zero, with propagated error."""
        x0 = -self.intercept / self.slope
        b = self.slope
        var = (
            self.se_intercept**2 / b**2
            + (self.intercept**2 / b**4) * self.se_slope**2
            + 2.0 * (self.intercept / b**3) * self.cov_ab
        )
        return x0, float(np.sqrt(max(var, 0.0)))


def line_fit(x: np.ndarray, y: np.ndarray, min_points: int = 3) -> LineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < min_points or len(y) != n:
        raise InsufficientDataError(f"need at least {min_points} points, got {n}")
    xm = x.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise InsufficientDataError("degenerate abscissa (all x equal)")
    slope = float(dx @ (y - y.mean())) / sxx
    intercept_c = float(y.mean())  # intercept at x = xm
    resid = y - (intercept_c + slope * dx)
    dof = max(n - 2, 1)
    sigma2 = float(resid @ resid) / dof
    var_slope = sigma2 / sxx
    var_intercept = sigma2 * (1.0 / n + xm**2 / sxx)
    cov_ab = -sigma2 * xm / sxx
    return LineFit(
        intercept=intercept_c - slope * xm,
        slope=slope,
        se_intercept=float(np.sqrt(var_intercept)),
        se_slope=float(np.sqrt(var_slope)),
        cov_ab=cov_ab,
        resid_rms=float(np.sqrt(np.mean(resid**2))),
        n=n,
    )
