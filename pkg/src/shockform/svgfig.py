"""Tiny self-contained SVG line plots (log or linear axes, no dependencies)."""

from __future__ import annotations

import math

__all__ = ["Figure"]

_COLORS = ["#1b7837", "#762a83", "#2166ac", "#b2182b", "#e08214", "#555555"]


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / target))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= target:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * span:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    lo_e = math.ceil(math.log10(lo) - 1e-12)
    hi_e = math.floor(math.log10(hi) + 1e-12)
    return [10.0**e for e in range(lo_e, hi_e + 1)]


def _fmt_tick(v: float, log: bool) -> str:
    if log:
        e = round(math.log10(v))
        return f"1e{e}"
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:g}"


class Figure:
    """Accumulates polylines/points, renders a standalone SVG document."""

    def __init__(
        self,
        title: str = "",
        xlabel: str = "",
        ylabel: str = "",
        xlog: bool = False,
        ylog: bool = False,
        width: int = 640,
        height: int = 440,
    ):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.xlog = xlog
        self.ylog = ylog
        self.width = width
        self.height = height
        self.margin = (60, 20, 45, 55)  # left, right, bottom offset, top offset
        self._series = []  # (kind, x, y, label, color, dashed)
        self._color_idx = 0

    def _next_color(self):
        color = _COLORS[self._color_idx % len(_COLORS)]
        self._color_idx += 1
        return color

    def add_line(self, x, y, label: str = "", color: str | None = None,
                 dashed: bool = False):
        self._series.append(
            ("line", list(map(float, x)), list(map(float, y)), label,
             color or self._next_color(), dashed)
        )

    def add_points(self, x, y, label: str = "", color: str | None = None):
        self._series.append(
            ("points", list(map(float, x)), list(map(float, y)), label,
             color or self._next_color(), False)
        )

    def _transforms(self):
        xs, ys = [], []
        for _, x, y, _, _, _ in self._series:
            for xv, yv in zip(x, y):
                if self.xlog and xv <= 0:
                    continue
                if self.ylog and yv <= 0:
                    continue
                if math.isfinite(xv) and math.isfinite(yv):
                    xs.append(xv)
                    ys.append(yv)
        if not xs:
            xs, ys = [0.0, 1.0], [0.0, 1.0]
        fx = (lambda v: math.log10(v)) if self.xlog else (lambda v: v)
        fy = (lambda v: math.log10(v)) if self.ylog else (lambda v: v)
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_lo == x_hi:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        if y_lo == y_hi:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        tx_lo, tx_hi = fx(x_lo), fx(x_hi)
        ty_lo, ty_hi = fy(y_lo), fy(y_hi)
        pad_x = 0.04 * (tx_hi - tx_lo)
        pad_y = 0.06 * (ty_hi - ty_lo)
        tx_lo, tx_hi = tx_lo - pad_x, tx_hi + pad_x
        ty_lo, ty_hi = ty_lo - pad_y, ty_hi + pad_y
        left, right, bottom, top = self.margin
        plot_w = self.width - left - right
        plot_h = self.height - bottom - top

        def to_px(xv, yv):
            u = (fx(xv) - tx_lo) / (tx_hi - tx_lo)
            v = (fy(yv) - ty_lo) / (ty_hi - ty_lo)
            return left + u * plot_w, top + (1.0 - v) * plot_h

        return to_px, (x_lo, x_hi, y_lo, y_hi)

    def render(self) -> str:
        to_px, (x_lo, x_hi, y_lo, y_hi) = self._transforms()
        left, right, bottom, top = self.margin
        x0, y0 = left, self.height - bottom
        x1, y1 = self.width - right, top
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
            f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
            'fill="none" stroke="#333" stroke-width="1"/>',
        ]
        if self.title:
            parts.append(
                f'<text x="{self.width / 2}" y="{top - 8}" text-anchor="middle" '
                f'font-size="14" font-family="sans-serif">{self.title}</text>'
            )
        xticks = _log_ticks(x_lo, x_hi) if self.xlog else _nice_ticks(x_lo, x_hi)
        for tv in xticks:
            px, _ = to_px(tv, y_lo)
            if not x0 - 1 <= px <= x1 + 1:
                continue
            parts.append(
                f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 5}" '
                'stroke="#333"/>'
            )
            parts.append(
                f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle" '
                f'font-size="11" font-family="sans-serif">'
                f"{_fmt_tick(tv, self.xlog)}</text>"
            )
        yticks = _log_ticks(y_lo, y_hi) if self.ylog else _nice_ticks(y_lo, y_hi)
        for tv in yticks:
            _, py = to_px(x_lo, tv)
            if not y1 - 1 <= py <= y0 + 1:
                continue
            parts.append(
                f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" '
                'stroke="#333"/>'
            )
            parts.append(
                f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end" '
                f'font-size="11" font-family="sans-serif">'
                f"{_fmt_tick(tv, self.ylog)}</text>"
            )
        if self.xlabel:
            parts.append(
                f'<text x="{(x0 + x1) / 2}" y="{self.height - 8}" '
                'text-anchor="middle" font-size="12" font-family="sans-serif">'
                f"{self.xlabel}</text>"
            )
        if self.ylabel:
            cy = (y0 + y1) / 2
            parts.append(
                f'<text x="14" y="{cy}" text-anchor="middle" font-size="12" '
                f'font-family="sans-serif" transform="rotate(-90 14 {cy})">'
                f"{self.ylabel}</text>"
            )

        legend_y = y1 + 16
        for kind, xv, yv, label, color, dashed in self._series:
            pts = [
                to_px(a, b)
                for a, b in zip(xv, yv)
                if math.isfinite(a) and math.isfinite(b)
                and (not self.xlog or a > 0) and (not self.ylog or b > 0)
            ]
            if kind == "line" and len(pts) >= 2:
                d = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
                dash = ' stroke-dasharray="6 4"' if dashed else ""
                parts.append(
                    f'<polyline points="{d}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5"{dash}/>'
                )
            elif kind == "points":
                for px, py in pts:
                    parts.append(
                        f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.2" '
                        f'fill="{color}" fill-opacity="0.7"/>'
                    )
            if label:
                parts.append(
                    f'<line x1="{x1 - 150}" y1="{legend_y - 4}" x2="{x1 - 125}" '
                    f'y2="{legend_y - 4}" stroke="{color}" stroke-width="2"'
                    + (' stroke-dasharray="6 4"' if dashed else "")
                    + "/>"
                )
                parts.append(
                    f'<text x="{x1 - 118}" y="{legend_y}" font-size="11" '
                    f'font-family="sans-serif">{label}</text>'
                )
                legend_y += 16
        parts.append("</svg>")
        return "\n".join(parts)
