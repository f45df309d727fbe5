"""Plain SVG plots: transition-matrix heatmaps and per-state power trajectories.

Output is plain text built from fixed-precision numbers, so the same input
always yields the same bytes.  Each plotted element carries its data value
in a ``data-*`` attribute so tests can read the numbers back.
"""

from __future__ import annotations

import re
from xml.sax.saxutils import escape

import numpy as np

# 20-color qualitative palette
PALETTE = (
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896",
    "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7",
    "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
)  # fmt: skip
LOW, HIGH = (255, 255, 255), (8, 48, 107)


def _color(v: float) -> str:
    v = min(max(float(v), 0.0), 1.0)
    r, g, b = (round(lo + (hi - lo) * v) for lo, hi in zip(LOW, HIGH))
    return f"#{r:02x}{g:02x}{b:02x}"


def _num(v: float) -> str:
    return f"{v:.2f}"


def _header(width: float, height: float, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
        f'viewBox="0 0 {_num(width)} {_num(height)}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_num(width)}" height="{_num(height)}" fill="#ffffff"/>',
        f'<text x="{_num(width / 2)}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def heatmap_svg(probs: np.ndarray, title: str = "Transition probabilities", cell: float = 20.0) -> str:
    """Heatmap of ``probs[a, b]``: columns are source states, rows destinations."""
    P = np.asarray(probs, dtype=float)
    S = P.shape[0]
    cell = max(4.0, min(cell, 600.0 / S))
    left, top = 60.0, 40.0
    size = cell * S
    width, height = left + size + 90.0, top + size + 50.0
    out = _header(width, height, title)
    out.append('<g class="cells">')
    for a in range(S):
        for b in range(S):
            out.append(
                f'<rect x="{_num(left + b * cell)}" y="{_num(top + a * cell)}" width="{_num(cell)}" '
                f'height="{_num(cell)}" fill="{_color(P[a, b])}" data-to="{a}" data-from="{b}" '
                f'data-prob="{float(P[a, b])!r}"/>'
            )
    out.append("</g>")
    out.append(
        f'<rect x="{_num(left)}" y="{_num(top)}" width="{_num(size)}" height="{_num(size)}" '
        'fill="none" stroke="#000000"/>'
    )
    step = max(1, S // 10)
    for k in range(0, S, step):
        out.append(
            f'<text x="{_num(left + (k + 0.5) * cell)}" y="{_num(top + size + 14)}" text-anchor="middle">{k}</text>'
        )
        out.append(f'<text x="{_num(left - 6)}" y="{_num(top + (k + 0.5) * cell + 4)}" text-anchor="end">{k}</text>')
    out.append(
        f'<text x="{_num(left + size / 2)}" y="{_num(top + size + 32)}" text-anchor="middle">from state</text>'
    )
    out.append(
        f'<text x="16" y="{_num(top + size / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_num(top + size / 2)})">to state</text>'
    )
    # colorbar, probability 0 at the bottom
    bx, n_seg = left + size + 20.0, 50
    seg = size / n_seg
    out.append('<g class="colorbar">')
    for k in range(n_seg):
        v = (k + 0.5) / n_seg
        out.append(
            f'<rect x="{_num(bx)}" y="{_num(top + size - (k + 1) * seg)}" width="14" height="{_num(seg + 0.5)}" '
            f'fill="{_color(v)}"/>'
        )
    for v in (0.0, 0.5, 1.0):
        out.append(f'<text x="{_num(bx + 18)}" y="{_num(top + size - v * size + 4)}">{v:.1f}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trajectory_svg(
    rho: np.ndarray,
    p_alpha: np.ndarray,
    title: str = "Expected power by state",
    y_label: str = "kW",
) -> str:
    """Per-state curves ``rho[t, a] * p_alpha[a]`` plus their sum (the expected power)."""
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p_alpha, dtype=float)
    T1, S = rho.shape
    contrib = rho * p[None, :]
    total = contrib.sum(axis=1)
    left, top, pw, ph = 60.0, 40.0, 640.0, 300.0
    legend_rows = int(np.ceil(S / 6))
    width, height = left + pw + 20.0, top + ph + 50.0 + 16.0 * legend_rows
    y_max = max(float(total.max()), float(contrib.max()), 1e-12) * 1.05
    y_min = min(0.0, float(contrib.min()))

    def px(t):
        return left + pw * (t / max(T1 - 1, 1))

    def py(v):
        return top + ph - ph * (v - y_min) / (y_max - y_min)

    out = _header(width, height, title)
    out.append(
        f'<rect x="{_num(left)}" y="{_num(top)}" width="{_num(pw)}" height="{_num(ph)}" fill="none" stroke="#000000"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        v = y_min + frac * (y_max - y_min)
        out.append(f'<text x="{_num(left - 6)}" y="{_num(py(v) + 4)}" text-anchor="end">{v:.2f}</text>')
    for t in sorted({0, (T1 - 1) // 2, T1 - 1}):
        out.append(f'<text x="{_num(px(t))}" y="{_num(top + ph + 14)}" text-anchor="middle">{t}</text>')
    out.append(f'<text x="{_num(left + pw / 2)}" y="{_num(top + ph + 30)}" text-anchor="middle">step</text>')
    out.append(
        f'<text x="16" y="{_num(top + ph / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_num(top + ph / 2)})">{escape(y_label)}</text>'
    )

    def line(values, color, attrs, widthpx):
        pts = " ".join(f"{_num(px(t))},{_num(py(v))}" for t, v in enumerate(values))
        data = ",".join(repr(float(v)) for v in values)
        return (
            f'<polyline fill="none" stroke="{color}" stroke-width="{widthpx}" points="{pts}" '
            f'{attrs} data-values="{data}"/>'
        )

    for a in range(S):
        out.append(line(contrib[:, a], PALETTE[a % len(PALETTE)], f'data-state="{a}"', 1.2))
    out.append(line(total, "#000000", 'data-state="total"', 2.0))

    ly = top + ph + 46.0
    for a in range(S):
        x = left + (a % 6) * (pw / 6)
        y = ly + (a // 6) * 16.0
        out.append(f'<rect x="{_num(x)}" y="{_num(y - 8)}" width="10" height="10" fill="{PALETTE[a % len(PALETTE)]}"/>')
        out.append(f'<text x="{_num(x + 14)}" y="{_num(y + 1)}">state {a} ({p[a]:.2f} kW)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_polylines(svg: str) -> dict[str, np.ndarray]:
    """Recover ``data-values`` of each polyline, keyed by ``data-state``."""
    out = {}
    for m in re.finditer(r'data-state="([^"]+)" data-values="([^"]*)"', svg):
        out[m.group(1)] = np.array([float(v) for v in m.group(2).split(",")])
    return out
