"""Standalone SVG charts with a fixed layout (no plotting backend needed)."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

W, H = 640, 400
MARGIN = 50


def _svg(body: list[str], title: str, width=W, height=H) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>',
                      f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
                      *body, "</svg>", ""])


def _axes(xlabel: str, ylabel: str, y_ticks) -> list[str]:
    x0, y0, x1, y1 = MARGIN, H - MARGIN, W - MARGIN / 2, MARGIN
    out = [f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
           f'<text x="{(x0 + x1) / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>']
    for frac, label in y_ticks:
        y = y0 - frac * (y0 - y1)
        out.append(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{escape(label)}</text>')
    return out


def fitness_plot(store, threshold: float, title: str = "Fitness by test index") -> str:
    records = list(store)
    n = max(1, len(records) - 1)
    x0, y0, x1, y1 = MARGIN, H - MARGIN, W - MARGIN / 2, MARGIN
    body = _axes("test index", "fitness", [(v, f"{v:.1f}") for v in (0.0, 0.25, 0.5, 0.75, 1.0)])
    ty = y0 - threshold * (y0 - y1)
    body.append(f'<line x1="{x0}" y1="{ty:.1f}" x2="{x1}" y2="{ty:.1f}" stroke="grey" stroke-dasharray="4 3"/>')
    for r in records:
        x = x0 + r.index / n * (x1 - x0)
        if not r.executed:
            body.append(f'<line x1="{x:.1f}" y1="{y0 + 3}" x2="{x:.1f}" y2="{y0 + 8}" stroke="#bbbbbb"/>')
            continue
        y = y0 - r.fitness * (y0 - y1)
        colour = "#c0392b" if r.fitness > threshold else ("#2c7fb8" if r.phase == "wogan" else "#7f7f7f")
        body.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{colour}"/>')
    return _svg(body, title)


def coverage_heatmap(grid, title: str = "Failing-road map coverage") -> str:
    n = grid.cells_per_side
    side = H - 2 * MARGIN
    cell = side / n
    ox = (W - side) / 2
    body = []
    for row in range(n):
        for col in range(n):
            fill = "#c0392b" if grid.occupied[row, col] else "#f2f2f2"
            x = ox + col * cell
            y = MARGIN + (n - 1 - row) * cell  # north up
            body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell:.2f}" height="{cell:.2f}" '
                        f'fill="{fill}" stroke="white" stroke-width="0.5"/>')
    body.append(f'<text x="{W / 2:.1f}" y="{H - 16}" text-anchor="middle">'
                f'coverage {grid.fraction:.3f} ({int(grid.occupied.sum())} of {n * n} cells)</text>')
    return _svg(body, title)


def bar_plot(groups: dict[str, tuple[float, float]], ylabel: str, title: str) -> str:
    """Bars of means with one-SD whiskers, one bar per group."""
    names = list(groups)
    top = max([m + s for m, s in groups.values()] + [1e-9])
    x0, y0, x1, y1 = MARGIN, H - MARGIN, W - MARGIN / 2, MARGIN
    body = _axes("", ylabel, [(f, f"{f * top:.3g}") for f in (0.0, 0.5, 1.0)])
    slot = (x1 - x0) / max(1, len(names))
    for i, name in enumerate(names):
        mean, sd = groups[name]
        cx = x0 + (i + 0.5) * slot
        bw = slot * 0.5
        yb = y0 - mean / top * (y0 - y1)
        body.append(f'<rect x="{cx - bw / 2:.1f}" y="{yb:.1f}" width="{bw:.1f}" height="{y0 - yb:.1f}" fill="#2c7fb8"/>')
        lo = y0 - max(0.0, mean - sd) / top * (y0 - y1)
        hi = y0 - (mean + sd) / top * (y0 - y1)
        body.append(f'<line x1="{cx:.1f}" y1="{lo:.1f}" x2="{cx:.1f}" y2="{hi:.1f}" stroke="black"/>')
        body.append(f'<text x="{cx:.1f}" y="{y0 + 16}" text-anchor="middle">{escape(name)}</text>')
        body.append(f'<text x="{cx:.1f}" y="{hi - 6:.1f}" text-anchor="middle">{mean:.2f} ± {sd:.2f}</text>')
    return _svg(body, title)


def save(text: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
