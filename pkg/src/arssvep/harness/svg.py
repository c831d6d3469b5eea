"""Minimal SVG charts written as text, with fixed number formatting for byte-stable output."""
from __future__ import annotations

from typing import Dict, Sequence, Tuple
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _doc(width: int, height: int, body: Sequence[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>',
                      *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="middle", size=12, extra=""):
    return (f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" font-size="{size}"{extra}>'
            f'{escape(str(s))}</text>')


def _y_axis(left, top, plot_h, plot_w):
    out = []
    for i in range(6):
        v = i / 5
        y = top + plot_h * (1 - v)
        out.append(f'<line x1="{_f(left)}" y1="{_f(y)}" x2="{_f(left + plot_w)}" y2="{_f(y)}" '
                   'stroke="#dddddd"/>')
        out.append(_text(left - 6, y + 4, f"{v:.1f}", anchor="end"))
    return out


def line_chart(series: Dict[str, Sequence[Tuple[float, float]]], title: str,
               xlabel: str, ylabel: str, width: int = 560, height: int = 380) -> str:
    """Lines over a shared x axis; y is fixed to [0, 1]."""
    left, right, top, bottom = 60, 140, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = sorted({x for pts in series.values() for x, _ in pts})
    lo, hi = (xs[0], xs[-1]) if xs else (0.0, 1.0)
    span = hi - lo or 1.0

    def px(x):
        return left + pw * (x - lo) / span

    def py(y):
        return top + ph * (1 - y)

    body = [_text(width / 2, 22, title, size=14)] + _y_axis(left, top, ph, pw)
    for x in xs:
        body.append(_text(px(x), top + ph + 18, f"{x:g}"))
    body.append(_text(left + pw / 2, height - 12, xlabel))
    body.append(_text(16, top + ph / 2, ylabel, extra=f' transform="rotate(-90 16 {_f(top + ph / 2)})"'))
    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = [(x, y) for x, y in pts if y == y]
        if pts:
            path = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in pts)
            body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
            for x, y in pts:
                body.append(f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="3" fill="{color}"/>')
        ly = top + 16 * i + 8
        body.append(f'<line x1="{left + pw + 12}" y1="{_f(ly)}" x2="{left + pw + 32}" '
                    f'y2="{_f(ly)}" stroke="{color}" stroke-width="2"/>')
        body.append(_text(left + pw + 38, ly + 4, name, anchor="start"))
    return _doc(width, height, body)


def bar_chart(values: Dict[str, float], title: str, ylabel: str,
              errors: Dict[str, float] = None, width: int = 480, height: int = 360) -> str:
    """Vertical bars on [0, 1] with optional error whiskers."""
    left, right, top, bottom = 60, 20, 40, 60
    pw, ph = width - left - right, height - top - bottom
    n = max(len(values), 1)
    slot = pw / n
    body = [_text(width / 2, 22, title, size=14)] + _y_axis(left, top, ph, pw)
    body.append(_text(16, top + ph / 2, ylabel, extra=f' transform="rotate(-90 16 {_f(top + ph / 2)})"'))
    for i, (name, v) in enumerate(values.items()):
        x = left + slot * i + slot * 0.15
        v = 0.0 if v != v else min(max(v, 0.0), 1.0)
        y = top + ph * (1 - v)
        body.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(slot * 0.7)}" '
                    f'height="{_f(ph * v)}" fill="{PALETTE[i % len(PALETTE)]}"/>')
        if errors and name in errors and errors[name] == errors[name]:
            cx = x + slot * 0.35
            y0 = top + ph * (1 - min(v + errors[name], 1.0))
            y1 = top + ph * (1 - max(v - errors[name], 0.0))
            body.append(f'<line x1="{_f(cx)}" y1="{_f(y0)}" x2="{_f(cx)}" y2="{_f(y1)}" '
                        'stroke="black"/>')
        body.append(_text(x + slot * 0.35, y - 4, f"{v:.3f}", size=10))
        body.append(_text(x + slot * 0.35, top + ph + 18, name, size=11))
    return _doc(width, height, body)


def hbar_chart(items: Sequence[Tuple[str, float]], title: str, xlabel: str,
               width: int = 560, row_height: int = 18) -> str:
    """Horizontal bars, first item on top, scaled to the largest value."""
    left, right, top, bottom = 150, 70, 40, 40
    height = top + bottom + row_height * max(len(items), 1)
    pw = width - left - right
    vmax = max([v for _, v in items if v == v] + [0.0]) or 1.0
    body = [_text(width / 2, 22, title, size=14)]
    for i, (name, v) in enumerate(items):
        y = top + row_height * i
        w = pw * (v / vmax if v == v else 0.0)
        body.append(_text(left - 6, y + row_height * 0.7, name, anchor="end", size=11))
        body.append(f'<rect x="{left}" y="{_f(y + 2)}" width="{_f(w)}" '
                    f'height="{_f(row_height - 4)}" fill="{PALETTE[0]}"/>')
        body.append(_text(left + w + 4, y + row_height * 0.7, f"{v:.4g}", anchor="start", size=10))
    body.append(_text(left + pw / 2, height - 12, xlabel))
    return _doc(width, height, body)
