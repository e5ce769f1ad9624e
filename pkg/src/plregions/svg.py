"""SVG drawing of a planar arena: one filled path per polygon."""
from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass

import numpy as np

from .region2d import PlaneArena


@dataclass(frozen=True)
class SvgStyle:
    size: int = 800
    stroke: str = "#222"
    stroke_width: float = 0.3
    anchors: bool = True
    anchor_radius: float = 4.0
    precision: int = 4


def pattern_color(pattern: np.ndarray) -> str:
    """Stable color from a hash of the activation pattern."""
    h = hashlib.blake2b(np.ascontiguousarray(pattern, dtype=np.int8).tobytes(), digest_size=4)
    v = int.from_bytes(h.digest(), "little")
    hue = (v & 0xFFFF) / 65536.0
    light = 0.45 + 0.25 * ((v >> 16) & 0xFF) / 255.0
    r, g, b = colorsys.hls_to_rgb(hue, light, 0.65)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def render_svg(arena: PlaneArena, style: SvgStyle = SvgStyle()) -> str:
    half = arena.frame.half
    s = style.size / arena.side
    V = arena.vertices
    X = (V[:, 0] + half) * s
    Y = (half - V[:, 1]) * s           # slice v axis points up
    fx = f"{{:.{style.precision}f}}"
    xs = [fx.format(x) for x in X]
    ys = [fx.format(y) for y in Y]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{style.size}" '
           f'height="{style.size}" viewBox="0 0 {style.size} {style.size}">',
           f'<g stroke="{style.stroke}" stroke-width="{style.stroke_width}" '
           f'stroke-linejoin="round">']
    for pid, poly in enumerate(arena.polygons):
        d = "M" + "L".join(f"{xs[i]},{ys[i]}" for i in poly) + "Z"
        out.append(f'<path d="{d}" fill="{pattern_color(arena.patterns[pid])}"/>')
    out.append("</g>")
    if style.anchors and arena.frame.anchors is not None:
        for u, v in arena.frame.anchors:
            out.append(f'<circle cx="{fx.format((u + half) * s)}" cy="{fx.format((half - v) * s)}" '
                       f'r="{style.anchor_radius}" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
