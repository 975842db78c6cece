"""Deterministic SVG scenes: ball unions, points, contour grids and chains.

SVG keeps the geometry exact and testable (well-formed XML plus geometric
assertions) without any rendering dependency.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .contour import CubeLattice
from .geometry import Configuration


def _fmt(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".")


class _Scene:
    def __init__(self, window, size: int):
        self.lo = np.asarray(window.lower)
        hi = np.asarray(window.upper)
        extent = hi - self.lo
        self.scale = size / float(np.max(extent))
        self.width = extent[0] * self.scale
        self.height = extent[1] * self.scale
        self.parts: list[str] = []

    def to_px(self, p) -> tuple[float, float]:
        x = (p[0] - self.lo[0]) * self.scale
        y = self.height - (p[1] - self.lo[1]) * self.scale
        return x, y

    def add(self, tag: str, **attrs):
        body = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
        self.parts.append(f"<{tag} {body}/>")

    def document(self) -> str:
        header = (
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{_fmt(self.width)}" height="{_fmt(self.height)}" '
            f'viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">'
        )
        return header + "".join(self.parts) + "</svg>"


def render_scene(
    config: Configuration,
    R: float,
    r: float | None = None,
    lattice: CubeLattice | None = None,
    chain=None,
    size: int = 640,
) -> str:
    """SVG of a 2-D scene: grey union of radius-R discs, the points, optional
    radius-r circles, the cube grid at resolution m, and a separating chain
    of shaded boxes. Layout is deterministic for byte-stable output."""
    if config.dim != 2:
        raise ValueError(
            "render_scene draws d = 2 scenes; for d >= 3 use the 2-D slice diagnostic"
        )
    scene = _Scene(config.window, size)
    scene.add("rect", x=0, y=0, width=_fmt(scene.width), height=_fmt(scene.height), fill="white")

    if lattice is not None:
        lo = config.window.lower
        hi = config.window.upper
        step = lattice.side
        # grid lines at cube boundaries (k +- 1/2)/m
        i = math.ceil((lo[0] - 0.5 * step) / step)
        while (x := (i + 0.5) * step) <= hi[0] + 1e-12:
            if x >= lo[0] - 1e-12:
                x0, _ = scene.to_px((x, lo[1]))
                scene.add(
                    "line", x1=_fmt(x0), y1=0, x2=_fmt(x0), y2=_fmt(scene.height),
                    stroke="#e0e0e0", stroke_width="0.5",
                )
            i += 1
        j = math.ceil((lo[1] - 0.5 * step) / step)
        while (y := (j + 0.5) * step) <= hi[1] + 1e-12:
            if y >= lo[1] - 1e-12:
                _, y0 = scene.to_px((lo[0], y))
                scene.add(
                    "line", x1=0, y1=_fmt(y0), x2=_fmt(scene.width), y2=_fmt(y0),
                    stroke="#e0e0e0", stroke_width="0.5",
                )
            j += 1

    for p in config.points:
        cx, cy = scene.to_px(p)
        scene.add("circle", cx=_fmt(cx), cy=_fmt(cy), r=_fmt(R * scene.scale), fill="#c8c8c8")
    if r is not None:
        for p in config.points:
            cx, cy = scene.to_px(p)
            scene.add(
                "circle", cx=_fmt(cx), cy=_fmt(cy), r=_fmt(r * scene.scale),
                fill="none", stroke="#707070", stroke_width="0.8",
            )
    if chain is not None and lattice is not None:
        h = 0.5 * lattice.side
        for idx in chain:
            c = lattice.center(idx)
            x0, y0 = scene.to_px((c[0] - h, c[1] + h))
            side = lattice.side * scene.scale
            scene.add(
                "rect", x=_fmt(x0), y=_fmt(y0), width=_fmt(side), height=_fmt(side),
                fill="#5a5a5a", fill_opacity="0.75",
            )
    for p in config.points:
        cx, cy = scene.to_px(p)
        scene.add("circle", cx=_fmt(cx), cy=_fmt(cy), r="2", fill="black")
    return scene.document()


def save_svg(path, svg: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    return path
