# src/plots.py
import math
import xml.etree.ElementTree as ET
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .closed_forms import BifurcationClass
from .region import RegionSweep
from .storage import save_text

COLORS = {
    BifurcationClass.SUPERCRITICAL: "#d62728",
    BifurcationClass.SUBCRITICAL: "#f2c200",
    BifurcationClass.DEGENERATE: "#555555",
    None: "#d9d9d9",  # infeasible
}
LABELS = {
    BifurcationClass.SUPERCRITICAL: "supercritical",
    BifurcationClass.SUBCRITICAL: "subcritical",
    BifurcationClass.DEGENERATE: "degenerate",
    None: "infeasible",
}

_MARGIN = 60
_PLOT = 500


def _svg(width: int, height: int) -> ET.Element:
    return ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(width),
        "height": str(height),
        "viewBox": f"0 0 {width} {height}",
    })


def _text(parent: ET.Element, x: float, y: float, text: str, **attrs) -> None:
    el = ET.SubElement(parent, "text", {"x": f"{x:.1f}", "y": f"{y:.1f}", "font-size": "12",
                                        "font-family": "sans-serif", **attrs})
    el.text = text


def _serialize(root: ET.Element) -> str:
    return ET.tostring(root, encoding="unicode")


# -----------------------------
# Region map
# -----------------------------
def region_svg(sweep: RegionSweep, markers: Iterable[Tuple[float, float, str]] = ()) -> str:
    """Cells coloured by class, axes in (gamma, lambda), optional labelled markers."""
    width = height = _PLOT + 2 * _MARGIN + 140
    root = _svg(width, height)
    g0, g1 = float(sweep.gammas[0]), float(sweep.gammas[-1])
    l0, l1 = float(sweep.lambdas[0]), float(sweep.lambdas[-1])
    n_g, n_l = len(sweep.gammas), len(sweep.lambdas)
    cw, ch = _PLOT / n_g, _PLOT / n_l

    def to_x(g):
        return _MARGIN + (g - g0) / (g1 - g0) * (_PLOT - cw) + cw / 2

    def to_y(lam):
        return _MARGIN + _PLOT - ((lam - l0) / (l1 - l0) * (_PLOT - ch) + ch / 2)

    cells = ET.SubElement(root, "g", {"shape-rendering": "crispEdges"})
    for i, row in enumerate(sweep.cells):
        for j, cell in enumerate(row):
            ET.SubElement(cells, "rect", {
                "x": f"{_MARGIN + i * cw:.3f}",
                "y": f"{_MARGIN + _PLOT - (j + 1) * ch:.3f}",
                "width": f"{cw + 0.05:.3f}",
                "height": f"{ch + 0.05:.3f}",
                "fill": COLORS[cell.cls if cell.feasible else None],
            })

    # axes
    axes = ET.SubElement(root, "g", {"stroke": "black", "fill": "none"})
    ET.SubElement(axes, "rect", {"x": str(_MARGIN), "y": str(_MARGIN), "width": str(_PLOT), "height": str(_PLOT)})
    for k in range(6):
        g = g0 + (g1 - g0) * k / 5
        lam = l0 + (l1 - l0) * k / 5
        _text(root, to_x(g), _MARGIN + _PLOT + 18, f"{g:.2f}", **{"text-anchor": "middle"})
        _text(root, _MARGIN - 8, to_y(lam) + 4, f"{lam:.2f}", **{"text-anchor": "end"})
    _text(root, _MARGIN + _PLOT / 2, _MARGIN + _PLOT + 40, "gamma", **{"text-anchor": "middle"})
    _text(root, 16, _MARGIN + _PLOT / 2, "lambda", **{"text-anchor": "middle",
                                                      "transform": f"rotate(-90 16 {_MARGIN + _PLOT / 2})"})

    for g, lam, label in markers:
        ET.SubElement(root, "circle", {"cx": f"{to_x(g):.2f}", "cy": f"{to_y(lam):.2f}", "r": "4",
                                       "fill": "black"})
        _text(root, to_x(g) + 6, to_y(lam) - 6, label)

    # legend
    lx = _MARGIN + _PLOT + 20
    for k, key in enumerate([BifurcationClass.SUPERCRITICAL, BifurcationClass.SUBCRITICAL,
                             BifurcationClass.DEGENERATE, None]):
        y = _MARGIN + 20 * k
        ET.SubElement(root, "rect", {"x": str(lx), "y": str(y), "width": "14", "height": "14",
                                     "fill": COLORS[key], "stroke": "black"})
        _text(root, lx + 20, y + 12, LABELS[key])
    return _serialize(root)


# -----------------------------
# Free surface over the annulus
# -----------------------------
def polar_surface_svg(theta: Sequence[float], S: Sequence[float], title: Optional[str] = None) -> str:
    """Free surface R = S(Theta) with the bed circle R = 1 for reference."""
    size = _PLOT + 2 * _MARGIN
    root = _svg(size, size)
    c = size / 2
    scale = (_PLOT / 2) / (1.1 * max(float(np.max(S)), 1.0))

    ET.SubElement(root, "circle", {"cx": f"{c}", "cy": f"{c}", "r": f"{scale:.3f}",
                                   "fill": "#eeeeee", "stroke": "black", "stroke-dasharray": "4 3"})
    pts = [(c + scale * s * math.cos(t), c - scale * s * math.sin(t)) for t, s in zip(theta, S)]
    pts.append(pts[0])
    ET.SubElement(root, "polyline", {
        "points": " ".join(f"{x:.3f},{y:.3f}" for x, y in pts),
        "fill": "none",
        "stroke": "#1f77b4",
        "stroke-width": "2",
    })
    _text(root, c, c + 4, "R = 1", **{"text-anchor": "middle"})
    if title:
        _text(root, c, 24, title, **{"text-anchor": "middle", "font-size": "14"})
    return _serialize(root)


def save_region_svg(path: str, sweep: RegionSweep, markers: Iterable[Tuple[float, float, str]] = ()) -> None:
    save_text(path, region_svg(sweep, markers))


def save_polar_surface_svg(path: str, theta, S, title: Optional[str] = None) -> None:
    save_text(path, polar_surface_svg(theta, S, title))
