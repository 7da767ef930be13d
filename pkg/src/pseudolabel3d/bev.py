"""Bird's-eye-view SVG rendering of a frame with predicted and ground-truth boxes.

The canvas covers a fixed square of +/-54 m around the LiDAR origin in world
units (one SVG user unit per metre). Geometry is drawn inside a group that
flips the y axis so +y points up; text is drawn outside it so it stays
readable. All numbers are written with a fixed three-decimal format, so the
same inputs always give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import IoError
from .semantics import LabeledBox

if TYPE_CHECKING:
    from .scene import Frame

BEV_EXTENT = 54.0
RANGE_RINGS = (18.0, 34.0, 54.0)
CANVAS_PX = 1080

PRED_COLOR = "#1f77b4"
GT_COLOR = "#2ca02c"
POINT_COLOR = "#555555"


def _f(x: float) -> str:
    s = f"{float(x):.3f}"
    return "0.000" if s == "-0.000" else s


def _rect(box: LabeledBox, color: str, dashed: bool) -> str:
    cx, cy, _ = box.box.center
    w, l, _ = box.box.size
    dash = ' stroke-dasharray="0.4 0.2"' if dashed else ""
    return (
        f'<rect x="{_f(cx - w / 2)}" y="{_f(cy - l / 2)}" width="{_f(w)}" height="{_f(l)}" '
        f'fill="none" stroke="{color}" stroke-width="0.15"{dash}/>'
    )


def _label(box: LabeledBox, color: str) -> str:
    cx, cy, _ = box.box.center
    _, l, _ = box.box.size
    # text lives in the unflipped frame: world y maps to -y
    return (
        f'<text x="{_f(cx)}" y="{_f(-(cy + l / 2) - 0.3)}" font-size="1.2" '
        f'text-anchor="middle" fill="{color}">{escape(box.class_name)}</text>'
    )


def render_bev_svg(
    points: Optional[np.ndarray],
    boxes: Sequence[LabeledBox],
    gt: Optional[Sequence[LabeledBox]] = None,
    title: str = "",
    point_stride: int = 1,
    extent: float = BEV_EXTENT,
) -> str:
    e = _f(extent)
    size = _f(2 * extent)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_PX}" height="{CANVAS_PX}" '
        f'viewBox="-{e} -{e} {size} {size}">',
    ]
    if title:
        lines.append(f"<title>{escape(title)}</title>")
    lines.append(f'<rect x="-{e}" y="-{e}" width="{size}" height="{size}" fill="white"/>')
    lines.append('<g id="world" transform="scale(1,-1)">')
    lines.append('<g id="axes" stroke="#999999" stroke-width="0.05" fill="none">')
    lines.append(f'<line x1="-{e}" y1="0.000" x2="{e}" y2="0.000"/>')
    lines.append(f'<line x1="0.000" y1="-{e}" x2="0.000" y2="{e}"/>')
    for r in RANGE_RINGS:
        if r <= extent:
            lines.append(f'<circle cx="0.000" cy="0.000" r="{_f(r)}"/>')
    lines.append("</g>")

    if points is not None and len(points):
        xy = np.asarray(points, dtype=np.float64)[:: max(1, int(point_stride)), :2]
        inside = np.all(np.abs(xy) <= extent, axis=1)
        lines.append(f'<g id="points" fill="{POINT_COLOR}">')
        lines.extend(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="0.060"/>' for x, y in xy[inside])
        lines.append("</g>")
    if gt:
        lines.append('<g id="gt">')
        lines.extend(_rect(b, GT_COLOR, True) for b in gt)
        lines.append("</g>")
    lines.append('<g id="predictions">')
    lines.extend(_rect(b, PRED_COLOR, False) for b in boxes)
    lines.append("</g>")
    lines.append("</g>")

    lines.append('<g id="labels" font-family="sans-serif">')
    if gt:
        lines.extend(_label(b, GT_COLOR) for b in gt)
    lines.extend(_label(b, PRED_COLOR) for b in boxes)
    lines.append("</g>")
    lines.append(f"<desc>{escape('extent_m=' + e)}</desc>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def export_bev_svg(
    frame: Optional["Frame"],
    boxes: Sequence[LabeledBox],
    gt: Optional[Sequence[LabeledBox]],
    path,
    point_stride: int = 1,
) -> Path:
    """Write the BEV figure for ``frame`` (``None`` draws axes and boxes only)."""
    points = None if frame is None else frame.points
    title = "" if frame is None else f"frame {frame.frame_id}"
    svg = render_bev_svg(points, boxes, gt, title, point_stride)
    out = Path(path)
    try:
        out.write_text(svg, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc}") from exc
    return out

