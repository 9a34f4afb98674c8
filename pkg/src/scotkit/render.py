"""Deterministic SVG rendering of layout plans for human inspection."""

from __future__ import annotations

from dataclasses import dataclass

from .planner import LayoutPlan, PlannerOutput

_PALETTE = (
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#4699c9",
    "#f032e6", "#808000", "#9a6324", "#568198", "#800000", "#2f6f4f",
)


@dataclass(frozen=True)
class RenderStyle:
    canvas_size: int = 1000
    stroke_width: int = 3
    label_font_size: int = 24

    def color(self, index: int) -> str:
        return _PALETTE[index % len(_PALETTE)]


def render_svg(output: PlannerOutput | LayoutPlan, style: RenderStyle = RenderStyle()) -> str:
    """One labelled rectangle per entity, drawn in object order;
    byte-identical output for identical inputs."""
    if isinstance(output, PlannerOutput):
        items = list(output.objects)
    elif isinstance(output, LayoutPlan):
        items = [
            (f"{i}. {eid}", box)
            for i, (eid, box) in enumerate(output.boxes.items(), start=1)
        ]
    else:
        raise TypeError(f"cannot render {type(output).__name__}")

    s = style.canvas_size / 1000
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        (
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{style.canvas_size}" height="{style.canvas_size}" '
            f'viewBox="0 0 {style.canvas_size} {style.canvas_size}">'
        ),
        (
            f'<rect x="0" y="0" width="{style.canvas_size}" '
            f'height="{style.canvas_size}" fill="#ffffff" stroke="#000000" '
            f'stroke-width="1"/>'
        ),
    ]
    for index, (label, box) in enumerate(items):
        color = style.color(index)
        x = _fmt(box.xmin * s)
        y = _fmt(box.ymin * s)
        w = _fmt(box.width * s)
        h = _fmt(box.height * s)
        lines.append(
            f'<rect x="{x}" y="{y}" width="{w}" height="{h}" '
            f'fill="{color}" fill-opacity="0.15" stroke="{color}" '
            f'stroke-width="{style.stroke_width}"/>'
        )
        tx = _fmt(box.xmin * s + 4)
        ty = _fmt(box.ymin * s + style.label_font_size)
        lines.append(
            f'<text x="{tx}" y="{ty}" font-family="monospace" '
            f'font-size="{style.label_font_size}" fill="{color}">'
            f"{_escape(label)}</text>"
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return f"{value:.2f}"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )
