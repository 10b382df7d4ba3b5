"""Static SVG rendering of a document's layout and succession arrows.

Output is plain SVG 1.1 text assembled from sorted primitives with fixed
formatting, so the same document always renders to byte-identical markup.
"""

from __future__ import annotations

from .layout import Document

_STYLE = (
    "rect { fill: #eef3fa; stroke: #34495e; stroke-width: 2; } "
    "text { font: 14px monospace; fill: #1a2733; } "
    "line { stroke: #c0392b; stroke-width: 2.5; marker-end: url(#tip); }"
)


def _fmt(value: float) -> str:
    # Fixed one-decimal formatting keeps the output byte-stable.
    return f"{value:.1f}"


def render_svg(doc: Document) -> str:
    """Segment rectangles plus one arrow per succession pair."""
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="0 0 {doc.page_width} {doc.page_height}" '
        f'width="{doc.page_width}" height="{doc.page_height}">',
        f"<style>{_STYLE}</style>",
        "<defs>",
        '<marker id="tip" viewBox="0 0 10 10" refX="9" refY="5" '
        'markerWidth="7" markerHeight="7" orient="auto-start-reverse">'
        '<path d="M 0 0 L 10 5 L 0 10 z" fill="#c0392b"/></marker>',
        "</defs>",
        f'<rect x="0" y="0" width="{doc.page_width}" height="{doc.page_height}" '
        'fill="#ffffff" stroke="none"/>',
    ]
    for seg in doc.segments:
        box = seg.box
        lines.append(
            f'<rect x="{box.x0}" y="{box.y0}" width="{box.x1 - box.x0}" '
            f'height="{box.y1 - box.y0}"/>'
        )
        lines.append(
            f'<text x="{box.x0 + 6}" y="{box.y0 + 18}">{seg.id}</text>'
        )
    if doc.isdr is not None:
        centers = {seg.id: seg.box.center() for seg in doc.segments}
        for a, b in doc.isdr.sorted_pairs():
            (x0, y0), (x1, y1) = centers[a], centers[b]
            lines.append(
                f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" '
                f'x2="{_fmt(x1)}" y2="{_fmt(y1)}"/>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
