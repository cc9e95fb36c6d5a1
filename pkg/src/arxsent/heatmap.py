"""Render span attributions as a text heatmap.

Positive attributions shade red, negative shade blue, with intensity
proportional to |phi| / max |phi| over the document.  Two output formats:
ANSI truecolor escapes for terminals and a self-contained HTML fragment
with inline styles.
"""

from __future__ import annotations

import html

from .errors import DataError
from .explain import Attribution

ANSI_FORMAT = "ansi"
HTML_FORMAT = "html"

_RESET = "\x1b[0m"
_MAX_ALPHA = 0.8  # full-intensity background opacity in HTML


def _check_alignment(attribution: Attribution, text: str) -> None:
    previous_end = 0
    for value in attribution.values:
        if not (0 <= value.start < value.end <= len(text)):
            raise DataError(
                f"attribution span ({value.start}, {value.end}) does not fit "
                f"text of length {len(text)}"
            )
        if value.start < previous_end:
            raise DataError("attribution spans overlap or are out of order")
        previous_end = value.end


def _ansi_piece(piece: str, phi: float, intensity: float) -> str:
    shade = 255 - round(160 * intensity)
    if phi > 0:
        r, g, b = 255, shade, shade
    else:
        r, g, b = shade, shade, 255
    return f"\x1b[48;2;{r};{g};{b}m\x1b[38;2;0;0;0m{piece}{_RESET}"


def _html_piece(piece: str, phi: float, intensity: float) -> str:
    alpha = round(_MAX_ALPHA * intensity, 3)
    color = f"rgba(220, 38, 38, {alpha})" if phi > 0 else f"rgba(37, 99, 235, {alpha})"
    return (
        f'<span style="background-color: {color};" title="phi={phi:+.6f}">'
        f"{html.escape(piece)}</span>"
    )


def render_heatmap(attribution: Attribution, text: str, format: str = ANSI_FORMAT) -> str:
    """Return ``text`` with each attributed span shaded by its value."""
    if format not in (ANSI_FORMAT, HTML_FORMAT):
        raise DataError(f"unknown heatmap format: {format!r}")
    _check_alignment(attribution, text)

    max_abs = max((abs(value.phi) for value in attribution.values), default=0.0)

    pieces = []
    cursor = 0
    for value in attribution.values:
        gap = text[cursor:value.start]
        piece = text[value.start:value.end]
        cursor = value.end
        if format == HTML_FORMAT:
            gap = html.escape(gap)
        pieces.append(gap)
        if max_abs == 0.0 or value.phi == 0.0:
            pieces.append(html.escape(piece) if format == HTML_FORMAT else piece)
            continue
        intensity = abs(value.phi) / max_abs
        if format == ANSI_FORMAT:
            pieces.append(_ansi_piece(piece, value.phi, intensity))
        else:
            pieces.append(_html_piece(piece, value.phi, intensity))
    tail = text[cursor:]
    pieces.append(html.escape(tail) if format == HTML_FORMAT else tail)

    body = "".join(pieces)
    if format == ANSI_FORMAT:
        return body
    return (
        f'<div class="attribution-heatmap" data-target="{html.escape(attribution.target_label)}" '
        f'data-model="{html.escape(attribution.model_id)}">{body}</div>'
    )
