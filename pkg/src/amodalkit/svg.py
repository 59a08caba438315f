"""Minimal SVG emission for the relation bar charts (no plotting framework)."""

VW_COLOR = "#4878a8"
OW_COLOR = "#d08a30"

_BAR_W = 22
_GROUP_W = 64
_PLOT_H = 220
_MARGIN_L = 56
_MARGIN_T = 34
_MARGIN_B = 46


def grouped_weight_chart(title: str, group_labels, vw_values, ow_values) -> str:
    """Two bars per group (visible weight, occluded weight) around a zero line.

    Bars grow up for positive weights and down for negative ones; the
    vertical scale adapts to the largest magnitude present.
    """
    if not (len(group_labels) == len(vw_values) == len(ow_values)):
        raise ValueError("labels and value series must have equal length")
    k = len(group_labels)
    width = _MARGIN_L + max(k, 1) * _GROUP_W + 24
    height = _MARGIN_T + _PLOT_H + _MARGIN_B
    zero_y = _MARGIN_T + _PLOT_H / 2.0
    vmax = max([abs(v) for v in list(vw_values) + list(ow_values)] + [1e-9])
    scale = (_PLOT_H / 2.0 - 6) / vmax

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN_L}" y1="{zero_y:.1f}" x2="{width - 16}" y2="{zero_y:.1f}" '
        f'stroke="#444" stroke-width="1"/>',
        f'<text x="{_MARGIN_L - 8}" y="{zero_y + 4:.1f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">0</text>',
    ]
    for g in range(k):
        x0 = _MARGIN_L + g * _GROUP_W + 8
        for off, value, color, series in (
            (0, float(vw_values[g]), VW_COLOR, "vw"),
            (_BAR_W + 4, float(ow_values[g]), OW_COLOR, "ow"),
        ):
            h = abs(value) * scale
            y = zero_y - h if value > 0 else zero_y
            parts.append(
                f'<rect class="bar" data-series="{series}" data-value="{value:.6g}" '
                f'x="{x0 + off:.1f}" y="{y:.1f}" width="{_BAR_W}" height="{h:.1f}" '
                f'fill="{color}"/>'
            )
        parts.append(
            f'<text x="{x0 + _BAR_W + 2:.1f}" y="{_MARGIN_T + _PLOT_H + 16}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f"{group_labels[g]}</text>"
        )
    legend_y = height - 12
    parts.append(
        f'<rect x="{_MARGIN_L}" y="{legend_y - 10}" width="12" height="12" fill="{VW_COLOR}"/>'
        f'<text x="{_MARGIN_L + 16}" y="{legend_y}" font-family="sans-serif" '
        f'font-size="11">visible weight</text>'
        f'<rect x="{_MARGIN_L + 120}" y="{legend_y - 10}" width="12" height="12" fill="{OW_COLOR}"/>'
        f'<text x="{_MARGIN_L + 136}" y="{legend_y}" font-family="sans-serif" '
        f'font-size="11">occluded weight</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
