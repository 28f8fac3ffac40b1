"""SVG/CSV rendering of metrics logs. No plotting library: the files are
assembled from strings with fixed float formatting, so identical logs give
identical bytes (golden-testable).
"""

from pathlib import Path

from replaylab.errors import ContractViolation
from replaylab.harness import write_curriculum_csv

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 30, 40

TIER_COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52")
LINE_COLOR = "#4c72b0"


def _check_series(xs, ys):
    if len(xs) != len(ys):
        raise ContractViolation("x and y series must have equal length")
    for v in list(xs) + list(ys):
        if not isinstance(v, (int, float)) or v != v:
            raise ContractViolation(f"series values must be finite numbers, got {v!r}")


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo
    if span == 0:
        return [(out_lo + out_hi) / 2.0 for _ in values]
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _axes(x_label: str, y_label: str) -> list[str]:
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    x1, y1 = WIDTH - MARGIN_R, MARGIN_T
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{x_label}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">{y_label}</text>',
    ]


def _tick_labels(xs, ys) -> list[str]:
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    parts = [
        f'<text x="{x0}" y="{y0 + 16}" text-anchor="middle">{min(xs):g}</text>',
        f'<text x="{WIDTH - MARGIN_R}" y="{y0 + 16}" text-anchor="middle">{max(xs):g}</text>',
        f'<text x="{x0 - 6}" y="{y0 + 4}" text-anchor="end">{min(ys):.3g}</text>',
        f'<text x="{x0 - 6}" y="{MARGIN_T + 4}" text-anchor="end">{max(ys):.3g}</text>',
    ]
    return parts


def line_chart(xs, ys, title: str, x_label: str, y_label: str) -> str:
    _check_series(xs, ys)
    parts = _svg_open(title) + _axes(x_label, y_label)
    if len(xs) == 1:
        px = _scale(xs, xs[0] - 1, xs[0] + 1, MARGIN_L, WIDTH - MARGIN_R)[0]
        py = _scale(ys, ys[0] - 1, ys[0] + 1, HEIGHT - MARGIN_B, MARGIN_T)[0]
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="{LINE_COLOR}"/>')
    elif xs:
        px = _scale(xs, min(xs), max(xs), MARGIN_L, WIDTH - MARGIN_R)
        py = _scale(ys, min(ys), max(ys), HEIGHT - MARGIN_B, MARGIN_T)
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{LINE_COLOR}" stroke-width="1.5"/>'
        )
        parts.extend(_tick_labels(xs, ys))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def stacked_mass_chart(xs, layers: dict[str, list], title: str, x_label: str) -> str:
    """Stacked filled bands, one per tier, bottom to top; masses sum to 1."""
    for tier, series in layers.items():
        _check_series(xs, series)
    parts = _svg_open(title) + _axes(x_label, "probability mass")
    if len(xs) >= 2:
        px = _scale(xs, min(xs), max(xs), MARGIN_L, WIDTH - MARGIN_R)
        base = [0.0] * len(xs)
        tiers = sorted(layers)
        for i, tier in enumerate(tiers):
            top = [b + v for b, v in zip(base, layers[tier])]
            py_lo = _scale(base, 0.0, 1.0, HEIGHT - MARGIN_B, MARGIN_T)
            py_hi = _scale(top, 0.0, 1.0, HEIGHT - MARGIN_B, MARGIN_T)
            forward = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py_hi))
            back = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(reversed(px), reversed(py_lo)))
            color = TIER_COLORS[i % len(TIER_COLORS)]
            parts.append(
                f'<polygon points="{forward} {back}" fill="{color}" fill-opacity="0.8" '
                f'stroke="none"><title>tier {tier}</title></polygon>'
            )
            base = top
        for i, tier in enumerate(tiers):
            color = TIER_COLORS[i % len(TIER_COLORS)]
            y = MARGIN_T + 14 * i
            parts.append(
                f'<rect x="{WIDTH - MARGIN_R - 70}" y="{y}" width="10" height="10" fill="{color}"/>'
            )
            parts.append(
                f'<text x="{WIDTH - MARGIN_R - 56}" y="{y + 9}">tier {tier}</text>'
            )
        parts.extend(_tick_labels(xs, [0.0, 1.0]))
    elif len(xs) == 1:
        px = (MARGIN_L + WIDTH - MARGIN_R) / 2.0
        parts.append(f'<circle cx="{px:.2f}" cy="{(MARGIN_T + HEIGHT - MARGIN_B) / 2:.2f}" '
                     f'r="4" fill="{LINE_COLOR}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(records: list[dict], out_dir) -> list[Path]:
    """Write test-return and curriculum charts plus the curriculum CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evals = [r for r in records if "test_return_mean" in r]
    if not evals:
        raise ContractViolation("no evaluation records to plot")
    for rec in evals:
        if "step" not in rec or "tier_mass_replay" not in rec:
            raise ContractViolation("metrics record is missing required fields")

    xs = [r["step"] for r in evals]
    ys = [r["test_return_mean"] for r in evals]
    paths = []

    path = out_dir / "test_return.svg"
    path.write_text(line_chart(xs, ys, "test return", "environment steps", "mean return"))
    paths.append(path)

    tiers = sorted(evals[0]["tier_mass_replay"])
    layers = {t: [r["tier_mass_replay"][t] for r in evals] for t in tiers}
    path = out_dir / "curriculum.svg"
    path.write_text(
        stacked_mass_chart(xs, layers, "replay mass by difficulty tier", "environment steps")
    )
    paths.append(path)

    path = out_dir / "curriculum.csv"
    write_curriculum_csv(evals, path)
    paths.append(path)
    return paths
