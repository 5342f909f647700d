"""Minimal deterministic SVG emission for predicted-over-pure overlays."""

import numpy as np

WIDTH = 900
HEIGHT = 320
PAD = 10


def _polyline(values, lo, hi, color, width="1.2"):
    n = values.size
    span = hi - lo if hi > lo else 1.0
    xs = PAD + (WIDTH - 2 * PAD) * np.arange(n) / max(n - 1, 1)
    ys = HEIGHT - PAD - (HEIGHT - 2 * PAD) * (values - lo) / span
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'points="{points}"/>')


def overlay_svg(pure, predicted_mapped) -> str:
    """Pure component in red underneath the affine-mapped prediction in black.

    A perfect prediction fully occludes the red trace.
    """
    pure = np.asarray(pure, dtype=float)
    predicted_mapped = np.asarray(predicted_mapped, dtype=float)
    lo = float(min(pure.min(), predicted_mapped.min()))
    hi = float(max(pure.max(), predicted_mapped.max()))
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        _polyline(pure, lo, hi, "red", width="1.6"),
        _polyline(predicted_mapped, lo, hi, "black"),
        "</svg>",
        "",
    ])


def write_overlay(path, pure, predicted, fit):
    """Map the prediction onto the pure component's scale and render."""
    m = fit.M if fit.M != 0 else 1.0
    mapped = (np.asarray(predicted, dtype=float) - fit.B) / m
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(overlay_svg(pure, mapped))
