"""SSIM and per-category aggregation of evaluation records."""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError

CATEGORIES = ("dresses", "upper_body", "lower_body", "viton_hd", "synthetic")
CATEGORY_TITLES = {
    "dresses": "dresses",
    "upper_body": "upper body",
    "lower_body": "lower body",
    "viton_hd": "VITON-HD",
    "synthetic": "synthetic",
}

# ITU-R BT.601 luma weights.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def to_luma(image):
    """Float64 luma of an (H, W) or (H, W, 3|4) array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        return arr[..., :3] @ np.asarray(LUMA_WEIGHTS)
    raise ContractError(f"unsupported image shape {arr.shape}")


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    # Separable weighted sum over every full window position.
    rows = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim(a, b, window=11, k1=0.01, k2=0.03, dynamic_range=255.0, sigma=1.5):
    """Mean structural similarity over all full Gaussian-window positions.

    RGB inputs are reduced to luma first. Local statistics use the normalized
    Gaussian weights (population covariance, no padding).
    """
    x, y = to_luma(a), to_luma(b)
    if x.shape != y.shape:
        raise ContractError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if window % 2 == 0 or window < 1:
        raise ContractError("window must be a positive odd size")
    if window > min(x.shape):
        raise ContractError(f"window {window} larger than image {x.shape}")
    g = gaussian_window(window, sigma)
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class EvalRecord:
    pair_id: str
    category: str
    efficiency: float
    ssim: float = None
    baseline_efficiency: float = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ContractError(f"unknown category {self.category!r}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ContractError(f"efficiency {self.efficiency} outside [0, 1]")


def aggregate(records):
    """Per-category means; categories without records are omitted.

    Returns ``{category: {"n", "efficiency", "ssim", "baseline_efficiency"}}``
    where a metric is None when no record in the category carries it.
    """
    table = {}
    for cat in CATEGORIES:
        rows = [r for r in records if r.category == cat]
        if not rows:
            continue
        entry = {"n": len(rows)}
        for name in ("efficiency", "ssim", "baseline_efficiency"):
            vals = [getattr(r, name) for r in rows if getattr(r, name) is not None]
            entry[name] = float(np.mean(vals)) if vals else None
        table[cat] = entry
    return table


def markdown_table(table, rows=(("trace masker", "efficiency"), ("bbox baseline", "baseline_efficiency")),
                   title="Mask efficiency"):
    """Aligned markdown table: one row per method, one column per category."""
    cats = list(table)
    header = [title] + [CATEGORY_TITLES[c] for c in cats]
    body = []
    for label, key in rows:
        cells = [label]
        for c in cats:
            v = table[c].get(key)
            cells.append("-" if v is None else f"{v:.4f}")
        body.append(cells)
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

    def fmt(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    lines = [fmt(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [fmt(r) for r in body]
    return "\n".join(lines) + "\n"
