"""Label rasters, binary masks and the set/morphology operations on them.

Arrays are row-major with a top-left origin. Both value types are immutable:
the underlying numpy arrays are copied on construction and marked read-only.
"""

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ContractError

BODY_PARTS = "body_parts"
CLOTHING = "clothing"


class BodyPart(IntEnum):
    # Side-agnostic: left and right limbs share a label.
    BACKGROUND = 0
    FACE = 1
    UPPER_TORSO = 2
    LOWER_TORSO = 3
    UPPER_ARMS = 4
    LOWER_ARMS = 5
    HANDS = 6
    UPPER_LEGS = 7
    LOWER_LEGS = 8
    FEET = 9


BODY_LEGEND = MappingProxyType({int(p): p.name.lower() for p in BodyPart})
PROTECTED_PARTS = frozenset({BodyPart.FACE, BodyPart.HANDS, BodyPart.FEET})
TORSO_PARTS = frozenset({BodyPart.UPPER_TORSO, BodyPart.LOWER_TORSO})
LEG_AREA_PARTS = frozenset({BodyPart.LOWER_TORSO, BodyPart.UPPER_LEGS, BodyPart.LOWER_LEGS})

CLOTH_BACKGROUND = 0
UNCLOTHED = 1
CLOTHING_CATEGORIES = (
    "upper_garment",
    "lower_garment",
    "overall_garment",
    "outerwear",
    "footwear",
    "accessory",
)


def body_part(name):
    """Look up a body part by name ("lower_arms") or id."""
    if isinstance(name, str):
        try:
            return BodyPart[name.upper()]
        except KeyError:
            raise ContractError(f"unknown body part {name!r}") from None
    return BodyPart(int(name))


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel boolean region. ``bits`` has shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = _frozen(self.bits, bool)
        if bits.ndim != 2:
            raise ContractError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width, height):
        return cls(np.ones((height, width), dtype=bool))

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def shape(self):
        return self.bits.shape

    def any(self):
        return bool(self.bits.any())

    def issubset(self, other):
        _check_same_shape(self, other)
        return not (self.bits & ~other.bits).any()

    def bbox(self):
        """Inclusive (row0, col0, row1, col1) of the true pixels, or None."""
        rows = np.flatnonzero(self.bits.any(axis=1))
        if rows.size == 0:
            return None
        cols = np.flatnonzero(self.bits.any(axis=0))
        return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])

    def __or__(self, other):
        return mask_union(self, other)

    def __and__(self, other):
        return mask_intersect(self, other)

    def __sub__(self, other):
        return mask_subtract(self, other)

    def __invert__(self):
        return BinaryMask(~self.bits)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, area={area(self)})"


@dataclass(frozen=True, eq=False)
class LabelRaster:
    """Integer label image plus a legend mapping label id to name.

    ``kind`` is either ``"body_parts"`` or ``"clothing"``. Clothing rasters
    carry a category tag per garment segment in ``categories``.
    """

    labels: np.ndarray
    legend: Mapping[int, str]
    kind: str = BODY_PARTS
    categories: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ContractError(f"label raster must be non-empty 2-D, got shape {labels.shape}")
        if labels.size and labels.min() < 0:
            raise ContractError("labels must be non-negative")
        labels = _frozen(labels, np.int32)
        legend = {int(k): str(v) for k, v in self.legend.items()}
        categories = {int(k): str(v) for k, v in self.categories.items()}
        if self.kind not in (BODY_PARTS, CLOTHING):
            raise ContractError(f"unknown raster kind {self.kind!r}")
        if legend.get(0) != "background":
            raise ContractError("label 0 must be 'background'")
        if self.kind == CLOTHING and UNCLOTHED not in legend:
            raise ContractError("clothing legend must define the unclothed label 1")
        present = np.unique(labels)
        missing = [int(v) for v in present if int(v) not in legend]
        if missing:
            raise ContractError(f"pixel labels {missing} not in legend")
        for label, cat in categories.items():
            if cat not in CLOTHING_CATEGORIES:
                raise ContractError(f"label {label}: unknown clothing category {cat!r}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "legend", MappingProxyType(legend))
        object.__setattr__(self, "categories", MappingProxyType(categories))

    @classmethod
    def body(cls, labels):
        return cls(labels, BODY_LEGEND, BODY_PARTS)

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def shape(self):
        return self.labels.shape

    def present_labels(self):
        return frozenset(int(v) for v in np.unique(self.labels))

    def figure(self):
        """Mask of all non-background pixels."""
        return BinaryMask(self.labels != 0)

    def segment_ids(self):
        """Non-background label ids defined in the legend, sorted."""
        return sorted(k for k in self.legend if k != 0)

    def __eq__(self, other):
        if not isinstance(other, LabelRaster):
            return NotImplemented
        return (
            self.kind == other.kind
            and dict(self.legend) == dict(other.legend)
            and dict(self.categories) == dict(other.categories)
            and self.shape == other.shape
            and bool(np.array_equal(self.labels, other.labels))
        )

    __hash__ = None


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")


def region_of(raster: LabelRaster, label_set: Iterable[int]) -> BinaryMask:
    label_set = [int(v) for v in label_set]
    unknown = [v for v in label_set if v not in raster.legend]
    if unknown:
        raise ContractError(f"label id(s) {unknown} not in {raster.kind} legend")
    if not label_set:
        return BinaryMask(np.zeros(raster.shape, dtype=bool))
    return BinaryMask(np.isin(raster.labels, label_set))


def mask_union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_shape(a, b)
    return BinaryMask(a.bits | b.bits)


def mask_intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_shape(a, b)
    return BinaryMask(a.bits & b.bits)


def mask_subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_shape(a, b)
    return BinaryMask(a.bits & ~b.bits)


def area(m: BinaryMask) -> int:
    return int(np.count_nonzero(m.bits))


def verify_partition(raster: LabelRaster, figure: BinaryMask) -> bool:
    """True iff the non-background labels of ``raster`` tile ``figure`` exactly."""
    _check_same_shape(raster, figure)
    return bool(np.array_equal(raster.labels != 0, figure.bits))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull(points):
    # Andrew's monotone chain on integer (x, y); counterclockwise, no collinear vertices.
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def convex_fill(m: BinaryMask) -> BinaryMask:
    """Fill the convex hull of the true pixels.

    A pixel is set iff its center lies inside or on the hull polygon, so the
    result contains ``m`` and is a fixed point of this function.
    """
    box = m.bbox()
    if box is None:
        return m
    r0, c0, r1, c1 = box
    # Only the extreme pixels of each row can be hull vertices.
    points = []
    for r in range(r0, r1 + 1):
        cols = np.flatnonzero(m.bits[r])
        if cols.size:
            points.append((int(cols[0]), r))
            points.append((int(cols[-1]), r))
    hull = _hull(points)

    ys, xs = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    inside = np.ones(xs.shape, dtype=bool)
    n = len(hull)
    if n > 1:
        for i in range(n):
            ax, ay = hull[i]
            bx, by = hull[(i + 1) % n]
            inside &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= 0
    out = np.zeros(m.shape, dtype=bool)
    out[r0:r1 + 1, c0:c1 + 1] = inside
    return BinaryMask(out | m.bits)


def remove_center_stripe(m: BinaryMask, anchor: BinaryMask, width_fraction: float = 0.18) -> BinaryMask:
    """Clear a vertical stripe centred on the anchor's bounding box.

    Stripe width is ``round(width_fraction * bbox_width)`` (half-up, at least
    one pixel); it spans the anchor's rows. When the bbox width and stripe width
    differ in parity the extra pixel goes to the right of the stripe.
    """
    if not 0 < width_fraction < 1:
        raise ContractError(f"width_fraction must be in (0, 1), got {width_fraction}")
    _check_same_shape(m, anchor)
    box = anchor.bbox()
    if box is None:
        raise ContractError("stripe anchor is empty: no torso region to anchor on")
    r0, c0, r1, c1 = box
    bbox_width = c1 - c0 + 1
    stripe = max(1, int(np.floor(width_fraction * bbox_width + 0.5)))
    start = c0 + (bbox_width - stripe) // 2
    bits = m.bits.copy()
    bits[r0:r1 + 1, start:start + stripe] = False
    return BinaryMask(bits)


def dilate(m: BinaryMask, radius: int) -> BinaryMask:
    """Dilate with a disk of the given pixel radius; radius 0 is the identity."""
    if radius < 0:
        raise ContractError("dilation radius must be >= 0")
    if radius == 0:
        return m
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    disk = xx * xx + yy * yy <= radius * radius
    return BinaryMask(ndimage.binary_dilation(m.bits, structure=disk))


# --- PNG / JSON I/O -------------------------------------------------------

def legend_to_json(raster: LabelRaster) -> dict:
    doc = {
        "kind": raster.kind,
        "labels": {str(k): v for k, v in sorted(raster.legend.items())},
    }
    if raster.categories:
        doc["categories"] = {str(k): v for k, v in sorted(raster.categories.items())}
    return doc


def write_label_raster(raster: LabelRaster, png_path, legend_path) -> None:
    if raster.labels.max() > 255:
        raise ContractError("label ids above 255 do not fit an 8-bit PNG")
    Image.fromarray(raster.labels.astype(np.uint8), mode="L").save(png_path)
    Path(legend_path).write_text(json.dumps(legend_to_json(raster), indent=2, sort_keys=True) + "\n")


def read_label_raster(png_path, legend_path, kind=None) -> LabelRaster:
    """Read an 8-bit label PNG and its legend JSON.

    The legend file is either ``{"kind", "labels", "categories"}`` or a flat
    ``{id: name}`` mapping (then ``kind`` must be passed).
    """
    with Image.open(png_path) as img:
        if img.mode not in ("L", "P"):
            raise ContractError(f"{png_path}: expected single-channel PNG, got mode {img.mode}")
        labels = np.array(img, dtype=np.int32)
    doc = json.loads(Path(legend_path).read_text())
    if "labels" in doc:
        legend = doc["labels"]
        categories = doc.get("categories", {})
        kind = kind or doc.get("kind")
    else:
        legend, categories = doc, {}
    if kind is None:
        raise ContractError(f"{legend_path}: raster kind unknown")
    return LabelRaster(labels, {int(k): v for k, v in legend.items()}, kind,
                       {int(k): v for k, v in categories.items()})


def write_mask(m: BinaryMask, path) -> None:
    Image.fromarray(m.bits.astype(np.uint8) * 255, mode="L").save(path)


def read_mask(path) -> BinaryMask:
    with Image.open(path) as img:
        arr = np.array(img.convert("L"))
    return BinaryMask(arr >= 128)
