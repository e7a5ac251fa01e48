"""Trace calculus over body-part and clothing partitions.

A trace is the set of segments of a partition that a region touches. The
optimal mask is the target region plus every clothing segment it touches;
the estimated mask is the union of segments named by estimated traces.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .raster import (
    BODY_PARTS,
    CLOTHING,
    UNCLOTHED,
    BinaryMask,
    LabelRaster,
    _check_same_shape,
    area,
    mask_union,
    region_of,
)


@dataclass(frozen=True)
class Trace:
    map_kind: str
    labels: frozenset

    def __post_init__(self):
        if self.map_kind not in (BODY_PARTS, CLOTHING):
            raise ContractError(f"unknown trace kind {self.map_kind!r}")
        labels = frozenset(int(v) for v in self.labels)
        if 0 in labels:
            raise ContractError("a trace never contains the background label")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return int(label) in self.labels


@dataclass(frozen=True)
class MaskReport:
    mask_area: int
    total_area: int
    efficiency: float

    def to_json(self):
        return {"mask_area": self.mask_area, "total_area": self.total_area,
                "efficiency": self.efficiency}


def compute_trace(raster: LabelRaster, v: BinaryMask, *, include_unclothed=False,
                  noise_threshold=0) -> Trace:
    """Labels whose region overlaps ``v`` in more than ``noise_threshold`` pixels.

    For clothing rasters the unclothed label is dropped unless
    ``include_unclothed`` is set.
    """
    _check_same_shape(raster, v)
    counts = np.bincount(raster.labels[v.bits], minlength=1)
    labels = {int(k) for k in np.flatnonzero(counts > noise_threshold) if k != 0}
    if raster.kind == CLOTHING and not include_unclothed:
        labels.discard(UNCLOTHED)
    return Trace(raster.kind, frozenset(labels))


def optimal_mask(clothing: LabelRaster, v: BinaryMask) -> BinaryMask:
    trace = compute_trace(clothing, v)
    return mask_union(region_of(clothing, trace.labels - {UNCLOTHED}), v)


def estimated_mask(body: LabelRaster, clothing: LabelRaster, b_hat: Trace, c_hat: Trace) -> BinaryMask:
    if body.kind != BODY_PARTS or b_hat.map_kind != BODY_PARTS:
        raise ContractError("b_hat must be a body-parts trace over a body-parts raster")
    if clothing.kind != CLOTHING or c_hat.map_kind != CLOTHING:
        raise ContractError("c_hat must be a clothing trace over a clothing raster")
    _check_same_shape(body, clothing)
    return mask_union(region_of(clothing, c_hat.labels), region_of(body, b_hat.labels))


def mask_efficiency(m: BinaryMask) -> MaskReport:
    total = m.width * m.height
    if total == 0:
        raise ContractError("mask has zero area")
    masked = area(m)
    return MaskReport(masked, total, 1.0 - masked / total)
