"""Single-image masking and dataset evaluation."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import Backends, TryOnRequest, load_rgb
from .errors import BackendError, ContractError, IvtonError
from .instructions import parse_instruction, resolve_bindings
from .metrics import EvalRecord, aggregate, markdown_table, ssim
from .raster import BinaryMask, region_of, write_mask
from .rules import GarmentSpec, TraceEstimate, infer_traces, realize_mask
from .traces import mask_efficiency

log = logging.getLogger(__name__)


def bbox_baseline_mask(est: TraceEstimate, body, clothing) -> BinaryMask:
    """Bounding box of the same body-part and clothing regions the trace mask uses."""
    regions = region_of(body, est.b_hat.labels) | region_of(clothing, est.c_hat.labels)
    out = np.zeros(body.shape, dtype=bool)
    box = regions.bbox()
    if box is not None:
        r0, c0, r1, c1 = box
        out[r0:r1 + 1, c0:c1 + 1] = True
    return BinaryMask(out)


@dataclass
class MaskResult:
    mask: BinaryMask
    estimate: TraceEstimate
    report: object
    parsed: object

    def report_json(self):
        return {**self.report.to_json(), "parse": self.parsed.to_json(),
                "estimate": self.estimate.to_json()}


class StageError(IvtonError):
    """Wraps an error with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def mask_for(person_ref, garment: GarmentSpec, instruction_text, backends: Backends) -> MaskResult:
    try:
        seg = backends.segmentation.segment(person_ref)
    except (BackendError, ContractError, OSError) as exc:
        raise StageError("segmentation", exc) from exc
    try:
        parsed = parse_instruction(instruction_text)
        style = resolve_bindings(parsed, [garment])[garment.id]
    except ContractError as exc:
        raise StageError("parse", exc) from exc
    try:
        est = infer_traces(garment, style, seg.body, seg.clothing)
    except ContractError as exc:
        raise StageError("rules", exc) from exc
    try:
        mask = realize_mask(est, seg.body, seg.clothing)
    except ContractError as exc:
        raise StageError("mask", exc) from exc
    return MaskResult(mask, est, mask_efficiency(mask), parsed)


def write_mask_result(result: MaskResult, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_mask(result.mask, out_dir / "mask.png")
    (out_dir / "report.json").write_text(json.dumps(result.report_json(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Pair:
    pair_id: str
    person: Path
    garment: GarmentSpec
    category: str
    reference: Path = None


def load_pair(pair_dir) -> Pair:
    pair_dir = Path(pair_dir)
    meta = json.loads((pair_dir / "meta.json").read_text())
    spec = GarmentSpec.load(pair_dir / "garment_spec.json")
    person = pair_dir / "person.png"
    for p in (person, Path(spec.image_ref)):
        if not p.exists():
            raise ContractError(f"{pair_dir.name}: missing {p.name}")
    reference = pair_dir / "reference.png"
    return Pair(meta.get("pair_id", pair_dir.name), person, spec, meta["category"],
                reference if reference.exists() else None)


def evaluate_pair(pair: Pair, backends: Backends) -> EvalRecord:
    result = mask_for(pair.person, pair.garment, "", backends)
    seg = backends.segmentation.segment(pair.person)
    baseline = bbox_baseline_mask(result.estimate, seg.body, seg.clothing)
    score = None
    if pair.reference is not None:
        out = backends.vto.try_on(TryOnRequest(str(pair.person), pair.garment.image_ref,
                                               result.mask, pair.garment))
        score = ssim(load_rgb(out), load_rgb(pair.reference))
    return EvalRecord(pair.pair_id, pair.category, result.report.efficiency, score,
                      mask_efficiency(baseline).efficiency)


def evaluate_dataset(root, backends: Backends):
    """Evaluate every ``pair_*`` directory (empty instruction for all pairs).

    Returns (records, table, failures); failures are ``(pair_dir, message)``.
    """
    records, failures = [], []
    for pair_dir in sorted(p for p in Path(root).iterdir() if p.is_dir()):
        try:
            records.append(evaluate_pair(load_pair(pair_dir), backends))
        except (IvtonError, OSError, KeyError, ValueError) as exc:
            log.warning("pair %s excluded: %s", pair_dir.name, exc)
            failures.append((pair_dir.name, str(exc)))
    return records, aggregate(records), failures


def eval_report(records, table, failures):
    doc = {
        "records": [
            {"pair_id": r.pair_id, "category": r.category, "efficiency": r.efficiency,
             "baseline_efficiency": r.baseline_efficiency, "ssim": r.ssim}
            for r in records
        ],
        "table": table,
        "failures": [{"pair_id": p, "error": e} for p, e in failures],
    }
    md = markdown_table(table)
    if any(v.get("ssim") is not None for v in table.values()):
        md += "\n" + markdown_table(table, rows=(("trace masker", "ssim"),), title="SSIM")
    return doc, md
