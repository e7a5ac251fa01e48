"""Step-by-step plan execution against backends, with the dummy-garment detour.

Each step's output image becomes the next step's person image; the person
image is re-segmented before every VTO call.
"""

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backends import Backends, TryOnRequest, has_sidecars, sidecar_paths
from .errors import BackendError, ContractError, PlanExecutionError, StepError
from .planner import DUMMY_THEN_TARGET, ExecutionPlan, PlanStep
from .raster import BinaryMask, LabelRaster, area, mask_intersect, region_of, write_mask
from .rules import GarmentSpec, StyleInstruction, TraceEstimate, infer_traces, realize_mask
from .traces import mask_efficiency

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD_FRACTION = 0.02


@dataclass(frozen=True)
class ConflictReport:
    exposed_parts_required: frozenset
    offending_segments: frozenset
    overlap_area: int
    threshold_area: float
    two_step: bool

    def to_json(self):
        return {
            "exposed_parts_required": sorted(self.exposed_parts_required),
            "offending_segments": sorted(self.offending_segments),
            "overlap_area": self.overlap_area,
            "threshold_area": self.threshold_area,
            "two_step": self.two_step,
        }


def needs_two_step(est: TraceEstimate, body: LabelRaster, clothing: LabelRaster,
                   threshold_fraction=DEFAULT_THRESHOLD_FRACTION) -> ConflictReport:
    """Does existing clothing cover parts the style needs bare?

    Two steps are needed when the offending garments cover more than
    ``threshold_fraction`` of the required-exposed region.
    """
    if not 0 <= threshold_fraction < 1:
        raise ContractError(f"threshold_fraction must be in [0, 1), got {threshold_fraction}")
    exposed = region_of(body, est.exposed_parts)
    offending = frozenset(
        c for c in est.c_hat.labels if area(mask_intersect(region_of(clothing, [c]), exposed)) > 0)
    overlap = area(mask_intersect(region_of(clothing, offending), exposed))
    threshold = threshold_fraction * area(exposed)
    two_step = area(exposed) > 0 and overlap > threshold
    return ConflictReport(est.exposed_parts, offending, overlap, threshold, two_step)


def select_dummy(garment: GarmentSpec, report: ConflictReport, provider) -> GarmentSpec:
    if not report.two_step:
        raise ContractError("select_dummy called without a two-step conflict")
    spec, _ = provider.fetch(garment.classification, report.exposed_parts_required)
    return spec


@dataclass
class StepArtifacts:
    step_index: int
    stage: str
    garment_id: str
    input_ref: str
    output_ref: str
    masks: dict = field(default_factory=dict)  # "target" and, for two-step, "dummy"
    intermediate_ref: Optional[str] = None
    mask_reports: dict = field(default_factory=dict)
    rule_trace: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    def to_json(self, relative_to=None):
        def rel(ref):
            if ref is None or relative_to is None:
                return ref
            try:
                return str(Path(ref).relative_to(relative_to))
            except ValueError:
                return str(ref)
        return {
            "step_index": self.step_index,
            "stage": self.stage,
            "garment_id": self.garment_id,
            "input_ref": rel(self.input_ref),
            "output_ref": rel(self.output_ref),
            "intermediate_ref": rel(self.intermediate_ref),
            "mask_reports": {k: r.to_json() for k, r in self.mask_reports.items()},
            "rule_trace": {k: list(v) for k, v in self.rule_trace.items()},
            "estimates": {k: e.to_json() for k, e in self.estimates.items()},
        }


def _persist(ref, dest):
    """Copy an image (and its segmentation sidecars, if any) to ``dest``."""
    dest = Path(dest)
    shutil.copyfile(ref, dest)
    if has_sidecars(ref):
        src, dst = sidecar_paths(ref), sidecar_paths(dest)
        for key in src:
            shutil.copyfile(src[key], dst[key])
    return str(dest)


def _stage(step_index, stage, fn, *args):
    try:
        return fn(*args)
    except (BackendError, ContractError, OSError) as exc:
        raise StepError(step_index, stage, exc) from exc


def execute_step(person_image_ref, step: PlanStep, body: LabelRaster, clothing: LabelRaster,
                 backends: Backends, *, step_index=0, step_dir=None, stripe_fraction=None,
                 table=None) -> StepArtifacts:
    kwargs = {} if stripe_fraction is None else {"stripe_fraction": stripe_fraction}
    step_dir = Path(step_dir) if step_dir is not None else None
    person = str(person_image_ref)
    art = StepArtifacts(step_index, step.stage, step.garment.id, person, person)

    if step.stage == DUMMY_THEN_TARGET:
        dummy = step.dummy_spec
        # Stage A ignores the user's style; the dummy mask takes the whole existing C-trace.
        est_a = _stage(step_index, "dummy.mask", infer_traces, dummy, StyleInstruction(),
                       body, clothing, table)
        mask_a = _stage(step_index, "dummy.mask", lambda: realize_mask(est_a, body, clothing, **kwargs))
        out_a = _stage(step_index, "dummy.tryon", backends.vto.try_on,
                       TryOnRequest(person, dummy.image_ref, mask_a, dummy))
        if step_dir is not None:
            out_a = _persist(out_a, step_dir / "intermediate.png")
        seg = _stage(step_index, "dummy.segmentation", backends.segmentation.segment, out_a)
        if seg.body.shape != body.shape:
            raise StepError(step_index, "dummy.segmentation",
                            ContractError(f"re-segmentation returned {seg.body.shape}, expected {body.shape}"))
        art.masks["dummy"] = mask_a
        art.mask_reports["dummy"] = mask_efficiency(mask_a)
        art.rule_trace["dummy"] = est_a.rule_trace
        art.estimates["dummy"] = est_a
        art.intermediate_ref = out_a
        person, body, clothing = out_a, seg.body, seg.clothing

    est = _stage(step_index, "mask", infer_traces, step.garment, step.instruction, body, clothing, table)
    mask = _stage(step_index, "mask", lambda: realize_mask(est, body, clothing, **kwargs))
    out = _stage(step_index, "tryon", backends.vto.try_on,
                 TryOnRequest(person, step.garment.image_ref, mask, step.garment))
    if step_dir is not None:
        out = _persist(out, step_dir / "output.png")
    art.masks["target"] = mask
    art.mask_reports["target"] = mask_efficiency(mask)
    art.rule_trace["target"] = est.rule_trace
    art.estimates["target"] = est
    art.output_ref = out
    return art


@dataclass
class RunResult:
    final_image_ref: str
    artifacts: list
    run_dir: Optional[Path] = None


def run_id(plan: ExecutionPlan):
    return hashlib.sha256(plan.dumps().encode()).hexdigest()[:12]


def _write_step(step_dir, art: StepArtifacts, run_dir):
    write_mask(art.masks["target"], step_dir / "mask.png")
    if "dummy" in art.masks:
        write_mask(art.masks["dummy"], step_dir / "mask_dummy.png")
    (step_dir / "report.json").write_text(
        json.dumps(art.to_json(relative_to=run_dir), indent=2, sort_keys=True) + "\n")


def _write_manifest(run_dir, plan, artifacts, status, error=None, final_ref=None):
    doc = {
        "run_id": run_dir.name[len("run_"):],
        "status": status,
        "error": error,
        "plan": plan.to_json(),
        "final_image": None,
        "steps": [],
    }
    if final_ref is not None:
        try:
            doc["final_image"] = str(Path(final_ref).relative_to(run_dir))
        except ValueError:
            doc["final_image"] = str(final_ref)
    for art in artifacts:
        d = f"step_{art.step_index}"
        files = ["mask.png", "output.png", "report.json"]
        if "dummy" in art.masks:
            files[1:1] = ["mask_dummy.png", "intermediate.png"]
        doc["steps"].append({"step_index": art.step_index, "garment_id": art.garment_id, "dir": d,
                             "files": [f"{d}/{f}" for f in files]})
    (run_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def execute_plan(plan: ExecutionPlan, backends: Backends, run_root=None, *,
                 stripe_fraction=None, table=None) -> RunResult:
    """Fold ``execute_step`` over the plan, chaining outputs into inputs.

    With ``run_root`` set, artifacts go to ``run_root/run_<id>/``. The first
    failing step aborts the run with a PlanExecutionError holding the
    artifacts of the completed steps.
    """
    run_dir = None
    if run_root is not None:
        run_dir = Path(run_root) / f"run_{run_id(plan)}"
        run_dir.mkdir(parents=True, exist_ok=True)
    current = str(plan.source_image_ref)
    artifacts = []
    for k, step in enumerate(plan.steps):
        step_dir = None
        if run_dir is not None:
            step_dir = run_dir / f"step_{k}"
            step_dir.mkdir(exist_ok=True)
        try:
            seg = _stage(k, "segmentation", backends.segmentation.segment, current)
            art = execute_step(current, step, seg.body, seg.clothing, backends, step_index=k,
                               step_dir=step_dir, stripe_fraction=stripe_fraction, table=table)
        except StepError as exc:
            log.error("plan aborted: %s", exc)
            if run_dir is not None:
                _write_manifest(run_dir, plan, artifacts, "aborted", str(exc), current)
            raise PlanExecutionError(exc, artifacts, current) from exc
        if step_dir is not None:
            _write_step(step_dir, art, run_dir)
        artifacts.append(art)
        current = art.output_ref
    if run_dir is not None:
        _write_manifest(run_dir, plan, artifacts, "completed", None, current)
    return RunResult(current, artifacts, run_dir)
