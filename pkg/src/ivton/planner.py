"""Top-level planning: garment try-on order plus per-garment style."""

import json
import logging
from dataclasses import dataclass
from typing import Optional

from .errors import BackendError, ContractError
from .instructions import parse_instruction, resolve_bindings
from .rules import GarmentSpec, StyleInstruction, default_rule_table, infer_traces

log = logging.getLogger(__name__)

DIRECT = "direct"
DUMMY_THEN_TARGET = "dummy_then_target"

# Layering ranks: lower rank is tried on first.
RANKS = {"overall": 1.0, "lower": 2.0, "upper": 3.0}
OUTERWEAR_RANK = 4.0
TUCKED_UPPER_RANK = 1.5


@dataclass(frozen=True)
class PlanStep:
    garment: GarmentSpec
    instruction: StyleInstruction
    stage: str = DIRECT
    dummy_spec: Optional[GarmentSpec] = None

    def __post_init__(self):
        if self.stage not in (DIRECT, DUMMY_THEN_TARGET):
            raise ContractError(f"unknown stage {self.stage!r}")
        if (self.dummy_spec is not None) != (self.stage == DUMMY_THEN_TARGET):
            raise ContractError("dummy_spec must be present iff stage is dummy_then_target")

    def to_json(self):
        return {
            "garment_id": self.garment.id,
            "garment": self.garment.to_json(),
            "instruction": self.instruction.to_json(),
            "stage": self.stage,
            "dummy": self.dummy_spec.to_json() if self.dummy_spec else None,
        }

    @classmethod
    def from_json(cls, doc):
        dummy = doc.get("dummy")
        return cls(GarmentSpec.from_json(doc["garment"]),
                   StyleInstruction.from_json(doc["instruction"]),
                   doc["stage"],
                   GarmentSpec.from_json(dummy) if dummy else None)


@dataclass(frozen=True)
class ExecutionPlan:
    steps: tuple
    source_image_ref: str
    instruction_text: str = ""
    residual: str = ""
    planner: str = "rank_table"

    def to_json(self):
        return {
            "source_image_ref": str(self.source_image_ref),
            "instruction_text": self.instruction_text,
            "residual": self.residual,
            "planner": self.planner,
            "steps": [s.to_json() for s in self.steps],
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, doc):
        return cls(tuple(PlanStep.from_json(s) for s in doc["steps"]), doc["source_image_ref"],
                   doc.get("instruction_text", ""), doc.get("residual", ""),
                   doc.get("planner", "rank_table"))


def garment_rank(garment, instruction):
    if garment.outerwear:
        return OUTERWEAR_RANK
    if garment.classification == "upper" and instruction.tuck == "tucked":
        return TUCKED_UPPER_RANK
    return RANKS[garment.classification]


def order_garments(garments, bindings):
    """Garment ids sorted by layering rank; ties keep input order."""
    keyed = sorted(enumerate(garments),
                   key=lambda ig: (garment_rank(ig[1], bindings.get(ig[1].id, StyleInstruction())), ig[0]))
    return [g.id for _, g in keyed]


def _coverage(garment, instruction, table):
    parts = table.evaluate(garment, instruction)
    return parts.include_parts | parts.exposed_parts


def order_violations(garments, order, bindings, table=None):
    """Pairs (outerwear, inner) where outerwear comes first and coverage overlaps."""
    table = table or default_rule_table()
    by_id = {g.id: g for g in garments}
    bad = []
    for i, first in enumerate(order):
        g1 = by_id[first]
        if not g1.outerwear:
            continue
        cov1 = _coverage(g1, bindings[first], table)
        for later in order[i + 1:]:
            g2 = by_id[later]
            if not g2.outerwear and cov1 & _coverage(g2, bindings[later], table):
                bad.append((first, later))
    return bad


def validate_proposal(proposal, garments, table=None):
    """Check a VLM proposal; returns (order, bindings) or raises ContractError."""
    if not isinstance(proposal, dict):
        raise ContractError("proposal is not an object")
    ids = [g.id for g in garments]
    order = proposal.get("order")
    if (not isinstance(order, list) or not all(isinstance(o, str) for o in order)
            or sorted(order) != sorted(ids)):
        raise ContractError(f"proposal order {order!r} is not a permutation of {ids}")
    raw = proposal.get("instructions", {}) or {}
    if not isinstance(raw, dict) or set(raw) - set(ids):
        raise ContractError("proposal instructions must be keyed by garment id")
    try:
        bindings = {gid: StyleInstruction.from_json(raw.get(gid, {})) for gid in ids}
    except (TypeError, ContractError) as exc:
        raise ContractError(f"proposal instruction invalid: {exc}") from exc
    bad = order_violations(garments, order, bindings, table)
    if bad:
        raise ContractError(f"proposal layers outerwear before inner garments: {bad}")
    return list(order), bindings


def build_plan(garments, instruction_text, body, clothing, source_image_ref, *,
               dummies=None, vlm=None, threshold_fraction=None, table=None) -> ExecutionPlan:
    """Parse, bind, order and stage every garment into an ExecutionPlan.

    With a VLM configured its proposal is used when it validates; otherwise
    (or on rejection) the deterministic rank table plans.
    """
    from .executor import DEFAULT_THRESHOLD_FRACTION, needs_two_step, select_dummy

    if not garments:
        raise ContractError("at least one garment is required")
    if len({g.id for g in garments}) != len(garments):
        raise ContractError("garment ids must be unique")
    table = table or default_rule_table()
    threshold = DEFAULT_THRESHOLD_FRACTION if threshold_fraction is None else threshold_fraction
    parsed = parse_instruction(instruction_text)
    planner = "rank_table"
    order = bindings = None
    if vlm is not None:
        proposal = vlm.propose(garments, instruction_text, source_image_ref)
        try:
            order, bindings = validate_proposal(proposal, garments, table)
            planner = "vlm"
        except ContractError as exc:
            log.warning("VLM proposal rejected, using rank table: %s", exc)
    if order is None:
        if parsed.partial:
            log.warning("instruction text not understood and ignored: %r", parsed.residual)
        bindings = resolve_bindings(parsed, garments)
        order = order_garments(garments, bindings)
    by_id = {g.id: g for g in garments}
    steps = []
    for gid in order:
        garment, instruction = by_id[gid], bindings[gid]
        est = infer_traces(garment, instruction, body, clothing, table)
        report = needs_two_step(est, body, clothing, threshold)
        if report.two_step:
            if dummies is None:
                raise BackendError("dummy-library", f"{gid} needs a dummy garment but no provider is set")
            steps.append(PlanStep(garment, instruction, DUMMY_THEN_TARGET,
                                  select_dummy(garment, report, dummies)))
        else:
            steps.append(PlanStep(garment, instruction))
    return ExecutionPlan(tuple(steps), str(source_image_ref), instruction_text, parsed.residual, planner)
