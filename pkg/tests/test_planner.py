import json
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivton.backends import DummyLibrary, ScriptedVlm
from ivton.errors import AmbiguousBindingError, BackendError, ContractError
from ivton.fixtures import GARMENT_KINDS, Layout, body_raster, dress_person, garment_spec
from ivton.planner import (
    DIRECT,
    DUMMY_THEN_TARGET,
    ExecutionPlan,
    PlanStep,
    build_plan,
    order_garments,
    order_violations,
)
from ivton.rules import StyleInstruction

TRY_ON_KINDS = [k for k, v in GARMENT_KINDS.items() if "classification" in v]


def _maps(outfit):
    body = body_raster(Layout())
    return body, dress_person(body, outfit)


def test_layered_outfit_order():
    g = [garment_spec("jacket"), garment_spec("pants"), garment_spec("shirt")]
    bindings = {"shirt": StyleInstruction(tuck="tucked"), "pants": StyleInstruction(),
                "jacket": StyleInstruction(closure_state="open")}
    assert order_garments(g, bindings) == ["shirt", "pants", "jacket"]


def test_untucked_shirt_after_pants():
    g = [garment_spec("shirt"), garment_spec("pants")]
    assert order_garments(g, {}) == ["pants", "shirt"]


def test_single_and_outerwear_last():
    assert order_garments([garment_spec("dress")], {}) == ["dress"]
    assert order_garments([garment_spec("jacket"), garment_spec("shirt")], {}) == ["shirt", "jacket"]


@given(st.lists(st.sampled_from(TRY_ON_KINDS), min_size=1, max_size=6),
       st.lists(st.sampled_from(["default", "tucked", "untucked"]), min_size=6, max_size=6))
def test_order_properties(kinds, tucks):
    garments = [garment_spec(k, f"g{i}") for i, k in enumerate(kinds)]
    bindings = {g.id: StyleInstruction(tuck=t) for g, t in zip(garments, tucks)}
    order = order_garments(garments, bindings)
    assert sorted(order) == sorted(g.id for g in garments)
    assert order_violations(garments, order, bindings) == []
    pos = {gid: i for i, gid in enumerate(order)}
    # stability: same kind + same instruction keeps input order
    for a, b in zip(garments, garments[1:]):
        if a.category_noun == b.category_noun and bindings[a.id] == bindings[b.id]:
            assert pos[a.id] < pos[b.id]


def test_rolled_sleeves_plan_uses_tank_top():
    body, cloth = _maps(["shirt", "pants", "shoes"])
    plan = build_plan([garment_spec("shirt")], "sleeves rolled up", body, cloth, "p.png",
                      dummies=DummyLibrary.bundled())
    (step,) = plan.steps
    assert step.stage == DUMMY_THEN_TARGET
    assert step.dummy_spec.classification == "upper"
    assert step.dummy_spec.sleeve_length == "sleeveless"
    assert step.dummy_spec.category_noun == "tank top"


def test_empty_instruction_is_direct():
    body, cloth = _maps(["shirt", "pants", "shoes"])
    plan = build_plan([garment_spec("t-shirt")], "", body, cloth, "p.png", dummies=DummyLibrary.bundled())
    assert [s.stage for s in plan.steps] == [DIRECT]
    assert plan.steps[0].instruction.is_default()


def test_layered_outfit_scenario_plan():
    body, cloth = _maps(["t-shirt", "shorts", "shoes"])
    g = [garment_spec("jacket"), garment_spec("shirt"), garment_spec("pants")]
    plan = build_plan(g, "try on the shirt tucked in, jacket open", body, cloth, "p.png",
                      dummies=DummyLibrary.bundled())
    assert [s.garment.id for s in plan.steps] == ["shirt", "pants", "jacket"]
    assert all(s.stage == DIRECT for s in plan.steps)
    assert plan.steps[2].instruction.closure_state == "open"


def test_ambiguous_without_vlm():
    body, cloth = _maps(["t-shirt", "shorts"])
    with pytest.raises(AmbiguousBindingError):
        build_plan([garment_spec("shirt"), garment_spec("jacket")], "sleeves rolled up", body, cloth, "p.png")


def test_plan_json_roundtrip():
    body, cloth = _maps(["shirt", "pants"])
    plan = build_plan([garment_spec("shirt")], "sleeves rolled up", body, cloth, "p.png",
                      dummies=DummyLibrary.bundled())
    doc = json.loads(plan.dumps())
    assert doc["steps"][0]["stage"] == "dummy_then_target"
    assert doc["steps"][0]["dummy"]["id"] == "dummy_tank_top"
    assert ExecutionPlan.from_json(doc) == plan


def test_plan_step_invariant():
    with pytest.raises(ContractError):
        PlanStep(garment_spec("shirt"), StyleInstruction(), DUMMY_THEN_TARGET)
    with pytest.raises(ContractError):
        PlanStep(garment_spec("shirt"), StyleInstruction(), DIRECT, garment_spec("tank top"))


class TestVlm:
    garments = [garment_spec("shirt"), garment_spec("pants"), garment_spec("jacket")]

    def plan(self, vlm, text="whatever the vlm says"):
        body, cloth = _maps(["t-shirt", "shorts"])
        return build_plan(self.garments, text, body, cloth, "p.png", vlm=vlm, dummies=DummyLibrary.bundled())

    def test_valid_proposal_accepted(self):
        vlm = ScriptedVlm({"order": ["shirt", "pants", "jacket"],
                           "instructions": {"shirt": {"tuck": "tucked"}, "jacket": {"closure_state": "open"}}})
        plan = self.plan(vlm)
        assert plan.planner == "vlm"
        assert plan.steps[0].instruction.tuck == "tucked"

    def test_jacket_first_rejected(self, caplog):
        vlm = ScriptedVlm({"order": ["jacket", "shirt", "pants"], "instructions": {}})
        with caplog.at_level(logging.WARNING):
            plan = self.plan(vlm, "try on the shirt tucked in, jacket open")
        assert plan.planner == "rank_table"
        assert [s.garment.id for s in plan.steps] == ["shirt", "pants", "jacket"]
        assert "rejected" in caplog.text

    @pytest.mark.parametrize("garbage", [None, "ok", {"order": ["shirt"]}, {"order": [1, 2, 3]},
                                         {"order": ["shirt", "pants", "jacket"], "instructions": {"shirt": {"tuck": "x"}}},
                                         {"order": ["shirt", "pants", "jacket"], "instructions": ["nope"]}])
    def test_garbled_falls_back(self, garbage):
        plan = self.plan(ScriptedVlm(garbage), "")
        assert plan.planner == "rank_table"

    def test_backend_failure_is_an_error(self):
        with pytest.raises(BackendError):
            self.plan(ScriptedVlm(error="timeout"))
