"""
Planning a multi-garment try-on
===============================

Parse a free-text instruction, bind its clauses to garments and order the
garments so that each layer goes on top of the right one.
"""

from ivton import DummyLibrary, build_plan, parse_instruction, resolve_bindings
from ivton.fixtures import Layout, body_raster, dress_person, garment_spec

text = "try on the shirt tucked in, jacket open"

# The parser splits the text into clauses and keeps whatever it cannot read.
parsed = parse_instruction(text)
for clause in parsed.clauses:
    print("clause:", clause.garment_binding, "->", clause.style_phrase)
print("residual:", repr(parsed.residual))

# Binding attaches each clause to one of the garments we want to try on.
garments = [garment_spec("jacket"), garment_spec("pants"), garment_spec("shirt")]
for gid, style in resolve_bindings(parsed, garments).items():
    print("binding:", gid, style)

# The planner orders garments (a tucked shirt goes before the pants, the
# jacket goes last) and decides whether a step needs a dummy garment first.
body = body_raster(Layout())
clothing = dress_person(body, ["t-shirt", "shorts", "shoes"])
plan = build_plan(garments, text, body, clothing, "person.png", dummies=DummyLibrary.bundled())
for step in plan.steps:
    print("step:", step.garment.id, step.stage)

# Rolling up the sleeves of a shirt over a long-sleeve shirt needs two stages:
# a sleeveless dummy first to bare the forearms, then the real shirt.
clothing = dress_person(body, ["shirt", "pants", "shoes"])
plan = build_plan([garment_spec("shirt")], "sleeves rolled up", body, clothing, "person.png",
                  dummies=DummyLibrary.bundled())
(step,) = plan.steps
print("two-stage step:", step.stage, "dummy =", step.dummy_spec.id)

# Plans serialize to JSON, ready to be stored next to a run.
print(plan.dumps()[:200], "...")
