"""
Masks from style instructions
=============================

Build a synthetic person, then compute try-on masks for a shirt with and
without the instruction "sleeves rolled up". Rolled sleeves leave the lower
arms out of the mask, so the try-on model cannot paint fabric there.
"""

import numpy as np

from ivton import StyleInstruction, area, infer_traces, mask_efficiency, realize_mask
from ivton.fixtures import Layout, body_raster, dress_person, garment_spec
from ivton.raster import BodyPart, region_of

# A 48x96 stick figure wearing a long-sleeve shirt, pants and shoes.
body = body_raster(Layout())
clothing = dress_person(body, ["shirt", "pants", "shoes"])
shirt = garment_spec("shirt")

# Which body parts and clothing segments does the new shirt touch?
plain = infer_traces(shirt, StyleInstruction(), body, clothing)
rolled = infer_traces(shirt, StyleInstruction(sleeves="rolled_up"), body, clothing)
print("rules fired (plain):  ", plain.rule_trace)
print("rules fired (rolled): ", rolled.rule_trace)

# Turn the estimates into pixel masks.
m_plain = realize_mask(plain, body, clothing)
m_rolled = realize_mask(rolled, body, clothing)
lower_arms = region_of(body, {BodyPart.LOWER_ARMS})
print("lower-arm pixels masked, plain: ", area(m_plain & lower_arms))
print("lower-arm pixels masked, rolled:", area(m_rolled & lower_arms))

# Efficiency is the share of the image left untouched.
print("efficiency plain:  %.4f" % mask_efficiency(m_plain).efficiency)
print("efficiency rolled: %.4f" % mask_efficiency(m_rolled).efficiency)

# A quick ASCII look at the rows the rolled-up mask touches, every other row.
for row in m_rolled.bits[m_rolled.bits.any(axis=1)][::2]:
    print("".join("#" if v else "." for v in row))

# An open jacket keeps a stripe of the shirt underneath visible.
jacket = infer_traces(garment_spec("jacket"), StyleInstruction(closure_state="open"), body, clothing)
m_jacket = realize_mask(jacket, body, clothing)
torso_rows = np.flatnonzero(region_of(body, {BodyPart.UPPER_TORSO}).bits.any(axis=1))
print("jacket mask, middle torso row:")
print("".join("#" if v else "." for v in m_jacket.bits[torso_rows[len(torso_rows) // 2]]))
