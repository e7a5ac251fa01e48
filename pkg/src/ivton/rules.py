"""Garment descriptors, structured style, and the parts-inclusion rule table.

The rule table is data (``data/rules.json``). Rows are grouped; inside a group
the first row whose ``match`` holds wins, and the winners of all groups are
accumulated into one estimate. A row marked ``reject`` turns a fall-through
into an error.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import ContractError, RuleError
from .raster import (
    BODY_PARTS,
    CLOTHING,
    CLOTH_BACKGROUND,
    LEG_AREA_PARTS,
    PROTECTED_PARTS,
    TORSO_PARTS,
    UNCLOTHED,
    BinaryMask,
    LabelRaster,
    body_part,
    convex_fill,
    dilate,
    mask_intersect,
    mask_subtract,
    mask_union,
    region_of,
    remove_center_stripe,
)
from .traces import Trace, compute_trace, estimated_mask

CLASSIFICATIONS = ("upper", "lower", "overall")
SLEEVE_LENGTHS = ("sleeveless", "short", "three_quarter", "long", "not_applicable")
LEG_LENGTHS = ("short", "long", "not_applicable")
CLOSURES = ("none", "buttons", "zipper")

SLEEVE_STATES = ("default", "rolled_up", "rolled_down")
CLOSURE_STATES = ("default", "open", "closed")
TUCK_STATES = ("default", "tucked", "untucked")

POST_OPS = ("convexify_legs", "open_chest_stripe")
EXCLUDED_CATEGORIES = frozenset({"footwear", "accessory"})

STRIPE_WIDTH_FRACTION = 0.18


def _check_choice(name, value, choices):
    if value not in choices:
        raise ContractError(f"{name}={value!r}; expected one of {choices}")


@dataclass(frozen=True)
class GarmentSpec:
    id: str
    classification: str
    sleeve_length: str = "not_applicable"
    leg_length: str = "not_applicable"
    closure: str = "none"
    outerwear: bool = False
    category_noun: str = ""
    image_ref: str = ""

    def __post_init__(self):
        _check_choice("classification", self.classification, CLASSIFICATIONS)
        _check_choice("sleeve_length", self.sleeve_length, SLEEVE_LENGTHS)
        _check_choice("leg_length", self.leg_length, LEG_LENGTHS)
        _check_choice("closure", self.closure, CLOSURES)
        if (self.sleeve_length == "not_applicable") != (self.classification == "lower"):
            raise ContractError(
                f"garment {self.id}: sleeve_length not_applicable iff classification is lower")
        if (self.leg_length == "not_applicable") != (self.classification == "upper"):
            raise ContractError(
                f"garment {self.id}: leg_length not_applicable iff classification is upper")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, doc, base_dir=None):
        doc = dict(doc)
        fields = {k: doc[k] for k in cls.__dataclass_fields__ if k in doc}
        if base_dir is not None and fields.get("image_ref"):
            ref = Path(fields["image_ref"])
            if not ref.is_absolute():
                fields["image_ref"] = str(Path(base_dir) / ref)
        return cls(**fields)

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), base_dir=path.parent)


@dataclass(frozen=True)
class StyleInstruction:
    """Structured style. The all-default value stands for the empty instruction."""

    sleeves: str = "default"
    closure_state: str = "default"
    tuck: str = "default"

    def __post_init__(self):
        _check_choice("sleeves", self.sleeves, SLEEVE_STATES)
        _check_choice("closure_state", self.closure_state, CLOSURE_STATES)
        _check_choice("tuck", self.tuck, TUCK_STATES)

    def is_default(self):
        return self == StyleInstruction()

    def with_field(self, name, value):
        return replace(self, **{name: value})

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, doc):
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ContractError(f"unknown instruction fields {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class PartsEstimate:
    """Label-level outcome of rule evaluation, before looking at any raster."""

    include_parts: frozenset
    exposed_parts: frozenset
    post_ops: tuple
    rule_trace: tuple


@dataclass(frozen=True)
class TraceEstimate:
    b_hat: Trace
    c_hat: Trace
    post_ops: tuple = ()
    exposed_parts: frozenset = frozenset()
    rule_trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.b_hat.map_kind != BODY_PARTS or self.c_hat.map_kind != CLOTHING:
            raise ContractError("b_hat must be a body-parts trace and c_hat a clothing trace")
        exposed = frozenset(int(p) for p in self.exposed_parts)
        if exposed & self.b_hat.labels:
            raise ContractError("exposed parts overlap b_hat")
        if len(set(self.post_ops)) != len(self.post_ops):
            raise ContractError(f"duplicate post-ops {self.post_ops}")
        for op in self.post_ops:
            _check_choice("post_op", op, POST_OPS)
        object.__setattr__(self, "exposed_parts", exposed)
        object.__setattr__(self, "post_ops", tuple(self.post_ops))

    @classmethod
    def empty(cls):
        return cls(Trace(BODY_PARTS, frozenset()), Trace(CLOTHING, frozenset()))

    def to_json(self):
        return {
            "b_hat": sorted(self.b_hat.labels),
            "c_hat": sorted(self.c_hat.labels),
            "post_ops": list(self.post_ops),
            "exposed_parts": sorted(self.exposed_parts),
            "rule_trace": list(self.rule_trace),
        }


_MATCH_FIELDS = {
    "classification", "sleeve_length", "leg_length", "closure", "outerwear", "category_noun",
    "sleeves", "closure_state", "tuck",
}


@dataclass(frozen=True)
class Rule:
    id: str
    group: str
    match: dict
    include_parts: frozenset = frozenset()
    exclude_parts: frozenset = frozenset()
    exposed_parts: frozenset = frozenset()
    post_ops: tuple = ()
    reject: bool = False

    def matches(self, key):
        for name, want in self.match.items():
            if isinstance(want, list):
                if key[name] not in want:
                    return False
            elif key[name] != want:
                return False
        return True


class RuleTable:
    """Immutable, grouped first-match-wins rule table."""

    def __init__(self, rules, version=1):
        self.version = version
        self.rules = tuple(rules)
        self.groups = tuple(dict.fromkeys(r.group for r in self.rules))
        for group in self.groups:
            rows = [r for r in self.rules if r.group == group]
            if rows[-1].match:
                raise ContractError(f"rule group {group!r} has no unconditional default row")

    @classmethod
    def from_json(cls, doc):
        rules = []
        for row in doc["rules"]:
            unknown = set(row["match"]) - _MATCH_FIELDS
            if unknown:
                raise ContractError(f"rule {row.get('id')}: unknown match fields {sorted(unknown)}")
            for op in row.get("post_ops", ()):
                _check_choice("post_op", op, POST_OPS)
            rules.append(Rule(
                id=row["id"],
                group=row.get("group", "default"),
                match=dict(row["match"]),
                include_parts=frozenset(int(body_part(p)) for p in row.get("include_parts", ())),
                exclude_parts=frozenset(int(body_part(p)) for p in row.get("exclude_parts", ())),
                exposed_parts=frozenset(int(body_part(p)) for p in row.get("exposed_parts", ())),
                post_ops=tuple(row.get("post_ops", ())),
                reject=bool(row.get("reject", False)),
            ))
        return cls(rules, doc.get("version", 1))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))

    def evaluate(self, garment: GarmentSpec, instruction: StyleInstruction) -> PartsEstimate:
        key = {**garment.to_json(), **instruction.to_json()}
        include, exclude, exposed = set(), set(), set()
        post_ops, trace = [], []
        for group in self.groups:
            row = next((r for r in self.rules if r.group == group and r.matches(key)), None)
            if row is None or row.reject:
                rule_key = {k: key[k] for k in sorted(_MATCH_FIELDS) if k != "category_noun"}
                raise RuleError(f"no rule in group {group!r} for {rule_key}")
            trace.append(row.id)
            include |= row.include_parts
            exclude |= row.exclude_parts
            exposed |= row.exposed_parts
            post_ops.extend(op for op in row.post_ops if op not in post_ops)
        exclude |= {int(p) for p in PROTECTED_PARTS}
        include = include - exclude - exposed
        return PartsEstimate(frozenset(include), frozenset(exposed), tuple(post_ops), tuple(trace))


@lru_cache(maxsize=None)
def default_rule_table() -> RuleTable:
    text = resources.files("ivton").joinpath("data/rules.json").read_text()
    return RuleTable.from_json(json.loads(text))


def clothing_trace(clothing: LabelRaster, region: BinaryMask) -> Trace:
    """Garment segments touching ``region``, minus footwear and accessories."""
    touched = compute_trace(clothing, region)
    keep = {c for c in touched.labels
            if c not in (CLOTH_BACKGROUND, UNCLOTHED)
            and clothing.categories.get(c) not in EXCLUDED_CATEGORIES}
    return Trace(CLOTHING, frozenset(keep))


def infer_traces(garment: GarmentSpec, instruction: StyleInstruction, body: LabelRaster,
                 clothing: LabelRaster, table: RuleTable = None) -> TraceEstimate:
    if body.kind != BODY_PARTS or clothing.kind != CLOTHING:
        raise ContractError("infer_traces expects a body-parts raster and a clothing raster")
    if body.shape != clothing.shape:
        raise ContractError(f"dimension mismatch: {body.shape} vs {clothing.shape}")
    parts = (table or default_rule_table()).evaluate(garment, instruction)
    touched = region_of(body, parts.include_parts | parts.exposed_parts)
    return TraceEstimate(
        b_hat=Trace(BODY_PARTS, parts.include_parts),
        c_hat=clothing_trace(clothing, touched),
        post_ops=parts.post_ops,
        exposed_parts=parts.exposed_parts,
        rule_trace=parts.rule_trace,
    )


def realize_mask(est: TraceEstimate, body: LabelRaster, clothing: LabelRaster, *,
                 stripe_fraction=STRIPE_WIDTH_FRACTION, dilate_radius=0) -> BinaryMask:
    m = estimated_mask(body, clothing, est.b_hat, est.c_hat)
    for op in est.post_ops:
        if op == "convexify_legs":
            legs = mask_intersect(m, region_of(body, LEG_AREA_PARTS))
            m = mask_union(mask_subtract(m, legs), convex_fill(legs))
        elif op == "open_chest_stripe":
            anchor = region_of(body, est.b_hat.labels & TORSO_PARTS)
            m = remove_center_stripe(m, anchor, stripe_fraction)
    m = dilate(m, dilate_radius)
    # Exposure and identity regions go last so no post-op can re-cover them.
    m = mask_subtract(m, region_of(body, est.exposed_parts))
    return mask_subtract(m, region_of(body, PROTECTED_PARTS))
