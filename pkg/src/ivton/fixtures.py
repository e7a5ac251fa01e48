"""Procedural stick-figure persons, outfits and garment images.

Everything here is seeded and byte-reproducible. Bodies are built from axis
aligned rectangles per body part; garments are painted onto body-part rows so
both segmentation maps partition the same figure by construction.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import save_rgb, write_sidecars
from .raster import BODY_LEGEND, BODY_PARTS, CLOTHING, UNCLOTHED, BodyPart, LabelRaster
from .rules import GarmentSpec

WIDTH, HEIGHT = 48, 96
BACKGROUND_RGB = (255, 255, 255)
SKIN_RGB = (224, 172, 105)
FACE_RGB = (214, 160, 98)

# name -> (spec fields, clothing category, covered body parts, partial-part rules)
GARMENT_KINDS = {
    "shirt": dict(classification="upper", sleeve_length="long", closure="buttons",
                  category="upper_garment", slot="upper"),
    "t-shirt": dict(classification="upper", sleeve_length="short", category="upper_garment", slot="upper"),
    "tank top": dict(classification="upper", sleeve_length="sleeveless", category="upper_garment",
                     slot="upper"),
    "jacket": dict(classification="upper", sleeve_length="long", closure="zipper", outerwear=True,
                   category="outerwear", slot="outer"),
    "pants": dict(classification="lower", leg_length="long", category="lower_garment", slot="lower"),
    "shorts": dict(classification="lower", leg_length="short", category="lower_garment", slot="lower"),
    "dress": dict(classification="overall", sleeve_length="sleeveless", leg_length="short",
                  category="overall_garment", slot="overall"),
    "long dress": dict(classification="overall", sleeve_length="short", leg_length="long",
                       category="overall_garment", slot="overall"),
    "coat": dict(classification="overall", sleeve_length="long", leg_length="short", closure="buttons",
                 outerwear=True, category="outerwear", slot="outer"),
    "shoes": dict(category="footwear", slot="feet"),
    "boots": dict(category="footwear", slot="feet"),
}

TARGETS_BY_CATEGORY = {
    "dresses": ("dress", "long dress", "coat"),
    "upper_body": ("shirt", "t-shirt", "tank top", "jacket"),
    "lower_body": ("pants", "shorts"),
}


@dataclass(frozen=True)
class Layout:
    cx: int = 24
    head_top: int = 2
    torso_half: int = 9
    upper_torso: int = 17
    lower_torso: int = 11
    arm_gap: int = 1
    arm_width: int = 3
    upper_arm: int = 15
    lower_arm: int = 13
    leg_gap: int = 2
    upper_leg: int = 17
    lower_leg: int = 17

    @classmethod
    def random(cls, rng):
        return cls(
            cx=24 + int(rng.integers(-2, 3)),
            head_top=int(rng.integers(1, 4)),
            torso_half=int(rng.integers(8, 11)),
            upper_torso=int(rng.integers(16, 19)),
            lower_torso=int(rng.integers(10, 13)),
            arm_gap=int(rng.integers(1, 3)),
            arm_width=int(rng.integers(3, 5)),
            upper_arm=int(rng.integers(14, 17)),
            lower_arm=int(rng.integers(12, 15)),
            leg_gap=int(rng.integers(2, 5)),
            upper_leg=int(rng.integers(15, 19)),
            lower_leg=int(rng.integers(15, 19)),
        )

    def rects(self):
        """Body part -> list of (row0, row1, col0, col1) half-open rectangles."""
        cx, tw = self.cx, self.torso_half
        t0 = self.head_top + 11
        t1 = t0 + self.upper_torso
        h0 = t1 + self.lower_torso
        left = (cx - tw - self.arm_gap - self.arm_width, cx - tw - self.arm_gap)
        right = (cx + tw + self.arm_gap, cx + tw + self.arm_gap + self.arm_width)
        a1 = t0 + self.upper_arm
        a2 = a1 + self.lower_arm
        lg_l = (cx - tw + 1, cx - self.leg_gap // 2)
        lg_r = (cx + self.leg_gap - self.leg_gap // 2, cx + tw - 1)
        l1 = h0 + self.upper_leg
        l2 = l1 + self.lower_leg
        return {
            BodyPart.FACE: [(self.head_top, t0, cx - 5, cx + 5)],
            BodyPart.UPPER_TORSO: [(t0, t1, cx - tw, cx + tw)],
            BodyPart.LOWER_TORSO: [(t1, h0, cx - tw, cx + tw)],
            BodyPart.UPPER_ARMS: [(t0, a1, *left), (t0, a1, *right)],
            BodyPart.LOWER_ARMS: [(a1, a2, *left), (a1, a2, *right)],
            BodyPart.HANDS: [(a2, a2 + 4, *left), (a2, a2 + 4, *right)],
            BodyPart.UPPER_LEGS: [(h0, l1, *lg_l), (h0, l1, *lg_r)],
            BodyPart.LOWER_LEGS: [(l1, l2, *lg_l), (l1, l2, *lg_r)],
            BodyPart.FEET: [(l2, l2 + 4, lg_l[0] - 1, lg_l[1]), (l2, l2 + 4, lg_r[0], lg_r[1] + 1)],
        }


def body_raster(layout: Layout) -> LabelRaster:
    labels = np.zeros((HEIGHT, WIDTH), dtype=np.int32)
    for part, rects in layout.rects().items():
        for r0, r1, c0, c1 in rects:
            labels[r0:r1, c0:c1] = int(part)
    return LabelRaster(labels, BODY_LEGEND, BODY_PARTS)


def _rows_of(body, part):
    rows = np.flatnonzero((body.labels == int(part)).any(axis=1))
    return rows[0], rows[-1] + 1


def coverage(kind, body: LabelRaster) -> np.ndarray:
    """Pixels a garment of ``kind`` occupies on ``body``."""
    lab = body.labels
    B = BodyPart

    def parts(*ps):
        return np.isin(lab, [int(p) for p in ps])

    lt0, lt1 = _rows_of(body, B.LOWER_TORSO)
    waist = lt0 + (lt1 - lt0) // 2
    rows = np.arange(lab.shape[0])[:, None]
    upper_lower_torso = parts(B.LOWER_TORSO) & (rows < waist)
    lower_lower_torso = parts(B.LOWER_TORSO) & (rows >= waist)
    if kind in ("shirt", "jacket"):
        return parts(B.UPPER_TORSO, B.UPPER_ARMS, B.LOWER_ARMS) | upper_lower_torso
    if kind == "t-shirt":
        return parts(B.UPPER_TORSO, B.UPPER_ARMS) | upper_lower_torso
    if kind == "tank top":
        return parts(B.UPPER_TORSO) | upper_lower_torso
    if kind == "pants":
        return parts(B.UPPER_LEGS, B.LOWER_LEGS) | lower_lower_torso
    if kind == "shorts":
        return parts(B.UPPER_LEGS) | lower_lower_torso
    if kind == "dress":
        return parts(B.UPPER_TORSO, B.LOWER_TORSO, B.UPPER_LEGS)
    if kind == "long dress":
        return parts(B.UPPER_TORSO, B.LOWER_TORSO, B.UPPER_LEGS, B.LOWER_LEGS, B.UPPER_ARMS)
    if kind == "coat":
        return parts(B.UPPER_TORSO, B.LOWER_TORSO, B.UPPER_LEGS, B.UPPER_ARMS, B.LOWER_ARMS)
    if kind == "shoes":
        return parts(B.FEET)
    if kind == "boots":
        l0, l1 = _rows_of(body, B.LOWER_LEGS)
        return parts(B.FEET) | (parts(B.LOWER_LEGS) & (rows >= l1 - 4))
    raise ValueError(f"unknown garment kind {kind!r}")


def dress_person(body: LabelRaster, outfit) -> LabelRaster:
    """Clothing map for ``outfit`` (garment kinds, painted in order) on ``body``."""
    labels = np.where(body.labels != 0, UNCLOTHED, 0).astype(np.int32)
    legend = {0: "background", UNCLOTHED: "unclothed"}
    categories = {}
    next_id = 2
    for kind in outfit:
        cov = coverage(kind, body)
        if not cov.any():
            continue
        labels[cov] = next_id
        legend[next_id] = kind
        categories[next_id] = GARMENT_KINDS[kind]["category"]
        next_id += 1
    present = set(np.unique(labels).tolist()) | {0, UNCLOTHED}
    legend = {k: v for k, v in legend.items() if k in present}
    categories = {k: v for k, v in categories.items() if k in present}
    return LabelRaster(labels, legend, CLOTHING, categories)


def garment_color(kind, seed=0):
    rng = np.random.default_rng([seed, sum(map(ord, kind))])
    return tuple(int(v) for v in rng.integers(30, 200, size=3))


def render_person(body: LabelRaster, clothing: LabelRaster, seed=0) -> np.ndarray:
    img = np.empty((*body.shape, 3), dtype=np.uint8)
    img[:] = BACKGROUND_RGB
    img[clothing.labels == UNCLOTHED] = SKIN_RGB
    img[(clothing.labels == UNCLOTHED) & (body.labels == int(BodyPart.FACE))] = FACE_RGB
    for label, name in clothing.legend.items():
        if label > UNCLOTHED:
            img[clothing.labels == label] = garment_color(name, seed)
    return img


def render_garment(kind, seed=0, size=24) -> np.ndarray:
    """Square product image: horizontal two-tone stripes in the garment colour."""
    base = np.array(garment_color(kind, seed), dtype=np.int32)
    alt = np.clip(base + 40, 0, 255)
    img = np.empty((size, size, 3), dtype=np.uint8)
    for r in range(size):
        img[r] = base if (r // 3) % 2 == 0 else alt
    return img


def garment_spec(kind, gid=None, image_ref="") -> GarmentSpec:
    info = GARMENT_KINDS[kind]
    if "classification" not in info:
        raise ValueError(f"{kind!r} is not a try-on garment")
    cls = info["classification"]
    return GarmentSpec(
        id=gid or kind.replace(" ", "_"),
        classification=cls,
        sleeve_length=info.get("sleeve_length", "not_applicable"),
        leg_length=info.get("leg_length", "not_applicable"),
        closure=info.get("closure", "none"),
        outerwear=info.get("outerwear", False),
        category_noun=kind,
        image_ref=image_ref,
    )


def reference_outfit(outfit, target_kind):
    """The person's outfit after ideally wearing ``target_kind``."""
    slot = GARMENT_KINDS[target_kind]["slot"]
    clears = {"upper": {"upper"}, "lower": {"lower"}, "overall": {"upper", "lower", "overall"},
              "outer": {"outer"}}[slot]
    if slot == "overall":
        clears = clears | {"outer"}
    kept = [k for k in outfit if GARMENT_KINDS[k]["slot"] not in clears]
    feet = [k for k in kept if GARMENT_KINDS[k]["slot"] == "feet"]
    rest = [k for k in kept if k not in feet]
    return rest + [target_kind] + feet


def write_person(directory, name, body, clothing, seed=0):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{name}.png"
    save_rgb(render_person(body, clothing, seed), path)
    write_sidecars(path, body, clothing)
    return path


def write_garment(directory, kind, gid=None, seed=0):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    gid = gid or kind.replace(" ", "_")
    image = directory / f"{gid}.png"
    save_rgb(render_garment(kind, seed), image)
    spec = garment_spec(kind, gid, image.name)
    spec_path = directory / f"{gid}.json"
    spec_path.write_text(json.dumps(spec.to_json(), indent=2, sort_keys=True) + "\n")
    return spec_path


def _random_outfit(rng):
    if rng.random() < 0.25:
        outfit = ["dress"]
    else:
        outfit = [str(rng.choice(["shirt", "t-shirt", "tank top"])), str(rng.choice(["pants", "shorts"]))]
    outfit.append(str(rng.choice(["shoes", "boots"])))
    return outfit


def generate_dataset(out_dir, seed=0, count=12):
    """Write ``count`` person/garment pairs, cycling dresses/upper/lower categories.

    Each ``pair_XXX/`` holds person.png (+ segmentation sidecars), garment.png,
    garment_spec.json, reference.png and meta.json.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    categories = list(TARGETS_BY_CATEGORY)
    pairs = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        category = categories[i % len(categories)]
        target = str(rng.choice(TARGETS_BY_CATEGORY[category]))
        outfit = _random_outfit(rng)
        body = body_raster(Layout.random(rng))
        clothing = dress_person(body, outfit)
        pair_dir = out_dir / f"pair_{i:03d}"
        write_person(pair_dir, "person", body, clothing, seed)
        save_rgb(render_person(body, dress_person(body, reference_outfit(outfit, target)), seed),
                 pair_dir / "reference.png")
        save_rgb(render_garment(target, seed), pair_dir / "garment.png")
        spec = garment_spec(target, f"{target.replace(' ', '_')}_{i:03d}", "garment.png")
        (pair_dir / "garment_spec.json").write_text(json.dumps(spec.to_json(), indent=2, sort_keys=True) + "\n")
        meta = {"pair_id": pair_dir.name, "category": category, "outfit": outfit, "target": target}
        (pair_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        pairs.append(pair_dir)
    return pairs
