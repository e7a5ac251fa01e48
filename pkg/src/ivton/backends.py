"""Contracts and implementations for the external model roles.

Four roles: segmentation (body parts + clothing maps), the inpainting VTO
model, the VLM planner, and the dummy-garment provider. Each role has a
deterministic local implementation used for offline runs and tests, and a
remote client speaking a small JSON-over-HTTP envelope::

    request:  {"request_id": str, "model_id": str, "payload": {...}}
    response: {"request_id": str, "model_id": str, "result": {...}}
              or {"request_id": str, "error": str}

Images travel as base64-encoded PNG. Image references are filesystem paths.
"""

import base64
import hashlib
import io
import json
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import numpy as np
from PIL import Image

from .errors import BackendError, ContractError
from .raster import (
    BODY_PARTS,
    CLOTHING,
    UNCLOTHED,
    BinaryMask,
    LabelRaster,
    legend_to_json,
    read_label_raster,
    region_of,
    verify_partition,
    write_label_raster,
)
from .rules import GarmentSpec, RuleTable, StyleInstruction, default_rule_table

log = logging.getLogger(__name__)

_CATEGORY_OF = {"upper": "upper_garment", "lower": "lower_garment", "overall": "overall_garment"}


# --- image helpers --------------------------------------------------------

def load_rgb(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"))


def save_rgb(arr, path) -> None:
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(path)


def image_size(path):
    with Image.open(path) as img:
        return img.size


def _png_b64(arr, mode):
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_png(b64):
    with Image.open(io.BytesIO(base64.b64decode(b64))) as img:
        img.load()
        return img.copy()


def garment_category(spec: GarmentSpec):
    return "outerwear" if spec.outerwear else _CATEGORY_OF[spec.classification]


# --- segmentation ---------------------------------------------------------

@dataclass(frozen=True)
class SegmentationResult:
    body: LabelRaster
    clothing: LabelRaster
    figure: BinaryMask

    def __post_init__(self):
        if self.body.kind != BODY_PARTS or self.clothing.kind != CLOTHING:
            raise ContractError("segmentation must return a body-parts map and a clothing map")
        if not (self.body.shape == self.clothing.shape == self.figure.shape):
            raise ContractError(
                f"segmentation maps disagree in size: body {self.body.shape}, "
                f"clothing {self.clothing.shape}, figure {self.figure.shape}")
        if not verify_partition(self.body, self.figure):
            raise ContractError("body-parts map does not partition the figure")
        if not verify_partition(self.clothing, self.figure):
            raise ContractError("clothing map does not partition the figure")

    @classmethod
    def from_maps(cls, body, clothing):
        return cls(body, clothing, body.figure())


def sidecar_paths(image_ref):
    """``person.png`` -> person.parts.png/.parts.json/.cloth.png/.cloth.json."""
    p = Path(image_ref)
    stem = p.with_suffix("")
    return {
        "parts": Path(f"{stem}.parts.png"),
        "parts_legend": Path(f"{stem}.parts.json"),
        "cloth": Path(f"{stem}.cloth.png"),
        "cloth_legend": Path(f"{stem}.cloth.json"),
    }


def has_sidecars(image_ref):
    return all(p.exists() for p in sidecar_paths(image_ref).values())


def write_sidecars(image_ref, body: LabelRaster, clothing: LabelRaster):
    paths = sidecar_paths(image_ref)
    write_label_raster(body, paths["parts"], paths["parts_legend"])
    write_label_raster(clothing, paths["cloth"], paths["cloth_legend"])


class SegmentationProvider(Protocol):
    def segment(self, image_ref) -> SegmentationResult: ...


class SidecarSegmentation:
    """Reads precomputed maps stored next to the image."""

    name = "sidecar-segmentation"

    def segment(self, image_ref) -> SegmentationResult:
        paths = sidecar_paths(image_ref)
        missing = [str(p) for p in paths.values() if not p.exists()]
        if missing:
            raise BackendError(self.name, f"missing sidecar file(s): {missing}")
        try:
            body = read_label_raster(paths["parts"], paths["parts_legend"], BODY_PARTS)
            clothing = read_label_raster(paths["cloth"], paths["cloth_legend"], CLOTHING)
            result = SegmentationResult.from_maps(body, clothing)
        except ContractError as exc:
            raise BackendError(self.name, f"{image_ref}: {exc}") from exc
        w, h = image_size(image_ref)
        if body.shape != (h, w):
            raise BackendError(self.name, f"{image_ref}: maps are {body.shape}, image is {(h, w)}")
        return result


# --- try-on ---------------------------------------------------------------

@dataclass(frozen=True)
class TryOnRequest:
    person_image_ref: str
    garment_image_ref: str
    mask: BinaryMask
    # Optional metadata; the paste-through stub uses it to update segmentation sidecars.
    garment_spec: Optional[GarmentSpec] = None


class VtoBackend(Protocol):
    def try_on(self, req: TryOnRequest) -> str: ...


def _check_request(req, provider):
    try:
        w, h = image_size(req.person_image_ref)
    except OSError as exc:
        raise BackendError(provider, f"cannot read person image: {exc}") from exc
    if req.mask.shape != (h, w):
        raise ContractError(f"mask {req.mask.shape} does not match person image {(h, w)}")


def paste_through(person: np.ndarray, garment: np.ndarray, mask: BinaryMask) -> np.ndarray:
    """Person pixels outside ``mask``; nearest-neighbour garment resample inside.

    The garment is stretched over the mask's bounding box and clipped to the mask.
    """
    out = person.copy()
    box = mask.bbox()
    if box is None:
        return out
    r0, c0, r1, c1 = box
    h, w = r1 - r0 + 1, c1 - c0 + 1
    gh, gw = garment.shape[:2]
    rows = (np.arange(h) * gh) // h
    cols = (np.arange(w) * gw) // w
    patch = garment[rows[:, None], cols[None, :]]
    sub = mask.bits[r0:r1 + 1, c0:c1 + 1]
    out[r0:r1 + 1, c0:c1 + 1][sub] = patch[sub]
    return out


def dressed_clothing(body: LabelRaster, clothing: LabelRaster, mask: BinaryMask,
                     spec: GarmentSpec, table: RuleTable = None) -> LabelRaster:
    """Clothing map after inpainting ``spec`` inside ``mask``.

    Masked pixels on the body parts the garment covers become a new segment;
    other masked figure pixels become unclothed.
    """
    parts = (table or default_rule_table()).evaluate(spec, StyleInstruction()).include_parts
    new_id = max(clothing.legend) + 1
    labels = clothing.labels.copy()
    figure = clothing.labels != 0
    labels[mask.bits & figure] = UNCLOTHED
    labels[mask.bits & region_of(body, parts).bits] = new_id
    legend = {**clothing.legend, new_id: spec.category_noun or spec.id}
    categories = {**clothing.categories, new_id: garment_category(spec)}
    # Drop segments that no longer own any pixel.
    present = set(np.unique(labels).tolist()) | {0, UNCLOTHED}
    legend = {k: v for k, v in legend.items() if k in present}
    categories = {k: v for k, v in categories.items() if k in present}
    return LabelRaster(labels, legend, CLOTHING, categories)


class PasteThroughVto:
    """Deterministic stand-in for an inpainting VTO model.

    Outputs are written to ``workdir`` under a content hash of the request.
    When the person image has segmentation sidecars and the request carries a
    garment spec, matching sidecars are written for the output image.
    """

    name = "paste-through-vto"

    def __init__(self, workdir, table: RuleTable = None):
        self.workdir = Path(workdir)
        self.table = table

    def try_on(self, req: TryOnRequest) -> str:
        _check_request(req, self.name)
        person_bytes = Path(req.person_image_ref).read_bytes()
        garment_bytes = Path(req.garment_image_ref).read_bytes()
        digest = hashlib.sha256()
        for chunk in (person_bytes, garment_bytes, np.packbits(req.mask.bits).tobytes(),
                      json.dumps(req.garment_spec.to_json() if req.garment_spec else None,
                                 sort_keys=True).encode()):
            digest.update(hashlib.sha256(chunk).digest())
        self.workdir.mkdir(parents=True, exist_ok=True)
        out_path = self.workdir / f"tryon_{digest.hexdigest()[:20]}.png"
        person = load_rgb(req.person_image_ref)
        garment = load_rgb(req.garment_image_ref)
        save_rgb(paste_through(person, garment, req.mask), out_path)
        if req.garment_spec is not None and has_sidecars(req.person_image_ref):
            seg = SidecarSegmentation().segment(req.person_image_ref)
            clothing = dressed_clothing(seg.body, seg.clothing, req.mask, req.garment_spec, self.table)
            write_sidecars(out_path, seg.body, clothing)
        return str(out_path)


class FailingVto:
    """VTO backend that raises on the n-th call (1-based); for failure injection."""

    name = "failing-vto"

    def __init__(self, inner, fail_on_call=1):
        self.inner = inner
        self.fail_on_call = fail_on_call
        self.calls = 0

    def try_on(self, req):
        self.calls += 1
        if self.calls == self.fail_on_call:
            raise BackendError(self.name, f"injected failure on call {self.calls}")
        return self.inner.try_on(req)


# --- VLM planner ----------------------------------------------------------

class VlmPlanner(Protocol):
    def propose(self, garments, instruction_text, person_image_ref) -> dict: ...


class ScriptedVlm:
    """Returns a fixed proposal (or raises a fixed error); for offline runs."""

    name = "scripted-vlm"

    def __init__(self, response=None, error=None):
        self.response = response
        self.error = error

    def propose(self, garments, instruction_text, person_image_ref):
        if self.error is not None:
            raise BackendError(self.name, str(self.error))
        return self.response


# --- dummy garments -------------------------------------------------------

class DummyGarmentGenerator(Protocol):
    def generate(self, classification, required_exposure) -> tuple: ...


def _avoids(spec, required_exposure, table):
    try:
        parts = table.evaluate(spec, StyleInstruction()).include_parts
    except ContractError:
        return False
    return not (parts & {int(p) for p in required_exposure})


class DummyLibrary:
    """Dummy-garment provider backed by a JSON manifest.

    Manifest: ``{"entries": [{<GarmentSpec fields>, "image": "file.png"}]}``;
    image paths are relative to the manifest.
    """

    name = "dummy-library"

    def __init__(self, manifest_path=None, generator: DummyGarmentGenerator = None,
                 table: RuleTable = None):
        self.generator = generator
        self.table = table or default_rule_table()
        self.entries = []
        if manifest_path is not None:
            manifest_path = Path(manifest_path)
            doc = json.loads(manifest_path.read_text())
            for entry in doc.get("entries", []):
                image = manifest_path.parent / entry["image"]
                spec = GarmentSpec.from_json({**entry, "image_ref": str(image)})
                self.entries.append(spec)

    @classmethod
    def bundled(cls, generator=None, table=None):
        from importlib import resources
        path = resources.files("ivton").joinpath("data/dummies/manifest.json")
        return cls(Path(str(path)), generator, table)

    def fetch(self, classification, required_exposure):
        for spec in self.entries:
            if spec.classification == classification and _avoids(spec, required_exposure, self.table):
                return spec, spec.image_ref
        if self.generator is not None:
            spec, ref = self.generator.generate(classification, required_exposure)
            if not _avoids(spec, required_exposure, self.table):
                raise BackendError("dummy-generator",
                                   f"generated {spec.id} still covers {sorted(required_exposure)}")
            return spec, ref
        raise BackendError(self.name, f"no {classification} dummy leaves "
                                      f"{sorted(int(p) for p in required_exposure)} exposed")


class ProceduralDummyGenerator:
    """Renders a solid-colour sleeveless/short dummy garment on demand."""

    name = "procedural-dummy-generator"

    def __init__(self, workdir, color=(128, 128, 128)):
        self.workdir = Path(workdir)
        self.color = color

    def generate(self, classification, required_exposure):
        spec = GarmentSpec(
            id=f"generated_{classification}_dummy",
            classification=classification,
            sleeve_length="not_applicable" if classification == "lower" else "sleeveless",
            leg_length="not_applicable" if classification == "upper" else "short",
            category_noun="dummy",
        )
        self.workdir.mkdir(parents=True, exist_ok=True)
        path = self.workdir / f"{spec.id}.png"
        save_rgb(np.full((16, 16, 3), self.color, dtype=np.uint8), path)
        spec = GarmentSpec.from_json({**spec.to_json(), "image_ref": str(path)})
        return spec, str(path)


# --- remote clients -------------------------------------------------------

class RemoteClient:
    """POSTs the JSON envelope to one endpoint."""

    def __init__(self, role, endpoint, timeout=60.0, auth_token_env=None, model_id="default"):
        self.role = role
        self.endpoint = endpoint
        self.timeout = timeout
        self.auth_token_env = auth_token_env
        self.model_id = model_id
        self._counter = 0

    @property
    def name(self):
        return f"remote-{self.role}@{self.endpoint}"

    def call(self, payload):
        self._counter += 1
        request_id = f"{self.role}-{self._counter}"
        body = json.dumps({"request_id": request_id, "model_id": self.model_id,
                           "payload": payload}).encode()
        headers = {"Content-Type": "application/json"}
        if self.auth_token_env:
            token = os.environ.get(self.auth_token_env)
            if token is None:
                raise BackendError(self.name, f"auth token env var {self.auth_token_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                doc = json.loads(resp.read().decode())
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise BackendError(self.name, f"transport failure: {exc}") from exc
        if not isinstance(doc, dict):
            raise BackendError(self.name, "response is not a JSON object")
        if doc.get("error"):
            raise BackendError(self.name, f"remote error: {doc['error']}")
        if "result" not in doc:
            raise BackendError(self.name, "response has no 'result'")
        return doc["result"]


class RemoteSegmentation:
    def __init__(self, client: RemoteClient):
        self.client = client

    @property
    def name(self):
        return self.client.name

    def segment(self, image_ref) -> SegmentationResult:
        result = self.client.call({"image_png_b64": _png_b64(load_rgb(image_ref), "RGB")})
        try:
            parts = np.array(_decode_png(result["parts_png_b64"]), dtype=np.int32)
            cloth = np.array(_decode_png(result["cloth_png_b64"]), dtype=np.int32)
            body = LabelRaster(parts, {int(k): v for k, v in result["parts_legend"].items()}, BODY_PARTS)
            clothing = LabelRaster(cloth, {int(k): v for k, v in result["cloth_legend"].items()},
                                   CLOTHING,
                                   {int(k): v for k, v in result.get("cloth_categories", {}).items()})
            seg = SegmentationResult.from_maps(body, clothing)
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise BackendError(self.name, f"invalid segmentation response: {exc}") from exc
        w, h = image_size(image_ref)
        if seg.body.shape != (h, w):
            raise BackendError(self.name, f"maps are {seg.body.shape}, image is {(h, w)}")
        return seg


class RemoteVto:
    def __init__(self, client: RemoteClient, workdir):
        self.client = client
        self.workdir = Path(workdir)

    @property
    def name(self):
        return self.client.name

    def try_on(self, req: TryOnRequest) -> str:
        _check_request(req, self.name)
        payload = {
            "person_png_b64": _png_b64(load_rgb(req.person_image_ref), "RGB"),
            "garment_png_b64": _png_b64(load_rgb(req.garment_image_ref), "RGB"),
            "mask_png_b64": _png_b64(req.mask.bits.astype(np.uint8) * 255, "L"),
            "garment_spec": req.garment_spec.to_json() if req.garment_spec else None,
        }
        result = self.client.call(payload)
        try:
            img = _decode_png(result["image_png_b64"]).convert("RGB")
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise BackendError(self.name, f"invalid try-on response: {exc}") from exc
        if img.size != image_size(req.person_image_ref):
            raise BackendError(self.name, f"output size {img.size} differs from person image")
        self.workdir.mkdir(parents=True, exist_ok=True)
        data = np.array(img)
        out = self.workdir / f"remote_{hashlib.sha256(data.tobytes()).hexdigest()[:20]}.png"
        save_rgb(data, out)
        return str(out)


class RemoteVlmPlanner:
    def __init__(self, client: RemoteClient):
        self.client = client

    @property
    def name(self):
        return self.client.name

    def propose(self, garments, instruction_text, person_image_ref):
        payload = {
            "garments": [g.to_json() for g in garments],
            "instruction": instruction_text,
            "person_png_b64": _png_b64(load_rgb(person_image_ref), "RGB"),
        }
        return self.client.call(payload)


# --- configuration --------------------------------------------------------

@dataclass
class Backends:
    segmentation: SegmentationProvider
    vto: VtoBackend
    dummies: DummyLibrary
    vlm: Optional[VlmPlanner] = None
    workdir: Path = field(default_factory=lambda: Path("."))


def stub_backends(workdir) -> Backends:
    workdir = Path(workdir)
    return Backends(
        segmentation=SidecarSegmentation(),
        vto=PasteThroughVto(workdir / "vto"),
        dummies=DummyLibrary.bundled(),
        workdir=workdir,
    )


def _remote(role, cfg):
    return RemoteClient(role, cfg["endpoint"], float(cfg.get("timeout", 60.0)),
                        cfg.get("auth_token_env"), cfg.get("model_id", "default"))


def load_backends(config_path=None, workdir=".") -> Backends:
    """Build backends from a JSON config; missing sections fall back to stubs.

    Config keys: ``segmentation``, ``vto``, ``vlm`` (each ``{"kind": "stub"|"remote",
    "endpoint", "timeout", "auth_token_env", "model_id"}``), ``dummy_library``
    (manifest path), ``dummy_generator`` (bool), ``workdir``.
    """
    cfg = {}
    if config_path is not None:
        try:
            cfg = json.loads(Path(config_path).read_text())
        except (OSError, ValueError) as exc:
            raise ContractError(f"cannot read backend config {config_path}: {exc}") from exc
    workdir = Path(cfg.get("workdir", workdir))
    backends = stub_backends(workdir)
    seg = cfg.get("segmentation", {"kind": "stub"})
    if seg.get("kind") == "remote":
        backends.segmentation = RemoteSegmentation(_remote("segmentation", seg))
    vto = cfg.get("vto", {"kind": "stub"})
    if vto.get("kind") == "remote":
        backends.vto = RemoteVto(_remote("vto", vto), workdir / "vto")
    vlm = cfg.get("vlm")
    if vlm and vlm.get("kind") == "remote":
        backends.vlm = RemoteVlmPlanner(_remote("vlm", vlm))
    generator = ProceduralDummyGenerator(workdir / "dummies") if cfg.get("dummy_generator") else None
    if "dummy_library" in cfg:
        backends.dummies = DummyLibrary(cfg["dummy_library"], generator)
    elif generator is not None:
        backends.dummies = DummyLibrary.bundled(generator)
    return backends


def segmentation_to_json(seg: SegmentationResult):
    """Wire form of a segmentation result (for remote servers and fixtures)."""
    return {
        "parts_png_b64": _png_b64(seg.body.labels.astype(np.uint8), "L"),
        "parts_legend": legend_to_json(seg.body)["labels"],
        "cloth_png_b64": _png_b64(seg.clothing.labels.astype(np.uint8), "L"),
        "cloth_legend": legend_to_json(seg.clothing)["labels"],
        "cloth_categories": legend_to_json(seg.clothing).get("categories", {}),
    }
