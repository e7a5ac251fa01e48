"""Instruction-driven auto-masking and multi-garment virtual try-on orchestration."""

from .errors import (
    AmbiguousBindingError,
    BackendError,
    BindingError,
    ContractError,
    IvtonError,
    PlanExecutionError,
    RuleError,
    StepError,
    UnknownGarmentError,
)
from .raster import (
    BinaryMask,
    BodyPart,
    LabelRaster,
    area,
    convex_fill,
    dilate,
    mask_intersect,
    mask_subtract,
    mask_union,
    region_of,
    remove_center_stripe,
    verify_partition,
)
from .traces import MaskReport, Trace, compute_trace, estimated_mask, mask_efficiency, optimal_mask
from .rules import (
    GarmentSpec,
    RuleTable,
    StyleInstruction,
    TraceEstimate,
    default_rule_table,
    infer_traces,
    realize_mask,
)
from .instructions import ParsedInstruction, parse_instruction, resolve_bindings
from .planner import ExecutionPlan, PlanStep, build_plan, order_garments
from .executor import (
    ConflictReport,
    StepArtifacts,
    execute_plan,
    execute_step,
    needs_two_step,
    select_dummy,
)
from .metrics import EvalRecord, aggregate, ssim
from .backends import Backends, DummyLibrary, TryOnRequest, load_backends, stub_backends

__version__ = "0.1.0"
