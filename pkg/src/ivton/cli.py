"""``ivton`` command line: mask, plan, tryon, eval, gen-fixtures.

Exit codes: 0 success, 2 input/contract error, 3 backend error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import load_backends
from .errors import BackendError, BindingError, ContractError, PlanExecutionError, StepError
from .executor import execute_plan
from .fixtures import generate_dataset
from .harness import StageError, eval_report, evaluate_dataset, mask_for, write_mask_result
from .planner import build_plan
from .rules import GarmentSpec

log = logging.getLogger("ivton")

EXIT_OK, EXIT_INPUT, EXIT_BACKEND = 0, 2, 3


def _garments(args):
    specs = [GarmentSpec.load(p) for p in args.garment_spec]
    if args.garment:
        if len(args.garment) != len(specs):
            raise ContractError("--garment must be given once per --garment-spec")
        specs = [GarmentSpec.from_json({**s.to_json(), "image_ref": str(Path(g).resolve())})
                 for s, g in zip(specs, args.garment)]
    return specs


def _plan(args, backends):
    garments = _garments(args)
    seg = backends.segmentation.segment(args.person)
    return build_plan(garments, args.instruction, seg.body, seg.clothing, str(Path(args.person).resolve()),
                      dummies=backends.dummies, vlm=backends.vlm)


def cmd_mask(args):
    backends = load_backends(args.backend_config, workdir=args.out)
    specs = _garments(args)
    if len(specs) != 1:
        raise ContractError("mask takes exactly one --garment-spec")
    result = mask_for(args.person, specs[0], args.instruction, backends)
    write_mask_result(result, args.out)
    print(json.dumps(result.report.to_json(), sort_keys=True))


def cmd_plan(args):
    backends = load_backends(args.backend_config, workdir=args.out)
    plan = _plan(args, backends)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(plan.dumps())
    print(out / "plan.json")


def cmd_tryon(args):
    backends = load_backends(args.backend_config, workdir=Path(args.out) / "cache")
    plan = _plan(args, backends)
    result = execute_plan(plan, backends, run_root=args.out)
    print(result.run_dir)


def cmd_eval(args):
    backends = load_backends(args.backend_config, workdir=Path(args.out) / "cache")
    records, table, failures = evaluate_dataset(args.dataset, backends)
    doc, md = eval_report(records, table, failures)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (out / "eval.md").write_text(md)
    sys.stdout.write(md)
    return EXIT_INPUT if failures else EXIT_OK


def cmd_gen_fixtures(args):
    try:
        pairs = generate_dataset(args.out, seed=args.seed, count=args.count)
    except OSError as exc:
        raise ContractError(f"cannot write fixtures to {args.out}: {exc}") from exc
    print(f"wrote {len(pairs)} pairs to {args.out}")


def build_parser():
    parser = argparse.ArgumentParser(prog="ivton", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def person_args(p, many):
        p.add_argument("--person", required=True, help="person image (PNG)")
        p.add_argument("--garment-spec", action="append", required=True,
                       help="garment spec JSON" + (" (repeatable, one per garment)" if many else ""))
        p.add_argument("--garment", action="append", default=[],
                       help="garment image overriding the spec's image_ref")
        p.add_argument("--instruction", default="", help="free-text style instruction")
        p.add_argument("--backend-config", help="backend config JSON (default: local stubs)")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("mask", help="compute the try-on mask for one garment")
    person_args(p, many=False)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("plan", help="write the execution plan for one or more garments")
    person_args(p, many=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("tryon", help="plan and execute, writing a run directory")
    person_args(p, many=True)
    p.set_defaults(func=cmd_tryon)

    p = sub.add_parser("eval", help="mask efficiency / SSIM table over a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--backend-config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-fixtures", help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=12)
    p.set_defaults(func=cmd_gen_fixtures)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or EXIT_OK
    except StageError as exc:
        print(f"error [stage={exc.stage}]: {exc.cause}", file=sys.stderr)
        return EXIT_BACKEND if isinstance(exc.cause, BackendError) else EXIT_INPUT
    except PlanExecutionError as exc:
        print(f"error: plan aborted after {len(exc.artifacts)} step(s): {exc}", file=sys.stderr)
        cause = exc.error.cause if isinstance(exc.error, StepError) else exc.error
        return EXIT_BACKEND if isinstance(cause, BackendError) else EXIT_INPUT
    except BackendError as exc:
        print(f"error [stage=backend]: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ContractError, BindingError, OSError, json.JSONDecodeError) as exc:
        print(f"error [stage=input]: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
