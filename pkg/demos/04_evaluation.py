"""
Mask efficiency on a synthetic dataset
======================================

Render a small dataset of person/garment pairs, then compare the trace-based
masks against a bounding-box baseline. Higher efficiency means more of the
original photo survives the try-on.
"""

import sys
import tempfile
from pathlib import Path

from ivton import stub_backends
from ivton.fixtures import generate_dataset
from ivton.harness import eval_report, evaluate_dataset

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="ivton_eval_"))

# Twelve pairs cycling through dresses, upper-body and lower-body targets.
pairs = generate_dataset(out / "data", seed=0, count=12)
print("generated", len(pairs), "pairs under", out / "data")

records, table, failures = evaluate_dataset(out / "data", stub_backends(out / "work"))
for r in records:
    print(f"{r.pair_id}  {r.category:<11} ours={r.efficiency:.4f}  bbox={r.baseline_efficiency:.4f}")

# The same tables the CLI writes to eval.md.
_, markdown = eval_report(records, table, failures)
print()
print(markdown)
