"""The eight zero-shot test mazes, and the aggregate statistics.

Run:  python demos/07_zero_shot_suite.py
"""

import numpy as np

from uedlab.evaluation import builtin_suite, iqm, min_max_normalize, optimality_gap
from uedlab.levelgen import serialize_level

suite = builtin_suite()
for name, level in suite.items():
    print(f"--- {name}")
    print(serialize_level(level))

# ---------------------------------------------------------------------------
# Aggregates: scores are min-max normalized, pooled, and summarized by the
# interquartile mean (drop the top and bottom quarter, average the middle)
# plus the optimality gap (mean shortfall below 1.0).
# ---------------------------------------------------------------------------
fake_run_scores = np.array([1.0, 1.0, 0.8, 0.6, 0.4, 0.2, 0.0, 0.0])
normalized = min_max_normalize(fake_run_scores, 0.0, 1.0)
print("example per-level solved rates:", fake_run_scores.tolist())
print(f"IQM            = {iqm(normalized):.3f}   (mean of the middle four: 0.8, 0.6, 0.4, 0.2)")
print(f"optimality gap = {optimality_gap(normalized):.3f}   (mean distance below 1.0)")
