"""Two deterministic in-process executors plus a naive semantics oracle.

colstar is a single-partition engine; shardrun runs four hash partitions
with explicit exchanges. Both report per-node actual cardinalities and
runtime-units computed from hidden true weights over the same formula
shapes as the cost model, which makes them usable ground truth for
cost-parameter tuning experiments.
"""

from .reference import reference_eval, rows_multiset
from .executor import ExecutionMetrics, ExecutionResult, NodeMetric, execute
from .planner import plan_for_engine
from .weights import true_params_for

__all__ = [
    "reference_eval", "rows_multiset", "execute", "plan_for_engine",
    "ExecutionMetrics", "ExecutionResult", "NodeMetric", "true_params_for",
]
