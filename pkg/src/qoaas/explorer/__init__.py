"""Cost-based exploration: memo, transformation and implementation rules,
required physical properties (ordering, distribution, engine), enforcers,
and branch-and-bound winner selection."""

from .api import AnnotatedPlan, OptimizeRequest, optimize
from .memo import Memo
from .search import Props

__all__ = ["optimize", "OptimizeRequest", "AnnotatedPlan", "Memo", "Props"]
