"""The published cost-parameter registry and the search-space projection.

The registry (60 names with defaults and bounds) is a vendored copy of the
optimizer's published contract; the projection maps a 10-dimensional
search vector into the full space multiplicatively in log scale, clamped
to the registry bounds.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import numpy as np

SEARCH_DIMS = 10


def load_registry() -> list[dict]:
    ref = resources.files("tuner_client").joinpath("data/param_registry.json")
    return json.loads(ref.read_text(encoding="utf-8"))


class Projection:
    def __init__(self, seed: int, registry: list[dict] | None = None):
        self.registry = registry or load_registry()
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((len(self.registry), SEARCH_DIMS))

    def map(self, z) -> dict:
        z = np.clip(np.asarray(z, dtype=float), -1.0, 1.0)
        scale = self.matrix @ z
        out = {}
        for spec, s in zip(self.registry, scale):
            v = spec["default"] * math.exp(float(s))
            out[spec["name"]] = min(spec["hi"], max(spec["lo"], v))
        return out
