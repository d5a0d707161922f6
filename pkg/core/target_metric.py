"""
Distance oracles on the target space
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

KINDS = ("euclidean", "circle_arc", "circle_chord", "product")


@dataclass(frozen=True)
class TargetMetric:
    """A complete metric on the target, acting on chart coordinates.

    Circle metrics read one angle coordinate in [0, 2π); other angles are
    reduced mod 2π first. Product metrics split coordinates in component order
    and add component distances.
    """

    kind: str
    dimension: int
    components: tuple["TargetMetric", ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown target metric kind: {self.kind}")
        if self.dimension <= 0:
            raise ValueError("target dimension must be positive")
        if self.kind == "product":
            if not self.components:
                raise ValueError("product metric needs components")
            if sum(c.dimension for c in self.components) != self.dimension:
                raise ValueError("dimension mismatch")
        elif self.kind.startswith("circle") and self.dimension != 1:
            raise ValueError("circle metrics act on a single angle")

    @classmethod
    def euclidean(cls, k: int) -> "TargetMetric":
        return cls("euclidean", int(k))

    @classmethod
    def circle_arc(cls) -> "TargetMetric":
        return cls("circle_arc", 1)

    @classmethod
    def circle_chord(cls) -> "TargetMetric":
        return cls("circle_chord", 1)

    @classmethod
    def product(cls, components: Sequence["TargetMetric"]) -> "TargetMetric":
        comps = tuple(components)
        return cls("product", sum(c.dimension for c in comps), comps)

    @property
    def is_euclidean(self) -> bool:
        return self.kind == "euclidean"

    def spec(self) -> str:
        if self.kind == "euclidean":
            return f"euclidean:{self.dimension}"
        if self.kind == "product":
            return "product:" + ",".join(f"({c.spec()})" if c.kind == "product" else c.spec()
                                         for c in self.components)
        return "circle:" + self.kind.split("_")[1]

    def cellwise(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Row-wise distances between two (n, dimension) coordinate arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if x.shape[1] != self.dimension or y.shape[1] != self.dimension:
            raise ValueError("dimension mismatch")
        if x.shape[0] != y.shape[0]:
            raise ValueError("row count mismatch")

        if self.kind == "euclidean":
            return np.linalg.norm(x - y, axis=1)
        if self.kind == "product":
            out = np.zeros(x.shape[0])
            start = 0
            for comp in self.components:
                stop = start + comp.dimension
                out += comp.cellwise(x[:, start:stop], y[:, start:stop])
                start = stop
            return out

        delta = np.abs(np.mod(x[:, 0], TWO_PI) - np.mod(y[:, 0], TWO_PI))
        arc = np.minimum(delta, TWO_PI - delta)
        if self.kind == "circle_arc":
            return arc
        return 2.0 * np.sin(arc / 2.0)


def distance(m: TargetMetric, x: Sequence[float], y: Sequence[float]) -> float:
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    if xa.shape != (m.dimension,) or ya.shape != (m.dimension,):
        raise ValueError("dimension mismatch")
    return float(m.cellwise(xa.reshape(1, -1), ya.reshape(1, -1))[0])


def _split_top_level(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_target(spec: str) -> TargetMetric:
    """Parse ``euclidean:<k>``, ``circle:arc``, ``circle:chord`` or ``product:<spec>,<spec>,...``.

    Product components may be parenthesised to nest products.
    """
    text = (spec or "").strip()
    if text.startswith("(") and text.endswith(")"):
        text = text[1:-1].strip()
    kind, sep, arg = text.partition(":")
    kind = kind.strip().lower()
    arg = arg.strip()
    if not sep:
        raise ValueError(f"invalid target spec: {spec!r}")

    if kind == "euclidean":
        try:
            k = int(arg)
        except ValueError:
            raise ValueError(f"invalid target spec: {spec!r}")
        return TargetMetric.euclidean(k)
    if kind == "circle":
        if arg == "arc":
            return TargetMetric.circle_arc()
        if arg == "chord":
            return TargetMetric.circle_chord()
        raise ValueError(f"invalid target spec: {spec!r}")
    if kind == "product":
        comps = [parse_target(p) for p in _split_top_level(arg)]
        if not comps:
            raise ValueError(f"invalid target spec: {spec!r}")
        return TargetMetric.product(comps)
    raise ValueError(f"invalid target spec: {spec!r}")
