"""Domain types for attributed graph matching.

A matching maps the smaller (query) graph into the larger (target) graph:
``assign[i, i'] = 1`` iff node ``i`` of ``g`` goes to node ``i'`` of
``g_prime``. Every row sums to one and every column to at most one.

The quadratic compatibility ``d[i, i', j, j']`` is never stored. It is always
``edge_weight * g.adjacency[i, j] * g_prime.adjacency[i', j']`` so the
quadratic part of the objective collapses to ``<y, A y A'>``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np


class MatchingError(ValueError):
    """Raised when an assignment matrix violates the matching constraints."""


@dataclass(frozen=True)
class AttributedGraph:
    points: np.ndarray
    node_attrs: np.ndarray
    adjacency: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        attrs = np.asarray(self.node_attrs, dtype=float)
        adj = np.asarray(self.adjacency)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValueError(f"points must be (n, 2), got {points.shape}")
        n = points.shape[0]
        if attrs.ndim != 2 or attrs.shape[0] != n:
            raise ValueError(f"node_attrs must have {n} rows, got shape {attrs.shape}")
        if adj.shape != (n, n):
            raise ValueError(f"adjacency must be ({n}, {n}), got {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if not (adj == adj.T).all() or np.any(np.diag(adj)):
            raise ValueError("adjacency must be symmetric with zero diagonal")
        for name, arr in (("points", points), ("node_attrs", attrs), ("adjacency", adj.astype(float))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.node_attrs.shape[1]

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    @classmethod
    def without_edges(cls, points, node_attrs) -> "AttributedGraph":
        n = np.asarray(points).shape[0]
        return cls(points, node_attrs, np.zeros((n, n)))


class Violation(NamedTuple):
    kind: str  # "shape", "entry", "row" or "column"
    index: int
    total: float

    def __str__(self):
        if self.kind == "shape":
            return f"shape mismatch (expected {self.index} rows)"
        if self.kind == "entry":
            return f"entry in row {self.index} is not 0/1"
        if self.kind == "row":
            return f"row {self.index} sums to {self.total:g}"
        return f"column {self.index} sum > 1 ({self.total:g})"


def validate_matching(y, n: int, n_prime: int) -> Optional[Violation]:
    """Return ``None`` if ``y`` is a valid (n x n') matching, else the first violation."""
    y = np.asarray(y.assign if isinstance(y, Matching) else y)
    if y.shape != (n, n_prime):
        return Violation("shape", n, float("nan"))
    bad = ~np.isin(y, (0, 1))
    if bad.any():
        return Violation("entry", int(np.argwhere(bad)[0, 0]), float("nan"))
    rows = y.sum(axis=1)
    for i, s in enumerate(rows):
        if s != 1:
            return Violation("row", i, float(s))
    cols = y.sum(axis=0)
    for j, s in enumerate(cols):
        if s > 1:
            return Violation("column", j, float(s))
    return None


@dataclass(frozen=True)
class Matching:
    assign: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.assign)
        if y.ndim != 2:
            raise MatchingError(f"assignment must be a matrix, got shape {y.shape}")
        violation = validate_matching(y, *y.shape)
        if violation is not None:
            raise MatchingError(str(violation))
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "assign", y)

    @classmethod
    def from_perm(cls, perm, n_prime: int) -> "Matching":
        perm = np.asarray(perm, dtype=int)
        y = np.zeros((perm.size, n_prime), dtype=np.int8)
        y[np.arange(perm.size), perm] = 1
        return cls(y)

    @classmethod
    def identity(cls, n: int, n_prime: Optional[int] = None) -> "Matching":
        return cls.from_perm(np.arange(n), n if n_prime is None else n_prime)

    @property
    def shape(self):
        return self.assign.shape

    @property
    def perm(self) -> np.ndarray:
        """Target index for every query node."""
        return np.argmax(self.assign, axis=1)

    def __eq__(self, other):
        if not isinstance(other, Matching):
            return NotImplemented
        return self.shape == other.shape and bool((self.assign == other.assign).all())

    def __hash__(self):
        return hash((self.shape, self.assign.tobytes()))


@dataclass(frozen=True)
class WeightVector:
    w1: np.ndarray
    w2: float = 0.0

    def __post_init__(self):
        w1 = np.array(self.w1, dtype=float).ravel()
        w2 = float(self.w2)
        if not (np.isfinite(w1).all() and np.isfinite(w2)):
            raise ValueError("weights must be finite")
        w1.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    def as_array(self) -> np.ndarray:
        return np.append(self.w1, self.w2)

    @classmethod
    def from_array(cls, w) -> "WeightVector":
        w = np.asarray(w, dtype=float).ravel()
        return cls(w[:-1], w[-1])

    @classmethod
    def zeros(cls, dim: int) -> "WeightVector":
        return cls(np.zeros(dim), 0.0)

    @property
    def dim(self) -> int:
        return self.w1.size


@dataclass(frozen=True)
class CompatibilityTables:
    c: np.ndarray
    edge_weight: float = 0.0

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 2:
            raise ValueError(f"c must be a matrix, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "edge_weight", float(self.edge_weight))


@dataclass(frozen=True)
class TrainingInstance:
    g: AttributedGraph
    g_prime: AttributedGraph
    y_true: Matching
    scene_width: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        expected = (self.g.num_nodes, self.g_prime.num_nodes)
        if self.y_true.shape != expected:
            raise MatchingError(f"y_true has shape {self.y_true.shape}, expected {expected}")
        if not self.scene_width > 0:
            raise ValueError("scene_width must be positive")


MatchingLike = Union[Matching, np.ndarray]


def as_assign(y: MatchingLike) -> np.ndarray:
    return np.asarray(y.assign if isinstance(y, Matching) else y, dtype=float)


def quadratic_term(g: AttributedGraph, g_prime: AttributedGraph, y: MatchingLike) -> float:
    """Number of ordered edge pairs (ij, i'j') with both endpoints mapped: <y, A y A'>."""
    y = as_assign(y)
    return float(np.sum(y * (g.adjacency @ y @ g_prime.adjacency)))


def check_dims(c_shape, g: AttributedGraph, g_prime: AttributedGraph, y=None):
    expected = (g.num_nodes, g_prime.num_nodes)
    if tuple(c_shape) != expected:
        raise ValueError(f"compatibility shape {tuple(c_shape)} does not match graphs {expected}")
    if y is not None and as_assign(y).shape != expected:
        raise ValueError(f"matching shape {as_assign(y).shape} does not match graphs {expected}")


def objective_value(tables: CompatibilityTables, g: AttributedGraph,
                    g_prime: AttributedGraph, y: MatchingLike) -> float:
    """Quadratic assignment objective sum c*y + sum d*y*y with factored d."""
    check_dims(tables.c.shape, g, g_prime, y)
    y = as_assign(y)
    value = float(np.sum(tables.c * y))
    if tables.edge_weight != 0.0:
        value += tables.edge_weight * quadratic_term(g, g_prime, y)
    return value
