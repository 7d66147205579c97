"""Node attributes, adjacency and the joint feature map.

Node attributes are log-polar shape-context histograms; edges come from a
Delaunay triangulation of the landmarks. For a matching ``y`` the joint
feature is ``[sum_ii' y_ii' phi1(G_i, G'_i'), sum_ii'jj' y_ii' y_jj' phi2(G_ij, G'_i'j')]``
so that ``<w, joint_feature(y)>`` is exactly the matching objective under
weights ``w``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import pdist

from .core import AttributedGraph, MatchingLike, TrainingInstance, as_assign, check_dims, quadratic_term


@dataclass(frozen=True)
class ShapeContextConfig:
    angular_bins: int = 12
    # upper edges, in units of the mean pairwise distance; first bin is (0, edge0)
    radial_bin_edges: Sequence[float] = field(default=(0.125, 0.25, 0.5, 1.0, 2.0))

    def __post_init__(self):
        edges = tuple(float(e) for e in self.radial_bin_edges)
        if self.angular_bins < 1 or not edges:
            raise ValueError("need at least one angular and one radial bin")
        if edges[0] <= 0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("radial_bin_edges must be positive and strictly increasing")
        object.__setattr__(self, "radial_bin_edges", edges)

    @property
    def dim(self) -> int:
        return self.angular_bins * len(self.radial_bin_edges)


@dataclass(frozen=True)
class JointFeature:
    node_part: np.ndarray
    edge_part: float

    def as_array(self) -> np.ndarray:
        return np.append(self.node_part, self.edge_part)

    def __sub__(self, other: "JointFeature") -> "JointFeature":
        return JointFeature(self.node_part - other.node_part, self.edge_part - other.edge_part)


def shape_context(points, cfg: ShapeContextConfig = ShapeContextConfig()) -> np.ndarray:
    """Histogram of (angle, normalised radius) of every other point, one row per point.

    Column ``r * angular_bins + a`` counts neighbours in radial bin ``r`` and
    angular sector ``a``. Radii are divided by the mean over all unordered
    pairs of distinct points. Neighbours at radius 0 or beyond the outer edge
    are not counted.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("shape_context needs at least 2 points in 2-D")
    mean_dist = pdist(pts).mean()
    if not mean_dist > 0:
        raise ValueError("all points coincide; mean pairwise distance is 0")

    n = pts.shape[0]
    diff = pts[None, :, :] - pts[:, None, :]  # diff[i, j] = p_j - p_i
    radius = np.hypot(diff[..., 0], diff[..., 1]) / mean_dist
    angle = np.mod(np.arctan2(diff[..., 1], diff[..., 0]), 2 * np.pi)

    edges = np.asarray(cfg.radial_bin_edges)
    # bins are [lower, upper); lower edge of the first bin is exclusive 0
    r_bin = np.searchsorted(edges, radius, side="right")
    a_bin = np.minimum((angle / (2 * np.pi / cfg.angular_bins)).astype(int), cfg.angular_bins - 1)
    keep = (radius > 0) & (r_bin < edges.size)

    hist = np.zeros((n, cfg.dim))
    rows = np.broadcast_to(np.arange(n)[:, None], (n, n))[keep]
    cols = r_bin[keep] * cfg.angular_bins + a_bin[keep]
    np.add.at(hist, (rows, cols), 1.0)
    return hist


def delaunay_adjacency(points) -> np.ndarray:
    """Symmetric 0/1 adjacency of a Delaunay triangulation of ``points``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("Delaunay triangulation needs at least 3 points in 2-D")
    centred = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-12 * max(1.0, np.abs(centred).max())) < 2:
        raise ValueError("points are collinear; no triangulation exists")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise ValueError(f"triangulation failed: {exc}") from exc
    n = pts.shape[0]
    adj = np.zeros((n, n), dtype=np.int8)
    for a, b in ((0, 1), (1, 2), (0, 2)):
        adj[tri.simplices[:, a], tri.simplices[:, b]] = 1
    adj |= adj.T
    np.fill_diagonal(adj, 0)
    return adj


def phi1(attr_i, attr_i_prime) -> np.ndarray:
    a = np.asarray(attr_i, dtype=float)
    b = np.asarray(attr_i_prime, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"attribute lengths differ: {a.shape} vs {b.shape}")
    return -((a - b) ** 2)


def phi2(gij, gpij) -> float:
    return float(gij) * float(gpij)


def pairwise_phi1(g: AttributedGraph, g_prime: AttributedGraph) -> np.ndarray:
    """All node feature vectors at once, shape (n, n', attr_dim)."""
    if g.attr_dim != g_prime.attr_dim:
        raise ValueError(f"attribute dims differ: {g.attr_dim} vs {g_prime.attr_dim}")
    return -((g.node_attrs[:, None, :] - g_prime.node_attrs[None, :, :]) ** 2)


def node_feature_sum(g: AttributedGraph, g_prime: AttributedGraph, y) -> np.ndarray:
    """sum_ii' y_ii' phi1(G_i, G'_i') without forming the (n, n', dim) tensor."""
    y = as_assign(y)
    a, b = g.node_attrs, g_prime.node_attrs
    return -(y.sum(axis=1) @ a**2 - 2.0 * np.einsum("ir,ij,jr->r", a, y, b) + y.sum(axis=0) @ b**2)


def joint_feature(g: AttributedGraph, g_prime: AttributedGraph, y: MatchingLike) -> JointFeature:
    check_dims(as_assign(y).shape, g, g_prime)
    if g.attr_dim != g_prime.attr_dim:
        raise ValueError(f"attribute dims differ: {g.attr_dim} vs {g_prime.attr_dim}")
    return JointFeature(node_feature_sum(g, g_prime, y), quadratic_term(g, g_prime, y))


def psi(instance: TrainingInstance, y: MatchingLike) -> JointFeature:
    """Feature margin of the ground truth over ``y``."""
    truth = joint_feature(instance.g, instance.g_prime, instance.y_true)
    return truth - joint_feature(instance.g, instance.g_prime, y)


def build_graph(points, cfg: ShapeContextConfig = ShapeContextConfig(), triangulate: bool = True) -> AttributedGraph:
    """Shape-context attributes plus (optionally) Delaunay edges for a landmark set."""
    pts = np.asarray(points, dtype=float)
    attrs = shape_context(pts, cfg)
    if not triangulate:
        return AttributedGraph.without_edges(pts, attrs)
    return AttributedGraph(pts, attrs, delaunay_adjacency(pts))
