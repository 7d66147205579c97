"""Inference engines for linear and quadratic assignment."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import AttributedGraph, CompatibilityTables, Matching, check_dims

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_NODES = 8
# log entries above this stay well clear of float underflow in exp()
_LINEAR_DOMAIN_FLOOR = -600.0


@dataclass(frozen=True)
class GraduatedAssignmentConfig:
    beta0: float = 0.5
    beta_rate: float = 1.075
    beta_max: float = 10.0
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iters: int = 300
    outer_iters_per_beta: int = 4

    def __post_init__(self):
        if not 0 < self.beta0 < self.beta_max:
            raise ValueError("need 0 < beta0 < beta_max")
        if self.beta_rate <= 1:
            raise ValueError("beta_rate must exceed 1")
        if self.sinkhorn_tol <= 0 or self.sinkhorn_max_iters < 1 or self.outer_iters_per_beta < 1:
            raise ValueError("tolerances and iteration counts must be positive")


@dataclass(frozen=True)
class DoublyStochasticMatrix:
    m: np.ndarray
    deviation: float
    iterations: int
    log_col_scaling: Optional[np.ndarray] = None


def linear_assignment(c) -> Matching:
    """Exact maximiser of <c, y> over injective maps rows -> columns."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    n, n_prime = c.shape
    if n > n_prime:
        raise ValueError(f"query graph larger than target ({n} > {n_prime}); orient the pair")
    if not np.isfinite(c).all():
        raise ValueError("compatibility matrix has non-finite entries")
    rows, cols = linear_sum_assignment(c, maximize=True)
    perm = np.empty(n, dtype=int)
    perm[rows] = cols
    return Matching.from_perm(perm, n_prime)


def matching_value(c, perm) -> float:
    c = np.asarray(c, dtype=float)
    return float(c[np.arange(len(perm)), np.asarray(perm)].sum())


def _injections(n: int, n_prime: int):
    # lexicographic order, so the first optimum found is the lexicographically smallest
    return itertools.permutations(range(n_prime), n)


def brute_force_lap(c) -> Matching:
    c = np.asarray(c, dtype=float)
    n, n_prime = c.shape
    if n > BRUTE_FORCE_MAX_NODES:
        raise ValueError(f"brute force refused for n={n} > {BRUTE_FORCE_MAX_NODES}")
    best, best_perm = -np.inf, None
    for perm in _injections(n, n_prime):
        v = matching_value(c, perm)
        if v > best:
            best, best_perm = v, perm
    return Matching.from_perm(best_perm, n_prime)


def brute_force_qap(tables: CompatibilityTables, g: AttributedGraph, g_prime: AttributedGraph) -> Matching:
    """Exhaustive maximisation of the quadratic objective over all injections."""
    check_dims(tables.c.shape, g, g_prime)
    n, n_prime = tables.c.shape
    if n > BRUTE_FORCE_MAX_NODES:
        raise ValueError(f"brute force refused for n={n} > {BRUTE_FORCE_MAX_NODES}")
    if n > n_prime:
        raise ValueError(f"query graph larger than target ({n} > {n_prime})")
    c, w2 = tables.c, tables.edge_weight
    a, ap = g.adjacency, g_prime.adjacency
    rows = np.arange(n)
    best, best_perm = -np.inf, None
    for perm in _injections(n, n_prime):
        p = np.asarray(perm)
        v = c[rows, p].sum()
        if w2 != 0.0:
            v += w2 * (a * ap[np.ix_(p, p)]).sum()
        if v > best:
            best, best_perm = v, perm
    return Matching.from_perm(best_perm, n_prime)


def _deviation(m: np.ndarray) -> float:
    return max(np.abs(m.sum(axis=1) - 1).max(), np.abs(m.sum(axis=0) - 1).max())


def sinkhorn(m, tol: float = 1e-6, max_iters: int = 300) -> DoublyStochasticMatrix:
    """Alternate row and column normalisation of a positive square matrix."""
    m = np.array(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"sinkhorn needs a square matrix, got {m.shape}")
    if not (m > 0).all() or not np.isfinite(m).all():
        raise ValueError("sinkhorn needs strictly positive finite entries")
    dev = _deviation(m)
    it = 0
    while dev >= tol and it < max_iters:
        m /= m.sum(axis=1, keepdims=True)
        m /= m.sum(axis=0, keepdims=True)
        it += 1
        dev = _deviation(m)
    return DoublyStochasticMatrix(m, float(dev), it)


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    mx = x.max(axis=axis, keepdims=True)
    return mx + np.log(np.exp(x - mx).sum(axis=axis, keepdims=True))


def log_sinkhorn(log_m: np.ndarray, tol: float = 1e-6, max_iters: int = 300,
                 log_col_scaling: Optional[np.ndarray] = None) -> DoublyStochasticMatrix:
    """Sinkhorn on ``exp(log_m)`` carried out in log space.

    Same iterates as :func:`sinkhorn`, but entries far below the maximum do
    not underflow to zero at large inverse temperatures. ``log_col_scaling``
    warm-starts the column scaling (the fixed point does not depend on it);
    the accumulated scaling is returned for the next call.
    """
    log_m = np.array(log_m, dtype=float)
    if log_m.ndim != 2 or log_m.shape[0] != log_m.shape[1]:
        raise ValueError(f"sinkhorn needs a square matrix, got {log_m.shape}")
    if not np.isfinite(log_m).all():
        raise ValueError("non-finite log entries")
    start = log_m.copy()
    if log_col_scaling is not None:
        log_m += log_col_scaling
    # row scaling is free (the first sweep starts with it) and keeps exp() from overflowing
    log_m -= _logsumexp(log_m, 1)
    m = np.exp(log_m)
    dev = _deviation(m)
    it = 0
    if dev >= tol and log_m.min() > _LINEAR_DOMAIN_FLOOR:
        # no entry underflows, so run the same iteration on scaling vectors: m = diag(u) k diag(v)
        k, v = m, np.ones(m.shape[1])
        kv = k @ v
        while dev >= tol and it < max_iters:
            u = 1.0 / kv
            v = 1.0 / (u @ k)
            kv = k @ v
            it += 1
            dev = float(np.abs(u * kv - 1).max())
        log_m += np.log(u)[:, None] + np.log(v)[None, :]
        m = u[:, None] * k * v[None, :]
    while dev >= tol and it < max_iters:
        log_m -= _logsumexp(log_m, 1)
        log_m -= _logsumexp(log_m, 0)
        it += 1
        m = np.exp(log_m)
        # columns sum to one right after the column step
        dev = float(np.abs(m.sum(axis=1) - 1).max())
    col = (log_m - start).mean(axis=0) - (log_m - start).mean()
    return DoublyStochasticMatrix(m, float(dev), it, col)


def graduated_assignment(tables: CompatibilityTables, g: AttributedGraph, g_prime: AttributedGraph,
                         cfg: GraduatedAssignmentConfig = GraduatedAssignmentConfig()) -> Matching:
    """Softassign continuation for the quadratic objective, discretised by LAP.

    Rectangular problems get ``n' - n`` slack rows of constant score; Sinkhorn
    is invariant to row scaling, so the constant itself does not matter.
    """
    check_dims(tables.c.shape, g, g_prime)
    c = tables.c
    n, n_prime = c.shape
    if n > n_prime:
        raise ValueError(f"query graph larger than target ({n} > {n_prime})")
    w2 = tables.edge_weight
    a, ap = g.adjacency, g_prime.adjacency

    soft = np.full((n, n_prime), 1.0 / n_prime)
    log_m = np.zeros((n_prime, n_prime))
    col_scaling = None
    beta = cfg.beta0
    while beta <= cfg.beta_max:
        for _ in range(cfg.outer_iters_per_beta):
            q = c + 2.0 * w2 * (a @ soft @ ap) if w2 != 0.0 else c
            if not np.isfinite(q).all():
                raise ValueError("non-finite gradient in graduated assignment")
            log_m[:n] = beta * (q - q.max())
            log_m[n:] = 0.0
            ds = log_sinkhorn(log_m, cfg.sinkhorn_tol, cfg.sinkhorn_max_iters, col_scaling)
            soft, col_scaling = ds.m[:n], ds.log_col_scaling
        beta *= cfg.beta_rate
    return linear_assignment(soft)


def bistochastic_normalize(c0, delta: float = 1e-5, max_iters: int = 10000):
    """Alternating row/column normalisation of a positive rectangular matrix.

    Rows are scaled to sum to one, columns to sum to ``n / n'`` (so both
    constraints are simultaneously reachable). Stops when the largest entry
    change over one sweep falls below ``delta``. Returns the matrix and the
    per-sweep change history.
    """
    m = np.array(c0, dtype=float)
    if (m < 0).any():
        raise ValueError("bistochastic normalisation needs nonnegative entries")
    n, n_prime = m.shape
    col_target = n / n_prime
    tiny = np.finfo(float).tiny
    changes = []
    for _ in range(max_iters):
        prev = m.copy()
        m /= np.maximum(m.sum(axis=1, keepdims=True), tiny)
        m *= col_target / np.maximum(m.sum(axis=0, keepdims=True), tiny)
        changes.append(float(np.abs(m - prev).max()))
        if changes[-1] < delta:
            break
    else:
        logger.warning("bistochastic normalisation stopped at max_iters with change %.3g", changes[-1])
    return m, changes


def exp_decay_compatibility(g: AttributedGraph, g_prime: AttributedGraph) -> np.ndarray:
    """Hand-crafted node compatibility exp(-||G_i - G'_i'||^2)."""
    if g.attr_dim != g_prime.attr_dim:
        raise ValueError(f"attribute dims differ: {g.attr_dim} vs {g_prime.attr_dim}")
    return np.exp(-((g.node_attrs[:, None, :] - g_prime.node_attrs[None, :, :]) ** 2).sum(axis=2))


def bistochastic_normalize_baseline(g: AttributedGraph, g_prime: AttributedGraph,
                                    delta: float = 1e-5, edge_weight: float | None = None) -> CompatibilityTables:
    """Non-learned compatibilities: exp(-||G_i - G'_i'||^2) node scores, bistochastically normalised.

    Only the node part is normalised. The edge term is scaled by
    ``1 / sqrt(mean_deg(G) * mean_deg(G'))`` by default, which is what
    normalising each rank-one edge slice by the endpoint degrees gives on
    average.
    """
    if g.attr_dim != g_prime.attr_dim:
        raise ValueError(f"attribute dims differ: {g.attr_dim} vs {g_prime.attr_dim}")
    sq = ((g.node_attrs[:, None, :] - g_prime.node_attrs[None, :, :]) ** 2).sum(axis=2)
    # per-row rescaling leaves the normalised result unchanged and avoids underflow
    c, _ = bistochastic_normalize(np.exp(-(sq - sq.min(axis=1, keepdims=True))), delta)
    if edge_weight is None:
        deg = g.adjacency.sum() / g.num_nodes * g_prime.adjacency.sum() / g_prime.num_nodes
        edge_weight = 1.0 / np.sqrt(deg) if deg > 0 else 0.0
    return CompatibilityTables(c, edge_weight)
