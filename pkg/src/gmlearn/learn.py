"""Max-margin learning of matching compatibilities.

The learner minimises ``(1/N) sum_n xi_n + lam/2 ||w||^2`` where ``xi_n`` is
the margin violation of the most violated matching for instance ``n``.
Violators come from loss-augmented inference (an assignment problem on
``c + L``), and the convex objective is minimised with a bundle method whose
cutting planes are the risk subgradients at the visited weight vectors.

``inference="linear"`` means the linear model: the edge feature is dropped
from the joint feature map, so ``w2`` receives no data gradient and the
exact LAP solver is the argmax. Any :class:`GraduatedAssignmentConfig` means
the quadratic model with approximate inference.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import cvxopt
import numpy as np

from .core import (AttributedGraph, CompatibilityTables, Matching, TrainingInstance, WeightVector,
                   quadratic_term)
from .features import node_feature_sum, pairwise_phi1
from .loss import HAMMING, LossKind, instance_loss, loss_linearization
from .solvers import GraduatedAssignmentConfig, graduated_assignment, linear_assignment

logger = logging.getLogger(__name__)

Inference = Union[str, GraduatedAssignmentConfig]


def _is_linear(inference: Inference) -> bool:
    if isinstance(inference, GraduatedAssignmentConfig):
        return False
    if inference == "linear":
        return True
    raise ValueError(f"inference must be 'linear' or a GraduatedAssignmentConfig, got {inference!r}")


def _weights(w) -> WeightVector:
    return w if isinstance(w, WeightVector) else WeightVector.from_array(w)


@dataclass(frozen=True)
class LearnerConfig:
    lam: float = 1.0
    epsilon: float = 1e-3
    max_iterations: int = 200
    inference: Inference = "linear"
    loss: LossKind = HAMMING
    track_empirical_risk: bool = True
    master_tol: float = 1e-8

    def __post_init__(self):
        if not (self.lam > 0 and self.epsilon > 0):
            raise ValueError("lam and epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        _is_linear(self.inference)


@dataclass
class IterationRecord:
    iteration: int
    slack_mean: float  # (1/N) sum xi_n at this iterate
    empirical_risk: float  # (1/N) sum loss(predict(w), y_n), nan if not tracked
    objective: float  # regularised risk at this iterate
    upper_bound: float  # best regularised risk seen so far
    lower_bound: float  # master problem value after adding this plane
    gap: float
    wall_time: float


@dataclass
class TrainerState:
    w: WeightVector
    cutting_planes: List[Tuple[np.ndarray, float]]
    xi: np.ndarray
    risk_upper_bound: float
    empirical_risk: float
    converged: bool = False
    history: List[IterationRecord] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history)


def build_tables(w, g: AttributedGraph, g_prime: AttributedGraph) -> CompatibilityTables:
    """c_ii' = <phi1(G_i, G'_i'), w1>, edge weight w2."""
    w = _weights(w)
    if g.attr_dim != w.dim or g_prime.attr_dim != w.dim:
        raise ValueError(f"weight dim {w.dim} does not match attributes ({g.attr_dim}, {g_prime.attr_dim})")
    return CompatibilityTables(pairwise_phi1(g, g_prime) @ w.w1, w.w2)


def feature_vector(g: AttributedGraph, g_prime: AttributedGraph, y, linear_model: bool = False) -> np.ndarray:
    """Joint feature as one array aligned with ``[w1, w2]``; edge entry zeroed for the linear model."""
    edge = 0.0 if linear_model else quadratic_term(g, g_prime, y)
    return np.append(node_feature_sum(g, g_prime, y), edge)


def _solve(tables: CompatibilityTables, g, g_prime, inference: Inference) -> Matching:
    if _is_linear(inference):
        return linear_assignment(tables.c)
    return graduated_assignment(tables, g, g_prime, inference)


def _check_linear(w: WeightVector, inference: Inference, linear_model: bool):
    if _is_linear(inference) and w.w2 != 0.0 and not linear_model:
        raise ValueError("linear inference ignores the edge term but w2 != 0; pass linear_model=True")


def predict(w, g: AttributedGraph, g_prime: AttributedGraph, inference: Inference = "linear",
            linear_model: bool = False) -> Matching:
    w = _weights(w)
    _check_linear(w, inference, linear_model)
    return _solve(build_tables(w, g, g_prime), g, g_prime, inference)


def build_augmented_tables(w, instance: TrainingInstance, loss_kind: LossKind = HAMMING):
    """Tables whose objective plus the returned constant equals ``<w, Phi(y)> + loss(y)``."""
    tables = build_tables(w, instance.g, instance.g_prime)
    unary, const = loss_linearization(loss_kind, instance)
    return CompatibilityTables(tables.c + unary, tables.edge_weight), const


def most_violated(w, instance: TrainingInstance, loss_kind: LossKind = HAMMING,
                  inference: Inference = "linear", linear_model: bool = False):
    """Loss-augmented argmax and its margin violation.

    With approximate inference the candidate can score below the ground
    truth; the ground truth (violation 0) is returned instead.
    """
    w = _weights(w)
    _check_linear(w, inference, linear_model)
    linear = linear_model or _is_linear(inference)
    tables, _ = build_augmented_tables(w, instance, loss_kind)
    if linear:
        tables = CompatibilityTables(tables.c, 0.0)
    y_hat = _solve(tables, instance.g, instance.g_prime, inference)

    warr = w.as_array()
    score_hat = warr @ feature_vector(instance.g, instance.g_prime, y_hat, linear)
    score_true = warr @ feature_vector(instance.g, instance.g_prime, instance.y_true, linear)
    violation = score_hat + instance_loss(loss_kind, instance, y_hat) - score_true
    if violation < 0:
        return instance.y_true, 0.0
    return y_hat, float(violation)


def _risk_terms(w: WeightVector, instances: Sequence[TrainingInstance], loss_kind: LossKind,
                inference: Inference):
    """Empirical part of the regularised risk: value, subgradient, per-instance slacks."""
    linear = _is_linear(inference)
    grad = np.zeros(w.dim + 1)
    xi = np.zeros(len(instances))
    for k, inst in enumerate(instances):
        y_hat, viol = most_violated(w, inst, loss_kind, inference, linear_model=linear)
        xi[k] = max(0.0, viol)
        if viol > 0:
            grad += (feature_vector(inst.g, inst.g_prime, y_hat, linear)
                     - feature_vector(inst.g, inst.g_prime, inst.y_true, linear))
    n = len(instances)
    return float(xi.mean()), grad / n, xi


def regularized_risk_and_subgradient(w, instances: Sequence[TrainingInstance], loss_kind: LossKind = HAMMING,
                                     inference: Inference = "linear", lam: float = 1.0):
    if not instances:
        raise ValueError("need at least one training instance")
    w = _weights(w)
    emp, grad, _ = _risk_terms(w, instances, loss_kind, inference)
    warr = w.as_array()
    return emp + 0.5 * lam * float(warr @ warr), grad + lam * warr


def empirical_risk(w, instances: Sequence[TrainingInstance], loss_kind: LossKind = HAMMING,
                   inference: Inference = "linear") -> float:
    """Mean loss of the plain predictor (linear inference treats ``w`` as the linear model)."""
    linear = _is_linear(inference)
    return float(np.mean([instance_loss(loss_kind, inst, predict(w, inst.g, inst.g_prime, inference, linear))
                          for inst in instances]))


def _pairwise_descent(k: np.ndarray, b: np.ndarray, alpha: np.ndarray, tol: float, max_iters: int = 100000):
    """Minimise 1/2 a'Ka - b'a on the simplex by moving mass between two coordinates at a time."""
    diag = np.diag(k)
    g = k @ alpha - b
    for _ in range(max_iters):
        j = int(np.argmin(g))
        active = np.flatnonzero(alpha > 0)
        i = int(active[np.argmax(g[active])])
        if i == j or alpha @ g - g[j] <= tol:
            break
        curv = diag[i] + diag[j] - 2.0 * k[i, j]
        delta = alpha[i] if curv <= 0 else min(alpha[i], (g[i] - g[j]) / curv)
        alpha[i] -= delta
        alpha[j] += delta
        g += delta * (k[:, j] - k[:, i])
    return alpha


def solve_master(a: np.ndarray, b: np.ndarray, lam: float, tol: float = 1e-8):
    """min_w lam/2 ||w||^2 + max_j (a_j . w + b_j) through its dual on the simplex.

    The dual ``min_alpha 1/2 alpha' K alpha - b' alpha`` (``K = a a' / lam``,
    alpha a probability vector) goes to an interior-point QP solver, with
    pairwise coordinate descent as the fallback if that fails numerically.
    Returns ``(w, lower, gap)``: ``lower`` is the dual objective at the
    returned alpha, a valid lower bound on the master minimum regardless of
    solver accuracy, and ``gap`` is the primal-dual gap at ``w``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    m = b.size
    k = a @ a.T / lam
    if m == 1:
        alpha = np.ones(1)
    else:
        scale = max(1.0, float(np.abs(np.diag(k)).max()), float(np.abs(b).max()))
        opts = {"show_progress": False, "abstol": tol * 1e-2, "reltol": tol * 1e-2, "feastol": 1e-12,
                "maxiters": 200}
        try:
            sol = cvxopt.solvers.qp(cvxopt.matrix(k / scale + 1e-12 * np.eye(m)), cvxopt.matrix(-b / scale),
                                    cvxopt.matrix(-np.eye(m)), cvxopt.matrix(np.zeros(m)),
                                    cvxopt.matrix(np.ones((1, m))), cvxopt.matrix(1.0), options=opts)
            alpha = np.clip(np.asarray(sol["x"]).ravel(), 0.0, None)
        except (ArithmeticError, ValueError) as exc:
            logger.debug("interior-point master failed (%s); using pairwise descent", exc)
            alpha = np.zeros(m)
            alpha[np.argmax(b - 0.5 * np.diag(k))] = 1.0
        alpha /= alpha.sum()
        w = -(a.T @ alpha) / lam
        gap = 0.5 * lam * float(w @ w) + float(np.max(a @ w + b)) - float(b @ alpha - 0.5 * alpha @ k @ alpha)
        if gap > tol * scale:
            alpha = _pairwise_descent(k, b, alpha, tol * scale)
    w = -(a.T @ alpha) / lam
    lower = float(b @ alpha - 0.5 * alpha @ k @ alpha)
    upper = 0.5 * lam * float(w @ w) + float(np.max(a @ w + b))
    return w, lower, upper - lower


def train(instances: Sequence[TrainingInstance], cfg: LearnerConfig = LearnerConfig()) -> TrainerState:
    """Column generation with a bundle-method master problem, starting from w = 0."""
    if not instances:
        raise ValueError("need at least one training instance")
    dim = instances[0].g.attr_dim
    if any(inst.g.attr_dim != dim or inst.g_prime.attr_dim != dim for inst in instances):
        raise ValueError("all instances must share one attribute dimension")
    linear = _is_linear(cfg.inference)

    warr = np.zeros(dim + 1)
    planes: List[Tuple[np.ndarray, float]] = []
    best = None  # (objective, w, xi, empirical risk)
    history: List[IterationRecord] = []
    converged = False
    start = time.perf_counter()

    for it in range(cfg.max_iterations):
        w = WeightVector.from_array(warr)
        emp, grad, xi = _risk_terms(w, instances, cfg.loss, cfg.inference)
        risk = (empirical_risk(w, instances, cfg.loss, cfg.inference)
                if cfg.track_empirical_risk else float("nan"))
        if linear and cfg.track_empirical_risk and xi.mean() < risk - 1e-9:
            raise AssertionError(f"slack bound {xi.mean()} below empirical risk {risk} at iteration {it}")
        objective = emp + 0.5 * cfg.lam * float(warr @ warr)
        if best is None or objective < best[0]:
            best = (objective, w, xi, risk)

        planes.append((grad, emp - float(grad @ warr)))
        a = np.array([p[0] for p in planes])
        b = np.array([p[1] for p in planes])
        w_next, lower, _ = solve_master(a, b, cfg.lam, cfg.master_tol)
        gap = best[0] - lower
        history.append(IterationRecord(it, float(xi.mean()), risk, objective, best[0], lower, gap,
                                       time.perf_counter() - start))
        logger.debug("iter %d: slack %.5f risk %.5f gap %.3g", it, xi.mean(), risk, gap)
        if gap <= cfg.epsilon:
            converged = True
            break
        warr = w_next
    else:
        logger.info("training stopped after %d iterations with gap %.3g", cfg.max_iterations, history[-1].gap)

    _, w, xi, risk = best
    return TrainerState(w, planes, xi, float(xi.mean()), risk, converged, history)


def write_training_log(history: Sequence[IterationRecord], path) -> None:
    cols = ["iteration", "slack_mean", "empirical_risk", "upper_bound", "lower_bound", "gap", "wall_time"]
    with open(path, "w") as fh:
        fh.write("\t".join(cols) + "\n")
        for rec in history:
            fh.write("\t".join(repr(getattr(rec, c)) for c in cols) + "\n")
