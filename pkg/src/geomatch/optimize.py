"""First-order maximization of the matching score over warp displacements.

Adaptive-moment gradient ascent from the identity warp under a monotone
acceptance rule: a candidate step is taken only if it does not decrease
the score, otherwise the step size is halved for that iteration (up to 5
halvings) and, failing that, the iteration leaves the parameters
unchanged.  Stale first-moment state is discarded whenever a full step
was rejected, since the score surface is only piecewise smooth and
momentum pointing across a kink would otherwise wedge the ascent.

The run stops at max_iters or once the relative score improvement over a
10-iteration window falls below rel_tol.  Accepted scores never
decrease, and identical inputs always produce identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .matching import MatchWorkspace, SimilarityMap, matching_score
from .tps import DEFAULT_CONTROL_POINTS, TpsParams, solve
from .types import FeatureGrid

_MAX_HALVINGS = 5
_STALL_WINDOW = 10


@dataclass(frozen=True)
class OptimConfig:
    """Ascent hyperparameters; defaults size a 32x32x64 pair well under a second."""

    max_iters: int = 200
    step_size: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    rel_tol: float = 1e-6
    clamp: float = 1.0
    control_points: int = DEFAULT_CONTROL_POINTS
    reg_weight: float = 0.0

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise FormatError("max_iters must be >= 1")
        positive = {
            "step_size": self.step_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "rel_tol": self.rel_tol,
            "clamp": self.clamp,
        }
        for name, value in positive.items():
            if not (np.isfinite(value) and value > 0.0):
                raise FormatError(f"{name} must be positive, got {value}")
        if not (np.isfinite(self.reg_weight) and self.reg_weight >= 0.0):
            raise FormatError(f"reg_weight must be >= 0, got {self.reg_weight}")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of one optimization run.

    `phi` is the matching score recomputed at `theta_hat`; by monotone
    acceptance it is never below the score of the identity warp.
    """

    theta_hat: TpsParams
    phi: float
    iterations: int
    converged: bool
    similarity: SimilarityMap


def optimize_transform(
    source: FeatureGrid, target: FeatureGrid, config: OptimConfig | None = None
) -> MatchResult:
    """Maximize the matching score of target against source."""
    config = config or OptimConfig()
    ws = MatchWorkspace(source, target, config.control_points, config.reg_weight)
    n_params = 2 * config.control_points ** 2

    theta = np.zeros(n_params)
    phi, _, _ = ws.score(theta)
    history = [phi]

    m = np.zeros(n_params)
    v = np.zeros(n_params)
    t_m = 0
    t_v = 0
    iterations = 0
    converged = False

    for it in range(1, config.max_iters + 1):
        iterations = it
        grad = ws.gradient(theta)
        t_m += 1
        t_v += 1
        m = config.beta1 * m + (1.0 - config.beta1) * grad
        v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
        m_hat = m / (1.0 - config.beta1 ** t_m)
        v_hat = v / (1.0 - config.beta2 ** t_v)
        direction = m_hat / (np.sqrt(v_hat) + config.epsilon)

        accepted = False
        lr = config.step_size
        for _ in range(_MAX_HALVINGS + 1):
            candidate = np.clip(theta + lr * direction, -config.clamp, config.clamp)
            cand_phi, _, _ = ws.score(candidate)
            if cand_phi >= phi:
                accepted = True
                break
            lr *= 0.5

        if accepted:
            theta = candidate
            phi = cand_phi
            if lr != config.step_size:
                m[:] = 0.0
                t_m = 0
        else:
            m[:] = 0.0
            t_m = 0

        history.append(phi)
        if len(history) > _STALL_WINDOW:
            prev = history[-1 - _STALL_WINDOW]
            if (phi - prev) / max(abs(prev), 1e-12) < config.rel_tol:
                converged = True
                break

    params = TpsParams.from_vector(config.control_points, theta, config.reg_weight)
    final_phi, sim_map = matching_score(source, target, solve(params))
    return MatchResult(params, final_phi, iterations, converged, sim_map)


def finite_diff_gradient(
    source: FeatureGrid,
    target: FeatureGrid,
    theta: TpsParams,
    step: float = 1e-4,
) -> np.ndarray:
    """Central-difference d(phi)/d(displacements); the verification oracle.

    Deliberately routed through plain score evaluations so it stays
    independent of the analytic gradient path.
    """
    if not (step > 0.0 and np.isfinite(step)):
        raise FormatError(f"finite difference step must be positive, got {step}")
    ws = MatchWorkspace(source, target, theta.k, theta.reg_weight)
    base = theta.to_vector()
    grad = np.zeros_like(base)
    for i in range(len(base)):
        plus = base.copy()
        plus[i] += step
        minus = base.copy()
        minus[i] -= step
        grad[i] = (ws.score(plus)[0] - ws.score(minus)[0]) / (2.0 * step)
    return grad
