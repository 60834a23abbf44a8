"""
Closed-loop control laws.

Integral pursuers chase with u = (y0 - x0)/theta + v(t); geometric pursuers
run the parallel-approach law
    u = v - (v, e) e + e sqrt(rho^2 - sigma^2 + (v, e)^2)
until they meet the evader and shadow it (u = v) afterwards. In the many-
pursuer game every active pursuer drives a fictitious copy with inflated
resource rho_bar = rho + gamma/theta^xi (+ eps/(k theta^xi)) and moves by
the copy's control scaled with R/(R + gamma).
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import FrozenSet, Optional, Tuple

import numpy as np

from modules.game_model import (
    ConstraintKind, Pursuer, Scenario, check_assumption_a, evader_radius, reachable_radius,
)
from modules.game_value import GameValue, deficit, gamma_optimize
from modules.hilbert_geometry import as_point, project_to_sphere
from utils.config import config

logger = logging.getLogger(__name__)


class StrategyHypothesisError(ValueError):
    """A control law was asked to run outside the conditions it needs."""


class StrategyMode(str, Enum):
    PURSUING = "pursuing"
    SHADOWING = "shadowing"
    FROZEN = "frozen"


@dataclass(frozen=True)
class FictitiousResource:
    pursuer_id: int
    rho_bar: float
    epsilon: float
    k_n: float


def fictitious_resource(p: Pursuer, gamma: float, theta: float, epsilon: float = 0.0) -> FictitiousResource:
    """rho_bar(eps) = rho + gamma/theta^xi + eps/(k theta^xi), k = max(1, rho)."""
    if gamma < 0 or epsilon < 0:
        raise StrategyHypothesisError(f"gamma and epsilon must be >= 0, got {gamma} and {epsilon}")
    k_n = max(1.0, p.rho)
    scale = theta ** p.constraint.time_exponent
    return FictitiousResource(p.id, p.rho + gamma / scale + epsilon / (k_n * scale), epsilon, k_n)


@dataclass(frozen=True, eq=False)
class StrategyState:
    pursuer_id: int
    mode: StrategyMode = StrategyMode.PURSUING
    switch_time: Optional[float] = None
    budget_spent: float = 0.0
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode is StrategyMode.SHADOWING and self.switch_time is None:
            raise StrategyHypothesisError(f"pursuer {self.pursuer_id}: shadowing needs a switch time")
        if self.direction is not None:
            length = float(np.linalg.norm(self.direction))
            if abs(length - 1.0) > 1e-12:
                raise StrategyHypothesisError(
                    f"pursuer {self.pursuer_id}: direction must be a unit vector (norm {length})"
                )


def initial_state(p: Pursuer, y0, frozen: bool = False) -> StrategyState:
    """
    State at t = 0.

    A geometric pursuer starting on the evader shadows from the start.
    """
    if frozen:
        return StrategyState(p.id, StrategyMode.FROZEN)
    offset = as_point(y0, p.dimension) - p.position()
    length = float(np.linalg.norm(offset))
    if length == 0.0:
        if p.kind is ConstraintKind.GEOMETRIC:
            return StrategyState(p.id, StrategyMode.SHADOWING, switch_time=0.0)
        return StrategyState(p.id)
    return StrategyState(p.id, direction=offset / length)


# Batch kernels; the simulator advances every pursuer through these
def integral_velocity(bases: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(y0 - x0)/theta + v for every row of `bases`."""
    return bases + v


def integral_cutoff(w: np.ndarray, spent: np.ndarray, cap: np.ndarray,
                    dt: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Run constant controls `w` for up to dt, stopping each row once its
    running square integral reaches `cap`.

    Returns the displacements, the new running totals and how long each row moved.
    """
    speed_sq = np.einsum('ij,ij->i', w, w)
    room = np.maximum(cap - spent, 0.0)
    duration = np.where(speed_sq * dt <= room, dt, room / np.maximum(speed_sq, 1e-300))
    duration = np.clip(duration, 0.0, dt)
    return w * duration[:, None], spent + speed_sq * duration, duration


def geometric_velocity(v: np.ndarray, directions: np.ndarray, rho: np.ndarray,
                       sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Parallel-approach controls for unit `directions` (M, d) and resources (M,).

    Also returns the rate of change of the gap (y - x, e), which is constant
    while v is.
    """
    along = directions @ v
    radicand = np.asarray(rho) ** 2 - sigma * sigma + along * along
    if np.any(radicand < 0):
        raise StrategyHypothesisError(
            f"rho^2 - sigma^2 + (v, e)^2 >= 0 fails (min {float(radicand.min()):.3e})"
        )
    root = np.sqrt(radicand)
    controls = v - along[:, None] * directions + root[:, None] * directions
    return controls, along - root


def contact(y: np.ndarray, positions: np.ndarray, directions: np.ndarray,
            tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gap (y - x, e) per row, distance of y off the pursuit line, and ||y - x|| <= tol."""
    rel = y - positions
    gap = np.einsum('ij,ij->i', rel, directions)
    off_line = np.linalg.norm(rel - gap[:, None] * directions, axis=1)
    return gap, off_line, np.hypot(gap, off_line) <= tol


def geometric_advance(v: np.ndarray, directions: np.ndarray, rho: np.ndarray, sigma: float,
                      gap: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Parallel approach for up to dt, shadowing v from the meeting time on.

    Returns the displacements, the approach speeds ||w|| and the meeting
    offset inside the step (inf when the gap does not close).
    """
    w, rate = geometric_velocity(v, directions, rho, sigma)
    closing = rate < 0
    meet = np.where(closing, np.maximum(gap, 0.0) / np.where(closing, -rate, 1.0), np.inf)
    duration = np.minimum(meet, dt)
    moves = w * duration[:, None] + np.outer(dt - duration, v)
    return moves, np.linalg.norm(w, axis=1), meet


# Single-pursuer forms
def integral_pursuit_control(x0, y0, theta: float, v_now) -> np.ndarray:
    """u = (y0 - x0)/theta + v; steers x onto y at theta."""
    if theta <= 0:
        raise StrategyHypothesisError(f"theta must be > 0, got {theta}")
    x0, y0 = as_point(x0), as_point(y0)
    base = (y0 - x0) / theta
    return integral_velocity(base[None, :], as_point(v_now, x0.size))[0]


def integral_fictitious_control(state: StrategyState, res: FictitiousResource, x0, y0,
                                theta: float, v_now, t: float) -> np.ndarray:
    """The pursuit law until the running square integral reaches rho_bar^2, zero afterwards."""
    if not 0.0 <= t <= theta:
        raise StrategyHypothesisError(f"t must lie in [0, {theta}], got {t}")
    if state.mode is StrategyMode.FROZEN or state.budget_spent >= res.rho_bar ** 2:
        return np.zeros(as_point(x0).size)
    return integral_pursuit_control(x0, y0, theta, v_now)


def integral_fictitious_step(state: StrategyState, res: FictitiousResource, x0, y0, theta: float,
                             v_now, t: float, dt: float) -> Tuple[np.ndarray, StrategyState]:
    """
    Displacement over [t, t + dt] with v held, and the state after it.

    The cutoff lands inside the step; the pursuer is frozen from then on and
    budget_spent carries the running square integral.
    """
    if dt < 0 or t + dt > theta * (1 + 1e-12):
        raise StrategyHypothesisError(f"step [{t}, {t} + {dt}] leaves [0, {theta}]")
    if state.mode is StrategyMode.FROZEN:
        return np.zeros(as_point(x0).size), state
    w = integral_pursuit_control(x0, y0, theta, v_now)
    moves, spent, duration = integral_cutoff(w[None, :], np.array([state.budget_spent]),
                                             np.array([res.rho_bar ** 2]), dt)
    if duration[0] < dt:
        state = replace(state, mode=StrategyMode.FROZEN, switch_time=t + float(duration[0]))
    return moves[0], replace(state, budget_spent=float(spent[0]))


def _geometric_step(state: StrategyState, rho: float, sigma: float, v_now, y_now, x_now,
                    tol: float, t: float) -> Tuple[np.ndarray, StrategyState]:
    v = as_point(v_now)
    if tol < 0:
        raise StrategyHypothesisError(f"tolerance must be >= 0, got {tol}")
    if state.mode is StrategyMode.FROZEN:
        return np.zeros(v.size), state
    if state.mode is StrategyMode.PURSUING:
        if state.direction is None:
            raise StrategyHypothesisError(f"pursuer {state.pursuer_id}: pursuit direction is unset")
        _, _, met = contact(as_point(y_now, v.size), as_point(x_now, v.size)[None, :],
                            state.direction[None, :], tol)
        if met[0]:
            state = replace(state, mode=StrategyMode.SHADOWING, switch_time=t)
    if state.mode is StrategyMode.SHADOWING:
        u = np.array(v)
    else:
        controls, _ = geometric_velocity(v, state.direction[None, :], np.array([rho]), sigma)
        u = controls[0]
    spent = max(state.budget_spent, float(np.linalg.norm(u)))
    return u, replace(state, budget_spent=spent)


def geometric_pursuit_control(state: StrategyState, rho: float, sigma: float, v_now, y_now, x_now,
                              tol: float = 0.0, t: float = 0.0) -> Tuple[np.ndarray, StrategyState]:
    """
    Parallel approach with resource rho; switches to shadowing once ||y - x|| <= tol.

    Raises:
        StrategyHypothesisError: when sigma > rho
    """
    if sigma > rho:
        raise StrategyHypothesisError(f"sigma <= rho fails: {sigma} > {rho}")
    return _geometric_step(state, rho, sigma, v_now, y_now, x_now, tol, t)


def geometric_fictitious_control(state: StrategyState, res: FictitiousResource, sigma: float,
                                 v_now, y_now, z_now, tol: float = 0.0,
                                 t: float = 0.0) -> Tuple[np.ndarray, StrategyState]:
    if sigma > res.rho_bar:
        raise StrategyHypothesisError(
            f"sigma <= rho_bar fails for pursuer {res.pursuer_id}: {sigma} > {res.rho_bar:.6f}"
        )
    return _geometric_step(state, res.rho_bar, sigma, v_now, y_now, z_now, tol, t)


def geometric_step(state: StrategyState, rho: float, sigma: float, v_now, y_now, x_now, dt: float,
                   tol: float = 0.0, t: float = 0.0) -> Tuple[np.ndarray, StrategyState]:
    """
    Displacement over [t, t + dt] with v held, and the state after it.

    A meeting inside the step is placed exactly and the rest of the step is
    spent shadowing.
    """
    if dt < 0:
        raise StrategyHypothesisError(f"dt must be >= 0, got {dt}")
    u, state = _geometric_step(state, rho, sigma, v_now, y_now, x_now, tol, t)
    if state.mode is not StrategyMode.PURSUING:
        return u * dt, state
    v = as_point(v_now)
    x = as_point(x_now, v.size)
    gap, _, _ = contact(as_point(y_now, v.size), x[None, :], state.direction[None, :], tol)
    moves, _, meet = geometric_advance(v, state.direction[None, :], np.array([rho]), sigma, gap, dt)
    if meet[0] <= dt:
        spent = state.budget_spent
        if meet[0] < dt:
            spent = max(spent, float(np.linalg.norm(v)))
        state = replace(state, mode=StrategyMode.SHADOWING, switch_time=t + float(meet[0]), budget_spent=spent)
    return moves[0], state


def scale_factor(p: Pursuer, gamma: float, theta: float) -> float:
    """R/(R + gamma) with the pursuer's reachable radius R."""
    if gamma < 0:
        raise StrategyHypothesisError(f"gamma must be >= 0, got {gamma}")
    radius = reachable_radius(p, theta)
    return radius / (radius + gamma)


def scale_to_real_control(w_now, pursuer: Pursuer, gamma: float, theta: float) -> np.ndarray:
    return scale_factor(pursuer, gamma, theta) * as_point(w_now)


# Evader
@dataclass(frozen=True, eq=False)
class EvaderPlan:
    target: np.ndarray
    control: np.ndarray
    guarantee: float


def evader_guaranteed_plan(s: Scenario, gv: GameValue, seed: int = config.DEFAULT_SEED) -> EvaderPlan:
    """
    Straight run to a point of the evader sphere far from every reachable ball.

    The value witness is pushed out along the ray from y0; if that loses
    deficit the sphere-restricted maximization is run from there.
    """
    r = evader_radius(s)
    target = project_to_sphere(gv.witness, s.y0, r)
    guarantee = deficit(s, target)
    if guarantee < gv.witness_deficit - config.VALUE_TOL:
        refined = gamma_optimize(s, seed=seed, on_sphere=True, extra_starts=[target])
        if refined.witness_deficit > guarantee:
            target = project_to_sphere(refined.witness, s.y0, r)
            guarantee = deficit(s, target)
    if guarantee < gv.gamma - config.VALUE_TOL:
        logger.warning("evader plan guarantees %.6f, below the value %.6f", guarantee, gv.gamma)
    if gv.gamma == 0.0:
        logger.info("value is zero; the evader plan guarantees nothing positive")
    target = np.array(target)
    target.setflags(write=False)
    control = (target - s.y0) / s.theta
    control.setflags(write=False)
    return EvaderPlan(target, control, guarantee)


# Hypotheses of the many-pursuer construction
@dataclass(frozen=True)
class TheoremHypotheses:
    gamma: float
    epsilon: float
    violations: Tuple[str, ...] = ()
    demoted: FrozenSet[int] = frozenset()
    remaining_gamma: Optional[float] = None
    assumption_a: bool = True


def check_theorem_hypotheses(s: Scenario, gamma: float, epsilon: float = config.DEFAULT_EPSILON,
                             seed: int = config.DEFAULT_SEED) -> TheoremHypotheses:
    """
    Check sigma <= rho_bar for every geometric pursuer.

    Failing pursuers are demoted to frozen when the game without them has the
    same value (within VALUE_TOL); otherwise the violation is fatal.

    Raises:
        StrategyHypothesisError: naming the failing inequality
    """
    violations, failing = [], []
    for p in s.pursuers:
        if p.kind is not ConstraintKind.GEOMETRIC:
            continue
        driving = fictitious_resource(p, gamma, s.theta, 0.0).rho_bar
        inflated = fictitious_resource(p, gamma, s.theta, epsilon).rho_bar
        if s.sigma > driving:
            failing.append(p.id)
            violations.append(
                f"pursuer {p.id}: sigma <= rho + gamma/theta fails ({s.sigma:g} > {driving:.6f}; "
                f"with eps {inflated:.6f})"
            )

    assumption = check_assumption_a(s, seed=seed) is not None
    if not assumption:
        logger.warning("no direction p0 satisfies Assumption (A); the covering guarantee is not certified")

    if not failing:
        return TheoremHypotheses(gamma, epsilon, assumption_a=assumption)

    remaining = [p.id for p in s.pursuers if p.id not in set(failing)]
    if not remaining:
        raise StrategyHypothesisError("; ".join(violations))
    remaining_gamma = gamma_optimize(s.subset(remaining), seed=seed).gamma
    if remaining_gamma > gamma + config.VALUE_TOL:
        raise StrategyHypothesisError(
            "; ".join(violations)
            + f"; without them the value rises to {remaining_gamma:.6f} > {gamma:.6f}"
        )
    logger.warning("freezing %d geometric pursuers that cannot satisfy sigma <= rho_bar "
                   "(value without them %.6f)", len(failing), remaining_gamma)
    return TheoremHypotheses(gamma, epsilon, tuple(violations), frozenset(failing),
                             remaining_gamma, assumption)


def lemma_hypotheses(s: Scenario) -> None:
    """Single-pursuer laws need sigma <= rho on every geometric pursuer."""
    for p in s.pursuers:
        if p.kind is ConstraintKind.GEOMETRIC and s.sigma > p.rho:
            raise StrategyHypothesisError(f"pursuer {p.id}: sigma <= rho fails ({s.sigma:g} > {p.rho:g})")


def switch_tolerance(s: Scenario) -> float:
    return 1e-9 * evader_radius(s) + 1e-12
