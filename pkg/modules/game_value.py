"""
The game value: the smallest inflation l >= 0 for which the balls
B(x_n0, R_n + l) cover the evader's attainability ball B(y0, sigma sqrt(theta)).

Computed in the equivalent max-min form

    gamma = max(0, max_{||z - y0|| <= r} min_n (||z - x_n0|| - R_n))

by a multi-start projected subgradient ascent (polished with SLSQP in low
dimension) and cross-checked against a brute-force grid oracle.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from modules.game_model import ConstraintKind, Scenario, evader_radius
from modules.hilbert_geometry import (
    HalfSpace, as_point, ball_sample, center_rows, project_to_ball, project_to_sphere,
    sphere_sample, squared_distances,
)
from utils.config import config

logger = logging.getLogger(__name__)


class GameValueError(ValueError):
    """Rejected input to a value computation."""


@dataclass(frozen=True, eq=False)
class GameValue:
    gamma: float
    witness: np.ndarray
    deficits: np.ndarray
    method: str
    lower: Optional[float] = None
    upper: Optional[float] = None

    @property
    def witness_deficit(self) -> float:
        return float(self.deficits.min())


@dataclass(frozen=True, eq=False)
class CoverCheck:
    covered: bool
    worst_point: np.ndarray
    worst_value: float


def _require_pursuers(s: Scenario) -> None:
    if s.size == 0:
        raise GameValueError("the deficit needs at least one pursuer")


def batch_deficits(s: Scenario, points: np.ndarray) -> np.ndarray:
    """(B, N) matrix of ||z_b - x_n0|| - R_n."""
    return np.sqrt(squared_distances(points, s.centers, s.center_sq)) - s.radii


def deficits(s: Scenario, z) -> np.ndarray:
    """Per-pursuer uncovering gaps at z, in pursuer order."""
    _require_pursuers(s)
    z = as_point(z, s.dimension)
    return batch_deficits(s, z[None, :])[0]


def deficit(s: Scenario, z) -> float:
    """min_n (||z - x_n0|| - R_n); z lies in the union of G_n(l) iff this is <= l."""
    return float(deficits(s, z).min())


def _value(s: Scenario, witness: np.ndarray, method: str, **bounds) -> GameValue:
    gaps = deficits(s, witness)
    gamma = max(0.0, float(gaps.min()))
    witness = np.array(witness)
    witness.setflags(write=False)
    return GameValue(gamma, witness, gaps, method, **bounds)


# Brute-force oracle
def gamma_oracle(s: Scenario,
                 grid_per_axis: int = config.ORACLE_GRID,
                 sphere_samples: int = config.ORACLE_SPHERE_SAMPLES,
                 seed: int = config.DEFAULT_SEED) -> GameValue:
    """
    Grid search over the evader ball plus a boundary sample.

    The best sampled deficit is a lower bound on gamma; lower + L*h with the
    grid spacing h is reported as the matching upper bound.
    """
    _require_pursuers(s)
    if s.dimension > config.ORACLE_MAX_DIMENSION:
        raise GameValueError(
            f"the grid oracle is limited to dimension <= {config.ORACLE_MAX_DIMENSION} "
            f"(got {s.dimension}); use gamma_optimize instead"
        )
    if grid_per_axis < 3:
        raise GameValueError(f"grid_per_axis must be >= 3, got {grid_per_axis}")

    r = evader_radius(s)
    axis = np.linspace(-r, r, grid_per_axis)
    spacing = 2.0 * r / (grid_per_axis - 1)
    dim = s.dimension
    if dim == 1:
        rest = np.zeros((1, 0))
    else:
        rest = np.stack(np.meshgrid(*([axis] * (dim - 1)), indexing='ij'), axis=-1).reshape(-1, dim - 1)

    best_value, best_point = -np.inf, s.y0.copy()

    def consider(points: np.ndarray) -> None:
        nonlocal best_value, best_point
        if points.shape[0] == 0:
            return
        values = batch_deficits(s, points).min(axis=1)
        i = int(np.argmax(values))
        if values[i] > best_value:
            best_value, best_point = float(values[i]), points[i].copy()

    for first in axis:
        offsets = np.column_stack([np.full(rest.shape[0], first), rest])
        inside = np.linalg.norm(offsets, axis=1) <= r * (1 + 1e-12)
        consider(s.y0 + offsets[inside])
    consider(sphere_sample(s.y0, r, sphere_samples, seed))

    lower = max(0.0, best_value)
    upper = lower + config.ORACLE_LIPSCHITZ * spacing
    logger.debug("oracle bracket [%.6f, %.6f] with spacing %.3e", lower, upper, spacing)
    return _value(s, best_point, "oracle", lower=lower, upper=upper)


# Multi-start projected subgradient ascent
def _initial_points(s: Scenario, starts: int, rng: np.random.Generator, on_sphere: bool,
                    extra: Sequence = ()) -> np.ndarray:
    r = evader_radius(s)
    dim = s.dimension
    directions: List[np.ndarray] = [as_point(p, dim) - s.y0 for p in extra]

    centroid = np.asarray(s.centers.mean(axis=0)).ravel()
    directions.append(s.y0 - centroid)
    # away from the pursuers that cover y0 most tightly
    threat = batch_deficits(s, s.y0[None, :])[0]
    for n in np.argsort(threat, kind='stable')[:max(starts // 4, 1)]:
        directions.append(s.y0 - center_rows(s.centers, n)[0])

    points = []
    for direction in directions:
        length = float(np.linalg.norm(direction))
        if length > 0:
            points.append(s.y0 + r * direction / length)
        if len(points) >= starts:
            break
    if not on_sphere and len(points) < starts:
        points.append(s.y0.copy())
    while len(points) < starts:
        direction = rng.standard_normal(dim)
        direction /= max(float(np.linalg.norm(direction)), 1e-300)
        radius = r if on_sphere else r * rng.random() ** (1.0 / dim)
        points.append(s.y0 + radius * direction)
    return np.vstack(points[:starts])


def _polish(s: Scenario, start: np.ndarray, on_sphere: bool) -> Optional[np.ndarray]:
    """SLSQP on the epigraph form: max t s.t. ||z - x_n|| - R_n >= t, z in the ball."""
    r = evader_radius(s)
    gaps = deficits(s, start)
    chosen = np.argsort(gaps, kind='stable')[:config.POLISH_MAX_CONSTRAINTS]
    X = center_rows(s.centers, chosen)
    R = s.radii[chosen]
    dim = s.dimension

    def distance_constraints(q):
        return np.linalg.norm(q[:-1] - X, axis=1) - R - q[-1]

    def distance_jacobian(q):
        diff = q[:-1] - X
        lengths = np.maximum(np.linalg.norm(diff, axis=1, keepdims=True), 1e-12)
        return np.hstack([diff / lengths, -np.ones((X.shape[0], 1))])

    def ball_constraint(q):
        offset = q[:-1] - s.y0
        return np.array([r * r - offset @ offset])

    def ball_jacobian(q):
        return np.concatenate([-2.0 * (q[:-1] - s.y0), [0.0]])[None, :]

    objective_grad = np.zeros(dim + 1)
    objective_grad[-1] = -1.0
    q0 = np.concatenate([start, [float(gaps.min())]])
    try:
        result = minimize(
            lambda q: -q[-1], q0,
            jac=lambda q: objective_grad,
            method='SLSQP',
            constraints=[
                {'type': 'ineq', 'fun': distance_constraints, 'jac': distance_jacobian},
                {'type': 'eq' if on_sphere else 'ineq', 'fun': ball_constraint, 'jac': ball_jacobian},
            ],
            options={'maxiter': 200, 'ftol': 1e-13},
        )
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.debug("polishing failed: %s", e)
        return None
    if not np.all(np.isfinite(result.x)):
        return None
    z = result.x[:-1]
    return project_to_sphere(z, s.y0, r) if on_sphere else project_to_ball(z, s.y0, r)


def gamma_optimize(s: Scenario,
                   starts: int = config.OPTIMIZER_STARTS,
                   iters: int = config.OPTIMIZER_ITERS,
                   seed: int = config.DEFAULT_SEED,
                   polish: bool = True,
                   on_sphere: bool = False,
                   extra_starts: Sequence = ()) -> GameValue:
    """
    Maximize the deficit over the closed evader ball (or its sphere).

    Every start ascends along (z - x_n*)/||z - x_n*|| for the lowest-id
    minimizing pursuer n*, with step r/sqrt(k), and is projected back. The
    best iterate of each start is kept and the ascent stops once the overall
    best has not moved for OPTIMIZER_PATIENCE iterations. In low dimension the
    best few are polished with SLSQP. Deterministic given the seed.
    """
    _require_pursuers(s)
    if starts < 1 or iters < 1:
        raise GameValueError(f"starts and iters must be >= 1, got {starts} and {iters}")

    r = evader_radius(s)
    rng = np.random.default_rng(seed)
    Z = _initial_points(s, starts, rng, on_sphere, extra_starts)
    Z = project_to_sphere(Z, s.y0, r) if on_sphere else project_to_ball(Z, s.y0, r)
    rows = np.arange(Z.shape[0])
    best_values = np.full(Z.shape[0], -np.inf)
    best_points = Z.copy()
    nudge = np.zeros(s.dimension)
    nudge[0] = 1.0
    leader, stall = -np.inf, 0

    for k in range(1, iters + 1):
        values_all = batch_deficits(s, Z)
        nstar = np.argmin(values_all, axis=1)
        values = values_all[rows, nstar]
        improved = values > best_values
        best_values[improved] = values[improved]
        best_points[improved] = Z[improved]
        if best_values.max() > leader + 1e-12:
            leader, stall = float(best_values.max()), 0
        else:
            stall += 1
            if stall >= config.OPTIMIZER_PATIENCE:
                logger.debug("optimizer stalled after %d iterations", k)
                break

        G = Z - center_rows(s.centers, nstar)
        lengths = np.linalg.norm(G, axis=1)
        coincident = lengths < 1e-12
        if np.any(coincident):
            # subgradient undefined on top of a pursuer start
            G[coincident] = 1e-12 * nudge
            lengths[coincident] = 1e-12
        Z = Z + (r / math.sqrt(k)) * G / lengths[:, None]
        Z = project_to_sphere(Z, s.y0, r) if on_sphere else project_to_ball(Z, s.y0, r)

    candidates = [best_points[i] for i in range(best_points.shape[0])]
    if polish and s.dimension <= config.POLISH_MAX_DIMENSION and not sp.issparse(s.centers):
        order = np.argsort(-best_values, kind='stable')
        for i in order[:config.POLISH_CANDIDATES]:
            polished = _polish(s, best_points[i], on_sphere)
            if polished is not None:
                candidates.append(polished)

    values = batch_deficits(s, np.vstack(candidates)).min(axis=1)
    winner = int(np.argmax(values))
    logger.debug("optimizer best deficit %.8f (candidate %d of %d)", values[winner], winner, len(candidates))
    return _value(s, candidates[winner], "optimizer")


# Closed forms and sweeps for the worked example
def gamma_analytic_example(dimension: int, groups: str = "both") -> float:
    """
    Value of the shared-axis example truncated to `dimension` coordinates.

    At the symmetric worst point z = -(r/sqrt(d)) (1, ..., 1) a pursuer at
    c e_k is at distance sqrt(r^2 + c^2 + 2 r c / sqrt(d)).
    """
    r = 6.0
    root_d = math.sqrt(dimension)
    integral = math.sqrt(r * r + 9.0 + 2.0 * r * 3.0 / root_d) - 6.0
    geometric = math.sqrt(r * r + 64.0 + 2.0 * r * 8.0 / root_d) - 9.0
    if groups == "integral":
        return integral
    if groups == "geometric":
        return geometric
    return min(integral, geometric)


def richardson_limit(dims: Sequence[int], values: Sequence[float], order: int = 2) -> Optional[float]:
    """
    Extrapolate a truncation sweep to d -> infinity.

    Fits a polynomial in h = d^(-1/2) through the (order + 1) largest
    dimensions and returns its value at h = 0.
    """
    pairs = sorted(zip(dims, values))
    if len(pairs) < 2:
        return None
    pairs = pairs[-(order + 1):]
    h = np.array([1.0 / math.sqrt(d) for d, _ in pairs])
    v = np.array([val for _, val in pairs])
    coefficients = np.polynomial.polynomial.polyfit(h, v, deg=len(pairs) - 1)
    return float(coefficients[0])


def gamma_by_group(s: Scenario, **optimizer_kwargs) -> Dict[str, Optional[GameValue]]:
    """Values of the integral-only and geometric-only sub-games."""
    result = {}
    for kind in ConstraintKind:
        ids = [p.id for p in s.pursuers if p.kind is kind]
        result[kind.value] = gamma_optimize(s.subset(ids), **optimizer_kwargs) if ids else None
    return result


# Covering checks
def covering_check(s: Scenario, l: float, samples: int = config.ORACLE_SPHERE_SAMPLES,
                   seed: int = config.DEFAULT_SEED, extra_points: Sequence = ()) -> CoverCheck:
    """
    One-sided check of B(y0, r) being inside the union of G_n(l).

    Samples the ball and its sphere (plus any extra points); reports the first
    worst sample as a counterexample when its deficit exceeds l.
    """
    _require_pursuers(s)
    if l < 0:
        raise GameValueError(f"inflation l must be >= 0, got {l}")
    r = evader_radius(s)
    blocks = [s.y0[None, :], ball_sample(s.y0, r, samples, seed), sphere_sample(s.y0, r, samples, seed + 1)]
    if len(extra_points):
        blocks.append(np.vstack([as_point(p, s.dimension) for p in extra_points]))
    points = np.vstack(blocks)
    values = batch_deficits(s, points).min(axis=1)
    worst = int(np.argmax(values))
    return CoverCheck(bool(values[worst] <= l + 1e-9), points[worst], float(values[worst]))


def inflated_radius(s: Scenario, index: int, gamma: float, epsilon: float) -> float:
    """R_n + gamma + epsilon/k_n with k_n = max(1, rho_n)."""
    k_n = max(1.0, s.pursuers[index].rho)
    return float(s.radii[index] + gamma + epsilon / k_n)


def covering_halfspaces(s: Scenario, gamma: float, epsilon: float = 0.0) -> List[HalfSpace]:
    """The half-spaces {z : 2 (y0 - x_n0, z) <= (R_n + gamma + eps/k_n)^2 - r^2 + ||y0||^2 - ||x_n0||^2}."""
    r = evader_radius(s)
    y_sq = float(s.y0 @ s.y0)
    spaces = []
    for n, p in enumerate(s.pursuers):
        x0 = p.position()
        radius = inflated_radius(s, n, gamma, epsilon)
        spaces.append(HalfSpace(s.y0 - x0, radius * radius - r * r + y_sq - float(x0 @ x0)))
    return spaces


def locate_halfspace(s: Scenario, gamma: float, epsilon: float, z,
                     tol: float = config.CONTAINMENT_TOL) -> Optional[int]:
    """Id of the pursuer whose covering half-space holds z with the most slack, or None."""
    spaces = covering_halfspaces(s, gamma, epsilon)
    slacks = np.array([h.slack(z) for h in spaces])
    best = int(np.argmax(slacks))
    if slacks[best] < -tol:
        return None
    return int(s.ids[best])


def halfspace_cover_check(s: Scenario, gamma: float, epsilon: float = 0.0,
                          samples: int = config.ORACLE_SPHERE_SAMPLES,
                          seed: int = config.DEFAULT_SEED) -> CoverCheck:
    """Sampled check that the covering half-spaces contain the evader ball."""
    r = evader_radius(s)
    spaces = covering_halfspaces(s, gamma, epsilon)
    normals = np.vstack([h.normal for h in spaces])
    offsets = np.array([h.offset for h in spaces])
    points = np.vstack([ball_sample(s.y0, r, samples, seed), sphere_sample(s.y0, r, samples, seed + 1)])
    best_slack = (offsets[None, :] - 2.0 * points @ normals.T).max(axis=1)
    worst = int(np.argmin(best_slack))
    return CoverCheck(bool(best_slack[worst] >= -config.CONTAINMENT_TOL), points[worst], float(best_slack[worst]))
