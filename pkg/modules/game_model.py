"""
Game instances: constraint classes, pursuers, scenarios and their JSON form,
attainability radii, Assumption (A) certification and the active set K.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from modules.hilbert_geometry import (
    GeometryError, HalfSpace, SparsePoint, as_point, center_rows, dimension_of,
    project_to_ball, sparse_point, squared_distances, squared_norms, stack_centers,
)
from utils.config import config
from utils.helpers import get_payload_hash, load_json_file, validate_file_type

logger = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Scenario input failed validation."""


class ConstraintKind(str, Enum):
    INTEGRAL = "integral"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class ConstraintClass:
    kind: ConstraintKind
    rho: float

    def __post_init__(self):
        object.__setattr__(self, 'kind', ConstraintKind(self.kind))
        if not math.isfinite(self.rho) or self.rho <= 0:
            raise ScenarioError(f"resource rho must be finite and > 0, got {self.rho}")

    @property
    def time_exponent(self) -> float:
        """xi in R = rho * theta**xi."""
        return 0.5 if self.kind is ConstraintKind.INTEGRAL else 1.0


@dataclass(frozen=True, eq=False)
class Pursuer:
    id: int
    x0: Union[np.ndarray, SparsePoint]
    constraint: ConstraintClass

    def __post_init__(self):
        if not isinstance(self.x0, SparsePoint):
            try:
                object.__setattr__(self, 'x0', as_point(self.x0))
            except GeometryError as e:
                raise ScenarioError(f"pursuer {self.id}: {e}") from e

    @property
    def kind(self) -> ConstraintKind:
        return self.constraint.kind

    @property
    def rho(self) -> float:
        return self.constraint.rho

    @property
    def dimension(self) -> int:
        return dimension_of(self.x0)

    def position(self) -> np.ndarray:
        """Dense start position."""
        return as_point(self.x0)


@dataclass(frozen=True, eq=False)
class Scenario:
    dimension: int
    theta: float
    sigma: float
    y0: np.ndarray
    pursuers: tuple

    def __post_init__(self):
        if self.dimension < 1:
            raise ScenarioError(f"dimension must be >= 1, got {self.dimension}")
        if not math.isfinite(self.theta) or self.theta <= 0:
            raise ScenarioError(f"theta must be finite and > 0, got {self.theta}")
        if not math.isfinite(self.sigma) or self.sigma <= 0:
            raise ScenarioError(f"sigma must be finite and > 0, got {self.sigma}")
        if len(self.pursuers) < 1:
            raise ScenarioError("a scenario needs at least one pursuer")
        try:
            object.__setattr__(self, 'y0', as_point(self.y0, self.dimension))
        except GeometryError as e:
            raise ScenarioError(f"y0: {e}") from e

        ordered = tuple(sorted(self.pursuers, key=lambda p: p.id))
        ids = [p.id for p in ordered]
        if len(set(ids)) != len(ids):
            raise ScenarioError("pursuer ids must be unique")
        for p in ordered:
            if p.dimension != self.dimension:
                raise ScenarioError(
                    f"pursuer {p.id}: x0 has dimension {p.dimension}, scenario has {self.dimension}"
                )
        object.__setattr__(self, 'pursuers', ordered)

    @property
    def size(self) -> int:
        return len(self.pursuers)

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([p.id for p in self.pursuers], dtype=int)

    @cached_property
    def centers(self):
        """(N, d) start positions, dense or CSR."""
        return stack_centers([p.x0 for p in self.pursuers], self.dimension)

    @cached_property
    def center_sq(self) -> np.ndarray:
        return squared_norms(self.centers)

    @cached_property
    def radii(self) -> np.ndarray:
        """Attainability radii R_n in pursuer order."""
        return np.array([reachable_radius(p, self.theta) for p in self.pursuers])

    @cached_property
    def integral_mask(self) -> np.ndarray:
        return np.array([p.kind is ConstraintKind.INTEGRAL for p in self.pursuers])

    @property
    def evader_radius(self) -> float:
        return evader_radius(self)

    def index_of(self, pursuer_id: int) -> int:
        matches = np.flatnonzero(self.ids == pursuer_id)
        if matches.size == 0:
            raise KeyError(f"no pursuer with id {pursuer_id}")
        return int(matches[0])

    def pursuer(self, pursuer_id: int) -> Pursuer:
        return self.pursuers[self.index_of(pursuer_id)]

    def subset(self, pursuer_ids: Iterable[int]) -> "Scenario":
        keep = set(pursuer_ids)
        chosen = tuple(p for p in self.pursuers if p.id in keep)
        return Scenario(self.dimension, self.theta, self.sigma, self.y0, chosen)

    def scaled(self, factor: float) -> "Scenario":
        """Positions, resources and sigma multiplied by factor; theta unchanged."""
        scaled = tuple(
            Pursuer(p.id, p.position() * factor, ConstraintClass(p.kind, p.rho * factor))
            for p in self.pursuers
        )
        return Scenario(self.dimension, self.theta, self.sigma * factor, self.y0 * factor, scaled)

    def to_payload(self) -> Dict:
        """JSON document in the scenario file schema."""
        pursuers = []
        for p in self.pursuers:
            if isinstance(p.x0, SparsePoint):
                x0 = {"sparse": {str(k): v for k, v in zip(p.x0.indices, p.x0.values)}}
            else:
                x0 = [float(c) for c in p.x0]
            pursuers.append({"id": int(p.id), "x0": x0, "rho": float(p.rho),
                             "constraint": p.kind.value})
        return {
            "dimension": int(self.dimension),
            "theta": float(self.theta),
            "sigma": float(self.sigma),
            "y0": [float(c) for c in self.y0],
            "pursuers": pursuers,
        }

    @cached_property
    def digest(self) -> str:
        return get_payload_hash(self.to_payload())


# Scenario file schema
class SparsePositionSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')
    sparse: Dict[int, float]


class PursuerSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')
    id: int
    x0: Union[List[float], SparsePositionSpec]
    rho: float = Field(gt=0, allow_inf_nan=False)
    constraint: ConstraintKind


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')
    dimension: int = Field(ge=1)
    theta: float = Field(gt=0, allow_inf_nan=False)
    sigma: float = Field(gt=0, allow_inf_nan=False)
    y0: List[float]
    pursuers: List[PursuerSpec] = Field(min_length=1)


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(x) for x in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def scenario_from_payload(payload: Dict) -> Scenario:
    try:
        spec = ScenarioSpec.model_validate(payload)
    except ValidationError as e:
        raise ScenarioError(_format_validation_error(e)) from e

    pursuers = []
    for i, item in enumerate(spec.pursuers):
        if isinstance(item.x0, SparsePositionSpec):
            try:
                x0 = sparse_point(spec.dimension, item.x0.sparse)
            except GeometryError as e:
                raise ScenarioError(f"pursuers.{i}.x0: {e}") from e
        else:
            x0 = item.x0
        pursuers.append(Pursuer(item.id, x0, ConstraintClass(item.constraint, item.rho)))
    return Scenario(spec.dimension, spec.theta, spec.sigma, spec.y0, tuple(pursuers))


def load_scenario(path: str) -> Scenario:
    """Load and validate a scenario JSON file."""
    if not validate_file_type(path, ['.json']):
        raise ScenarioError(f"{path}: scenario files must have a .json extension")
    try:
        payload = load_json_file(path)
    except ValueError as e:
        raise ScenarioError(str(e)) from e
    scenario = scenario_from_payload(payload)
    logger.info("loaded scenario %s (d=%d, N=%d)", path, scenario.dimension, scenario.size)
    return scenario


# Attainability
def reachable_radius(p: Pursuer, theta: float) -> float:
    """rho*sqrt(theta) for integral constraints, rho*theta for geometric ones."""
    if theta <= 0:
        raise ScenarioError(f"theta must be > 0, got {theta}")
    return p.rho * theta ** p.constraint.time_exponent


def evader_radius(s: Scenario) -> float:
    return s.sigma * math.sqrt(s.theta)


def reach_control(p: Pursuer, target, theta: float) -> np.ndarray:
    """Constant control (target - x0)/theta steering the pursuer onto target at theta."""
    target = as_point(target, p.dimension)
    return (target - p.position()) / theta


def constant_control_budget(control, constraint: ConstraintClass, theta: float) -> float:
    """Resource used by a constant control: ||u||^2 theta (integral) or ||u|| (geometric)."""
    size = float(np.linalg.norm(control))
    if constraint.kind is ConstraintKind.INTEGRAL:
        return size * size * theta
    return size


def capture_halfspace(x0, y0, rho: float, sigma: float, theta: float,
                      kind: ConstraintKind) -> HalfSpace:
    """
    Half-space of terminal evader positions a lone pursuer is sure to capture.

    The integral law needs (rho^2 - sigma^2) theta in the offset; the geometric
    law's capture argument needs (rho^2 - sigma^2) theta^2.
    """
    x0, y0 = as_point(x0), as_point(y0)
    scale = theta if ConstraintKind(kind) is ConstraintKind.INTEGRAL else theta * theta
    offset = (rho * rho - sigma * sigma) * scale + float(y0 @ y0) - float(x0 @ x0)
    return HalfSpace(y0 - x0, offset)


# Assumption (A)
@dataclass(frozen=True, eq=False)
class AssumptionACertificate:
    p0: np.ndarray
    min_slack: float
    degenerate: bool = False

    @property
    def valid(self) -> bool:
        return self.min_slack >= config.ASSUMPTION_ABSENT_BELOW

    @property
    def marginal(self) -> bool:
        return self.min_slack < config.ASSUMPTION_MARGINAL_BELOW


def assumption_slack(s: Scenario, p: np.ndarray) -> float:
    """min_n (y0 - x_n0, p)."""
    projections = np.asarray(s.centers @ p).ravel()
    return float(p @ s.y0 - projections.max())


def check_assumption_a(s: Scenario,
                       starts: int = config.ASSUMPTION_STARTS,
                       iters: int = config.ASSUMPTION_ITERS,
                       seed: int = config.DEFAULT_SEED) -> Optional[AssumptionACertificate]:
    """
    Search for a unit p0 with (y0 - x_n0, p0) >= 0 for every pursuer.

    Maximizes the concave function p -> min_n (y0 - x_n0, p) over the unit
    ball by multi-start projected subgradient ascent (step 1/sqrt(k)), then
    normalizes. Returns None when the best slack is below the absence
    threshold.
    """
    dim = s.dimension
    gaps = squared_distances(s.y0[None, :], s.centers, s.center_sq).ravel()
    if np.all(gaps <= 0.0):
        logger.warning("every pursuer starts at y0; Assumption (A) holds trivially")
        p0 = np.zeros(dim)
        p0[0] = 1.0
        return AssumptionACertificate(p0, 0.0, degenerate=True)

    if s.size == 1:
        direction = s.y0 - center_rows(s.centers, 0)[0]
        length = float(np.linalg.norm(direction))
        return AssumptionACertificate(direction / length, length)

    # structured starts: away from the centroid, then away from single pursuers
    candidates = []
    centroid = np.asarray(s.centers.mean(axis=0)).ravel()
    candidates.append(s.y0 - centroid)
    for n in range(min(s.size, max(starts // 4, 1))):
        candidates.append(s.y0 - center_rows(s.centers, n)[0])
    rng = np.random.default_rng(seed)
    while len(candidates) < starts:
        candidates.append(rng.standard_normal(dim))
    P = np.vstack(candidates[:max(starts, 1)])
    lengths = np.linalg.norm(P, axis=1)
    P[lengths == 0, 0] = 1.0
    P = P / np.linalg.norm(P, axis=1, keepdims=True)

    best_slack, best_p, stall = -np.inf, P[0].copy(), 0
    column = np.arange(P.shape[0])
    for k in range(1, iters + 1):
        XP = np.asarray(s.centers @ P.T)
        nstar = np.argmax(XP, axis=0)
        values = P @ s.y0 - XP[nstar, column]
        lengths = np.linalg.norm(P, axis=1)
        normalized = np.where(lengths > 0, values / np.maximum(lengths, 1e-300), -np.inf)
        leader = int(np.argmax(normalized))
        if normalized[leader] > best_slack + 1e-15:
            best_slack, best_p, stall = float(normalized[leader]), P[leader] / lengths[leader], 0
        else:
            stall += 1
            if stall >= config.ASSUMPTION_PATIENCE:
                logger.debug("Assumption (A) search stalled after %d iterations", k)
                break

        G = s.y0 - center_rows(s.centers, nstar)
        g_len = np.linalg.norm(G, axis=1, keepdims=True)
        G = np.where(g_len > 0, G / np.maximum(g_len, 1e-300), 0.0)
        P = project_to_ball(P + G / math.sqrt(k), np.zeros(dim), 1.0)

    slack = assumption_slack(s, best_p)
    logger.debug("Assumption (A) best slack %.3e", slack)
    if slack < config.ASSUMPTION_ABSENT_BELOW:
        return None
    return AssumptionACertificate(best_p, slack)


# Active set
def active_set_k(s: Scenario, gamma: float) -> FrozenSet[int]:
    """Pursuers whose inflated ball G_n(gamma) meets the sphere S(y0, sigma sqrt(theta))."""
    if gamma < 0:
        raise ScenarioError(f"gamma must be >= 0, got {gamma}")
    r = evader_radius(s)
    distances = np.sqrt(squared_distances(s.y0[None, :], s.centers, s.center_sq).ravel())
    active = np.abs(distances - r) <= s.radii + gamma
    return frozenset(int(i) for i in s.ids[active])


# Worked example presets
EXAMPLE_THETA = 9.0
EXAMPLE_SIGMA = 2.0
EXAMPLE_INTEGRAL_RHO = 2.0
EXAMPLE_GEOMETRIC_RHO = 1.0
EXAMPLE_INTEGRAL_OFFSET = 3.0
EXAMPLE_GEOMETRIC_OFFSET = 8.0

PRESETS = {
    "example": ("shared", "both"),
    "example-disjoint": ("disjoint", "both"),
    "example-integral": ("shared", "integral"),
    "example-geometric": ("shared", "geometric"),
}
DEFAULT_PRESET_DIMENSION = 16


def example_scenario(dimension: int, placement: str = "shared", groups: str = "both") -> Scenario:
    """
    The worked example truncated to `dimension` coordinates.

    Integral pursuers (rho=2) start at 3 e_k, geometric ones (rho=1) at 8 e_k,
    the evader at the origin with sigma=2, theta=9. `shared` puts one pursuer
    of each group on every axis; `disjoint` gives even axes to the integral
    group and odd axes to the geometric group.
    """
    if placement not in ("shared", "disjoint"):
        raise ScenarioError(f"unknown placement {placement!r}")
    if groups not in ("both", "integral", "geometric"):
        raise ScenarioError(f"unknown group selection {groups!r}")
    if placement == "disjoint" and groups == "both" and dimension < 2:
        raise ScenarioError("the disjoint placement needs dimension >= 2")

    if placement == "shared":
        integral_axes = geometric_axes = list(range(dimension))
    else:
        integral_axes = list(range(0, dimension, 2))
        geometric_axes = list(range(1, dimension, 2))
        if groups != "both":
            integral_axes = geometric_axes = list(range(dimension))

    pursuers = []
    if groups in ("both", "integral"):
        for k in integral_axes:
            pursuers.append(Pursuer(
                len(pursuers),
                sparse_point(dimension, {k: EXAMPLE_INTEGRAL_OFFSET}),
                ConstraintClass(ConstraintKind.INTEGRAL, EXAMPLE_INTEGRAL_RHO),
            ))
    if groups in ("both", "geometric"):
        for k in geometric_axes:
            pursuers.append(Pursuer(
                len(pursuers),
                sparse_point(dimension, {k: EXAMPLE_GEOMETRIC_OFFSET}),
                ConstraintClass(ConstraintKind.GEOMETRIC, EXAMPLE_GEOMETRIC_RHO),
            ))
    return Scenario(dimension, EXAMPLE_THETA, EXAMPLE_SIGMA, np.zeros(dimension), tuple(pursuers))


def resolve_scenario(reference: str, dimension: Optional[int] = None) -> Scenario:
    """A preset name (see PRESETS) or a path to a scenario JSON file."""
    if reference in PRESETS:
        placement, groups = PRESETS[reference]
        return example_scenario(dimension or DEFAULT_PRESET_DIMENSION, placement, groups)
    if dimension is not None:
        logger.warning("--dimension only applies to presets; using the file's dimension")
    return load_scenario(reference)
