"""
Time-stepped play of the game with piecewise-constant controls.

The evader's control is sampled at the start of every step and held, so
every trajectory is piecewise linear and is integrated exactly. Integral
budget cutoffs and geometric meeting times fall inside steps and are placed
exactly by splitting the step.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from modules.game_model import (
    ConstraintClass, ConstraintKind, Pursuer, Scenario, ScenarioError, active_set_k,
    reach_control, reachable_radius,
)
from modules.game_value import gamma_optimize
from modules.hilbert_geometry import as_point
from modules.strategies import (
    EvaderPlan, StrategyMode, StrategyState, TheoremHypotheses, check_theorem_hypotheses,
    contact, fictitious_resource, geometric_advance, integral_cutoff, integral_velocity, lemma_hypotheses,
    scale_factor, switch_tolerance,
)
from utils.config import config
from utils.helpers import load_json_file, validate_file_type

logger = logging.getLogger(__name__)

# Largest (steps + 1) * N * d trajectory tensor a run will allocate.
MAX_TRAJECTORY_ENTRIES = 50_000_000

# Times this close (relative to the horizon) below a piece start read that piece.
BOUNDARY_SNAP = 1e-9


class SimulationError(ValueError):
    """A run could not be carried out (bad configuration, non-finite control, ...)."""


class ControlSourceError(ScenarioError):
    """A control file failed validation."""


class PursuerStrategy(str, Enum):
    THEOREM = "theorem"
    LEMMA = "lemma"


@dataclass(frozen=True)
class SimConfig:
    steps: int = config.DEFAULT_STEPS
    dt: Optional[float] = None
    capture_tol: float = config.CAPTURE_TOL
    epsilon: float = config.DEFAULT_EPSILON
    seed: int = config.DEFAULT_SEED
    switch_tol: Optional[float] = None

    def __post_init__(self):
        if self.steps < 1:
            raise SimulationError(f"steps must be >= 1, got {self.steps}")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise SimulationError(f"dt must be finite and > 0, got {self.dt}")
        if self.epsilon < 0 or self.capture_tol < 0:
            raise SimulationError("epsilon and capture_tol must be >= 0")
        if self.switch_tol is not None and self.switch_tol < 0:
            raise SimulationError(f"switch_tol must be >= 0, got {self.switch_tol}")

    def grid(self, theta: float) -> Tuple[int, float]:
        """Step count and step length; a requested dt is shortened to divide theta."""
        if self.dt is None:
            return self.steps, theta / self.steps
        steps = max(1, math.ceil(theta / self.dt - 1e-9))
        return steps, theta / steps


# Control sources
class ControlFileSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')
    times: List[float] = Field(min_length=1)
    values: List[List[float]] = Field(min_length=1)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantControl:
    """Control equal to values[k] on [starts[k], starts[k+1]), the last piece ending at horizon."""
    starts: np.ndarray
    values: np.ndarray
    horizon: float

    def __post_init__(self):
        try:
            starts = np.array(self.starts, dtype=float)
            values = np.array(self.values, dtype=float, ndmin=2)
        except ValueError as e:
            raise ControlSourceError(f"control values must form a rectangular table: {e}") from e
        if values.ndim != 2 or starts.ndim != 1 or starts.size != values.shape[0]:
            raise ControlSourceError("a control needs one start time per value row")
        if starts[0] != 0.0:
            raise ControlSourceError(f"the first piece must start at 0, got {starts[0]}")
        if np.any(np.diff(starts) <= 0) or starts[-1] >= self.horizon:
            raise ControlSourceError("piece start times must increase strictly and stay below the horizon")
        if not np.all(np.isfinite(values)):
            raise ControlSourceError("control values must be finite")
        starts.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, 'starts', starts)
        object.__setattr__(self, 'values', values)

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(np.append(self.starts, self.horizon))

    def value_at(self, t: float) -> np.ndarray:
        return self.sample(np.array([t]))[0]

    def sample(self, times: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.starts, np.asarray(times) + BOUNDARY_SNAP * self.horizon, side='right') - 1
        return self.values[np.clip(idx, 0, self.values.shape[0] - 1)]

    def integral_budget(self) -> float:
        return float(np.sum(np.einsum('ij,ij->i', self.values, self.values) * self.durations))

    def max_rate(self) -> float:
        return float(np.linalg.norm(self.values, axis=1).max())

    def scaled(self, factor: float) -> "PiecewiseConstantControl":
        return PiecewiseConstantControl(self.starts, self.values * factor, self.horizon)

    @classmethod
    def constant(cls, value, horizon: float) -> "PiecewiseConstantControl":
        return cls(np.zeros(1), as_point(value)[None, :], horizon)

    @classmethod
    def zero(cls, dimension: int, horizon: float) -> "PiecewiseConstantControl":
        return cls(np.zeros(1), np.zeros((1, dimension)), horizon)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=[f"c{k}" for k in range(self.dimension)])
        frame.insert(0, "t", self.starts)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, horizon: float) -> "PiecewiseConstantControl":
        if "t" not in frame.columns:
            raise ControlSourceError("control table needs a 't' column of piece start times")
        columns = [c for c in frame.columns if c != "t"]
        try:
            columns.sort(key=lambda c: int(str(c).lstrip("c")))
        except ValueError as e:
            raise ControlSourceError(f"control columns must be named c0, c1, ...: {e}") from e
        return cls(frame["t"].to_numpy(dtype=float), frame[columns].to_numpy(dtype=float), horizon)

    @classmethod
    def load(cls, path: str, horizon: float, dimension: int) -> "PiecewiseConstantControl":
        """
        Read a control from JSON ({"times": [...], "values": [[...], ...]})
        or CSV (columns t, c0, ..., c{d-1}); times are piece starts.
        """
        if validate_file_type(path, ['.json']):
            try:
                spec = ControlFileSpec.model_validate(load_json_file(path))
            except ValueError as e:
                raise ControlSourceError(str(e)) from e
            control = cls(np.array(spec.times), np.array(spec.values), horizon)
        elif validate_file_type(path, ['.csv']):
            try:
                frame = pd.read_csv(path)
            except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
                raise ControlSourceError(f"{path}: {e}") from e
            control = cls.from_frame(frame, horizon)
        else:
            raise ControlSourceError(f"{path}: control files must be .json or .csv")
        if control.dimension != dimension:
            raise ControlSourceError(f"{path}: control has dimension {control.dimension}, scenario has {dimension}")
        logger.info("loaded %d-piece control from %s", control.values.shape[0], path)
        return control


def straight_line_evader(plan: EvaderPlan, theta: float) -> PiecewiseConstantControl:
    return PiecewiseConstantControl.constant(plan.control, theta)


# Budget audit
class BudgetAudit(NamedTuple):
    spent: float
    ok: bool
    margin: float


def budget_verdict(spent: float, c: ConstraintClass) -> BudgetAudit:
    """ok iff spent <= rho^2 (integral) or rho (geometric) within tolerance; margin = spent - limit."""
    if c.kind is ConstraintKind.INTEGRAL:
        limit, tol = c.rho * c.rho, config.INTEGRAL_BUDGET_TOL
    else:
        limit, tol = c.rho, config.GEOMETRIC_BUDGET_TOL
    return BudgetAudit(float(spent), bool(spent <= limit + tol), float(spent - limit))


def audit_budget(trace, c: ConstraintClass, dt: Union[float, np.ndarray] = None) -> BudgetAudit:
    """
    Resource used by a control time series.

    Args:
        trace: (K, d) control values or a PiecewiseConstantControl
        c: constraint class to audit against
        dt: step length, or one duration per row
    """
    if isinstance(trace, PiecewiseConstantControl):
        values, durations = trace.values, trace.durations
    else:
        values = np.array(trace, dtype=float, ndmin=2)
        if dt is None:
            raise SimulationError("audit_budget needs dt for a raw control trace")
        durations = np.broadcast_to(np.asarray(dt, dtype=float), (values.shape[0],))
    if values.size == 0:
        return budget_verdict(0.0, c)
    sizes = np.einsum('ij,ij->i', values, values)
    if c.kind is ConstraintKind.INTEGRAL:
        spent = float(np.sum(sizes * durations))
    else:
        spent = float(np.sqrt(sizes.max()))
    return budget_verdict(spent, c)


# Test adversaries
def _spread_budget(magnitudes: np.ndarray, durations: np.ndarray, target: float,
                   cap: Optional[float]) -> np.ndarray:
    """Scale factors lambda_k so that sum (lambda_k a_k)^2 dt_k = target with lambda_k a_k <= cap."""
    scale = math.sqrt(target / float(np.sum(magnitudes ** 2 * durations)))
    if cap is None or np.all(scale * magnitudes <= cap):
        return np.full(magnitudes.size, scale)

    def excess(lam: float) -> float:
        return float(np.sum(np.minimum(lam * magnitudes, cap) ** 2 * durations)) - target

    lam = brentq(excess, 0.0, cap / magnitudes.min(), xtol=1e-15, rtol=1e-14)
    return np.minimum(lam * magnitudes, cap) / magnitudes


def _random_pieces(dimension: int, pieces: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((pieces, dimension)) * (0.1 + rng.random(pieces))[:, None]
    lengths = np.linalg.norm(raw, axis=1)
    raw[lengths == 0, 0] = 1.0
    return raw


def random_admissible_evader(s: Scenario, pieces: int, seed: int,
                             rate_bounded: bool = False) -> PiecewiseConstantControl:
    """
    Random piecewise-constant evader control on equal pieces of [0, theta].

    Uses exactly sigma^2 of the integral budget. With rate_bounded every piece
    also has ||v|| <= sigma, and the budget used is sigma^2 min(1, theta).
    """
    if pieces < 1:
        raise SimulationError(f"pieces must be >= 1, got {pieces}")
    rng = np.random.default_rng(seed)
    raw = _random_pieces(s.dimension, pieces, rng)
    durations = np.full(pieces, s.theta / pieces)
    magnitudes = np.linalg.norm(raw, axis=1)
    if rate_bounded and s.theta <= 1.0:
        factors = s.sigma / magnitudes
    else:
        target = s.sigma ** 2 * (min(1.0, s.theta) if rate_bounded else 1.0)
        factors = _spread_budget(magnitudes, durations, target, s.sigma if rate_bounded else None)
    starts = np.arange(pieces) * (s.theta / pieces)
    return PiecewiseConstantControl(starts, raw * factors[:, None], s.theta)


def random_admissible_pursuer(p: Pursuer, theta: float, pieces: int, seed: int) -> PiecewiseConstantControl:
    """Random admissible control: full integral budget, or speeds in [rho/2, rho]."""
    if pieces < 1:
        raise SimulationError(f"pieces must be >= 1, got {pieces}")
    rng = np.random.default_rng(seed)
    raw = _random_pieces(p.dimension, pieces, rng)
    magnitudes = np.linalg.norm(raw, axis=1)
    if p.kind is ConstraintKind.INTEGRAL:
        factors = _spread_budget(magnitudes, np.full(pieces, theta / pieces), p.rho ** 2, None)
    else:
        factors = p.rho * rng.uniform(0.5, 1.0, pieces) / magnitudes
    starts = np.arange(pieces) * (theta / pieces)
    return PiecewiseConstantControl(starts, raw * factors[:, None], theta)


def rush_controls(s: Scenario, target) -> Dict[int, PiecewiseConstantControl]:
    """Every pursuer runs straight at target, stopping there if it can reach it."""
    target = as_point(target, s.dimension)
    controls = {}
    for p in s.pursuers:
        offset = target - p.position()
        distance = float(np.linalg.norm(offset))
        radius = reachable_radius(p, s.theta)
        if distance <= radius:
            u = reach_control(p, target, s.theta) if distance > 0 else np.zeros(s.dimension)
        else:
            u = offset / distance * (radius / s.theta)
        controls[p.id] = PiecewiseConstantControl.constant(u, s.theta)
    return controls


# Closed-loop pursuers
PURSUING, SHADOWING, FROZEN = 0, 1, 2
_MODES = {PURSUING: StrategyMode.PURSUING, SHADOWING: StrategyMode.SHADOWING, FROZEN: StrategyMode.FROZEN}


class _LawBank:
    """
    Every pursuer driving its own fictitious law, advanced one step at a time.

    z holds the driver positions; the real pursuer sits at x0 + factor (z - x0).
    """

    def __init__(self, s: Scenario, starts: np.ndarray, rho_bar: np.ndarray, factor: np.ndarray,
                 frozen: np.ndarray, capped: bool, tol: float):
        self.sigma = s.sigma
        self.integral = s.integral_mask
        self.x0 = starts
        self.z = starts.copy()
        self.rho_bar = rho_bar
        self.factor = factor
        self.cap = rho_bar ** 2 if capped else np.full(rho_bar.size, np.inf)
        self.tol = tol

        offsets = s.y0 - starts
        lengths = np.linalg.norm(offsets, axis=1)
        self.coincident = lengths == 0
        self.bases = offsets / s.theta
        self.directions = offsets / np.where(self.coincident, 1.0, lengths)[:, None]
        self.directions[self.coincident, 0] = 1.0

        self.mode = np.full(rho_bar.size, PURSUING, dtype=np.int8)
        self.switch = np.full(rho_bar.size, np.nan)
        at_evader = self.coincident & ~self.integral
        self.mode[at_evader] = SHADOWING
        self.switch[at_evader] = 0.0
        self.mode[frozen] = FROZEN
        self.switch[frozen] = np.nan
        self.spent = np.zeros(rho_bar.size)
        self.colinearity = 0.0

    def advance(self, t: float, dt: float, y: np.ndarray, v: np.ndarray) -> None:
        moves = np.zeros_like(self.z)
        shadowing = self.mode == SHADOWING
        v_size = float(np.linalg.norm(v))

        rows = np.flatnonzero((self.mode == PURSUING) & self.integral)
        if rows.size:
            w = integral_velocity(self.bases[rows], v)
            moves[rows], self.spent[rows], duration = integral_cutoff(w, self.spent[rows], self.cap[rows], dt)
            cut = duration < dt
            self.mode[rows[cut]] = FROZEN
            self.switch[rows[cut]] = t + duration[cut]

        rows = np.flatnonzero((self.mode == PURSUING) & ~self.integral)
        if rows.size:
            gap, off_line, met = contact(y, self.z[rows], self.directions[rows], self.tol)
            self.colinearity = max(self.colinearity, float(off_line.max()))
            self.mode[rows[met]] = SHADOWING
            self.switch[rows[met]] = t
            shadowing[rows[met]] = True

            go = rows[~met]
            if go.size:
                moves[go], speeds, meet = geometric_advance(v, self.directions[go], self.rho_bar[go],
                                                            self.sigma, gap[~met], dt)
                self.spent[go] = np.maximum(self.spent[go], speeds)
                hit = meet <= dt
                self.mode[go[hit]] = SHADOWING
                self.switch[go[hit]] = t + meet[hit]
                tail = go[hit & (meet < dt)]
                self.spent[tail] = np.maximum(self.spent[tail], v_size)

        rows = np.flatnonzero(shadowing)
        if rows.size:
            moves[rows] = v * dt
            self.spent[rows] = np.maximum(self.spent[rows], v_size)

        self.z = self.z + moves

    def positions(self) -> np.ndarray:
        return self.x0 + self.factor[:, None] * (self.z - self.x0)

    def real_budgets(self) -> np.ndarray:
        return np.where(self.integral, self.factor ** 2 * self.spent, self.factor * self.spent)

    def states(self, ids: np.ndarray) -> List[StrategyState]:
        budgets = self.real_budgets()
        result = []
        for n, pursuer_id in enumerate(ids):
            switch = None if np.isnan(self.switch[n]) else float(self.switch[n])
            direction = None if self.coincident[n] else self.directions[n].copy()
            result.append(StrategyState(int(pursuer_id), _MODES[int(self.mode[n])], switch,
                                        float(budgets[n]), direction))
        return result


@dataclass(eq=False)
class SimResult:
    strategy: str
    times: np.ndarray
    evader_path: np.ndarray
    pursuer_ids: np.ndarray
    pursuer_paths: np.ndarray
    payoff: float
    budgets: Dict[int, float]
    evader_audit: BudgetAudit
    pursuer_audits: Dict[int, BudgetAudit]
    switch_times: Dict[int, Optional[float]]
    final_states: Dict[int, StrategyState] = field(default_factory=dict)
    gamma: Optional[float] = None
    frozen: FrozenSet[int] = frozenset()
    demoted: FrozenSet[int] = frozenset()
    colinearity_error: float = 0.0
    evader_max_rate: float = 0.0
    fictitious: Dict[int, Tuple[float, float]] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def admissible(self) -> bool:
        return self.evader_audit.ok and all(a.ok for a in self.pursuer_audits.values())

    def terminal_distances(self) -> np.ndarray:
        return np.linalg.norm(self.pursuer_paths[:, -1, :] - self.evader_path[-1], axis=1)

    def summary(self) -> Dict:
        """JSON-ready digest: gamma, payoff, budgets, switch times, admissibility."""
        return {
            "strategy": self.strategy,
            "gamma": self.gamma,
            "payoff": self.payoff,
            "steps": self.steps,
            "budgets": {str(k): v for k, v in self.budgets.items()},
            "evader_budget": self.evader_audit.spent,
            "evader_max_rate": self.evader_max_rate,
            "switch_times": {str(k): v for k, v in self.switch_times.items()},
            "admissibility": {
                "evader": self.evader_audit._asdict(),
                **{str(k): a._asdict() for k, a in self.pursuer_audits.items()},
            },
            "frozen": sorted(self.frozen),
            "demoted": sorted(self.demoted),
            "colinearity_error": self.colinearity_error,
            "fictitious": {str(k): {"miss": m, "gap_to_real": g} for k, (m, g) in self.fictitious.items()},
        }

    def to_frame(self) -> pd.DataFrame:
        """Long table with columns t, player_id, role, c0, ..., c{d-1}; the evader has id -1."""
        dim = self.evader_path.shape[1]
        coords = [f"c{k}" for k in range(dim)]
        blocks = [pd.DataFrame(self.evader_path, columns=coords).assign(t=self.times, player_id=-1, role="evader")]
        for n, pursuer_id in enumerate(self.pursuer_ids):
            blocks.append(pd.DataFrame(self.pursuer_paths[n], columns=coords)
                          .assign(t=self.times, player_id=int(pursuer_id), role="pursuer"))
        return pd.concat(blocks, ignore_index=True)[["t", "player_id", "role"] + coords]


def _check_control(control: PiecewiseConstantControl, s: Scenario, who: str) -> None:
    if control.dimension != s.dimension:
        raise SimulationError(f"{who} control has dimension {control.dimension}, scenario has {s.dimension}")
    if abs(control.horizon - s.theta) > 1e-12 * max(1.0, s.theta):
        raise SimulationError(f"{who} control horizon {control.horizon} differs from theta {s.theta}")


def run_game(s: Scenario,
             pursuer_strategy: Union[PursuerStrategy, str, Mapping[int, PiecewiseConstantControl]],
             evader_control: Union[PiecewiseConstantControl, EvaderPlan],
             cfg: SimConfig = None,
             gamma: Optional[float] = None,
             hypotheses: Optional[TheoremHypotheses] = None) -> SimResult:
    """
    Play one game.

    pursuer_strategy is "theorem" (scaled fictitious laws, frozen outside the
    active set), "lemma" (each pursuer runs its single-pursuer law with its own
    resource) or a mapping from pursuer id to an open-loop control; pursuers
    missing from the mapping stay put.

    Raises:
        StrategyHypothesisError: when the chosen laws' hypotheses fail
        SimulationError: on bad configuration or a non-finite control
    """
    cfg = cfg or SimConfig()
    steps, dt = cfg.grid(s.theta)
    if (steps + 1) * s.size * s.dimension > MAX_TRAJECTORY_ENTRIES:
        raise SimulationError(
            f"{steps} steps x {s.size} pursuers x dimension {s.dimension} is too large to simulate"
        )
    if isinstance(evader_control, EvaderPlan):
        evader_control = straight_line_evader(evader_control, s.theta)
    _check_control(evader_control, s, "evader")

    times = np.arange(steps + 1) * dt
    times[-1] = s.theta
    V = evader_control.sample(times[:-1])
    if not np.all(np.isfinite(V)):
        raise SimulationError("evader control is not finite")
    Y = np.vstack([s.y0, s.y0 + np.cumsum(V * dt, axis=0)])
    evader_audit = audit_budget(V, ConstraintClass(ConstraintKind.INTEGRAL, s.sigma), dt)
    if not evader_audit.ok:
        logger.warning("evader overspends its budget by %.3e", evader_audit.margin)

    starts = np.vstack([p.position() for p in s.pursuers])
    ids = s.ids
    paths = np.empty((s.size, steps + 1, s.dimension))
    frozen, demoted = frozenset(), frozenset()
    states, fictitious, colinearity = {}, {}, 0.0

    if isinstance(pursuer_strategy, Mapping):
        strategy = "open-loop"
        unknown = set(pursuer_strategy) - set(int(i) for i in ids)
        if unknown:
            raise SimulationError(f"controls given for unknown pursuers {sorted(unknown)}")
        U = np.zeros((s.size, steps, s.dimension))
        for n, p in enumerate(s.pursuers):
            if p.id in pursuer_strategy:
                _check_control(pursuer_strategy[p.id], s, f"pursuer {p.id}")
                U[n] = pursuer_strategy[p.id].sample(times[:-1])
        if not np.all(np.isfinite(U)):
            raise SimulationError("pursuer control is not finite")
        paths[:, 0] = starts
        paths[:, 1:] = starts[:, None, :] + np.cumsum(U * dt, axis=1)
        audits = {int(i): audit_budget(U[n], s.pursuers[n].constraint, dt) for n, i in enumerate(ids)}
        switch_times = {int(i): None for i in ids}
    else:
        strategy = PursuerStrategy(pursuer_strategy).value
        tol = switch_tolerance(s) if cfg.switch_tol is None else cfg.switch_tol
        if strategy == PursuerStrategy.THEOREM.value:
            if gamma is None:
                gamma = gamma_optimize(s, seed=cfg.seed).gamma
            if gamma < 0:
                raise SimulationError(f"gamma must be >= 0, got {gamma}")
            hypotheses = hypotheses or check_theorem_hypotheses(s, gamma, cfg.epsilon, cfg.seed)
            demoted = hypotheses.demoted
            active = active_set_k(s, gamma)
            frozen = frozenset(int(i) for i in ids if int(i) not in active) | demoted
            frozen_mask = np.isin(ids, list(frozen))
            driving = np.array([fictitious_resource(p, gamma, s.theta, 0.0).rho_bar for p in s.pursuers])
            inflated = np.array([fictitious_resource(p, gamma, s.theta, cfg.epsilon).rho_bar for p in s.pursuers])
            factor = np.array([scale_factor(p, gamma, s.theta) for p in s.pursuers])
            bank = _LawBank(s, starts, driving, factor, frozen_mask, True, tol)
            companions = _LawBank(s, starts, inflated, np.ones(s.size), frozen_mask, True, tol)
        else:
            lemma_hypotheses(s)
            rho = np.array([p.rho for p in s.pursuers])
            bank = _LawBank(s, starts, rho, np.ones(s.size), np.zeros(s.size, dtype=bool), False, tol)
            companions = None

        paths[:, 0] = starts
        for k in range(steps):
            bank.advance(times[k], dt, Y[k], V[k])
            if companions is not None:
                companions.advance(times[k], dt, Y[k], V[k])
            paths[:, k + 1] = bank.positions()
        if not np.all(np.isfinite(paths[:, -1])):
            raise SimulationError("pursuer trajectory became non-finite")

        budgets = bank.real_budgets()
        audits = {int(i): budget_verdict(budgets[n], s.pursuers[n].constraint) for n, i in enumerate(ids)}
        switch_times = {int(i): (None if np.isnan(bank.switch[n]) else float(bank.switch[n]))
                        for n, i in enumerate(ids)}
        states = {st.pursuer_id: st for st in bank.states(ids)}
        colinearity = bank.colinearity
        if companions is not None:
            real_end = paths[:, -1]
            for n, i in enumerate(ids):
                fictitious[int(i)] = (float(np.linalg.norm(companions.z[n] - Y[-1])),
                                      float(np.linalg.norm(companions.z[n] - real_end[n])))

    for pursuer_id, audit in audits.items():
        if not audit.ok:
            logger.warning("pursuer %d overspends its budget by %.3e", pursuer_id, audit.margin)

    distances = np.linalg.norm(paths[:, -1, :] - Y[-1], axis=1)
    result = SimResult(
        strategy=strategy,
        times=times,
        evader_path=Y,
        pursuer_ids=ids.copy(),
        pursuer_paths=paths,
        payoff=float(distances.min()),
        budgets={i: a.spent for i, a in audits.items()},
        evader_audit=evader_audit,
        pursuer_audits=audits,
        switch_times=switch_times,
        final_states=states,
        gamma=gamma,
        frozen=frozen,
        demoted=demoted,
        colinearity_error=colinearity,
        evader_max_rate=float(np.linalg.norm(V, axis=1).max()),
        fictitious=fictitious,
    )
    logger.info("%s run: payoff %.6f over %d steps", strategy, result.payoff, steps)
    return result


def save_control(control: PiecewiseConstantControl, path: str) -> str:
    """Write a control as CSV (columns t, c0, ...); the inverse of PiecewiseConstantControl.load."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    control.to_frame().to_csv(path, index=False)
    return path
