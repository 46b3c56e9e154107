"""Folding simulations: simulated annealing and replica-exchange Monte Carlo.

The annealing and tempering cores are generic over a *move set* with

* ``initial(rng) -> state``
* ``propose(state, rng) -> state or None`` (``None`` means the proposal
  violated a hard constraint such as a clash)

and an ``evaluate(state) -> float`` energy.  Protein runs plug in
:class:`CrfMoves` (angle states drawn from a trained model) or
:class:`UniformMoves` (uniform random angles).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from foldcrf import sampler
from foldcrf.anglemodel.library import AngleStateLibrary
from foldcrf.anglemodel.model import AngleModel, Observation, potentials
from foldcrf.geometry import (
    CA_BOND,
    InternalCoords,
    QuadrilateralTable,
    build_trace_from_internal,
    place_atom,
    radius_of_gyration,
)
from foldcrf.potentials.energy import Conformation, EnergyModel
from foldcrf.potentials.tables import eligible_pairs

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


@dataclass
class SimConfig:
    p0: float = 0.8
    cooling: float = 0.9
    steps_per_temp: int | None = None  # 100 + N when None
    max_steps: int = 10000
    stall_limit: int = 1000
    n_trials: int = 200
    n_replicas: int = 20
    t_max: float = 100.0
    steps_per_replica: int = 24000
    exchange_every: int = 30
    emit_within: float = 0.15
    clash_cutoff: float = 4.0
    max_clash_tries: int = 100
    biased: bool = True
    seed: int = 0

    def __post_init__(self):
        positive = ("cooling", "max_steps", "stall_limit", "n_trials", "n_replicas", "t_max",
                    "steps_per_replica", "exchange_every", "clash_cutoff", "max_clash_tries")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.p0 < 1:
            raise ValueError("p0 must lie in (0, 1)")
        if not 0 < self.emit_within <= 1:
            raise ValueError("emit_within must lie in (0, 1]")
        if self.steps_per_temp is not None and self.steps_per_temp < 1:
            raise ValueError("steps_per_temp must be positive")

    def level_length(self, n_residues: int) -> int:
        return self.steps_per_temp if self.steps_per_temp is not None else 100 + n_residues

    def ladder(self) -> np.ndarray:
        """Replica temperatures ``t_max * i / n_replicas`` for i = 1..n (5, 10, ..., 100 by default)."""
        return self.t_max * np.arange(1, self.n_replicas + 1) / self.n_replicas


# --- acceptance rules --------------------------------------------------------


def clash_check(trace, cutoff: float = 4.0) -> bool:
    """True when no Cα pair with ``|i - j| >= 3`` is closer than ``cutoff``."""
    x = np.asarray(trace, dtype=float)
    i, j = eligible_pairs(len(x), True, 3)
    if len(i) == 0:
        return True
    d2 = np.sum((x[i] - x[j]) ** 2, axis=1)
    return bool(np.all(d2 >= cutoff * cutoff))


def metropolis_accept(delta_e: float, t: float, rng: np.random.Generator) -> bool:
    """Accept with probability ``min(1, exp(-dE / t))``; draws a uniform only when ``dE > 0``."""
    if t <= 0:
        raise ValueError("temperature must be positive")
    if delta_e <= 0:
        return True
    if not math.isfinite(delta_e):
        return False
    return bool(rng.random() < math.exp(-delta_e / t))


def swap_probability(e_i: float, e_j: float, t_i: float, t_j: float) -> float:
    """Parallel-tempering exchange probability ``min(1, exp((1/t_i - 1/t_j)(e_i - e_j)))``."""
    x = (1.0 / t_i - 1.0 / t_j) * (e_i - e_j)
    return 1.0 if x >= 0 else math.exp(x)


def initial_temperature(increments, p0: float = 0.8) -> float:
    """``-mean(dE+) / ln p0`` over the positive increments; 1 when there are none."""
    pos = np.asarray([d for d in increments if d > 0], dtype=float)
    if len(pos) == 0:
        warnings.warn("no positive energy increments observed; using t0 = 1", RuntimeWarning, stacklevel=2)
        return 1.0
    return float(-pos.mean() / math.log(p0))


def _propose(moves, state, rng, max_tries: int):
    for _ in range(max_tries):
        new = moves.propose(state, rng)
        if new is not None:
            return new
    return None


def estimate_initial_temperature(evaluate, moves, state, rng: np.random.Generator, n_trials: int = 200,
                                 p0: float = 0.8, max_tries: int = 100) -> float:
    """Random walk of ``n_trials`` accepted-always resamplings; t0 from the uphill steps.

    Proposals rejected by a hard constraint are redrawn and do not count.
    """
    if n_trials < 2:
        raise ValueError("need at least two trials")
    e = evaluate(state)
    increments = []
    for _ in range(n_trials):
        new = _propose(moves, state, rng, max_tries)
        if new is None:
            continue
        e_new = evaluate(new)
        increments.append(e_new - e)
        state, e = new, e_new
    return initial_temperature(increments, p0)


# --- generic cores -----------------------------------------------------------


@dataclass
class AnnealResult:
    best: object
    best_energy: float
    final: object
    final_energy: float
    t0: float
    temperatures: list[float] = field(default_factory=list)
    n_steps: int = 0
    n_accepted: int = 0


def anneal(moves, evaluate, cfg: SimConfig, rng: np.random.Generator, n_residues: int,
           t0: float | None = None) -> AnnealResult:
    """Simulated annealing with ``t_{k+1} = cooling * t_k``.

    Each level runs ``100 + N`` proposals.  The run ends after ``max_steps``
    proposals, or at the end of a level that accepted no uphill move once
    ``stall_limit`` consecutive proposals have failed to improve the best
    energy.
    """
    state = moves.initial(rng)
    e = evaluate(state)
    if t0 is None:
        t0 = estimate_initial_temperature(evaluate, moves, state, rng, cfg.n_trials, cfg.p0, cfg.max_clash_tries)
    best, best_e = state, e
    temps = []
    steps = accepted = stall = 0
    level = cfg.level_length(n_residues)
    k = 0
    while steps < cfg.max_steps:
        t = t0 * cfg.cooling**k
        temps.append(t)
        uphill = 0
        for _ in range(level):
            if steps >= cfg.max_steps:
                break
            steps += 1
            new = _propose(moves, state, rng, cfg.max_clash_tries)
            stall += 1
            if new is None:
                continue
            e_new = evaluate(new)
            if metropolis_accept(e_new - e, t, rng):
                uphill += e_new > e
                accepted += 1
                state, e = new, e_new
                if e < best_e:
                    best, best_e = state, e
                    stall = 0
        if uphill == 0 and stall >= cfg.stall_limit:
            break
        k += 1
    return AnnealResult(best, best_e, state, e, t0, temps, steps, accepted)


@dataclass
class TemperingResult:
    finals: list
    final_energies: list[float]
    temperatures: np.ndarray
    lowest_energy: float
    lowest: object
    swap_attempts: np.ndarray  # per neighbour pair (k, k+1)
    swap_accepts: np.ndarray
    steps_per_replica: int
    n_barriers: int

    def emitted(self, within: float) -> list[int]:
        """Replica slots whose final energy is within ``within`` of the lowest energy reached."""
        cut = self.lowest_energy + within * abs(self.lowest_energy)
        return [k for k, e in enumerate(self.final_energies) if e <= cut]


def temper(moves, evaluate, cfg: SimConfig, swap_rng: np.random.Generator | None = None) -> TemperingResult:
    """Replica exchange at temperatures ``cfg.ladder()``.

    Replica slot ``k`` draws its moves from ``default_rng(seed + k)``.  After
    every ``exchange_every`` steps, every neighbour pair is offered one swap:
    pairs (0,1), (2,3), ... first, then (1,2), (3,4), ....
    """
    temps = cfg.ladder()
    n = len(temps)
    rngs = [np.random.default_rng(cfg.seed + k) for k in range(n)]
    swap_rng = np.random.default_rng(cfg.seed + n) if swap_rng is None else swap_rng
    states = [moves.initial(rngs[k]) for k in range(n)]
    energies = [evaluate(s) for s in states]
    k_low = int(np.argmin(energies))
    lowest, lowest_e = states[k_low], energies[k_low]
    attempts = np.zeros(n - 1, dtype=int)
    accepts = np.zeros(n - 1, dtype=int)
    barriers = 0
    done = 0
    pair_order = list(range(0, n - 1, 2)) + list(range(1, n - 1, 2))
    while done < cfg.steps_per_replica:
        chunk = min(cfg.exchange_every, cfg.steps_per_replica - done)
        for k in range(n):
            for _ in range(chunk):
                new = _propose(moves, states[k], rngs[k], cfg.max_clash_tries)
                if new is None:
                    continue
                e_new = evaluate(new)
                if metropolis_accept(e_new - energies[k], temps[k], rngs[k]):
                    states[k], energies[k] = new, e_new
                    if e_new < lowest_e:
                        lowest, lowest_e = new, e_new
        done += chunk
        if chunk < cfg.exchange_every:
            break
        barriers += 1
        for k in pair_order:
            attempts[k] += 1
            p = swap_probability(energies[k], energies[k + 1], temps[k], temps[k + 1])
            if p >= 1.0 or swap_rng.random() < p:
                accepts[k] += 1
                states[k], states[k + 1] = states[k + 1], states[k]
                energies[k], energies[k + 1] = energies[k + 1], energies[k]
    return TemperingResult(states, energies, temps, lowest_e, lowest, attempts, accepts, done, barriers)


# --- protein move sets -------------------------------------------------------


@dataclass
class SimState:
    labels: np.ndarray | None
    ic: InternalCoords
    trace: np.ndarray
    conf: Conformation
    _energy: float | None = None
    parts: dict[str, float] = field(default_factory=dict)


@dataclass
class Decoy:
    trace: np.ndarray
    energy: float
    parts: dict[str, float]
    rg: float
    labels: np.ndarray | None = None
    ic: InternalCoords | None = None


class _ProteinMoves:
    def __init__(self, sequence, n: int, quad_table: QuadrilateralTable | None, clash_cutoff: float):
        self.sequence = sequence if sequence is not None else "X" * n
        if len(self.sequence) != n:
            raise ValueError("sequence length does not match the observation")
        if n < 4:
            raise ValueError("folding needs at least 4 residues")
        self.n = n
        self.quad_table = quad_table
        self.clash_cutoff = clash_cutoff

    def _state(self, labels, ic) -> SimState | None:
        trace = build_trace_from_internal(ic)
        if not clash_check(trace, self.clash_cutoff):
            return None
        return SimState(labels, ic, trace, Conformation(trace, self.sequence, None, self.quad_table))

    def initial(self, rng, max_tries: int = 1000) -> SimState:
        for _ in range(max_tries):
            st = self._draw_initial(rng)
            if st is not None:
                return st
        raise SimulationError(f"no clash-free starting conformation in {max_tries} draws")


class CrfMoves(_ProteinMoves):
    """Resample a segment's angle states from the model, then its angles from FB5."""

    def __init__(self, model: AngleModel, obs: Observation, lib: AngleStateLibrary, sequence=None,
                 biased: bool = True, quad_table: QuadrilateralTable | None = None, clash_cutoff: float = 4.0):
        super().__init__(sequence, len(obs), quad_table, clash_cutoff)
        if model.n_states != len(lib):
            raise ValueError("model and library disagree on the number of states")
        self.pot = potentials(model, obs)
        self.ss = obs.ss
        self.lib = lib
        self.biased = biased

    def _draw_initial(self, rng):
        labels = sampler.sample_labels_full(self.pot, None, rng)
        return self._state(labels, sampler.draw_angles_for_labels(labels, self.lib, rng))

    def propose(self, st: SimState, rng) -> SimState | None:
        seg = sampler.choose_segment(self.ss, rng, self.biased)
        labels = sampler.resample_labels_segment(self.pot, None, st.labels, seg, rng)
        return self._state(labels, sampler.redraw_angles(st.ic, labels, self.lib, seg, rng))


def _uniform_angles(m: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Directions uniform on the sphere, as (theta, tau)."""
    theta = np.arccos(rng.uniform(-1.0, 1.0, m))
    tau = rng.uniform(-np.pi, np.pi, m)
    return np.clip(theta, sampler.THETA_EPS, np.pi - sampler.THETA_EPS), tau


class UniformMoves(_ProteinMoves):
    """Baseline: unbiased segments redrawn with directions uniform on the sphere."""

    def __init__(self, n: int, sequence=None, quad_table: QuadrilateralTable | None = None,
                 clash_cutoff: float = 4.0, ss: np.ndarray | None = None):
        super().__init__(sequence, n, quad_table, clash_cutoff)
        self.ss = np.tile([0.0, 0.0, 1.0], (n, 1)) if ss is None else ss

    def _draw_initial(self, rng, tries_per_residue: int = 100):
        # uniform whole-chain draws almost never avoid clashes beyond ~20 residues, so grow the
        # chain one residue at a time and redraw only the newest direction when it clashes
        theta, tau = _uniform_angles(self.n - 2, rng)
        pts = [np.zeros(3), np.array([CA_BOND, 0.0, 0.0])]
        pts.append(place_atom(np.array([0.0, 1.0, 0.0]), pts[0], pts[1], CA_BOND, theta[0], 0.0))
        cut2 = self.clash_cutoff**2
        for k in range(3, self.n):
            for _ in range(tries_per_residue):
                p = place_atom(pts[k - 3], pts[k - 2], pts[k - 1], CA_BOND, theta[k - 2], tau[k - 2])
                if np.all(np.sum((np.array(pts[: k - 2]) - p) ** 2, axis=1) >= cut2):
                    break
                t, d = _uniform_angles(1, rng)
                theta[k - 2], tau[k - 2] = t[0], d[0]
            else:
                return None
            pts.append(p)
        return self._state(None, InternalCoords(theta, tau[1:], CA_BOND))

    def propose(self, st: SimState, rng) -> SimState | None:
        seg = sampler.choose_segment(self.ss, rng, biased=False)
        ic = st.ic.copy()
        lo, hi = max(seg.start, 1), min(seg.stop, self.n - 1)
        if hi > lo:
            theta, tau = _uniform_angles(hi - lo, rng)
            ic.theta[lo - 1 : hi - 1] = theta
            t_lo = max(lo, 2)
            ic.tau[t_lo - 2 : hi - 2] = tau[t_lo - lo :]
        return self._state(None, ic)


def state_energy(energy: EnergyModel):
    """Energy callback that caches the total and per-component values on the state."""

    def evaluate(st: SimState) -> float:
        if st._energy is None:
            rep = energy.evaluate(st.conf)
            st._energy, st.parts = rep.total, rep.parts
        return st._energy

    return evaluate


def _decoy(st: SimState, e: float) -> Decoy:
    return Decoy(st.trace, e, dict(st.parts), radius_of_gyration(st.trace), st.labels, st.ic)


# --- entry points ------------------------------------------------------------


@dataclass
class SaResult:
    decoys: list[Decoy]
    t0: float
    temperatures: list[float]
    n_steps: int


def run_sa_moves(moves, energy: EnergyModel, cfg: SimConfig, rng: np.random.Generator | None = None,
                 t0: float | None = None) -> SaResult:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    res = anneal(moves, state_energy(energy), cfg, rng, moves.n, t0)
    log.info("SA: %d steps over %d levels, best energy %.4g", res.n_steps, len(res.temperatures), res.best_energy)
    return SaResult([_decoy(res.best, res.best_energy)], res.t0, res.temperatures, res.n_steps)


def run_sa(model: AngleModel, obs: Observation, lib: AngleStateLibrary, energy: EnergyModel, cfg: SimConfig,
           rng: np.random.Generator | None = None, sequence=None,
           quad_table: QuadrilateralTable | None = None) -> SaResult:
    """Anneal from a whole-chain model sample with segment resampling moves."""
    moves = CrfMoves(model, obs, lib, sequence, cfg.biased, quad_table, cfg.clash_cutoff)
    return run_sa_moves(moves, energy, cfg, rng)


@dataclass
class RemcResult:
    decoys: list[Decoy]
    tempering: TemperingResult


def run_remc_moves(moves, energy: EnergyModel, cfg: SimConfig, swap_rng: np.random.Generator | None = None) -> RemcResult:
    res = temper(moves, state_energy(energy), cfg, swap_rng)
    keep = res.emitted(cfg.emit_within)
    log.info("REMC: lowest energy %.4g, %d of %d replicas emitted", res.lowest_energy, len(keep), len(res.finals))
    if not keep:
        log.warning("REMC: no final replica within %.0f%% of the lowest energy %.4g; nothing emitted",
                    100 * cfg.emit_within, res.lowest_energy)
    return RemcResult([_decoy(res.finals[k], res.final_energies[k]) for k in keep], res)


def run_remc(model: AngleModel, obs: Observation, lib: AngleStateLibrary, energy: EnergyModel, cfg: SimConfig,
             swap_rng: np.random.Generator | None = None, sequence=None,
             quad_table: QuadrilateralTable | None = None) -> RemcResult:
    """Replica exchange with model-driven moves; emits final replicas near the lowest energy reached."""
    moves = CrfMoves(model, obs, lib, sequence, cfg.biased, quad_table, cfg.clash_cutoff)
    return run_remc_moves(moves, energy, cfg, swap_rng)
