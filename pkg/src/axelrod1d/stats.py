"""Estimators and pathwise checks for the Axelrod chain and its interfaces."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import EventRecord, InterfaceEngine, Kind, Snapshot, VertexEngine
from .model import (
    ConfigurationError,
    Horizon,
    InterfaceState,
    SystemParams,
    Topology,
    VertexConfig,
)
from .randomness import replica_seed


def parity_vector(state: InterfaceState, u: int | None = None, v: int | None = None) -> tuple[int, ...]:
    """Per-level particle count mod 2 over edges ``u..v`` (default: all)."""
    lo = 0 if u is None else u
    hi = state.edges - 1 if v is None else v
    acc = 0
    for m in state.masks[lo:hi + 1]:
        acc ^= m
    return tuple(acc >> i & 1 for i in range(state.features))


def active_interval(state: InterfaceState, u: int, v: int) -> bool:
    """True iff two levels hold particle counts of different parity on ``u..v``."""
    if not 0 <= u <= v < state.edges:
        raise ValueError(f"bad interval {u}..{v}")
    parities = parity_vector(state, u, v)
    return len(set(parities)) > 1


def domain_lengths(config: VertexConfig) -> list[int]:
    """Lengths of maximal runs of identical cultures, cyclic on the torus."""
    c = config.cultures
    n = len(c)
    breaks = [x for x in range(n - 1) if c[x] != c[x + 1]]
    cyclic = config.topology is Topology.TORUS
    if cyclic and c[n - 1] != c[0]:
        breaks.append(n - 1)
    if not breaks:
        return [n]
    if not cyclic:
        bounds = [-1] + breaks + [n - 1]
        return [b - a for a, b in zip(bounds, bounds[1:])]
    # cyclic: run between consecutive break positions, wrapping around
    return [(breaks[(k + 1) % len(breaks)] - breaks[k]) % n or n for k in range(len(breaks))]


def s_max(config: VertexConfig) -> int:
    return max(domain_lengths(config))


def n_c(config: VertexConfig) -> int:
    return len(domain_lengths(config))


def expected_n_c_single_feature(size: int) -> float:
    """E(n_c) on the torus for F = 1, q = 2 with i.i.d. uniform states.

    Each of the ``size`` edges is a boundary with probability 1/2; n_c is
    the boundary count, or 1 when there is none (probability 2**(1 - size)).
    """
    return size / 2 + 2.0 ** (1 - size)


def enumerate_n_c_single_feature(size: int) -> float:
    """Exact E(n_c) by listing all 2**size binary torus configurations."""
    total = 0
    for bits in range(1 << size):
        rotated = ((bits >> 1) | ((bits & 1) << (size - 1)))
        b = (bits ^ rotated).bit_count()
        total += b if b else 1
    return total / (1 << size)


@dataclass
class EventCounters:
    annihilations: list[int]
    freezings: list[int]
    flagged: int = 0  # annihilations whose pair straddles a non-torus boundary


def annihilation_site(rec: EventRecord, edges: int, torus: bool) -> int:
    """Left edge of the colliding pair."""
    a, b = rec.edge, rec.target
    if torus and {a, b} == {edges - 1, 0} and edges > 2:
        return edges - 1
    return min(a, b)


def count_events(trajectory: Iterable[EventRecord], edges: int, torus: bool = True) -> EventCounters:
    counters = EventCounters([0] * edges, [0] * edges)
    for rec in trajectory:
        if rec.kind is Kind.ANNIHILATE:
            counters.annihilations[annihilation_site(rec, edges, torus)] += 1
        elif rec.kind is Kind.FREEZE_FORMING:
            counters.freezings[rec.target] += 1
    return counters


class FreezeSeparationAudit:
    """Checks that two freezing events at an edge are separated by an
    annihilation at that edge or at its left neighbour. Feed records in order."""

    def __init__(self, edges: int, torus: bool = True):
        self.edges = edges
        self.torus = torus
        self.armed = [False] * edges  # a freezing happened, no annihilation since
        self.violations: list[tuple[float, int]] = []
        self.freezings = 0
        self.annihilations = 0

    def __call__(self, rec: EventRecord) -> None:
        if rec.kind is Kind.ANNIHILATE:
            self.annihilations += 1
            w = annihilation_site(rec, self.edges, self.torus)
            self.armed[w] = False
            right = w + 1
            if self.torus:
                right %= self.edges
            if right < self.edges:
                self.armed[right] = False
        elif rec.kind is Kind.FREEZE_FORMING:
            self.freezings += 1
            u = rec.target
            if self.armed[u]:
                self.violations.append((rec.time, u))
            self.armed[u] = True


@dataclass
class AbsorptionRecord:
    replica: int
    seed: int
    params: SystemParams
    s_max: int
    n_c: int
    t_abs: float
    censored: bool
    annihilations: int
    freezings: int

    def csv_row(self) -> list:
        p = self.params
        return [self.replica, self.seed, p.features, p.states, p.size, p.topology.value,
                self.s_max, self.n_c, self.t_abs, int(self.censored),
                self.annihilations, self.freezings]


ABSORPTION_HEADER = ["replica", "seed", "F", "q", "N", "topology", "s_max", "n_c",
                     "t_abs", "censored", "annihilations", "freezings"]
DENSITY_HEADER = ["t", "mean_zeta", "se", "active", "se_active", "frozen", "se_frozen",
                  "p_F", "p_active"]


def simulate_replica(params: SystemParams, replica: int, horizon: Horizon,
                     sample_times: Sequence[float] = (),
                     initial: VertexConfig | None = None) -> tuple[AbsorptionRecord, list[Snapshot]]:
    """Run one vertex-chain replica with the derived seed and summarize it."""
    seed = replica_seed(params.seed, replica)
    p = SystemParams(params.features, params.states, params.size, params.topology, seed, horizon)
    engine = VertexEngine(p, initial)
    tally = _KindTally()
    summary = engine.run(horizon, sample_times=sample_times, on_event=tally)
    config = engine.vertex_state()
    censored = engine.absorbed_at is None
    t_abs = engine.clock if censored else engine.absorbed_at
    rec = AbsorptionRecord(replica, seed, p, s_max(config), n_c(config), t_abs, censored,
                           tally.annihilations, tally.freezings)
    return rec, summary.snapshots


class _KindTally:
    __slots__ = ("annihilations", "freezings")

    def __init__(self):
        self.annihilations = 0
        self.freezings = 0

    def __call__(self, rec: EventRecord) -> None:
        if rec.kind is Kind.ANNIHILATE:
            self.annihilations += 1
        elif rec.kind is Kind.FREEZE_FORMING:
            self.freezings += 1


def map_replicas(fn: Callable, args: Sequence[tuple], workers: int = 1) -> list:
    """Apply ``fn`` to each argument tuple; results keep argument order."""
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()) if arr.size else math.nan, math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


@dataclass
class DensitySeries:
    features: int
    times: list[float]
    per_replica: np.ndarray  # (replicas, times, 5): zeta, active part, frozen part, P(F), P(active)
    mean: np.ndarray = field(init=False)
    se: np.ndarray = field(init=False)

    COLUMNS = ("mean_zeta", "active", "frozen", "p_F", "p_active")

    def __post_init__(self):
        self.mean = self.per_replica.mean(axis=0)
        r = self.per_replica.shape[0]
        self.se = (self.per_replica.std(axis=0, ddof=1) / math.sqrt(r)) if r > 1 else np.full_like(self.mean, np.nan)

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        k = self.COLUMNS.index(name)
        return self.mean[:, k], self.se[:, k]

    def paired_difference(self, name: str, a: int, b: int) -> tuple[float, float]:
        """Mean and SE over replicas of ``value[time b] - value[time a]``."""
        k = self.COLUMNS.index(name)
        diff = self.per_replica[:, b, k] - self.per_replica[:, a, k]
        return mean_se(diff)

    def rows(self) -> list[list[float]]:
        out = []
        for t, m, s in zip(self.times, self.mean, self.se):
            out.append([t, m[0], s[0], m[1], s[1], m[2], s[2], m[3], m[4]])
        return out


def snapshot_densities(snap: Snapshot, features: int) -> tuple[float, float, float, float, float]:
    e = snap.edges
    frozen_part = features * snap.frozen_edges
    return (snap.total_particles / e, (snap.total_particles - frozen_part) / e, frozen_part / e,
            snap.frozen_edges / e, snap.active_edges / e)


def _density_replica(params: SystemParams, replica: int, sample_times: Sequence[float]) -> list:
    seed = replica_seed(params.seed, replica)
    p = SystemParams(params.features, params.states, params.size, params.topology, seed, params.horizon)
    if p.states == 2:
        engine = InterfaceEngine(p)
    else:
        engine = VertexEngine(p)
    summary = engine.run(Horizon(t_max=max(sample_times), until_absorbed=True), sample_times=sample_times)
    return [snapshot_densities(s, p.features) for s in summary.snapshots]


def density_series(params: SystemParams, replicas: int, sample_times: Sequence[float],
                   workers: int = 1) -> DensitySeries:
    """Spatial average within each replica, then mean and SE across replicas."""
    if replicas < 2:
        raise ConfigurationError("density_series needs at least two replicas")
    times = sorted(sample_times)
    res = map_replicas(_density_replica, [(params, r, times) for r in range(replicas)], workers)
    return DensitySeries(params.features, times, np.array(res, dtype=float))


@dataclass
class ReleaseTable:
    horizons: list[float]
    survival: list[float]
    se: list[float]
    replicas: int
    release_times: list[float]  # inf when not released within the largest horizon

    def drop(self, a: int, b: int) -> tuple[float, float]:
        """Estimate and SE of P(horizon a < release <= horizon b)."""
        ta, tb = self.horizons[a], self.horizons[b]
        x = np.array([ta < r <= tb for r in self.release_times], dtype=float)
        return mean_se(x)


def _release_replica(params: SystemParams, replica: int, t0: float, t_end: float,
                     edge: int) -> float | None:
    """Release time of ``edge`` after ``t0``; None when not an F-site at ``t0``."""
    seed = replica_seed(params.seed, replica)
    p = SystemParams(params.features, 2, params.size, params.topology, seed, params.horizon)
    engine = InterfaceEngine(p)
    F = p.features
    if t0 > 0:
        engine.run(Horizon(t_max=t0, until_absorbed=False))
    if engine.zeta[edge] != F:
        return None
    zeta = engine.zeta
    while True:
        t = engine.next_time()
        if t > t_end:
            return math.inf
        engine.step_raw()
        if zeta[edge] != F:
            return t - t0


def frozen_release_probe(params: SystemParams, horizons: Sequence[float], replicas: int, *,
                         t0: float = 0.0, edge: int = 0, workers: int = 1) -> ReleaseTable:
    """Fraction of replicas whose tagged F-site survives each horizon.

    On the killed half-line with ``t0 = 0`` the tagged (left-most) edge is
    full by construction; otherwise replicas where it is not an F-site at
    ``t0`` are discarded.
    """
    if params.states != 2:
        raise ConfigurationError("release probe requires states == 2")
    if params.features < 2:
        raise ConfigurationError("release probe requires features >= 2 (all particles are frozen at F = 1)")
    horizons = sorted(horizons)
    t_end = t0 + horizons[-1]
    res = map_replicas(_release_replica, [(params, r, t0, t_end, edge) for r in range(replicas)], workers)
    times = [r for r in res if r is not None]
    survival, se = [], []
    for h in horizons:
        s, e = mean_se([float(r > h) for r in times])
        survival.append(s)
        se.append(e)
    return ReleaseTable(list(horizons), survival, se, len(times), times)
