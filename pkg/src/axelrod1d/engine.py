"""Event-driven simulation of the vertex chain and of its interface system.

Both engines read the same :class:`~axelrod1d.randomness.MarkSource`. A
mark on (edge ``u``, level ``i``) at time ``t`` is accepted when level
``i`` of ``u`` carries a particle and its uniform is at most
``r(zeta(u))``. An accepted mark with direction +1 moves the particle
from ``u`` to ``u + 1``: in the vertex chain, vertex ``u + 1`` copies
feature ``i`` of vertex ``u``; with direction -1, vertex ``u`` copies
from ``u + 1``.

Marks that cannot change the state are skipped according to the
scheduling policy, which never alters the trajectory:

* ``"all"``: every (edge, level) clock is processed,
* ``"occupied"``: only clocks on occupied levels (frozen ones included),
* ``"active"``: only clocks on occupied levels of non-frozen edges.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .model import (
    ConfigurationError,
    Horizon,
    InterfaceState,
    SystemParams,
    Topology,
    VertexConfig,
    interface_view,
    jump_rate,
    sample_half_line,
    sample_initial,
)
from .randomness import MarkCursor, MarkSource


class Mode(str, enum.Enum):
    VERTEX = "vertex"
    INTERFACE = "interface"


class Kind(str, enum.Enum):
    MOVE = "move"
    ANNIHILATE = "annihilate"
    FREEZE_FORMING = "freeze-forming"
    REJECTED = "rejected"
    KILLED = "killed"
    # only possible in the vertex chain with q > 2
    COALESCE = "coalesce"


class Fault(str, enum.Enum):
    """Deliberate defects for exercising the coupling oracle."""

    HALF_RATE = "half-rate"
    FLIP_DIRECTION = "flip-direction"
    COALESCE = "coalesce"
    ADOPTION_SIDE = "adoption-side"
    OFF_BY_ONE = "off-by-one"


POLICIES = ("all", "occupied", "active")


@dataclass(frozen=True)
class EventRecord:
    time: float
    edge: int
    level: int
    direction: int
    accepted: bool
    kind: Kind
    occupancy: int
    uniform: float
    target: int | None = None  # receiving edge; None when killed or rejected
    index: int = 0


@dataclass(frozen=True)
class Snapshot:
    time: float
    total_particles: int
    per_level_counts: tuple[int, ...]
    active_edges: int
    frozen_edges: int
    edges: int

    def as_dict(self) -> dict:
        return {
            "time": self.time,
            "total_particles": self.total_particles,
            "per_level_counts": list(self.per_level_counts),
            "active_edges": self.active_edges,
            "frozen_edges": self.frozen_edges,
        }


@dataclass(frozen=True)
class SimState:
    clock: float
    mode: Mode
    vertex: VertexConfig | None
    interface: InterfaceState
    events: int
    accepted: int
    absorbed_at: float | None


class KillOnTorus(RuntimeError):
    pass


def kill_boundary(state: InterfaceState, edge: int, level: int, direction: int) -> InterfaceState:
    """Remove the particle at ``(edge, level)`` if its jump leaves the edge set."""
    if state.topology is Topology.TORUS:
        raise KillOnTorus("kill_boundary invoked on a torus")
    if 0 <= edge + direction < state.edges:
        return state
    masks = list(state.masks)
    masks[edge] &= ~(1 << (level - 1))
    return InterfaceState(tuple(masks), state.features, state.topology)


class Engine:
    """Shared queue, bookkeeping and stepping logic. Not thread-safe."""

    mode: Mode

    def __init__(self, params: SystemParams, masks: Sequence[int], *,
                 source: MarkSource | None = None, policy: str = "active",
                 fault: Fault | str | None = None):
        if policy not in POLICIES:
            raise ConfigurationError(f"unknown scheduling policy {policy!r}")
        self.params = params
        self.F = params.features
        self.full = (1 << self.F) - 1
        self.E = len(masks)
        self.torus = params.topology is Topology.TORUS
        self.policy = policy
        self.fault = Fault(fault) if fault is not None else None
        self.source = source if source is not None else MarkSource(params.seed)
        # floating-point jump rates, converted once from the exact values
        self.rates = [0.0] + [float(jump_rate(j, self.F)) for j in range(1, self.F + 1)]

        self.masks = list(masks)
        self.zeta = [m.bit_count() for m in self.masks]
        self.level_counts = [sum(m >> i & 1 for m in self.masks) for i in range(self.F)]
        self.total = sum(self.zeta)
        self.active_edges = sum(1 for z in self.zeta if 0 < z < self.F)
        self.frozen_edges = sum(1 for z in self.zeta if z == self.F)

        self.clock = 0.0
        self.events = 0
        self.accepted = 0
        self.absorbed_at: float | None = 0.0 if self.active_edges == 0 else None

        self._cursors: list[MarkCursor | None] = [None] * (self.E * self.F)
        self._scheduled = [False] * (self.E * self.F)
        self._heap: list[tuple[float, int, int, int]] = []
        for u in range(self.E):
            self._schedule_edge(u)

    # -- scheduling ---------------------------------------------------------

    def _live(self, u: int, i: int) -> bool:
        if self.policy == "all":
            return True
        if not self.masks[u] >> i & 1:
            return False
        return self.policy == "occupied" or self.zeta[u] < self.F

    def _schedule_edge(self, u: int) -> None:
        F = self.F
        m = self.masks[u]
        policy = self.policy
        if policy == "active" and self.zeta[u] == F:
            return
        base = u * F
        for i in range(F):
            if policy != "all" and not m >> i & 1:
                continue
            k = base + i
            if self._scheduled[k]:
                continue
            cur = self._cursors[k]
            if cur is None:
                cur = self._cursors[k] = MarkCursor(self.source, u, i + 1)
            cur.skip_past(self.clock)
            self._scheduled[k] = True
            heapq.heappush(self._heap, (cur.time, u, i, cur.n))

    def next_time(self) -> float:
        """Time of the next event that will be processed (inf if none)."""
        heap = self._heap
        while heap:
            t, u, i, _ = heap[0]
            if self._live(u, i):
                return t
            heapq.heappop(heap)
            self._scheduled[u * self.F + i] = False
        return math.inf

    # -- state updates -------------------------------------------------------

    def _set_mask(self, u: int, new: int) -> None:
        old = self.masks[u]
        if old == new:
            return
        F = self.F
        zo = self.zeta[u]
        zn = new.bit_count()
        self.masks[u] = new
        self.zeta[u] = zn
        self.total += zn - zo
        diff = old ^ new
        lc = self.level_counts
        for i in range(F):
            if diff >> i & 1:
                lc[i] += 1 if new >> i & 1 else -1
        self.active_edges += (0 < zn < F) - (0 < zo < F)
        self.frozen_edges += (zn == F) - (zo == F)
        self._schedule_edge(u)

    def _apply(self, u: int, i: int, d: int) -> tuple[Kind, int | None]:
        raise NotImplementedError

    def _process(self, u: int, i: int, cur: MarkCursor) -> tuple:
        """Process the cursor's current mark; returns a raw record tuple."""
        t = cur.time
        d = cur.direction
        un = cur.uniform
        n = cur.n
        self.clock = t
        self.events += 1
        j = self.zeta[u]
        occupied = self.masks[u] >> i & 1
        threshold = self.rates[j] if occupied else -1.0
        if self.fault is Fault.HALF_RATE and self.mode is Mode.INTERFACE:
            threshold *= 0.5
        if occupied and un <= threshold:
            kind, target = self._apply(u, i, d)
            self.accepted += 1
            if self.active_edges == 0 and self.absorbed_at is None:
                self.absorbed_at = t
            return (t, u, i + 1, d, True, kind, j, un, target, n)
        return (t, u, i + 1, d, False, Kind.REJECTED, j, un, None, n)

    def step_raw(self):
        """Pop the next processable mark, or None when the queue is exhausted."""
        heap = self._heap
        F = self.F
        scheduled = self._scheduled
        cursors = self._cursors
        while heap:
            t, u, i, n = heapq.heappop(heap)
            k = u * F + i
            if not self._live(u, i):
                scheduled[k] = False
                continue
            cur = cursors[k]
            raw = self._process(u, i, cur)
            # reschedule unless the key died; _set_mask may have rescheduled it
            if scheduled[k] and cur.n == n:
                cur.advance()
                if self._live(u, i):
                    heapq.heappush(heap, (cur.time, u, i, cur.n))
                else:
                    scheduled[k] = False
            return raw
        return None

    def step(self) -> EventRecord | None:
        raw = self.step_raw()
        if raw is None:
            return None
        return EventRecord(*raw)

    # -- inspection ----------------------------------------------------------

    def is_absorbing(self) -> bool:
        return self.active_edges == 0

    def interface_state(self) -> InterfaceState:
        return InterfaceState(tuple(self.masks), self.F, self.params.topology)

    def vertex_state(self) -> VertexConfig | None:
        return None

    def snapshot(self, time: float | None = None) -> Snapshot:
        return Snapshot(
            self.clock if time is None else time,
            self.total,
            tuple(self.level_counts),
            self.active_edges,
            self.frozen_edges,
            self.E,
        )

    def state(self) -> SimState:
        return SimState(self.clock, self.mode, self.vertex_state(), self.interface_state(),
                        self.events, self.accepted, self.absorbed_at)

    # -- driver --------------------------------------------------------------

    def run(self, horizon: Horizon | None = None, *, sample_times: Iterable[float] = (),
            on_sample: Callable[["Engine", float], None] | None = None,
            on_event: Callable[[EventRecord], None] | None = None) -> "RunSummary":
        """Step until the horizon fires.

        The sample at time ``s`` reflects every event with time ``<= s``.
        Sample times beyond the stopping point are filled in only when the
        run stopped by absorption (the state is then constant forever).
        """
        horizon = horizon if horizon is not None else self.params.horizon
        t_max = math.inf if horizon.t_max is None else horizon.t_max
        ev_max = math.inf if horizon.events_max is None else horizon.events_max
        stop_absorbed = horizon.until_absorbed
        pending = sorted(sample_times)
        snapshots: list[Snapshot] = []
        k = 0

        def take(s):
            snapshots.append(self.snapshot(s))
            if on_sample is not None:
                on_sample(self, s)

        while k < len(pending) and pending[k] <= self.clock:
            take(pending[k])
            k += 1
        start_events = self.events
        reason = "exhausted"
        while True:
            if stop_absorbed and self.active_edges == 0:
                reason = "absorbed"
                break
            if self.events - start_events >= ev_max:
                reason = "events"
                break
            t_next = self.next_time()
            while k < len(pending) and pending[k] < t_next and pending[k] <= t_max:
                take(pending[k])
                k += 1
            if t_next > t_max:
                reason = "time"
                self.clock = t_max
                break
            if t_next == math.inf:
                break
            raw = self.step_raw()
            if on_event is not None:
                on_event(EventRecord(*raw))
        if reason == "exhausted" and t_max < math.inf:
            self.clock = max(self.clock, t_max)
        if reason in ("absorbed", "exhausted"):
            while k < len(pending) and pending[k] <= t_max:
                take(pending[k])
                k += 1
        return RunSummary(reason, self.clock, self.events - start_events, self.accepted,
                          self.absorbed_at, snapshots)


@dataclass
class RunSummary:
    reason: str
    clock: float
    events: int
    accepted: int
    absorbed_at: float | None
    snapshots: list[Snapshot] = field(default_factory=list)


class InterfaceEngine(Engine):
    """Annihilating random walks (two states per feature)."""

    mode = Mode.INTERFACE

    def __init__(self, params: SystemParams, initial: InterfaceState | VertexConfig | None = None,
                 **kwargs):
        if params.states != 2:
            raise ConfigurationError("interface mode requires states == 2")
        if initial is None:
            if params.topology is Topology.KILLED_HALF_LINE:
                initial = sample_half_line(params)
            else:
                initial = sample_initial(params)
        if isinstance(initial, VertexConfig):
            initial = interface_view(initial)
        if initial.features != params.features or initial.edges != params.edges:
            raise ConfigurationError("initial interface state does not match params")
        super().__init__(params, initial.masks, **kwargs)

    def _apply(self, u: int, i: int, d: int) -> tuple[Kind, int | None]:
        fault = self.fault
        if fault is Fault.FLIP_DIRECTION:
            d = -d
        bit = 1 << i
        v = u + (2 * d if fault is Fault.OFF_BY_ONE else d)
        if self.torus:
            v %= self.E
        self._set_mask(u, self.masks[u] & ~bit)
        if not 0 <= v < self.E:
            return Kind.KILLED, None
        dest = self.masks[v]
        if dest & bit:
            if fault is Fault.COALESCE:
                return Kind.COALESCE, v
            self._set_mask(v, dest & ~bit)
            return Kind.ANNIHILATE, v
        self._set_mask(v, dest | bit)
        return (Kind.FREEZE_FORMING if self.zeta[v] == self.F else Kind.MOVE), v


class VertexEngine(Engine):
    """The Axelrod vertex chain, any number of states, via thinning."""

    mode = Mode.VERTEX

    def __init__(self, params: SystemParams, initial: VertexConfig | None = None, **kwargs):
        if params.topology is Topology.KILLED_HALF_LINE:
            raise ConfigurationError("killed-half-line is only available in interface mode")
        if initial is None:
            initial = sample_initial(params)
        if (initial.features, initial.states, initial.size) != (params.features, params.states, params.size):
            raise ConfigurationError("initial configuration does not match params")
        if initial.topology is not params.topology:
            raise ConfigurationError("initial configuration topology does not match params")
        self.cultures = [list(c) for c in initial.cultures]
        self.N = initial.size
        super().__init__(params, interface_view(initial).masks, **kwargs)

    def _edge_mask(self, u: int) -> int:
        a = self.cultures[u]
        b = self.cultures[(u + 1) % self.N]
        m = 0
        for i in range(self.F):
            if a[i] != b[i]:
                m |= 1 << i
        return m

    def _apply(self, u: int, i: int, d: int) -> tuple[Kind, int | None]:
        if self.fault is Fault.ADOPTION_SIDE:
            d = -d
        N = self.N
        if d > 0:
            x, y, other = (u + 1) % N, u, u + 1
        else:
            x, y, other = u, (u + 1) % N, u - 1
        bit = 1 << i
        self.cultures[x][i] = self.cultures[y][i]
        self._set_mask(u, self._edge_mask(u))
        if self.torus:
            other %= N
        elif not 0 <= other < self.E:
            return Kind.KILLED, None
        before = self.masks[other] & bit
        self._set_mask(other, self._edge_mask(other))
        after = self.masks[other] & bit
        if before and not after:
            return Kind.ANNIHILATE, other
        if before and after:
            return Kind.COALESCE, other
        return (Kind.FREEZE_FORMING if self.zeta[other] == self.F else Kind.MOVE), other

    def vertex_state(self) -> VertexConfig:
        return VertexConfig(tuple(map(tuple, self.cultures)), self.F, self.params.states,
                            self.params.topology)


def make_engine(params: SystemParams, mode: Mode | str = Mode.VERTEX, initial=None, **kwargs) -> Engine:
    mode = Mode(mode)
    if mode is Mode.INTERFACE:
        return InterfaceEngine(params, initial, **kwargs)
    return VertexEngine(params, initial, **kwargs)


def run(params: SystemParams, horizon: Horizon | None = None, *, mode: Mode | str = Mode.VERTEX,
        initial=None, sample_times: Iterable[float] = (), **kwargs) -> tuple[SimState, RunSummary]:
    engine = make_engine(params, mode, initial, **kwargs)
    summary = engine.run(horizon, sample_times=sample_times)
    return engine.state(), summary


def geometric_grid(t0: float, t_max: float, factor: float = 2.0) -> list[float]:
    """``t0 * factor**k`` up to and including ``t_max`` when it lands on the grid."""
    if t0 <= 0 or factor <= 1:
        raise ValueError("need t0 > 0 and factor > 1")
    out = []
    k = 0
    while True:
        t = t0 * factor**k
        if t > t_max * (1 + 1e-12):
            break
        out.append(t)
        k += 1
    return out
