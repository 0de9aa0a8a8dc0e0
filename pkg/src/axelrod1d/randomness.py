"""Addressable graphical-representation randomness.

Every (edge, level) pair owns a rate-one Poisson clock whose ``n``-th
arrival carries a direction in {-1, +1} and a uniform thinning mark in
(0, 1). All three are pure functions of ``(seed, edge, level, n)``: each
(key, lane) is a SplitMix64 sequence whose starting state is a hash of
the seed, edge, level and lane, so any two consumers of the same seed
see the same marks regardless of the order in which they ask for them.

Arrival times are running sums of exponential gaps ``-ln(1 - U)`` with
``U`` built from the top 53 bits of a 64-bit output. Sums are carried out
left to right (``numpy.cumsum``), and every code path goes through the
same vectorized routine, so ``mark_at`` and the engine cursors agree
bit for bit.

Replica seeds are derived as ``master_seed ^ replica_index``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import UsageError

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_K_EDGE = 0xD1B54A32D192ED03
_K_LEVEL = 0xABC98388FB8FAC03
_K_LANE = 0x8CB92BA72F3D8DD7

LANE_GAP = 0
LANE_DIRECTION = 1
LANE_UNIFORM = 2

_TWO53 = 2.0**-53
_U64 = np.uint64


def mix64(z: int) -> int:
    """SplitMix64 finalizer on Python ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def parse_seed(text: str | int) -> int:
    """Accept decimal or ``0x`` hex; result must fit in 64 unsigned bits."""
    value = text if isinstance(text, int) else int(str(text).strip(), 0)
    if not 0 <= value <= MASK64:
        raise UsageError(f"seed {text!r} does not fit in 64 unsigned bits")
    return value


def replica_seed(master: int, replica: int) -> int:
    return (master ^ replica) & MASK64


@dataclass(frozen=True, order=True)
class StreamKey:
    edge: int
    level: int


@dataclass(frozen=True)
class Mark:
    index: int
    time: float
    direction: int
    uniform: float


class MarkSource:
    """Stateless, shareable source of marks for one master seed."""

    def __init__(self, seed: int):
        self.seed = parse_seed(seed)
        self._seed_state = mix64(self.seed + GAMMA)
        self.lane_state = lru_cache(maxsize=1 << 16)(self._lane_state)

    def __repr__(self):
        return f"MarkSource(seed={self.seed:#x})"

    def __getstate__(self):
        return {"seed": self.seed}

    def __setstate__(self, state):
        self.__init__(state["seed"])

    def _lane_state(self, edge: int, level: int, lane: int) -> int:
        s = mix64(self._seed_state ^ (edge * _K_EDGE & MASK64))
        s = mix64(s ^ (level * _K_LEVEL & MASK64))
        return mix64(s ^ ((lane + 1) * _K_LANE & MASK64))

    def raw(self, edge: int, level: int, lane: int, start: int, count: int) -> np.ndarray:
        """64-bit outputs for indices ``start .. start + count - 1``."""
        n = np.arange(start, start + count, dtype=np.uint64)
        state = _U64(self.lane_state(edge, level, lane))
        return _mix64_array(state + n * _U64(GAMMA))

    def gaps(self, edge: int, level: int, start: int, count: int) -> np.ndarray:
        u = (self.raw(edge, level, LANE_GAP, start, count) >> _U64(11)).astype(np.float64) * _TWO53
        return -np.log(1.0 - u)

    def times(self, edge: int, level: int, start: int, count: int, previous: float) -> np.ndarray:
        """Arrival times ``T(start) ..`` given ``T(start - 1) == previous``."""
        buf = np.empty(count + 1)
        buf[0] = previous
        buf[1:] = self.gaps(edge, level, start, count)
        return np.cumsum(buf)[1:]

    def directions(self, edge: int, level: int, start: int, count: int) -> np.ndarray:
        bits = self.raw(edge, level, LANE_DIRECTION, start, count) >> _U64(63)
        return bits.astype(np.int64) * 2 - 1

    def uniforms(self, edge: int, level: int, start: int, count: int) -> np.ndarray:
        top = (self.raw(edge, level, LANE_UNIFORM, start, count) >> _U64(11)).astype(np.float64)
        return (top + 0.5) * _TWO53

    def block(self, edge: int, level: int, start: int, count: int,
              previous: float, times: np.ndarray | None = None) -> tuple[list, list, list]:
        """Times, directions and uniforms for ``count`` marks from ``start``.

        All three lanes are hashed in one pass; ``times`` may be supplied
        when already known.
        """
        lanes = (LANE_GAP, LANE_DIRECTION, LANE_UNIFORM) if times is None else (LANE_DIRECTION, LANE_UNIFORM)
        states = np.array([self.lane_state(edge, level, lane) for lane in lanes], dtype=np.uint64)
        n = np.arange(start, start + count, dtype=np.uint64) * _U64(GAMMA)
        out = _mix64_array(states[:, None] + n[None, :])
        if times is None:
            buf = np.empty(count + 1)
            buf[0] = previous
            buf[1:] = -np.log(1.0 - (out[0] >> _U64(11)).astype(np.float64) * _TWO53)
            times = np.cumsum(buf)[1:]
            out = out[1:]
        dirs = (out[0] >> _U64(63)).astype(np.int64) * 2 - 1
        unis = ((out[1] >> _U64(11)).astype(np.float64) + 0.5) * _TWO53
        return times.tolist(), dirs.tolist(), unis.tolist()

    def mark_at(self, key: StreamKey, n: int) -> Mark:
        if n < 1:
            raise UsageError(f"mark index must be >= 1, got {n}")
        t = self.times(key.edge, key.level, 1, n, 0.0)[-1]
        d = self.directions(key.edge, key.level, n, 1)[0]
        u = self.uniforms(key.edge, key.level, n, 1)[0]
        return Mark(n, float(t), int(d), float(u))

    def next_arrival(self, key: StreamKey, after: float) -> Mark:
        if after < 0:
            raise UsageError("after must be nonnegative")
        cursor = MarkCursor(self, key.edge, key.level)
        cursor.skip_past(after)
        return Mark(cursor.n, cursor.time, cursor.direction, cursor.uniform)


_CHUNK = 32


class MarkCursor:
    """Forward-only reader over one key's marks, buffered in chunks.

    ``n``, ``time``, ``direction`` and ``uniform`` describe the current
    (next unconsumed) mark.
    """

    __slots__ = ("source", "edge", "level", "n", "time", "direction", "uniform",
                 "_base", "_times", "_dirs", "_unis", "_pos")

    def __init__(self, source: MarkSource, edge: int, level: int):
        self.source = source
        self.edge = edge
        self.level = level
        self._load(1, 0.0, _CHUNK)

    def _load(self, start: int, previous: float, count: int, times=None) -> None:
        self._base = start
        self._times, self._dirs, self._unis = self.source.block(
            self.edge, self.level, start, count, previous, times)
        self._pos = 0
        self._set()

    def _set(self) -> None:
        p = self._pos
        self.n = self._base + p
        self.time = self._times[p]
        self.direction = self._dirs[p]
        self.uniform = self._unis[p]

    def advance(self) -> None:
        self._pos += 1
        if self._pos == len(self._times):
            self._load(self.n + 1, self.time, _CHUNK)
        else:
            self._set()

    def skip_past(self, after: float) -> None:
        """Move to the first mark with time strictly greater than ``after``."""
        if self.time > after:
            return
        times = self._times
        last = times[-1]
        if last > after:
            # within the buffered chunk
            p = self._pos + 1
            while times[p] <= after:
                p += 1
            self._pos = p
            self._set()
            return
        # scan ahead on times only, then load the chunk holding the answer
        src, e, lv = self.source, self.edge, self.level
        start = self._base + len(times)
        while True:
            count = int(after - last) + _CHUNK
            block = src.times(e, lv, start, count, last)
            if block[-1] > after:
                k = int(np.searchsorted(block, after, side="right"))
                tail = block[k:k + _CHUNK]
                self._load(start + k, 0.0, len(tail), tail)
                return
            start += count
            last = float(block[-1])
