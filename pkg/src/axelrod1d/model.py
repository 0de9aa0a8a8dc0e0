"""Configurations of the one-dimensional Axelrod model and their interface view.

Vertices are ``0..N-1``. Edge ``u`` joins vertices ``u`` and ``u + 1``
(wrapping on the torus). Feature states are zero-based; levels are
one-based (level ``i`` is feature index ``i - 1``), and in bitmask form
level 1 is the least significant bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


class UsageError(ValueError):
    """Invalid arguments to a model operation."""


class ConfigurationError(ValueError):
    """Inconsistent system parameters."""


class Topology(str, enum.Enum):
    TORUS = "torus"
    PATH = "path"
    KILLED_HALF_LINE = "killed-half-line"


def num_edges(topology: Topology | str, size: int) -> int:
    return size if Topology(topology) is Topology.TORUS else size - 1


@dataclass(frozen=True)
class Horizon:
    """Stop rule. Any combination; absorption always stops a run when set."""

    t_max: float | None = None
    events_max: int | None = None
    until_absorbed: bool = True


@dataclass(frozen=True)
class SystemParams:
    features: int
    states: int
    size: int
    topology: Topology = Topology.TORUS
    seed: int = 0
    horizon: Horizon = Horizon()

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if self.features < 1:
            raise ConfigurationError(f"features must be >= 1, got {self.features}")
        if self.states < 2:
            raise ConfigurationError(f"states must be >= 2, got {self.states}")
        if self.size < 2:
            raise ConfigurationError(f"size must be >= 2, got {self.size}")
        if self.topology is Topology.KILLED_HALF_LINE and self.states != 2:
            raise ConfigurationError("killed-half-line requires states == 2")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")

    @property
    def edges(self) -> int:
        return num_edges(self.topology, self.size)


Culture = tuple  # tuple[int, ...] of length F


@dataclass(frozen=True)
class VertexConfig:
    cultures: tuple[tuple[int, ...], ...]
    features: int
    states: int
    topology: Topology = Topology.TORUS

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "cultures", tuple(tuple(int(s) for s in c) for c in self.cultures))
        for x, c in enumerate(self.cultures):
            if len(c) != self.features:
                raise UsageError(f"vertex {x}: culture has length {len(c)}, expected {self.features}")
            if any(s < 0 or s >= self.states for s in c):
                raise UsageError(f"vertex {x}: state out of range 0..{self.states - 1}")
        if len(self.cultures) < 2:
            raise UsageError("need at least two vertices")

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int]], states: int,
                  topology: Topology | str = Topology.TORUS) -> "VertexConfig":
        rows = [tuple(r) for r in rows]
        return cls(tuple(rows), len(rows[0]), states, Topology(topology))

    @property
    def size(self) -> int:
        return len(self.cultures)

    @property
    def edges(self) -> int:
        return num_edges(self.topology, self.size)

    def edge_vertices(self, u: int) -> tuple[int, int]:
        if not 0 <= u < self.edges:
            raise UsageError(f"edge {u} out of range for {self.topology.value} of size {self.size}")
        return u, (u + 1) % self.size

    def dumps(self) -> str:
        return "".join(",".join(map(str, c)) + "\n" for c in self.cultures)

    @classmethod
    def loads(cls, text: str, states: int, topology: Topology | str = Topology.TORUS) -> "VertexConfig":
        rows = [tuple(int(v) for v in line.split(",")) for line in text.splitlines() if line.strip()]
        return cls.from_rows(rows, states, topology)


@dataclass(frozen=True)
class InterfaceState:
    """Per-edge particle occupation, one bitmask per edge (level 1 = bit 0)."""

    masks: tuple[int, ...]
    features: int
    topology: Topology = Topology.TORUS

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "masks", tuple(int(m) for m in self.masks))
        full = (1 << self.features) - 1
        if any(m < 0 or m & ~full for m in self.masks):
            raise UsageError("mask has bits above the feature count")

    @property
    def edges(self) -> int:
        return len(self.masks)

    def occupied(self, u: int, level: int) -> bool:
        return bool(self.masks[u] >> (level - 1) & 1)

    @property
    def zeta(self) -> tuple[int, ...]:
        return tuple(m.bit_count() for m in self.masks)

    def level_counts(self) -> tuple[int, ...]:
        return tuple(sum(m >> i & 1 for m in self.masks) for i in range(self.features))

    def total(self) -> int:
        return sum(m.bit_count() for m in self.masks)

    def dumps(self) -> str:
        # one line per edge, bits written level 1 first
        return "".join(
            "".join(str(m >> i & 1) for i in range(self.features)) + "\n" for m in self.masks
        )

    @classmethod
    def loads(cls, text: str, topology: Topology | str = Topology.TORUS) -> "InterfaceState":
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        masks = tuple(sum(int(b) << i for i, b in enumerate(line)) for line in lines)
        return cls(masks, len(lines[0]), Topology(topology))


def _check_adjacent(config: VertexConfig, x: int, y: int) -> None:
    n = config.size
    if not (0 <= x < n and 0 <= y < n):
        raise UsageError(f"vertices ({x}, {y}) out of range 0..{n - 1}")
    d = (y - x) % n
    if config.topology is Topology.TORUS:
        ok = d == 1 or d == n - 1
    else:
        ok = abs(y - x) == 1
    if not ok:
        raise UsageError(f"vertices {x} and {y} are not adjacent")


def _check_level(config: VertexConfig, level: int) -> None:
    if not 1 <= level <= config.features:
        raise UsageError(f"level {level} out of range 1..{config.features}")


def overlap(config: VertexConfig, x: int, y: int) -> Fraction:
    """Fraction of features on which adjacent vertices ``x`` and ``y`` agree."""
    _check_adjacent(config, x, y)
    cx, cy = config.cultures[x], config.cultures[y]
    return Fraction(sum(a == b for a, b in zip(cx, cy)), config.features)


def discordant_levels(config: VertexConfig, x: int, y: int) -> frozenset[int]:
    _check_adjacent(config, x, y)
    cx, cy = config.cultures[x], config.cultures[y]
    return frozenset(i + 1 for i, (a, b) in enumerate(zip(cx, cy)) if a != b)


def apply_copy(config: VertexConfig, x: int, y: int, level: int) -> VertexConfig:
    """Vertex ``x`` adopts the state of ``y`` at ``level``."""
    _check_adjacent(config, x, y)
    _check_level(config, level)
    i = level - 1
    if config.cultures[x][i] == config.cultures[y][i]:
        return config
    cultures = list(config.cultures)
    row = list(cultures[x])
    row[i] = config.cultures[y][i]
    cultures[x] = tuple(row)
    return VertexConfig(tuple(cultures), config.features, config.states, config.topology)


def jump_rate(j: int, features: int) -> Fraction:
    """Per-particle jump rate ``1/j - 1/F`` at a site holding ``j`` particles."""
    if features < 1:
        raise UsageError(f"features must be >= 1, got {features}")
    if not 1 <= j <= features:
        raise UsageError(f"occupancy {j} out of range 1..{features}")
    return Fraction(1, j) - Fraction(1, features)


def copy_rate(config: VertexConfig, x: int, y: int, level: int) -> Fraction:
    """Rate at which ``x`` copies feature ``level`` from ``y`` under the generator."""
    _check_level(config, level)
    agree = overlap(config, x, y)
    i = level - 1
    if config.cultures[x][i] == config.cultures[y][i]:
        return Fraction(0)
    # agree < 1 here since the pair disagrees at this level
    return Fraction(1, 2 * config.features) * agree / (1 - agree)


def interface_view(config: VertexConfig) -> InterfaceState:
    masks = []
    cultures = config.cultures
    n = config.size
    for u in range(config.edges):
        a, b = cultures[u], cultures[(u + 1) % n]
        m = 0
        for i in range(config.features):
            if a[i] != b[i]:
                m |= 1 << i
        masks.append(m)
    return InterfaceState(tuple(masks), config.features, config.topology)


def initial_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0x1A17, stream]))


def sample_initial(params: SystemParams, entropy: int | None = None) -> VertexConfig:
    """I.i.d. uniform cultures over ``q**F`` values; deterministic in the seed.

    ``entropy`` overrides ``params.seed`` when given.
    """
    seed = params.seed if entropy is None else entropy
    rng = initial_rng(seed)
    arr = rng.integers(0, params.states, size=(params.size, params.features))
    return VertexConfig(tuple(map(tuple, arr.tolist())), params.features, params.states, params.topology)


def sample_half_line(params: SystemParams, entropy: int | None = None) -> InterfaceState:
    """Left-most edge fully occupied, every other (edge, level) Bernoulli(1/2)."""
    if params.states != 2:
        raise ConfigurationError("half-line interface law requires states == 2")
    seed = params.seed if entropy is None else entropy
    rng = initial_rng(seed, stream=1)
    full = (1 << params.features) - 1
    masks = rng.integers(0, full + 1, size=params.edges).tolist()
    masks[0] = full
    return InterfaceState(tuple(masks), params.features, params.topology)


def monoculture(params: SystemParams, culture: Sequence[int] | None = None) -> VertexConfig:
    c = tuple(culture) if culture is not None else (0,) * params.features
    return VertexConfig((c,) * params.size, params.features, params.states, params.topology)
