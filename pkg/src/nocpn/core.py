"""Mesh geometry, configuration and the flit/packet value types."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

ALGORITHMS = ("dor", "local", "nocpn", "dbar")
PATTERNS = ("uniform", "transpose", "bitcomp", "bitrev", "shuffle")
BIT_PATTERNS = ("transpose", "bitcomp", "bitrev", "shuffle")


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class Coord(NamedTuple):
    x: int  # column
    y: int  # row, grows northward


class Direction(enum.IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3
    LOCAL = 4

    @property
    def opposite(self) -> "Direction":
        if self is Direction.LOCAL:
            raise ValueError("LOCAL has no opposite")
        return Direction((self + 2) % 4)

    @property
    def is_x(self) -> bool:
        return self is Direction.E or self is Direction.W


CARDINALS = (Direction.N, Direction.E, Direction.S, Direction.W)

# unit step per cardinal direction, indexed by Direction value
STEP = ((0, 1), (1, 0), (0, -1), (-1, 0))


def opposite(d: Direction) -> Direction:
    return d.opposite


def manhattan_distance(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def productive_directions(cur: Coord, dst: Coord) -> tuple[Direction, ...]:
    """Minimal-route directions from ``cur`` toward ``dst``, X direction first."""
    out = []
    if dst[0] > cur[0]:
        out.append(Direction.E)
    elif dst[0] < cur[0]:
        out.append(Direction.W)
    if dst[1] > cur[1]:
        out.append(Direction.N)
    elif dst[1] < cur[1]:
        out.append(Direction.S)
    return tuple(out)


def neighbor(cur: Coord, d: Direction, k: int) -> Optional[Coord]:
    if d is Direction.LOCAL:
        raise ValueError("neighbor() needs a cardinal direction")
    dx, dy = STEP[d]
    x, y = cur[0] + dx, cur[1] + dy
    if 0 <= x < k and 0 <= y < k:
        return Coord(x, y)
    return None


def node_id(c: Coord, k: int) -> int:
    return c[1] * k + c[0]


def coord_of(nid: int, k: int) -> Coord:
    return Coord(nid % k, nid // k)


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass
class SimConfig:
    k: int = 8
    vcs_per_port: int = 8
    buffer_depth_flits: int = 5
    min_packet_flits: int = 1
    max_packet_flits: int = 6
    router_delay_cycles: int = 2
    link_delay_cycles: int = 1
    warmup_cycles: int = 10_000
    measure_cycles: int = 50_000
    drain_limit_cycles: int = 100_000
    rng_seed: int = 0
    routing_algorithm: str = "dor"
    traffic_pattern: str = "uniform"
    injection_rate: float = 0.1
    congestion_threshold: int = 4

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.vcs_per_port < 2:
            raise ConfigError("vcs_per_port must be >= 2 (one escape, one adaptive)")
        if self.buffer_depth_flits < 1:
            raise ConfigError("buffer_depth_flits must be >= 1")
        if not 1 <= self.min_packet_flits <= self.max_packet_flits:
            raise ConfigError("need 1 <= min_packet_flits <= max_packet_flits")
        if self.router_delay_cycles < 1 or self.link_delay_cycles < 1:
            raise ConfigError("router and link delays must be >= 1 cycle")
        # rate 0 is accepted as the degenerate idle run
        if not 0 <= self.injection_rate <= 1:
            raise ConfigError("injection_rate must lie in [0, 1]")
        if not 0 <= self.congestion_threshold < self.vcs_per_port:
            raise ConfigError("congestion_threshold must be < vcs_per_port")
        if min(self.warmup_cycles, self.measure_cycles, self.drain_limit_cycles) < 0:
            raise ConfigError("cycle counts must be non-negative")
        if self.routing_algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown routing algorithm {self.routing_algorithm!r}")
        if self.traffic_pattern not in PATTERNS:
            raise ConfigError(f"unknown traffic pattern {self.traffic_pattern!r}")
        if self.traffic_pattern in BIT_PATTERNS and not is_power_of_two(self.k):
            raise ConfigError(f"pattern {self.traffic_pattern!r} needs a power-of-two k")

    @property
    def mean_packet_flits(self) -> float:
        return (self.min_packet_flits + self.max_packet_flits) / 2


class FlitKind(enum.Enum):
    HEAD = "head"
    BODY = "body"
    TAIL = "tail"
    HEAD_TAIL = "head_tail"


@dataclass(eq=False)
class Packet:
    packet_id: int
    src: Coord
    dst: Coord
    length_flits: int
    birth_cycle: int
    delivery_cycle: Optional[int] = None
    hops: int = 0
    measured: bool = False
    flits_ejected: int = 0

    def flits(self) -> list["Flit"]:
        n = self.length_flits
        if n == 1:
            return [Flit(FlitKind.HEAD_TAIL, self)]
        kinds = [FlitKind.HEAD] + [FlitKind.BODY] * (n - 2) + [FlitKind.TAIL]
        return [Flit(kind, self, seq=i) for i, kind in enumerate(kinds)]


@dataclass(eq=False, slots=True)
class Flit:
    kind: FlitKind
    packet: Packet
    seq: int = 0
    payload: Optional[object] = None  # CongestionPayload on head flits
    vc: int = -1
    ready: int = 0  # cycle the flit was written into its current buffer
    is_head: bool = field(init=False)
    is_tail: bool = field(init=False)

    def __post_init__(self) -> None:
        self.is_head = self.kind in (FlitKind.HEAD, FlitKind.HEAD_TAIL)
        self.is_tail = self.kind in (FlitKind.TAIL, FlitKind.HEAD_TAIL)

    @property
    def packet_id(self) -> int:
        return self.packet.packet_id

    @property
    def src(self) -> Coord:
        return self.packet.src

    @property
    def dst(self) -> Coord:
        return self.packet.dst

    @property
    def birth_cycle(self) -> int:
        return self.packet.birth_cycle
