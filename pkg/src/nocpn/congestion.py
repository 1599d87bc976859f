"""Congestion bits, the per-router lookahead table and the 9-bit head-flit payload.

Bit layout of a payload, most significant bit first::

    [sender group][hop-1 group][hop-2 group]

Each group holds three port bits of one node in (N, E, S, W) order with one
port skipped. For a payload sent in direction ``d`` the skipped port is ``d``
for all three groups; for a table entry viewed in direction ``u`` the skipped
port is ``opposite(u)`` (the port facing back toward the table's owner).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import CARDINALS, Direction

HOPS = 3

# _SHIFT[excluded][port] -> bit position inside a 3-bit group, -1 for the excluded port
_SHIFT = tuple(
    tuple(
        -1 if p == excl else 2 - [q for q in CARDINALS if q != excl].index(p)
        for p in CARDINALS
    )
    for excl in CARDINALS
)


def encode_congestion_bit(occupied_vcs: int, threshold: int) -> int:
    return 1 if occupied_vcs > threshold else 0


def group_ports(excluded: Direction) -> tuple[Direction, ...]:
    """The three ports of a group in bit order (MSB first)."""
    return tuple(p for p in CARDINALS if p != excluded)


def pack_group(port_bits: Sequence[int], excluded: Direction) -> int:
    """Pack four per-port bits (indexed by Direction) into a 3-bit group."""
    shifts = _SHIFT[excluded]
    g = 0
    for p in CARDINALS:
        s = shifts[p]
        if s >= 0 and port_bits[p]:
            g |= 1 << s
    return g


def group_bit(group: int, excluded: Direction, port: Direction) -> int:
    s = _SHIFT[excluded][port]
    if s < 0:
        raise ValueError(f"port {port.name} is not stored in a group excluding {excluded.name}")
    return (group >> s) & 1


@dataclass(frozen=True)
class CongestionPayload:
    sender_bits: int = 0
    hop1_bits: int = 0
    hop2_bits: int = 0

    def __post_init__(self) -> None:
        for g in (self.sender_bits, self.hop1_bits, self.hop2_bits):
            if not 0 <= g < 8:
                raise ValueError(f"group {g} does not fit in 3 bits")

    def to_bits(self) -> int:
        return (self.sender_bits << 6) | (self.hop1_bits << 3) | self.hop2_bits

    @classmethod
    def from_bits(cls, bits: int) -> "CongestionPayload":
        if not 0 <= bits < 512:
            raise ValueError(f"payload {bits} does not fit in 9 bits")
        return cls((bits >> 6) & 7, (bits >> 3) & 7, bits & 7)

    def __str__(self) -> str:
        return f"{self.sender_bits:03b}|{self.hop1_bits:03b}|{self.hop2_bits:03b}"


ZERO_PAYLOAD = CongestionPayload()


class CongestionTable:
    """3-bit groups for the nodes 1..3 hops away along each cardinal direction."""

    __slots__ = ("groups",)

    def __init__(self) -> None:
        self.groups = [0] * (4 * HOPS)

    def entry(self, u: Direction, hop: int) -> int:
        return self.groups[u * HOPS + hop - 1]

    def set_entry(self, u: Direction, hop: int, group: int) -> None:
        self.groups[u * HOPS + hop - 1] = group

    def lookup(self, u: Direction, hop: int, port: Direction) -> int:
        s = _SHIFT[(u + 2) % 4][port]
        if s < 0:
            raise ValueError(f"port {Direction(port).name} of the {Direction(u).name} chain is not stored")
        return (self.groups[u * HOPS + hop - 1] >> s) & 1

    def apply(self, payload: CongestionPayload, arrival_dir: Direction) -> None:
        base = arrival_dir * HOPS
        g = self.groups
        g[base] = payload.sender_bits
        g[base + 1] = payload.hop1_bits
        g[base + 2] = payload.hop2_bits

    def copy(self) -> "CongestionTable":
        t = CongestionTable()
        t.groups = list(self.groups)
        return t

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CongestionTable) and self.groups == other.groups

    def __repr__(self) -> str:
        rows = []
        for u in CARDINALS:
            cells = " ".join(f"{self.entry(u, h):03b}" for h in range(1, HOPS + 1))
            rows.append(f"{u.name}:{cells}")
        return f"CongestionTable({', '.join(rows)})"


def build_payload(local_bits: Sequence[int], table: CongestionTable, send_dir: Direction) -> CongestionPayload:
    """Payload stamped on a head flit leaving through ``send_dir``.

    Off-mesh upstream nodes are never written into the table, so their groups
    come out as zero without special casing.
    """
    if send_dir is Direction.LOCAL:
        raise ValueError("payloads are only built for cardinal send directions")
    back = (send_dir + 2) % 4
    return CongestionPayload(
        pack_group(local_bits, send_dir),
        table.groups[back * HOPS],
        table.groups[back * HOPS + 1],
    )


def apply_payload(table: CongestionTable, payload: CongestionPayload, arrival_dir: Direction) -> CongestionTable:
    table.apply(payload, arrival_dir)
    return table


def lookup_port_bit(table: CongestionTable, u: Direction, hop: int, port: Direction) -> int:
    return table.lookup(u, hop, port)
