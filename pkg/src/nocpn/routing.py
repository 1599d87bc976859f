"""Route selection: XY, local xy-adaptive, NoCPN lookahead, DBAR-style baseline.

All selectors are minimal and return a preferred output direction only; the
VC admission rule in :func:`admissible_vcs` decides which output VCs a head
flit may actually take. VC 0 is the escape channel and is only ever used
along the XY direction, which keeps the escape sub-network acyclic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from random import Random
from typing import Sequence

from .congestion import CongestionTable
from .core import STEP, Coord, Direction

# LocalPortBits: four congestion bits indexed by Direction (N, E, S, W)
LocalPortBits = Sequence[int]

ESCAPE_VC = 0


class VcClass(enum.Enum):
    ADAPTIVE = "adaptive"
    ESCAPE = "escape"


@dataclass(frozen=True)
class RouteDecision:
    direction: Direction
    vc_class: VcClass


def _pair(cur: Coord, dst: Coord) -> tuple[Direction | None, int, Direction | None, int]:
    dx = dst[0] - cur[0]
    dy = dst[1] - cur[1]
    xd = None if dx == 0 else (Direction.E if dx > 0 else Direction.W)
    yd = None if dy == 0 else (Direction.N if dy > 0 else Direction.S)
    return xd, abs(dx), yd, abs(dy)


def _coin(rng: Random, a: Direction, b: Direction) -> Direction:
    return a if rng.random() < 0.5 else b


def route_dor(cur: Coord, dst: Coord) -> Direction:
    xd, _, yd, _ = _pair(cur, dst)
    if xd is not None:
        return xd
    if yd is not None:
        return yd
    raise ValueError("route_dor called at the destination")


def route_local_adaptive(cur: Coord, dst: Coord, local: LocalPortBits, rng: Random) -> Direction:
    a, _, b, _ = _pair(cur, dst)
    if a is None or b is None:
        return route_dor(cur, dst)
    if local[a] != local[b]:
        return a if local[a] < local[b] else b
    return _coin(rng, a, b)


def route_nocpn(
    cur: Coord,
    dst: Coord,
    local: LocalPortBits,
    table: CongestionTable,
    rng: Random,
) -> Direction:
    """Stepwise lookahead comparison along the two productive chains.

    Step 0 compares the current node's own port bits. Step ``h`` sums, for the
    node ``h`` hops down each chain, the bits of the ports the packet could
    still use there: the chain's own direction while short of its border, plus
    the other productive direction. The first unequal step decides; if every
    step up to ``min(3, |da|, |db|)`` ties, a coin flip does.
    """
    a, da, b, db = _pair(cur, dst)
    if a is None or b is None:
        return route_dor(cur, dst)
    if local[a] != local[b]:
        return a if local[a] < local[b] else b
    groups = table.groups
    # bit positions inside a chain group: the group skips the port facing back,
    # so for chain a the stored ports are (N,E,S,W) minus opposite(a)
    sa_a, sa_b = _CHAIN_SHIFT[a][a], _CHAIN_SHIFT[a][b]
    sb_b, sb_a = _CHAIN_SHIFT[b][b], _CHAIN_SHIFT[b][a]
    for hop in range(1, min(3, da, db) + 1):
        ga = groups[a * 3 + hop - 1]
        gb = groups[b * 3 + hop - 1]
        sum_a = (ga >> sa_b) & 1
        if hop < da:
            sum_a += (ga >> sa_a) & 1
        sum_b = (gb >> sb_a) & 1
        if hop < db:
            sum_b += (gb >> sb_b) & 1
        if sum_a != sum_b:
            return a if sum_a < sum_b else b
    return _coin(rng, a, b)


def _chain_shifts(chain: int) -> tuple[int, ...]:
    order = [p for p in range(4) if p != (chain + 2) % 4]
    return tuple(2 - order.index(p) if p in order else -1 for p in range(4))


_CHAIN_SHIFT = tuple(_chain_shifts(c) for c in range(4))


def route_dbar_like(
    cur: Coord,
    dst: Coord,
    local: LocalPortBits,
    snapshot: Sequence[Sequence[int]],
    k: int,
    rng: Random,
) -> Direction:
    """Score each productive direction by its local bit plus the same-dimension
    port bits of up to three downstream routers, read from a zero-delay global
    snapshot indexed by node id."""
    a, da, b, db = _pair(cur, dst)
    if a is None or b is None:
        return route_dor(cur, dst)
    score_a = local[a] + _downstream(cur, a, da, snapshot, k)
    score_b = local[b] + _downstream(cur, b, db, snapshot, k)
    if score_a != score_b:
        return a if score_a < score_b else b
    return _coin(rng, a, b)


def _downstream(cur: Coord, d: Direction, remaining: int, snapshot: Sequence[Sequence[int]], k: int) -> int:
    sx, sy = STEP[d]
    x, y = cur
    total = 0
    for _ in range(min(3, remaining)):
        x += sx
        y += sy
        total += snapshot[y * k + x][d]
    return total


def admissible_vcs(decision_dir: Direction, dor_dir: Direction, vcs_per_port: int) -> list[tuple[Direction, int]]:
    """Output (direction, vc) pairs a head flit may claim, in preference order."""
    out = [(decision_dir, vc) for vc in range(1, vcs_per_port)]
    out.append((dor_dir, ESCAPE_VC))
    return out


def classify(vc: int) -> VcClass:
    return VcClass.ESCAPE if vc == ESCAPE_VC else VcClass.ADAPTIVE


def escape_channel_dependencies(k: int) -> set[tuple[tuple[Coord, Direction], tuple[Coord, Direction]]]:
    """Channel-dependency edges of the escape network (XY routing on VC 0).

    A channel is named by (source node, direction). An edge c1 -> c2 exists when
    some packet holding c1 may next request c2.
    """
    edges = set()
    nodes = [Coord(x, y) for y in range(k) for x in range(k)]
    for src in nodes:
        for dst in nodes:
            if src == dst:
                continue
            cur, prev = src, None
            while cur != dst:
                d = route_dor(cur, dst)
                chan = (cur, d)
                if prev is not None:
                    edges.add((prev, chan))
                prev = chan
                cur = Coord(cur[0] + STEP[d][0], cur[1] + STEP[d][1])
    return edges
