"""Wormhole virtual-channel router with credit-based flow control.

Per-hop timing: a flit written into an input buffer at cycle ``t`` may win
switch allocation at ``t + router_delay`` and lands in the next router's
buffer ``link_delay`` cycles after that. Heads do route computation and VC
allocation at ``t + router_delay - 1`` at the earliest.

An output VC stays busy from allocation until the packet's tail has left
and every credit has come back, so a downstream input VC only ever holds
one packet.
"""

from __future__ import annotations

import enum
from collections import deque
from typing import TYPE_CHECKING, Optional

from .congestion import CongestionTable, build_payload
from .core import Coord, Direction, Flit, SimConfig, neighbor
from .routing import (
    ESCAPE_VC,
    RouteDecision,
    classify,
    route_dbar_like,
    route_dor,
    route_local_adaptive,
    route_nocpn,
)
from .traffic import node_rng

if TYPE_CHECKING:
    from .sim import Network

LOCAL = int(Direction.LOCAL)
NUM_PORTS = 5


class FlowControlError(RuntimeError):
    """Buffer overflow, credit underflow or broken wormhole ordering."""


class VcState(enum.IntEnum):
    IDLE = 0
    ROUTING = 1
    WAITING_VC = 2
    ACTIVE = 3


IDLE, ROUTING, WAITING_VC, ACTIVE = VcState.IDLE, VcState.ROUTING, VcState.WAITING_VC, VcState.ACTIVE


class InputVC:
    __slots__ = ("port", "index", "buf", "state", "route_dir", "dor_dir", "out_dir", "out_vc", "va_cycle", "packet_id")

    def __init__(self, port: int, index: int):
        self.port = port
        self.index = index
        self.buf: deque[Flit] = deque()
        self.reset()

    def reset(self) -> None:
        self.state = IDLE
        self.route_dir = -1
        self.dor_dir = -1
        self.out_dir = -1
        self.out_vc = -1
        self.va_cycle = -1
        self.packet_id = -1

    @property
    def decision(self) -> Optional[RouteDecision]:
        if self.state is not ACTIVE or self.out_dir == LOCAL:
            return None
        return RouteDecision(Direction(self.out_dir), classify(self.out_vc))

    def __repr__(self) -> str:
        return f"InputVC(port={self.port}, vc={self.index}, {self.state.name}, {len(self.buf)} flits)"


class OutputPort:
    __slots__ = ("busy", "credits", "tail_sent", "busy_count", "depth")

    def __init__(self, vcs: int, depth: int):
        self.depth = depth
        self.busy = [False] * vcs
        self.credits = [depth] * vcs
        self.tail_sent = [False] * vcs
        self.busy_count = 0

    def allocate(self, vc: int) -> None:
        self.busy[vc] = True
        self.tail_sent[vc] = False
        self.busy_count += 1

    def release(self, vc: int) -> None:
        self.busy[vc] = False
        self.tail_sent[vc] = False
        self.busy_count -= 1


class Router:
    def __init__(self, coord: Coord, config: SimConfig, network: "Network"):
        self.coord = coord
        self.config = config
        self.network = network
        k = config.k
        self.node = coord[1] * k + coord[0]
        self.vcs = config.vcs_per_port
        self.depth = config.buffer_depth_flits
        self.threshold = config.congestion_threshold
        self.router_delay = config.router_delay_cycles
        self.link_delay = config.link_delay_cycles
        self.algorithm = config.routing_algorithm

        self.inputs = [[InputVC(p, v) for v in range(self.vcs)] for p in range(NUM_PORTS)]
        self.neighbors: list[Optional["Router"]] = [None] * 4
        self.outputs: list[Optional[OutputPort]] = [
            OutputPort(self.vcs, self.depth) if neighbor(coord, d, k) is not None else None
            for d in (Direction.N, Direction.E, Direction.S, Direction.W)
        ]
        self.table = CongestionTable()
        self.rng = node_rng(config.rng_seed, "route", self.node)

        # input VCs holding flits or a packet in progress, in first-touch order
        self.live: list[InputVC] = []
        self.buffered = 0
        self.va_ptr = 0
        self.sa_in_ptr = [0] * NUM_PORTS
        self.sa_out_ptr = [0] * NUM_PORTS

    # -- congestion state -------------------------------------------------

    def busy_vcs(self, d: int) -> int:
        out = self.outputs[d]
        return 0 if out is None else out.busy_count

    def local_port_bits(self) -> list[int]:
        thr = self.threshold
        return [0 if o is None else (1 if o.busy_count > thr else 0) for o in self.outputs]

    # -- link-side inputs -------------------------------------------------

    def receive_flit(self, port: int, flit: Flit, now: int) -> None:
        ivc = self.inputs[port][flit.vc]
        if len(ivc.buf) >= self.depth:
            raise FlowControlError(f"buffer overflow at {self.coord} port {port} vc {flit.vc}")
        if flit.is_head:
            if ivc.state is not IDLE or ivc.buf:
                raise FlowControlError(
                    f"head of packet {flit.packet.packet_id} hit busy vc {flit.vc} at {self.coord}"
                )
            ivc.state = ROUTING
            ivc.packet_id = flit.packet.packet_id
            if port != LOCAL and flit.payload is not None:
                self.table.apply(flit.payload, Direction(port))
        elif ivc.packet_id != flit.packet.packet_id:
            raise FlowControlError(f"flit of packet {flit.packet.packet_id} interleaved on vc {flit.vc} at {self.coord}")
        flit.ready = now
        if not ivc.buf and ivc.state is ROUTING:
            self.live.append(ivc)
        ivc.buf.append(flit)
        self.buffered += 1

    def receive_credit(self, d: int, vc: int) -> None:
        out = self.outputs[d]
        out.credits[vc] += 1
        if out.credits[vc] > self.depth:
            raise FlowControlError(f"credit overflow at {self.coord} output {d} vc {vc}")
        if out.tail_sent[vc] and out.credits[vc] == self.depth:
            out.release(vc)

    # -- per-cycle pipeline -----------------------------------------------

    def step(self, now: int, snapshot=None) -> None:
        live = self.live
        if not live:
            return
        cutoff = now - self.router_delay + 1

        # route compute, with congestion bits as they stood at the start of the cycle
        bits = None
        routed = []
        for ivc in live:
            state = ivc.state
            if state is ACTIVE:
                continue
            if state is ROUTING and ivc.buf[0].ready <= cutoff:
                if bits is None:
                    bits = self.local_port_bits()
                self._route(ivc, bits, snapshot, now)
            if ivc.state is WAITING_VC:
                routed.append(ivc)

        if routed:
            self._allocate_vcs(routed, now)

        self._switch(now)

    def _route(self, ivc: InputVC, bits: list[int], snapshot, now: int) -> None:
        flit = ivc.buf[0]
        dst = flit.packet.dst
        cur = self.coord
        if dst == cur:
            ivc.out_dir = LOCAL
            ivc.out_vc = 0
            ivc.va_cycle = now
            ivc.state = ACTIVE
            return
        algo = self.algorithm
        if algo == "dor":
            d = route_dor(cur, dst)
        elif algo == "nocpn":
            d = route_nocpn(cur, dst, bits, self.table, self.rng)
        elif algo == "local":
            d = route_local_adaptive(cur, dst, bits, self.rng)
        else:
            d = route_dbar_like(cur, dst, bits, snapshot, self.config.k, self.rng)
        ivc.route_dir = int(d)
        ivc.dor_dir = int(route_dor(cur, dst))
        ivc.state = WAITING_VC

    def _allocate_vcs(self, routed: list[InputVC], now: int) -> None:
        """Greedy allocation with a rotating input priority.

        Each requester takes the lowest free adaptive VC on its chosen
        direction, else the escape VC on its XY direction.
        """
        vcs = self.vcs
        total = NUM_PORTS * vcs
        ptr = self.va_ptr
        routed.sort(key=lambda v: (v.port * vcs + v.index - ptr) % total)
        first = None
        for ivc in routed:
            out = self.outputs[ivc.route_dir]
            got = -1
            busy = out.busy
            for vc in range(1, vcs):
                if not busy[vc]:
                    got = vc
                    break
            if got < 0:
                out = self.outputs[ivc.dor_dir]
                if not out.busy[ESCAPE_VC]:
                    got = ESCAPE_VC
                    ivc.route_dir = ivc.dor_dir
            if got < 0:
                continue
            out.allocate(got)
            ivc.out_dir = ivc.route_dir
            ivc.out_vc = got
            ivc.va_cycle = now
            ivc.state = ACTIVE
            if first is None:
                first = ivc
        if first is not None:
            self.va_ptr = (first.port * vcs + first.index + 1) % total

    def _switch(self, now: int) -> None:
        cutoff = now - self.router_delay
        vcs = self.vcs
        outputs = self.outputs
        in_ptr = self.sa_in_ptr
        # input stage: one candidate VC per input port
        best: dict[int, tuple[int, InputVC]] = {}
        for ivc in self.live:
            if ivc.state is not ACTIVE or ivc.va_cycle >= now:
                continue
            buf = ivc.buf
            if not buf or buf[0].ready > cutoff:
                continue
            od = ivc.out_dir
            if od != LOCAL and outputs[od].credits[ivc.out_vc] <= 0:
                continue
            pri = (ivc.index - in_ptr[ivc.port]) % vcs
            cur = best.get(ivc.port)
            if cur is None or pri < cur[0]:
                best[ivc.port] = (pri, ivc)
        if not best:
            return
        # output stage: one input port per output port
        out_ptr = self.sa_out_ptr
        winners: dict[int, tuple[int, InputVC]] = {}
        for port, (_, ivc) in best.items():
            od = ivc.out_dir
            pri = (port - out_ptr[od]) % NUM_PORTS
            cur = winners.get(od)
            if cur is None or pri < cur[0]:
                winners[od] = (pri, ivc)

        bits = None
        freed = False
        net = self.network
        ld = self.link_delay
        for od in sorted(winners):
            ivc = winners[od][1]
            port = ivc.port
            in_ptr[port] = (ivc.index + 1) % vcs
            out_ptr[od] = (port + 1) % NUM_PORTS
            flit = ivc.buf.popleft()
            self.buffered -= 1
            if port != LOCAL:
                net.schedule_credit(now + ld, self.neighbors[port], port ^ 2, ivc.index)
            if od == LOCAL:
                net.eject(flit, now)
            else:
                out = outputs[od]
                out.credits[ivc.out_vc] -= 1
                if out.credits[ivc.out_vc] < 0:
                    raise FlowControlError(f"negative credits at {self.coord} output {od}")
                if flit.is_head:
                    # occupancy measured after this cycle's VC allocation
                    if bits is None:
                        bits = self.local_port_bits()
                    flit.payload = build_payload(bits, self.table, Direction(od))
                    flit.packet.hops += 1
                if flit.is_tail:
                    out.tail_sent[ivc.out_vc] = True
                flit.vc = ivc.out_vc
                net.schedule_flit(now + ld, self.neighbors[od], od ^ 2, flit)
            if flit.is_tail:
                ivc.reset()
                freed = True
        if freed:
            self.live = [v for v in self.live if v.state is not IDLE or v.buf]


def router_cycle(router: Router, now: int, snapshot=None) -> None:
    """Advance one router by one cycle; outputs go out through its network."""
    router.step(now, snapshot)
