"""Cycle-driven mesh engine, statistics and injection-rate sweeps."""

from __future__ import annotations

import hashlib
import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .core import Coord, Flit, Packet, SimConfig, coord_of, manhattan_distance, neighbor
from .router import LOCAL, FlowControlError, Router, VcState
from .traffic import PERMUTATIONS, InjectionProcess

log = logging.getLogger(__name__)

SATURATION_FACTOR = 3.0


@dataclass
class SimStats:
    packets_delivered: int = 0
    flits_delivered: int = 0
    avg_packet_latency: float = 0.0
    avg_hop_count: float = 0.0
    avg_manhattan_distance: float = 0.0
    throughput_accepted: float = 0.0
    offered_load: float = 0.0
    max_in_flight_age: int = 0
    drain_completed: bool = True
    packets_measured: int = 0
    nonminimal_packets: int = 0
    flits_injected: int = 0
    flits_ejected: int = 0
    cycles: int = 0


class _Source:
    """Unbounded source queue feeding one node's local input port."""

    __slots__ = ("queue", "flits", "pos", "vc")

    def __init__(self) -> None:
        self.queue: deque[Packet] = deque()
        self.flits: list[Flit] = []
        self.pos = 0
        self.vc = -1

    def pending(self) -> bool:
        return bool(self.queue) or self.pos < len(self.flits)


class Network:
    """k x k mesh of routers stepped in two phases per cycle.

    Phase one delivers every flit and credit due this cycle; phase two steps
    each router, which may only schedule events for later cycles. Router
    stepping order therefore cannot change the outcome.
    """

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        k = config.k
        self.k = k
        self.routers = [Router(coord_of(n, k), config, self) for n in range(k * k)]
        for r in self.routers:
            for d in range(4):
                nb = neighbor(r.coord, d, k)
                if nb is not None:
                    r.neighbors[d] = self.routers[nb[1] * k + nb[0]]
        self.sources = [_Source() for _ in self.routers]
        self.flit_events: dict[int, list] = defaultdict(list)
        self.credit_events: dict[int, list] = defaultdict(list)
        self.now = 0

        self.flits_injected = 0
        self.flits_ejected = 0
        self.packets_in_network = 0
        self.delivered: list[Packet] = []
        self.window: Optional[tuple[int, int]] = None
        self.window_flits = 0
        self.measured: list[Packet] = []
        self.nonminimal = 0

    # -- callbacks used by routers ----------------------------------------

    def schedule_flit(self, cycle: int, router: Router, port: int, flit: Flit) -> None:
        self.flit_events[cycle].append((router, port, flit))

    def schedule_credit(self, cycle: int, router: Router, out_dir: int, vc: int) -> None:
        self.credit_events[cycle].append((router, out_dir, vc))

    def eject(self, flit: Flit, now: int) -> None:
        pkt = flit.packet
        if flit.seq != pkt.flits_ejected:
            raise FlowControlError(f"packet {pkt.packet_id} ejected out of order")
        pkt.flits_ejected += 1
        self.flits_ejected += 1
        if self.window is not None and self.window[0] <= now < self.window[1]:
            self.window_flits += 1
        if flit.is_tail:
            pkt.delivery_cycle = now
            self.packets_in_network -= 1
            if pkt.hops != manhattan_distance(pkt.src, pkt.dst):
                self.nonminimal += 1
            self.delivered.append(pkt)

    # -- injection ----------------------------------------------------------

    def offer(self, pkt: Packet) -> None:
        """Queue a packet at its source node (latency counts from birth)."""
        self.sources[pkt.src[1] * self.k + pkt.src[0]].queue.append(pkt)
        self.packets_in_network += 1

    def _feed(self, node: int, now: int) -> None:
        src = self.sources[node]
        router = self.routers[node]
        if src.pos >= len(src.flits):
            if not src.queue:
                return
            for ivc in router.inputs[LOCAL]:
                if ivc.state == VcState.IDLE and not ivc.buf:
                    src.vc = ivc.index
                    break
            else:
                return
            src.flits = src.queue.popleft().flits()
            src.pos = 0
        ivc = router.inputs[LOCAL][src.vc]
        if len(ivc.buf) >= router.depth:
            return
        flit = src.flits[src.pos]
        flit.vc = src.vc
        router.receive_flit(LOCAL, flit, now)
        src.pos += 1
        self.flits_injected += 1

    # -- main loop ------------------------------------------------------------

    def cycle(self, injector: Optional[InjectionProcess] = None) -> None:
        now = self.now
        for router, d, vc in self.credit_events.pop(now, ()):
            router.receive_credit(d, vc)
        for router, port, flit in self.flit_events.pop(now, ()):
            router.receive_flit(port, flit, now)
        sources = self.sources
        for node in range(len(sources)):
            if injector is not None:
                pkt = injector.maybe_inject(node, now)
                if pkt is not None:
                    if self.window is not None and self.window[0] <= now < self.window[1]:
                        pkt.measured = True
                        self.measured.append(pkt)
                    self.offer(pkt)
            if sources[node].pending():
                self._feed(node, now)
        snapshot = None
        if self.config.routing_algorithm == "dbar":
            snapshot = [r.local_port_bits() for r in self.routers]
        for router in self.routers:
            if router.live:
                router.step(now, snapshot)
        self.now = now + 1

    def idle(self) -> bool:
        """No packets queued or in flight and no credits still on the wires."""
        return self.packets_in_network == 0 and not self.flit_events and not self.credit_events

    def flits_in_network(self) -> int:
        return self.flits_injected - self.flits_ejected

    def check_credits(self) -> None:
        """credits + downstream occupancy + in-flight flits and credits == depth."""
        depth = self.config.buffer_depth_flits
        in_flight: dict[tuple[int, int, int], int] = defaultdict(int)
        for events in self.flit_events.values():
            for router, port, flit in events:
                up = router.neighbors[port]
                in_flight[(up.node, port ^ 2, flit.vc)] += 1
        for events in self.credit_events.values():
            for router, d, vc in events:
                in_flight[(router.node, d, vc)] += 1
        for r in self.routers:
            for d, out in enumerate(r.outputs):
                if out is None:
                    continue
                down = r.neighbors[d]
                for vc in range(r.vcs):
                    held = len(down.inputs[d ^ 2][vc].buf)
                    total = out.credits[vc] + held + in_flight[(r.node, d, vc)]
                    if total != depth:
                        raise FlowControlError(
                            f"credit mismatch at {r.coord} dir {d} vc {vc}: {total} != {depth}"
                        )


def zero_load_latency(config: SimConfig) -> float:
    """Expected latency in an empty network for the configured pattern.

    Heads pay ``router_delay`` at each of the ``D + 1`` routers on the path and
    ``link_delay`` on each of the ``D`` links; the tail trails by ``L - 1``.
    """
    k = config.k
    n = k * k
    if config.traffic_pattern == "uniform":
        # 2(k^2-1)/(3k) averages over all ordered pairs; rescale to exclude self-pairs
        mean_d = 2 * (n - 1) / (3 * k) * n / (n - 1)
    else:
        fn = PERMUTATIONS[config.traffic_pattern]
        dists = [
            manhattan_distance(coord_of(s, k), coord_of(fn(s, k), k)) for s in range(n) if fn(s, k) != s
        ]
        mean_d = sum(dists) / len(dists)
    return (
        (mean_d + 1) * config.router_delay_cycles
        + mean_d * config.link_delay_cycles
        + config.mean_packet_flits
        - 1
    )


def run_simulation(config: SimConfig, check_invariants: bool = False) -> SimStats:
    """Warm up, measure packets born in the window, then drain with injection off.

    ``drain_completed`` is False when the network has not emptied within
    ``drain_limit_cycles``; that is the saturation signal, not an error.
    """
    net = Network(config)
    injector = InjectionProcess(config)
    start = config.warmup_cycles
    stop = start + config.measure_cycles
    net.window = (start, stop)

    while net.now < stop:
        net.cycle(injector)
        if check_invariants:
            net.check_credits()

    drain_end = stop + config.drain_limit_cycles
    while not net.idle() and net.now < drain_end:
        net.cycle(None)
        if check_invariants:
            net.check_credits()

    stats = SimStats(drain_completed=net.idle(), cycles=net.now)
    measured = net.measured
    offered_flits = sum(p.length_flits for p in measured)
    done = [p for p in measured if p.delivery_cycle is not None]
    stats.packets_measured = len(measured)
    stats.packets_delivered = len(done)
    stats.flits_delivered = sum(p.length_flits for p in done)
    stats.nonminimal_packets = net.nonminimal
    stats.flits_injected = net.flits_injected
    stats.flits_ejected = net.flits_ejected
    nodes = config.k * config.k
    if config.measure_cycles:
        stats.throughput_accepted = net.window_flits / (nodes * config.measure_cycles)
        stats.offered_load = offered_flits / (nodes * config.measure_cycles)
    if done:
        stats.avg_packet_latency = sum(p.delivery_cycle - p.birth_cycle for p in done) / len(done)
        stats.avg_hop_count = sum(p.hops for p in done) / len(done)
        stats.avg_manhattan_distance = sum(manhattan_distance(p.src, p.dst) for p in done) / len(done)
    ages = [
        (p.delivery_cycle if p.delivery_cycle is not None else net.now) - p.birth_cycle for p in measured
    ]
    stats.max_in_flight_age = max(ages, default=0)
    log.debug(
        "%s/%s rate=%.3f latency=%.2f drained=%s",
        config.routing_algorithm,
        config.traffic_pattern,
        config.injection_rate,
        stats.avg_packet_latency,
        stats.drain_completed,
    )
    return stats


@dataclass
class SweepResult:
    config: SimConfig
    points: list[tuple[float, SimStats]] = field(default_factory=list)
    zero_load_latency: float = 0.0
    saturation_rate: Optional[float] = None

    @property
    def rates(self) -> list[float]:
        return [r for r, _ in self.points]


def derive_seed(base: int, index: int) -> int:
    digest = hashlib.sha256(f"{base}:{index}".encode()).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


def is_saturated(stats: SimStats, l0: float) -> bool:
    return not stats.drain_completed or stats.avg_packet_latency > SATURATION_FACTOR * l0


def sweep(config: SimConfig, rates: Iterable[float], stop_at_saturation: bool = False) -> SweepResult:
    """Run one simulation per rate with a seed derived from the base seed and rate index.

    The saturation rate is the first rate whose average latency exceeds three
    times the analytic zero-load latency, or whose drain does not complete.
    """
    rates = list(rates)
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ValueError("sweep rates must be strictly increasing")
    result = SweepResult(config=config, zero_load_latency=zero_load_latency(config))
    for i, rate in enumerate(rates):
        cfg = replace(config, injection_rate=rate, rng_seed=derive_seed(config.rng_seed, i))
        stats = run_simulation(cfg)
        result.points.append((rate, stats))
        if result.saturation_rate is None and is_saturated(stats, result.zero_load_latency):
            result.saturation_rate = rate
            if stop_at_saturation:
                break
    return result


def frange(start: float, stop: float, step: float) -> list[float]:
    """Inclusive float range, rounded to dodge accumulation error."""
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(round((stop - start) / step))
    out = [round(start + i * step, 10) for i in range(n + 1)]
    return [r for r in out if r <= stop + 1e-12]


def common_presaturation_rates(results: Sequence[SweepResult]) -> list[float]:
    """Rates below every sweep's saturation point, in increasing order."""
    common = None
    for res in results:
        ok = {r for r, s in res.points if not is_saturated(s, res.zero_load_latency)}
        if res.saturation_rate is not None:
            ok = {r for r in ok if r < res.saturation_rate}
        common = ok if common is None else common & ok
    return sorted(common or [])
