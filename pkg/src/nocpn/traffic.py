"""Synthetic traffic patterns and the Bernoulli packet injection process.

Node ids are ``y * k + x``; the bit-permutation patterns act on the
``log2(k*k)``-bit id and therefore require a power-of-two radix.
"""

from __future__ import annotations

from random import Random
from typing import Callable, Optional

from .core import ConfigError, Coord, Packet, SimConfig, coord_of, is_power_of_two, node_id


def id_bits(k: int) -> int:
    if not is_power_of_two(k):
        raise ConfigError(f"bit-permutation patterns need a power-of-two k, got {k}")
    return (k * k).bit_length() - 1


def dest_transpose(src: int, k: int) -> int:
    x, y = coord_of(src, k)
    return node_id(Coord(y, x), k)


def dest_bit_complement(src: int, k: int) -> int:
    b = id_bits(k)
    return ~src & ((1 << b) - 1)


def dest_bit_reverse(src: int, k: int) -> int:
    b = id_bits(k)
    out = 0
    for i in range(b):
        if src >> i & 1:
            out |= 1 << (b - 1 - i)
    return out


def dest_shuffle(src: int, k: int) -> int:
    """Rotate the id left by one bit."""
    b = id_bits(k)
    mask = (1 << b) - 1
    return ((src << 1) | (src >> (b - 1))) & mask


def dest_uniform(src: int, k: int, rng: Random) -> int:
    # one draw over the k*k - 1 other nodes; equivalent to rejecting src
    d = rng.randrange(k * k - 1)
    return d + 1 if d >= src else d


PERMUTATIONS: dict[str, Callable[[int, int], int]] = {
    "transpose": dest_transpose,
    "bitcomp": dest_bit_complement,
    "bitrev": dest_bit_reverse,
    "shuffle": dest_shuffle,
}


def node_rng(seed: int, stream: str, node: int) -> Random:
    """Independent, reproducible stream per (seed, purpose, node)."""
    return Random(f"{seed}/{stream}/{node}")


class InjectionProcess:
    """Per-node Bernoulli packet sources at ``rate / mean_length`` starts per cycle.

    Packet ids come from one shared counter; callers must visit nodes in a
    fixed order each cycle for runs to be reproducible.
    """

    def __init__(self, config: SimConfig, rate: Optional[float] = None):
        self.config = config
        self.k = config.k
        self.rate = config.injection_rate if rate is None else rate
        self.p_start = self.rate / config.mean_packet_flits
        self.rngs = [node_rng(config.rng_seed, "inject", n) for n in range(self.k * self.k)]
        pattern = config.traffic_pattern
        self._fixed: list[Optional[int]] = [None] * (self.k * self.k)
        if pattern != "uniform":
            fn = PERMUTATIONS[pattern]
            self._fixed = [fn(n, self.k) for n in range(self.k * self.k)]
        self.next_id = 0

    def destination(self, node: int) -> Optional[int]:
        """Destination for the next packet from ``node``; None for self-traffic."""
        fixed = self._fixed[node]
        if fixed is None:
            return dest_uniform(node, self.k, self.rngs[node])
        return None if fixed == node else fixed

    def maybe_inject(self, node: int, cycle: int) -> Optional[Packet]:
        rng = self.rngs[node]
        if self.p_start <= 0 or rng.random() >= self.p_start:
            return None
        cfg = self.config
        length = rng.randint(cfg.min_packet_flits, cfg.max_packet_flits)
        dst = self.destination(node)
        if dst is None:
            return None
        pkt = Packet(self.next_id, coord_of(node, self.k), coord_of(dst, self.k), length, cycle)
        self.next_id += 1
        return pkt

