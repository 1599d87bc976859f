"""Independent reference implementations used to check the fast paths."""

from random import Random

from nocpn.core import STEP, Coord, Direction, productive_directions

PORT_ORDER = [Direction.N, Direction.E, Direction.S, Direction.W]


def table_bit(groups, chain, hop, port):
    """Decode one stored bit straight from the group layout."""
    stored = [p for p in PORT_ORDER if p != Direction((chain + 2) % 4)]
    assert port in stored, "oracle tried to read the port facing back toward the owner"
    group = groups[chain * 3 + hop - 1]
    bits = format(group, "03b")
    return int(bits[stored.index(port)])


def walk(c, d, n):
    return Coord(c[0] + STEP[d][0] * n, c[1] + STEP[d][1] * n)


def nocpn_oracle(cur, dst, local, groups, rng: Random):
    """Brute force: at each step, sum the bits of every port still productive
    at the node reached along each chain; stop at a border or after 3 hops."""
    dirs = productive_directions(cur, dst)
    if len(dirs) == 1:
        return dirs[0]
    a, b = dirs
    step = 0
    while True:
        node_a, node_b = walk(cur, a, step), walk(cur, b, step)
        ports_a = productive_directions(node_a, dst)
        ports_b = productive_directions(node_b, dst)
        if step == 0:
            # the current node: both chains start here and use its own bits
            cost_a, cost_b = local[a], local[b]
        else:
            cost_a = sum(table_bit(groups, a, step, p) for p in ports_a)
            cost_b = sum(table_bit(groups, b, step, p) for p in ports_b)
        if cost_a != cost_b:
            return a if cost_a < cost_b else b
        if step == 3 or a not in ports_a or b not in ports_b:
            break
        step += 1
    return a if rng.random() < 0.5 else b


def dbar_oracle(cur, dst, local, snapshot, k, rng: Random):
    dirs = productive_directions(cur, dst)
    if len(dirs) == 1:
        return dirs[0]
    scores = []
    for d in dirs:
        remaining = abs(dst[0] - cur[0]) if d in (Direction.E, Direction.W) else abs(dst[1] - cur[1])
        score = local[d]
        for j in range(1, min(3, remaining) + 1):
            node = walk(cur, d, j)
            score += snapshot[node[1] * k + node[0]][d]
        scores.append(score)
    if scores[0] != scores[1]:
        return dirs[0] if scores[0] < scores[1] else dirs[1]
    return dirs[0] if rng.random() < 0.5 else dirs[1]
