# src/perm.py
"""
Permutation combinatorics: cycles, the length metric, the geodesic order,
S_NC(beta) enumeration, the Moebius function, lattice operations inside
S_NC(sigma), kernel partitions and the alpha^pi construction.

Permutations are stored as 0-based image tuples. Text I/O is 1-based
cycle notation, e.g. "(1 7 3)(2 5 6 4)".
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Iterator, Sequence

from src.config import SNC_CAP, EnumerationLimitError

logger = logging.getLogger(__name__)

_CATALAN_MAX = 30
CATALAN = tuple(math.comb(2 * n, n) // (n + 1) for n in range(_CATALAN_MAX + 1))

_CYCLE_RE = re.compile(r"\(([^()]*)\)")


def catalan(n: int) -> int:
    """Catalan number from the precomputed 64-bit table."""
    if n < 0:
        raise ValueError(f"Catalan index must be nonnegative, got {n}")
    if n > _CATALAN_MAX:
        raise OverflowError(f"Catalan({n}) is beyond the precomputed table (max {_CATALAN_MAX})")
    return CATALAN[n]


@dataclass(frozen=True)
class Permutation:
    """A bijection of {0, ..., p-1}; images[i] is the image of i."""

    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        object.__setattr__(self, "images", images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"Not a bijection of [{len(images)}]: {images}")

    @property
    def p(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i]

    def __mul__(self, other: "Permutation") -> "Permutation":
        # (self * other)(i) = self(other(i))
        _check_same_p(self, other)
        return Permutation(tuple(self.images[j] for j in other.images))

    def inverse(self) -> "Permutation":
        inv = [0] * self.p
        for i, j in enumerate(self.images):
            inv[j] = i
        return Permutation(tuple(inv))

    def conjugate(self, sigma: "Permutation") -> "Permutation":
        """sigma * self * sigma^-1."""
        return sigma * self * sigma.inverse()

    def cycles(self) -> list[tuple[int, ...]]:
        """Cycles starting from their minimal element, sorted by that element; singletons included."""
        seen = [False] * self.p
        out = []
        for start in range(self.p):
            if seen[start]:
                continue
            cyc = [start]
            seen[start] = True
            nxt = self.images[start]
            while nxt != start:
                cyc.append(nxt)
                seen[nxt] = True
                nxt = self.images[nxt]
            out.append(tuple(cyc))
        return out

    @property
    def num_cycles(self) -> int:
        return len(self.cycles())

    @property
    def length(self) -> int:
        return self.p - self.num_cycles

    def cycle_type(self) -> tuple[int, ...]:
        return tuple(sorted((len(c) for c in self.cycles()), reverse=True))

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.images))

    def to_cycle_string(self) -> str:
        if self.p == 0:
            return "()"
        return "".join("(" + " ".join(str(i + 1) for i in c) + ")" for c in self.cycles())

    def __str__(self) -> str:
        return self.to_cycle_string()

    def __repr__(self) -> str:
        return f"Permutation('{self.to_cycle_string()}')"

    @classmethod
    def identity(cls, p: int) -> "Permutation":
        return cls(tuple(range(p)))

    @classmethod
    def full_cycle(cls, p: int) -> "Permutation":
        """gamma_p = (1 2 ... p)."""
        return cls(tuple((i + 1) % p for i in range(p)))

    @classmethod
    def from_cycles(cls, cycles: Iterable[Sequence[int]], p: int, one_based: bool = True) -> "Permutation":
        images = list(range(p))
        seen: set[int] = set()
        shift = 1 if one_based else 0
        for cyc in cycles:
            cyc = [int(i) - shift for i in cyc]
            for i in cyc:
                if i < 0 or i >= p or i in seen:
                    raise ValueError(f"Invalid or repeated element {i + shift} in cycles for p={p}")
                seen.add(i)
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                images[a] = b
        return cls(tuple(images))

    @classmethod
    def parse(cls, text: str, p: int | None = None) -> "Permutation":
        """Parse 1-based cycle notation; singletons may be omitted when p is given."""
        cycles = [[int(tok) for tok in body.split()] for body in _CYCLE_RE.findall(text)]
        cycles = [c for c in cycles if c]
        if _CYCLE_RE.sub("", text).strip():
            raise ValueError(f"Unparseable permutation text: {text!r}")
        largest = max((max(c) for c in cycles), default=0)
        if p is None:
            p = largest
        elif largest > p:
            raise ValueError(f"Element {largest} exceeds p={p} in {text!r}")
        return cls.from_cycles(cycles, p)


PermTuple = tuple[Permutation, ...]


def _check_same_p(*perms: Permutation) -> None:
    sizes = {s.p for s in perms}
    if len(sizes) > 1:
        raise ValueError(f"Permutations act on different ground sets: {sorted(sizes)}")


# ---------------------------------------------------------------------------
# Partitions


@dataclass(frozen=True)
class Partition:
    """Set partition of {0, ..., p-1} in canonical form (sorted blocks, sorted by minimum)."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks if len(b) > 0), key=lambda b: b[0]))
        object.__setattr__(self, "blocks", blocks)
        flat = sorted(i for b in blocks for i in b)
        if flat != list(range(len(flat))):
            raise ValueError(f"Blocks do not partition [{len(flat)}]: {blocks}")

    @property
    def p(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @classmethod
    def from_labels(cls, labels: Sequence) -> "Partition":
        groups: dict = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        return cls(tuple(tuple(g) for g in groups.values()))

    @classmethod
    def zero(cls, p: int) -> "Partition":
        return cls(tuple((i,) for i in range(p)))

    @classmethod
    def one(cls, p: int) -> "Partition":
        return cls((tuple(range(p)),)) if p else cls(())

    def block_index(self) -> tuple[int, ...]:
        idx = [0] * self.p
        for b, block in enumerate(self.blocks):
            for i in block:
                idx[i] = b
        return tuple(idx)

    def leq(self, other: "Partition") -> bool:
        """Refinement order: every block of self lies inside a block of other."""
        if self.p != other.p:
            raise ValueError("Partitions of different ground sets")
        owner = other.block_index()
        return all(len({owner[i] for i in b}) == 1 for b in self.blocks)

    def join(self, other: "Partition") -> "Partition":
        if self.p != other.p:
            raise ValueError("Partitions of different ground sets")
        parent = list(range(self.p))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for block in self.blocks + other.blocks:
            root = find(block[0])
            for i in block[1:]:
                parent[find(i)] = root
        return Partition.from_labels([find(i) for i in range(self.p)])

    def meet(self, other: "Partition") -> "Partition":
        if self.p != other.p:
            raise ValueError("Partitions of different ground sets")
        a, b = self.block_index(), other.block_index()
        return Partition.from_labels(list(zip(a, b)))

    def is_one(self) -> bool:
        return self.num_blocks == 1

    def is_pair_partition(self) -> bool:
        return all(len(b) == 2 for b in self.blocks)

    def __str__(self) -> str:
        return "".join("{" + ",".join(str(i + 1) for i in b) + "}" for b in self.blocks)


def cycle_partition(sigma: Permutation) -> Partition:
    """Pi(sigma): the partition into cycles."""
    return Partition(tuple(sigma.cycles()))


def partition_join(parts: Iterable[Partition]) -> Partition:
    return reduce(lambda a, b: a.join(b), parts)


def kernel_partition(f: Sequence) -> Partition:
    """ker f: the nonempty preimages of f."""
    return Partition.from_labels(f)


# ---------------------------------------------------------------------------
# Metric and geodesic order


def cycles(sigma: Permutation) -> list[tuple[int, ...]]:
    return sigma.cycles()


def length(sigma: Permutation) -> int:
    """|sigma| = p - #sigma."""
    return sigma.length


def is_geodesic(alpha: Permutation, beta: Permutation) -> bool:
    """alpha <= beta, i.e. |alpha| + |alpha^-1 beta| = |beta|."""
    _check_same_p(alpha, beta)
    return alpha.length + (alpha.inverse() * beta).length == beta.length


def all_permutations(p: int) -> list[Permutation]:
    return [Permutation(images) for images in itertools.permutations(range(p))]


def direct_sum(alpha: Permutation, beta: Permutation) -> Permutation:
    """Disjoint product alpha ⊔ beta on [p + q]."""
    return Permutation(alpha.images + tuple(alpha.p + j for j in beta.images))


def erase(sigma: Permutation, j: int) -> Permutation:
    """Remove j from its cycle and reindex j+1, ..., p-1 down by one."""
    images = []
    for k in range(sigma.p):
        if k == j:
            continue
        target = sigma(k) if sigma(k) != j else sigma(j)
        images.append(target - 1 if target > j else target)
    return Permutation(tuple(images))


def restrict(sigma: Permutation, block: Sequence[int]) -> Permutation:
    """Restriction to a union of cycles, relabelled by increasing order."""
    block = sorted(block)
    index = {x: i for i, x in enumerate(block)}
    try:
        return Permutation(tuple(index[sigma(x)] for x in block))
    except KeyError as exc:
        raise ValueError(f"{block} is not a union of cycles of {sigma}") from exc


# ---------------------------------------------------------------------------
# S_NC enumeration


def _nc_partitions(seq: Sequence[int]) -> Iterator[list[list[int]]]:
    """Non-crossing partitions of a linearly ordered sequence; first block always holds seq[0]."""
    if not seq:
        yield []
        return
    head = seq[0]
    for part in _nc_partitions(seq[1:]):
        yield [[head]] + part
    for k in range(1, len(seq)):
        inner_parts = list(_nc_partitions(seq[1:k]))
        for outer in _nc_partitions(seq[k:]):
            for inner in inner_parts:
                yield [[head] + outer[0]] + inner + outer[1:]


def predicted_snc_size(beta: Permutation) -> int:
    return math.prod(catalan(len(c)) for c in beta.cycles())


def enumerate_snc(beta: Permutation, cap: int | None = None) -> list[Permutation]:
    """All alpha <= beta, built per cycle of beta from non-crossing partitions."""
    cap = SNC_CAP if cap is None else cap
    size = predicted_snc_size(beta)
    if size > cap:
        raise EnumerationLimitError(f"|S_NC({beta})| = {size} exceeds the cap {cap}")
    logger.debug("Enumerating S_NC(%s): %d elements", beta, size)
    per_cycle = [list(_nc_partitions(c)) for c in beta.cycles()]
    out = []
    for choice in itertools.product(*per_cycle):
        blocks = [b for part in choice for b in part]
        out.append(Permutation.from_cycles(blocks, beta.p, one_based=False))
    return out


def _is_rotation(a: Sequence[int], b: Sequence[int]) -> bool:
    if len(a) != len(b):
        return False
    if not a:
        return True
    try:
        i = list(b).index(a[0])
    except ValueError:
        return False
    return list(b[i:]) + list(b[:i]) == list(a)


def _cross(a: Sequence[int], b: Sequence[int], pos: dict[int, int]) -> bool:
    marks = sorted([(pos[x], 0) for x in a] + [(pos[x], 1) for x in b])
    runs = [m for i, (_, m) in enumerate(marks) if i == 0 or marks[i - 1][1] != m]
    return len(runs) >= 4


def _cycle_positions(sigma: Permutation) -> tuple[dict[int, int], dict[int, int]]:
    pos, owner = {}, {}
    for ci, cyc in enumerate(sigma.cycles()):
        for k, x in enumerate(cyc):
            pos[x] = k
            owner[x] = ci
    return pos, owner


def in_snc(alpha: Permutation, sigma: Permutation) -> bool:
    """Structural membership alpha ∈ S_NC(sigma): cycles inside sigma's, same cyclic order, non-crossing."""
    _check_same_p(alpha, sigma)
    pos, owner = _cycle_positions(sigma)
    grouped: dict[int, list[list[int]]] = defaultdict(list)
    for cyc in alpha.cycles():
        owners = {owner[x] for x in cyc}
        if len(owners) != 1:
            return False
        ordered = sorted(cyc, key=pos.__getitem__)
        if not _is_rotation(cyc, ordered):
            return False
        grouped[owners.pop()].append(ordered)
    for blocks in grouped.values():
        for a, b in itertools.combinations(blocks, 2):
            if _cross(a, b, pos):
                return False
    return True


def mobius(sigma: Permutation) -> int:
    """Möb(sigma) = prod over cycles of (-1)^{|c|-1} Cat_{|c|-1}."""
    return math.prod((-1) ** (len(c) - 1) * catalan(len(c) - 1) for c in sigma.cycles())


def meet_snc(alpha: Permutation, beta: Permutation) -> Permutation:
    """Lattice meet; blocks are intersections of cycles, ordered cyclically by alpha."""
    _check_same_p(alpha, beta)
    a_pos, a_owner = _cycle_positions(alpha)
    b_pos, b_owner = _cycle_positions(beta)
    groups: dict[tuple[int, int], list[int]] = defaultdict(list)
    for x in range(alpha.p):
        groups[(a_owner[x], b_owner[x])].append(x)
    out = []
    for block in groups.values():
        by_alpha = sorted(block, key=a_pos.__getitem__)
        by_beta = sorted(block, key=b_pos.__getitem__)
        if not _is_rotation(by_alpha, by_beta):
            raise ValueError(f"{alpha} and {beta} induce different cyclic orders on {[x + 1 for x in block]}")
        out.append(by_alpha)
    return Permutation.from_cycles(out, alpha.p, one_based=False)


def join_snc(alpha: Permutation, beta: Permutation, sigma: Permutation) -> Permutation:
    """Lattice join inside S_NC(sigma): partition join, non-crossing closure, lift by sigma's order."""
    _check_same_p(alpha, beta, sigma)
    for name, x in (("alpha", alpha), ("beta", beta)):
        if not in_snc(x, sigma):
            raise ValueError(f"{name}={x} is not in S_NC({sigma})")
    part = cycle_partition(alpha).join(cycle_partition(beta))
    pos, owner = _cycle_positions(sigma)
    grouped: dict[int, list[list[int]]] = defaultdict(list)
    for block in part.blocks:
        grouped[owner[block[0]]].append(list(block))
    out = []
    for blocks in grouped.values():
        merged = True
        while merged:
            merged = False
            for i, j in itertools.combinations(range(len(blocks)), 2):
                if _cross(blocks[i], blocks[j], pos):
                    blocks[i] = blocks[i] + blocks[j]
                    del blocks[j]
                    merged = True
                    break
        out.extend(sorted(b, key=pos.__getitem__) for b in blocks)
    return Permutation.from_cycles(out, sigma.p, one_based=False)


def alpha_over_pi(alpha: Permutation, pi: Partition) -> Permutation:
    """Split every cycle of alpha into maximal cyclically consecutive runs lying in one block of pi."""
    if alpha.p != pi.p:
        raise ValueError("alpha and pi act on different ground sets")
    label = pi.block_index()
    out = []
    for cyc in alpha.cycles():
        labels = [label[x] for x in cyc]
        if len(set(labels)) == 1:
            out.append(cyc)
            continue
        start = next(i for i in range(len(cyc)) if labels[i] != labels[i - 1])
        rotated = cyc[start:] + cyc[:start]
        run = [rotated[0]]
        for x in rotated[1:]:
            if label[x] == label[run[-1]]:
                run.append(x)
            else:
                out.append(run)
                run = [x]
        out.append(run)
    return Permutation.from_cycles(out, alpha.p, one_based=False)


# ---------------------------------------------------------------------------
# Tuples


def tuple_to_string(alpha: Sequence[Permutation]) -> str:
    return ";".join(a.to_cycle_string() for a in alpha)


def parse_tuple(text: str, p: int | None = None) -> PermTuple:
    parts = [s.strip() for s in text.split(";")]
    if p is None:
        p = max(Permutation.parse(s).p for s in parts)
    return tuple(Permutation.parse(s, p) for s in parts)


def tuple_leq(alpha: Sequence[Permutation], beta: Sequence[Permutation]) -> bool:
    """Componentwise geodesic order."""
    if len(alpha) != len(beta):
        raise ValueError("Tuples of different arity")
    return all(is_geodesic(a, b) for a, b in zip(alpha, beta))


def tuple_mobius(alpha: Sequence[Permutation], beta: Sequence[Permutation]) -> int:
    """prod_s Möb(alpha_s^-1 beta_s)."""
    return math.prod(mobius(a.inverse() * b) for a, b in zip(alpha, beta))


def enumerate_snc_tuple(beta: Sequence[Permutation], cap: int | None = None) -> list[PermTuple]:
    cap = SNC_CAP if cap is None else cap
    size = math.prod(predicted_snc_size(b) for b in beta)
    if size > cap:
        raise EnumerationLimitError(f"|S_NC(beta)^r| = {size} exceeds the cap {cap}")
    return list(itertools.product(*(enumerate_snc(b, cap) for b in beta)))


def all_tuples(p: int, r: int) -> list[PermTuple]:
    perms = all_permutations(p)
    return list(itertools.product(perms, repeat=r))


def tuple_partition(alpha: Sequence[Permutation]) -> Partition:
    """Join over legs of the cycle partitions."""
    return partition_join(cycle_partition(a) for a in alpha)


def conjugate_tuple(alpha: Sequence[Permutation], sigma: Permutation) -> PermTuple:
    return tuple(a.conjugate(sigma) for a in alpha)
