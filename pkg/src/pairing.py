# src/pairing.py
"""
Pair partitions of [±p] = {1, ..., p, -1, ..., -p}.

Every product of pairings is computed with the permutation engine of
src.perm by relabelling [±p] -> [2p]:

    k  -> k - 1        (k = 1..p)
    -k -> p + k - 1

A permutation sigma of [p] is embedded in S_{2p} acting on the positive
labels only (negatives fixed), so sigma delta sigma^-1 pairs sigma(k) with -k.
"""

from __future__ import annotations

import itertools
import logging
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from src.config import PAIRING_MAX_P, EnumerationLimitError
from src.perm import Permutation, enumerate_snc

logger = logging.getLogger(__name__)

_PAIR_RE = re.compile(r"\(\s*(-?\d+)\s+(-?\d+)\s*\)")


def to_index(k: int, p: int) -> int:
    if k == 0 or abs(k) > p:
        raise ValueError(f"Label {k} is not in [±{p}]")
    return k - 1 if k > 0 else p - k - 1


def to_label(i: int, p: int) -> int:
    return i + 1 if i < p else -(i - p + 1)


@dataclass(frozen=True)
class Pairing:
    """Fixed-point-free involution of [±p], stored on the relabelled set [2p]."""

    partner: tuple[int, ...]

    def __post_init__(self):
        partner = tuple(int(i) for i in self.partner)
        object.__setattr__(self, "partner", partner)
        n = len(partner)
        if n % 2:
            raise ValueError("A pairing of [±p] needs an even ground set")
        for i, j in enumerate(partner):
            if not 0 <= j < n or j == i or partner[j] != i:
                raise ValueError(f"Not a fixed-point-free involution: {partner}")

    @property
    def p(self) -> int:
        return len(self.partner) // 2

    def __call__(self, k: int) -> int:
        """Partner of the signed label k."""
        return to_label(self.partner[to_index(k, self.p)], self.p)

    def as_permutation(self) -> Permutation:
        return Permutation(self.partner)

    def pairs(self) -> list[tuple[int, int]]:
        """Signed pairs, sorted by smallest relabelled index; inside a pair by |k|, positive first."""
        out = []
        for i, j in enumerate(self.partner):
            if i < j:
                a, b = sorted((to_label(i, self.p), to_label(j, self.p)), key=lambda k: (abs(k), k < 0))
                out.append((a, b))
        return out

    def is_delta_type(self) -> bool:
        """True when every positive label is paired with a negative one (the image of S_p)."""
        return all(self(k) < 0 for k in range(1, self.p + 1))

    def __str__(self) -> str:
        return "".join(f"({a} {b})" for a, b in self.pairs())

    def __repr__(self) -> str:
        return f"Pairing('{self}')"

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[int]], p: int | None = None) -> "Pairing":
        pairs = [tuple(int(k) for k in pr) for pr in pairs]
        if p is None:
            p = max((abs(k) for pr in pairs for k in pr), default=0)
        partner = [-1] * (2 * p)
        for a, b in pairs:
            i, j = to_index(a, p), to_index(b, p)
            if partner[i] != -1 or partner[j] != -1 or i == j:
                raise ValueError(f"Label repeated in pairs {pairs}")
            partner[i], partner[j] = j, i
        if -1 in partner:
            raise ValueError(f"Pairs {pairs} do not cover [±{p}]")
        return cls(tuple(partner))

    @classmethod
    def parse(cls, text: str, p: int | None = None) -> "Pairing":
        pairs = [(int(a), int(b)) for a, b in _PAIR_RE.findall(text)]
        if _PAIR_RE.sub("", text).strip():
            raise ValueError(f"Unparseable pairing text: {text!r}")
        return cls.from_pairs(pairs, p)


@dataclass(frozen=True)
class SignedInvolution:
    """epsilon(k) = signs[|k|-1] * k."""

    signs: tuple[int, ...]

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        object.__setattr__(self, "signs", signs)
        if any(s not in (1, -1) for s in signs):
            raise ValueError(f"Signs must be ±1, got {signs}")

    @property
    def p(self) -> int:
        return len(self.signs)

    def __call__(self, k: int) -> int:
        return self.signs[abs(k) - 1] * k

    def as_permutation(self) -> Permutation:
        p = self.p
        return Permutation(tuple(to_index(self(to_label(i, p)), p) for i in range(2 * p)))

    @classmethod
    def plus(cls, p: int) -> "SignedInvolution":
        return cls((1,) * p)

    def __str__(self) -> str:
        return "[" + " ".join("+" if s > 0 else "-" for s in self.signs) + "]"


def delta(p: int) -> Pairing:
    """(1 -1)(2 -2)...(p -p)."""
    if p < 1:
        raise ValueError("delta needs p >= 1")
    return Pairing(tuple(i + p if i < p else i - p for i in range(2 * p)))


def embed(sigma: Permutation) -> Permutation:
    """sigma acting on the positive labels of [±p], fixing the negatives."""
    return Permutation(sigma.images + tuple(range(sigma.p, 2 * sigma.p)))


def _from_permutation(perm: Permutation) -> Pairing:
    return Pairing(perm.images)


def enumerate_pairings(p: int, max_p: int | None = None) -> list[Pairing]:
    """All (2p-1)!! pairings, by recursive smallest-unpaired-first matching."""
    max_p = PAIRING_MAX_P if max_p is None else max_p
    if p > max_p:
        raise EnumerationLimitError(f"Enumerating P2(±{p}) exceeds the cap p <= {max_p}")

    def rec(free: list[int]) -> Iterator[list[tuple[int, int]]]:
        if not free:
            yield []
            return
        head, rest = free[0], free[1:]
        for k, other in enumerate(rest):
            for tail in rec(rest[:k] + rest[k + 1:]):
                yield [(head, other)] + tail

    out = []
    for matching in rec(list(range(2 * p))):
        partner = [0] * (2 * p)
        for i, j in matching:
            partner[i], partner[j] = j, i
        out.append(Pairing(tuple(partner)))
    return out


def join_block_count(pi: Pairing, rho: Pairing) -> int:
    """#(pi ∨ rho) = #(pi rho) / 2."""
    if pi.p != rho.p:
        raise ValueError("Pairings of different size")
    return (pi.as_permutation() * rho.as_permutation()).num_cycles // 2


def pairing_from_perm(sigma: Permutation) -> Pairing:
    """sigma delta sigma^-1 = (sigma(1) -1)...(sigma(p) -p)."""
    s = embed(sigma)
    return _from_permutation(s * delta(sigma.p).as_permutation() * s.inverse())


def perm_from_pairing(pi: Pairing) -> Permutation:
    """Inverse of pairing_from_perm: sigma(k) = partner(-k)."""
    if not pi.is_delta_type():
        raise ValueError(f"{pi} pairs two labels of the same sign; it is not of the form sigma delta sigma^-1")
    return Permutation(tuple(pi(-k) - 1 for k in range(1, pi.p + 1)))


def conjugate(pi: Pairing, eps: SignedInvolution) -> Pairing:
    e = eps.as_permutation()
    return _from_permutation(e * pi.as_permutation() * e)


def recompose(sigma: Permutation, eps: SignedInvolution) -> Pairing:
    """epsilon sigma delta sigma^-1 epsilon."""
    return conjugate(pairing_from_perm(sigma), eps)


def _sign_constraints(pi: Pairing) -> dict[int, list[tuple[int, int]]]:
    # s_|a| * s_|b| = -sgn(a) sgn(b) for every pair {a, b} with |a| != |b|
    edges: dict[int, list[tuple[int, int]]] = {k: [] for k in range(1, pi.p + 1)}
    for a, b in pi.pairs():
        if abs(a) == abs(b):
            continue
        parity = -(1 if a > 0 else -1) * (1 if b > 0 else -1)
        edges[abs(a)].append((abs(b), parity))
        edges[abs(b)].append((abs(a), parity))
    return edges


def factorize(pi: Pairing) -> tuple[Permutation, SignedInvolution]:
    """
    Write pi = epsilon sigma delta sigma^-1 epsilon.

    The sign pattern is solved per connected component of the constraint
    graph. Each component takes the assignment with fewer flips; ties go to
    the lexicographically smallest vector with -1 < +1.
    """
    edges = _sign_constraints(pi)
    signs: dict[int, int] = {}
    for start in range(1, pi.p + 1):
        if start in signs:
            continue
        component = {start: -1}
        queue = deque([start])
        while queue:
            k = queue.popleft()
            for other, parity in edges[k]:
                want = component[k] * parity
                if other not in component:
                    component[other] = want
                    queue.append(other)
                elif component[other] != want:
                    raise ValueError(f"Inconsistent sign constraints for {pi}")
        flips = sum(1 for s in component.values() if s < 0)
        if 2 * flips > len(component):
            component = {k: -s for k, s in component.items()}
        signs.update(component)
    eps = SignedInvolution(tuple(signs[k] for k in range(1, pi.p + 1)))
    sigma = perm_from_pairing(conjugate(pi, eps))
    return sigma, eps


def pairing_length(pi: Pairing) -> int:
    """|pi delta| in S_{2p}."""
    return (pi.as_permutation() * delta(pi.p).as_permutation()).length


def pairing_geodesic(rho: Pairing, pi: Pairing) -> bool:
    """rho delta ∈ S_NC(pi delta), tested by lengths in S_{2p}."""
    if rho.p != pi.p:
        raise ValueError("Pairings of different size")
    d = delta(pi.p).as_permutation()
    a = rho.as_permutation() * d
    b = pi.as_permutation() * d
    return a.length + (a.inverse() * b).length == b.length


def sigma_f(sigma: Permutation, f: Sequence[int]) -> Permutation:
    """Invert every cycle of sigma on which f = -1."""
    if len(f) != sigma.p:
        raise ValueError("f must have one sign per point")
    out = []
    for cyc in sigma.cycles():
        values = {int(f[i]) for i in cyc}
        if len(values) != 1 or values - {1, -1}:
            raise ValueError(f"f is not a constant sign on the cycle {[i + 1 for i in cyc]}")
        out.append(cyc if values == {1} else tuple(reversed(cyc)))
    return Permutation.from_cycles(out, sigma.p, one_based=False)


def geodesic_pairs_by_factorization(p: int) -> set[tuple[Pairing, Pairing]]:
    """All (rho, pi) with pi = eps sigma delta sigma^-1 eps and rho = eps tau delta tau^-1 eps, tau <= sigma."""
    out = set()
    for signs in itertools.product((1, -1), repeat=p):
        eps = SignedInvolution(signs)
        for images in itertools.permutations(range(p)):
            sigma = Permutation(images)
            pi = recompose(sigma, eps)
            for tau in enumerate_snc(sigma):
                out.add((recompose(tau, eps), pi))
    return out
