# src/cumulant.py
"""
Tuple moment <-> cumulant transforms for r-partite tensor invariants.

A table is attached to one order p, one arity r and one argument word f:
entry alpha holds phi_alpha(X_{f(1)}, ..., X_{f(p)}) (or the matching
cumulant). Transforms only read entries below the requested tuple in the
componentwise geodesic order, so sparse tables work as long as they are
closed downwards.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from numbers import Number
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

import numpy as np
import pandas as pd

from src.perm import (
    PermTuple,
    Permutation,
    all_tuples,
    alpha_over_pi,
    enumerate_snc_tuple,
    join_snc,
    kernel_partition,
    parse_tuple,
    tuple_leq,
    tuple_mobius,
    tuple_partition,
    tuple_to_string,
)
from src.rmt import map_trials, trial_rng
from src.tensors import Matrix, normalized_trace_invariant

logger = logging.getLogger(__name__)

EXACT = "exact"
MONTE_CARLO = "monte_carlo"

Sampler = Callable[[np.random.Generator], Union[Matrix, Sequence[Matrix]]]


@dataclass(eq=False)
class _TupleTable:
    p: int
    r: int
    entries: dict[PermTuple, Number]
    word: tuple[int, ...] = ()
    mode: str = EXACT
    stderr: dict[PermTuple, float] = field(default_factory=dict)
    samples: dict[PermTuple, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.word = tuple(self.word) if self.word else (0,) * self.p
        if len(self.word) != self.p:
            raise ValueError(f"Argument word has length {len(self.word)}, expected p={self.p}")
        for alpha in self.entries:
            if len(alpha) != self.r or any(a.p != self.p for a in alpha):
                raise ValueError(f"Tuple {tuple_to_string(alpha)} does not belong to (S_{self.p})^{self.r}")

    @property
    def p_max(self) -> int:
        return self.p

    def __getitem__(self, alpha: Sequence[Permutation]) -> Number:
        try:
            return self.entries[tuple(alpha)]
        except KeyError:
            raise ValueError(f"incomplete table: no entry for {tuple_to_string(alpha)}") from None

    def __contains__(self, alpha) -> bool:
        return tuple(alpha) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for alpha, value in self.entries.items():
            value = complex(value)
            rows.append(
                {"tuple": tuple_to_string(alpha), "re": value.real, "im": value.imag, "stderr": self.stderr.get(alpha)}
            )
        return pd.DataFrame(rows, columns=["tuple", "re", "im", "stderr"])

    def to_dict(self) -> dict:
        entries = []
        for row in self.to_frame().to_dict(orient="records"):
            if row["stderr"] is None or pd.isna(row["stderr"]):
                row.pop("stderr")
            entries.append(row)
        return {"p": self.p, "r": self.r, "word": list(self.word), "mode": self.mode, "entries": entries}

    def to_json(self, path: Union[str, Path, None] = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text: str):
        raw = json.loads(text)
        entries, stderr = {}, {}
        for row in raw["entries"]:
            alpha = parse_tuple(row["tuple"], raw["p"])
            entries[alpha] = complex(row["re"], row["im"])
            if row.get("stderr") is not None:
                stderr[alpha] = float(row["stderr"])
        return cls(p=raw["p"], r=raw["r"], entries=entries, word=tuple(raw.get("word") or ()), mode=raw["mode"], stderr=stderr)


class MomentTable(_TupleTable):
    """phi_alpha values (exact or Monte Carlo means)."""


class CumulantTable(_TupleTable):
    """kappa_alpha values, Möbius-dual to a MomentTable."""


def _transform(source: _TupleTable, targets: Iterable[PermTuple], below: bool, out_cls):
    """
    below=True:  out[beta] = sum_{alpha <= beta} src[alpha] Möb(alpha^-1 beta)
    below=False: out[alpha] = sum_{beta <= alpha} src[beta]
    """
    entries, stderr, samples = {}, {}, {}
    for target in targets:
        terms = [
            (alpha, tuple_mobius(alpha, target) if below else 1)
            for alpha in enumerate_snc_tuple(target)
        ]
        entries[target] = sum((source[alpha] * w for alpha, w in terms), 0)
        if source.samples and all(alpha in source.samples for alpha, _ in terms):
            per_trial = sum(source.samples[alpha] * w for alpha, w in terms)
            samples[target] = per_trial
            stderr[target] = _stderr(per_trial)
        elif source.stderr:
            stderr[target] = math.sqrt(sum((w * source.stderr.get(alpha, 0.0)) ** 2 for alpha, w in terms))
    logger.debug("Transformed %d tuples at p=%d, r=%d", len(entries), source.p, source.r)
    return out_cls(
        p=source.p, r=source.r, entries=entries, word=source.word, mode=source.mode, stderr=stderr, samples=samples
    )


def moments_to_cumulants(m: MomentTable, tuples: Iterable[Sequence[Permutation]] | None = None) -> CumulantTable:
    """kappa_beta = sum_{alpha <= beta} phi_alpha Möb(alpha^-1 beta), for every beta in the table (or in tuples)."""
    targets = [tuple(t) for t in tuples] if tuples is not None else list(m.entries)
    return _transform(m, targets, below=True, out_cls=CumulantTable)


def cumulants_to_moments(k: CumulantTable, tuples: Iterable[Sequence[Permutation]] | None = None) -> MomentTable:
    """phi_alpha = sum_{beta <= alpha} kappa_beta."""
    targets = [tuple(t) for t in tuples] if tuples is not None else list(k.entries)
    return _transform(k, targets, below=False, out_cls=MomentTable)


def is_irreducible(alpha: Sequence[Permutation]) -> bool:
    """The cycle partitions of the legs join to the one-block partition."""
    return tuple_partition(alpha).is_one()


def irreducible_tuples(p: int, r: int) -> list[PermTuple]:
    return [alpha for alpha in all_tuples(p, r) if is_irreducible(alpha)]


def free_cumulants_from_tensor(k: CumulantTable, alpha: Permutation) -> Number:
    """
    kappa~_alpha = sum of kappa_beta over beta in S_NC(alpha)^r whose join,
    taken inside the lattice S_NC(alpha), equals alpha.
    """
    if alpha.p != k.p:
        raise ValueError(f"alpha acts on [{alpha.p}] but the table has order {k.p}")
    total = 0
    for beta in enumerate_snc_tuple((alpha,) * k.r):
        if reduce(lambda a, b: join_snc(a, b, alpha), beta) == alpha:
            total = total + k[beta]
    return total


def _is_mixed(word: Sequence[int]) -> bool:
    return len(set(word)) > 1


def mixed_cumulant_scan(k: CumulantTable, f: Sequence[int] | None = None) -> float:
    """max |kappa_alpha| over irreducible tuples of the table, when the word f mixes labels."""
    f = tuple(f) if f is not None else k.word
    if not _is_mixed(f):
        return 0.0
    values = [abs(complex(v)) for alpha, v in k.entries.items() if is_irreducible(alpha)]
    return max(values, default=0.0)


def mixed_cumulant_rms(tables: Iterable[CumulantTable]) -> float:
    """
    Largest per-trial root-mean-square of a mixed irreducible cumulant over
    Monte Carlo tables with kept samples.
    """
    worst = 0.0
    for k in tables:
        if not _is_mixed(k.word):
            continue
        for alpha, draws in k.samples.items():
            if is_irreducible(alpha):
                worst = max(worst, float(np.sqrt(np.mean(np.abs(draws) ** 2))))
    return worst


def _stderr(values: np.ndarray) -> float:
    values = np.asarray(values)
    if len(values) < 2:
        return 0.0
    var = values.real.var(ddof=1) + (values.imag.var(ddof=1) if np.iscomplexobj(values) else 0.0)
    return float(math.sqrt(var / len(values)))


def _as_family(drawn) -> list[Matrix]:
    return list(drawn) if isinstance(drawn, (list, tuple)) else [drawn]


def _check_tuples(tuples: Sequence[Sequence[Permutation]]) -> tuple[int, int]:
    if not tuples:
        raise ValueError("No tuples requested")
    p, r = tuples[0][0].p, len(tuples[0])
    if any(len(t) != r or any(a.p != p for a in t) for t in tuples):
        raise ValueError("All tuples must share the same order and arity")
    return p, r


def matrix_moment_table(
    family: Union[Matrix, Sequence[Matrix]],
    p: int,
    word: Sequence[int] | None = None,
    tuples: Iterable[Sequence[Permutation]] | None = None,
) -> MomentTable:
    """Exact table of normalized trace invariants of fixed matrices."""
    family = _as_family(family)
    r = family[0].r
    word = tuple(word) if word is not None else (0,) * p
    args = [family[i] for i in word]
    tuples = [tuple(t) for t in tuples] if tuples is not None else all_tuples(p, r)
    entries = {alpha: normalized_trace_invariant(alpha, args) for alpha in tuples}
    return MomentTable(p=p, r=r, entries=entries, word=word, mode=EXACT)


def estimate_tensor_moments(
    sampler: Sampler,
    tuples: Iterable[Sequence[Permutation]],
    trials: int,
    seed: int,
    word: Sequence[int] | None = None,
    threads: int | None = None,
) -> MomentTable:
    """
    Monte Carlo E[tr_alpha(X_{f(1)}, ..., X_{f(p)})]: per-tuple sample means
    and standard errors. Per-trial values are kept so that cumulant standard
    errors come from the same trials.
    """
    if trials < 2:
        raise ValueError(f"Monte Carlo estimation needs at least 2 trials, got {trials}")
    tuples = [tuple(t) for t in tuples]
    p, r = _check_tuples(tuples)
    word = tuple(word) if word is not None else (0,) * p

    def one(trial: int) -> list[complex]:
        family = _as_family(sampler(trial_rng(seed, trial)))
        args = [family[i] for i in word]
        return [normalized_trace_invariant(alpha, args) for alpha in tuples]

    values = np.array(map_trials(one, trials, threads, desc="moments"), dtype=complex)
    entries, stderr, samples = {}, {}, {}
    for col, alpha in enumerate(tuples):
        draws = values[:, col]
        entries[alpha] = complex(draws.mean())
        stderr[alpha] = _stderr(draws)
        samples[alpha] = draws
    logger.info("Estimated %d tuple moments at p=%d, r=%d over %d trials", len(tuples), p, r, trials)
    return MomentTable(p=p, r=r, entries=entries, word=word, mode=MONTE_CARLO, stderr=stderr, samples=samples)


def downward_closure(tuples: Iterable[Sequence[Permutation]]) -> list[PermTuple]:
    """Every tuple below one of the given tuples, in first-seen order."""
    seen: dict[PermTuple, None] = {}
    for beta in tuples:
        for alpha in enumerate_snc_tuple(tuple(beta)):
            seen.setdefault(alpha, None)
    return list(seen)


def estimate_tensor_cumulants(
    sampler: Sampler,
    tuples: Iterable[Sequence[Permutation]],
    trials: int,
    seed: int,
    word: Sequence[int] | None = None,
    threads: int | None = None,
) -> CumulantTable:
    """Plug-in cumulants for the requested tuples from one Monte Carlo moment run."""
    tuples = [tuple(t) for t in tuples]
    m = estimate_tensor_moments(sampler, downward_closure(tuples), trials, seed, word=word, threads=threads)
    return moments_to_cumulants(m, tuples)


def vanishing_condition_set(alpha: Sequence[Permutation], f: Sequence) -> list[PermTuple]:
    """
    All beta with alpha^{ker f} <= beta <= alpha whose joint cycle partition
    refines ker f; alpha^{ker f} is its minimum.
    """
    alpha = tuple(alpha)
    pi = kernel_partition(f)
    if pi.p != alpha[0].p:
        raise ValueError(f"Labels have length {pi.p}, expected {alpha[0].p}")
    floor = tuple(alpha_over_pi(a, pi) for a in alpha)
    return [
        beta
        for beta in enumerate_snc_tuple(alpha)
        if tuple_leq(floor, beta) and tuple_partition(beta).leq(pi)
    ]


def tensor_haar_moment(alpha: Sequence[Permutation], eps: Sequence[int]) -> int:
    """
    Limit of phi_alpha(u^{eps(1)}, ..., u^{eps(p)}) for a tensor Haar unitary:
    1 when every cycle of every leg is balanced, 0 otherwise.
    """
    if any(e not in (1, -1) for e in eps):
        raise ValueError(f"Exponents must be +1 or -1, got {list(eps)}")
    if len(eps) != alpha[0].p:
        raise ValueError(f"Need {alpha[0].p} exponents, got {len(eps)}")
    return int(all(sum(eps[i] for i in cyc) == 0 for a in alpha for cyc in a.cycles()))


def transpose_tuple(alpha: Sequence[Permutation], t: Sequence[int]) -> PermTuple:
    """alpha^t: legs with t_s = -1 are inverted."""
    if len(t) != len(alpha) or any(s not in (1, -1) for s in t):
        raise ValueError(f"Partial transpose vector {list(t)} does not match r={len(alpha)}")
    return tuple(a if s == 1 else a.inverse() for a, s in zip(alpha, t))

