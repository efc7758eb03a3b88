# src/freeconv.py
"""
Semicircle utilities, convolution by sampling, and the central limit law of
tensor free sums.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from numbers import Number
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.config import DENSE_MODEL_MAX_D, NC12_MAX_P, EnumerationLimitError
from src.pairing import enumerate_pairings
from src.perm import (
    PermTuple,
    Permutation,
    catalan,
    enumerate_snc,
    enumerate_snc_tuple,
    join_snc,
    mobius,
    restrict,
    tuple_partition,
)
from src.rmt import gue, haar_unitary, map_trials, trial_rng
from src.tensors import Matrix, MultipartiteMatrix, as_dense

logger = logging.getLogger(__name__)

MIN_MODEL_D = 8

CumulantSource = Union[Mapping[PermTuple, Number], Callable[[PermTuple], Number]]


@dataclass(frozen=True)
class MomentSequence:
    """m_1, ..., m_pmax (m_0 = 1 implicit), optionally with standard errors."""

    moments: tuple[float, ...]
    stderr: Optional[tuple[float, ...]] = None

    def __getitem__(self, p: int) -> float:
        if p == 0:
            return 1.0
        return self.moments[p - 1]

    @property
    def p_max(self) -> int:
        return len(self.moments)

    def se(self, p: int) -> float:
        return 0.0 if self.stderr is None else self.stderr[p - 1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "p": range(1, self.p_max + 1),
                "moment": self.moments,
                "stderr": self.stderr if self.stderr is not None else [None] * self.p_max,
            }
        )


@dataclass
class SpectralSample:
    """Pooled eigenvalues; consecutive runs of group_size values come from one matrix."""

    values: np.ndarray
    group_size: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Spectral sample contains non-finite values")
        if self.group_size < 1 or len(self.values) % self.group_size:
            raise ValueError(f"{len(self.values)} values do not split into groups of {self.group_size}")

    def __len__(self) -> int:
        return len(self.values)

    def groups(self) -> np.ndarray:
        return self.values.reshape(-1, self.group_size)

    def moments(self, p_max: int) -> MomentSequence:
        """Empirical moments; standard errors treat each matrix as one trial."""
        per_group = np.stack([np.mean(self.groups() ** p, axis=1) for p in range(1, p_max + 1)], axis=1)
        n = per_group.shape[0]
        stderr = per_group.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(p_max, np.nan)
        return MomentSequence(tuple(per_group.mean(axis=0).tolist()), tuple(stderr.tolist()))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({"eigenvalue": self.values}).to_csv(path, index=False, float_format="%.17g")
        sidecar = path.with_name(path.name + ".json")
        sidecar.write_text(json.dumps({"group_size": self.group_size, **self.meta}, indent=2, default=str))
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "SpectralSample":
        path = Path(path)
        values = pd.read_csv(path, float_precision="round_trip")["eigenvalue"].to_numpy()
        sidecar = path.with_name(path.name + ".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        group_size = int(meta.pop("group_size", 1))
        return cls(values, group_size, meta)


# ---------------------------------------------------------------------------
# Semicircle


def semicircle_moments(p_max: int, mean: float = 0.0, variance: float = 1.0) -> MomentSequence:
    """Moments of mean + sqrt(variance)·s for a standard semicircular s."""
    if variance < 0:
        raise ValueError(f"Variance must be nonnegative, got {variance}")
    central = [variance ** (k // 2) * catalan(k // 2) if k % 2 == 0 else 0.0 for k in range(p_max + 1)]
    moments = [
        sum(math.comb(p, k) * central[k] * mean ** (p - k) for k in range(p + 1)) for p in range(1, p_max + 1)
    ]
    return MomentSequence(tuple(float(m) for m in moments))


def sample_semicircle(n: int, rng: np.random.Generator, mean: float = 0.0, variance: float = 1.0) -> np.ndarray:
    """Exact variates: 4·Beta(3/2, 3/2) - 2 is standard semicircular on [-2, 2]."""
    if variance < 0:
        raise ValueError(f"Variance must be nonnegative, got {variance}")
    return mean + math.sqrt(variance) * (4.0 * rng.beta(1.5, 1.5, size=n) - 2.0)


# ---------------------------------------------------------------------------
# Free cumulants <-> moments (one leg)


def free_cumulants_to_moments(kappa: Sequence[Number], p_max: int | None = None) -> MomentSequence:
    """m_p = sum over NC(p) of the multiplicative free cumulants; kappa[0] is kappa_1."""
    p_max = len(kappa) if p_max is None else p_max
    if p_max > len(kappa):
        raise ValueError(f"Need {p_max} free cumulants, got {len(kappa)}")
    moments = []
    for p in range(1, p_max + 1):
        total = sum(
            math.prod(kappa[len(c) - 1] for c in sigma.cycles()) for sigma in enumerate_snc(Permutation.full_cycle(p))
        )
        moments.append(total)
    return MomentSequence(tuple(moments))


def moments_to_free_cumulants(moments: Union[MomentSequence, Sequence[Number]], p_max: int | None = None) -> list:
    """kappa_p = sum over sigma in NC(p) of m_sigma Möb(sigma^-1 gamma_p)."""
    m = list(moments.moments) if isinstance(moments, MomentSequence) else list(moments)
    p_max = len(m) if p_max is None else p_max
    out = []
    for p in range(1, p_max + 1):
        gamma = Permutation.full_cycle(p)
        out.append(
            sum(
                math.prod(m[len(c) - 1] for c in sigma.cycles()) * mobius(sigma.inverse() * gamma)
                for sigma in enumerate_snc(gamma)
            )
        )
    return out


# ---------------------------------------------------------------------------
# Tensor central limit law


def nc12_partitions(p: int) -> list[Permutation]:
    """Non-crossing partitions of [p] with blocks of size 1 or 2, as involutions."""
    if p > NC12_MAX_P:
        raise EnumerationLimitError(f"NC_(1,2)({p}) exceeds the cap p <= {NC12_MAX_P}")

    def rec(lo: int, hi: int) -> Iterator[list[tuple[int, int]]]:
        if lo >= hi:
            yield []
            return
        for rest in rec(lo + 1, hi):
            yield rest
        for j in range(lo + 1, hi):
            for inner in rec(lo + 1, j):
                for outer in rec(j + 1, hi):
                    yield [(lo, j)] + inner + outer

    out = []
    for pairs in rec(0, p):
        images = list(range(p))
        for i, j in pairs:
            images[i], images[j] = j, i
        out.append(Permutation(tuple(images)))
    return out


def _lookup(kappa: CumulantSource, alpha: PermTuple) -> Number:
    if callable(kappa):
        return kappa(alpha)
    try:
        return kappa[alpha]
    except KeyError:
        raise ValueError(f"incomplete cumulant table: no entry for {';'.join(map(str, alpha))}") from None


def _pattern_tuple(mask: int, r: int) -> PermTuple:
    g, e = Permutation.full_cycle(2), Permutation.identity(2)
    return tuple(g if mask >> s & 1 else e for s in range(r))


def _order_two_weights(kappa: CumulantSource, r: int) -> dict[int, Number]:
    weights = {}
    for mask in range(1, 2**r):
        alpha = _pattern_tuple(mask, r)
        weights[mask] = kappa(alpha) if callable(kappa) else kappa.get(alpha, 0.0)
    return weights


def _crosses(a: tuple[int, int], b: tuple[int, int]) -> bool:
    (i, j), (k, l) = sorted(a), sorted(b)
    return i < k < j < l or k < i < l < j


def _colorings(adjacent: list[set[int]], weights: dict[int, Number]) -> Number:
    """Sum over leg masks per pair, crossing pairs sharing no leg, of the product of weights."""
    n = len(adjacent)
    masks = [m for m, w in weights.items() if w != 0]
    chosen = [0] * n

    def rec(v: int) -> Number:
        if v == n:
            return 1
        total = 0
        for m in masks:
            if all(chosen[u] & m == 0 for u in adjacent[v] if u < v):
                chosen[v] = m
                total += weights[m] * rec(v + 1)
        chosen[v] = 0
        return total

    return rec(0)


def _connected(adjacent: list[set[int]]) -> bool:
    seen, stack = {0}, [0]
    while stack:
        for u in adjacent[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == len(adjacent)


def clt_limit_free_cumulants(kappa: CumulantSource, r: int, p: int) -> Number:
    """
    Limit free cumulant kappa~_p of the normalized sum of identically tensor
    distributed, tensor free elements whose order-two tensor cumulants are kappa
    (keyed by the tuples of (S_2)^r other than the identity; missing keys are 0).

    A contributing tuple is a pair partition whose pairs carry the legs on which
    they are transpositions; each leg must stay non-crossing and the crossing
    graph of the pairs must be connected.
    """
    if p % 2:
        return 0
    if p > NC12_MAX_P:
        raise EnumerationLimitError(f"CLT limit cumulants beyond p = {NC12_MAX_P}")
    weights = _order_two_weights(kappa, r)
    total = 0
    for pairing in enumerate_pairings(p // 2, max_p=NC12_MAX_P // 2):
        pairs = [(i, j) for i, j in enumerate(pairing.partner) if i < j]
        adjacent = [{b for b in range(len(pairs)) if b != a and _crosses(pairs[a], pairs[b])} for a in range(len(pairs))]
        if _connected(adjacent):
            total += _colorings(adjacent, weights)
    logger.debug("CLT limit cumulant at p=%d, r=%d: %s", p, r, total)
    return total


def clt_limit_free_cumulants_oracle(kappa: CumulantSource, r: int, p: int) -> Number:
    """Exhaustive filter over NC_(1,2)(p)^r; the reference for clt_limit_free_cumulants."""
    gamma = Permutation.full_cycle(p)
    weights = _order_two_weights(kappa, r)
    total = 0
    for alpha in itertools.product(nc12_partitions(p), repeat=r):
        joint = tuple_partition(alpha)
        if not joint.is_pair_partition():
            continue
        if reduce(lambda a, b: join_snc(a, b, gamma), alpha) != gamma:
            continue
        term = 1
        for i, j in joint.blocks:
            term *= weights[sum(1 << s for s, a in enumerate(alpha) if a(i) == j)]
        total += term
    return total


def clt_limit_moments(kappa: CumulantSource, r: int, p_max: int) -> MomentSequence:
    cumulants = [clt_limit_free_cumulants(kappa, r, p) for p in range(1, p_max + 1)]
    return free_cumulants_to_moments(cumulants)


def clt_limit_moments_bipartite(k2: Sequence[float], p_max: int) -> MomentSequence:
    """k2 = (kappa_(gamma, id), kappa_(id, gamma), kappa_(gamma, gamma)), all nonnegative."""
    k10, k01, k11 = _check_triple(k2)
    g, e = Permutation.full_cycle(2), Permutation.identity(2)
    return clt_limit_moments({(g, e): k10, (e, g): k01, (g, g): k11}, 2, p_max)


def clt_finite_n_moments(kappa: CumulantSource, r: int, p_max: int, N: int) -> MomentSequence:
    """
    Predicted moments of (x_1 + ... + x_N - N phi(x_1)) / sqrt(N): tensor
    cumulants are additive, so an irreducible component of order q >= 2
    contributes N^{1 - q/2} kappa(x_1) and singletons contribute 0.
    """
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    moments = []
    for p in range(1, p_max + 1):
        total = 0
        for beta in enumerate_snc_tuple((Permutation.full_cycle(p),) * r):
            term = 1
            for block in tuple_partition(beta).blocks:
                q = len(block)
                if q == 1:
                    term = 0
                    break
                term *= float(N) ** (1 - q / 2) * _lookup(kappa, tuple(restrict(b, block) for b in beta))
            total += term
        moments.append(total)
    return MomentSequence(tuple(moments))


def product_model_tensor_cumulant(alpha: Sequence[Permutation], lambdas: Sequence[float], sigmas: Sequence[float]) -> float:
    """
    kappa_alpha(a_1 ⊗ ... ⊗ a_r) with a_s = lambda_s + sigma_s·(semicircular):
    product over legs and cycles of the free cumulants lambda, sigma^2, 0, 0, ...
    """
    out = 1.0
    for a, lam, sig in zip(alpha, lambdas, sigmas):
        for cyc in a.cycles():
            out *= lam if len(cyc) == 1 else (sig**2 if len(cyc) == 2 else 0.0)
    return out


def product_model_cumulants(lambdas: Sequence[float], sigmas: Sequence[float]) -> dict[PermTuple, float]:
    """Order-two tensor cumulants prod_s sigma_s^{2|alpha_s|} lambda_s^{2(1-|alpha_s|)}."""
    if len(lambdas) != len(sigmas):
        raise ValueError("lambdas and sigmas must have one entry per leg")
    r = len(lambdas)
    return {
        _pattern_tuple(mask, r): product_model_tensor_cumulant(_pattern_tuple(mask, r), lambdas, sigmas)
        for mask in range(1, 2**r)
    }


# ---------------------------------------------------------------------------
# Sampling the limit law and convolutions


def _check_triple(k2: Sequence[float]) -> tuple[float, float, float]:
    if len(k2) != 3:
        raise ValueError(f"Expected three order-two cumulants, got {len(k2)}")
    if any(k < 0 for k in k2):
        raise ValueError(f"Order-two tensor cumulants must be nonnegative, got {tuple(k2)}")
    return tuple(float(k) for k in k2)


def sample_mu_infinity(
    k2: Sequence[float],
    d: int,
    n_samples: int,
    seed: int,
    method: str | None = None,
    threads: int | None = None,
) -> SpectralSample:
    """
    Eigenvalues of sqrt(k10)·G1 ⊗ I + sqrt(k01)·I ⊗ G2 + sqrt(k11)·G12 on C^d ⊗ C^d
    ("tensor"), or of diag(sqrt(k10)·s + sqrt(k01)·s') + sqrt(k11)·G on C^d with exact
    semicircle diagonals ("convolution"). Whole matrices are kept, so at least
    n_samples values are returned.
    """
    k10, k01, k11 = _check_triple(k2)
    if d < MIN_MODEL_D:
        raise ValueError(f"Matrix model needs d >= {MIN_MODEL_D}, got {d}")
    method = method or ("tensor" if d * d <= DENSE_MODEL_MAX_D else "convolution")
    if method == "tensor" and d * d > DENSE_MODEL_MAX_D:
        raise EnumerationLimitError(f"Dense tensor model of size {d * d} exceeds {DENSE_MODEL_MAX_D}")
    if method not in ("tensor", "convolution"):
        raise ValueError(f"Unknown method {method!r}")
    size = d * d if method == "tensor" else d
    matrices = max(2, math.ceil(n_samples / size))
    eye = np.eye(d)

    def one(trial: int) -> np.ndarray:
        rng = trial_rng(seed, trial)
        if method == "tensor":
            H = (
                math.sqrt(k10) * np.kron(gue(d, rng), eye)
                + math.sqrt(k01) * np.kron(eye, gue(d, rng))
                + math.sqrt(k11) * gue(d * d, rng)
            )
        else:
            diagonal = sample_semicircle(d, rng, variance=k10) + sample_semicircle(d, rng, variance=k01)
            H = np.diag(diagonal) + math.sqrt(k11) * gue(d, rng)
        return np.linalg.eigvalsh(H)

    values = np.concatenate(map_trials(one, matrices, threads, desc="mu_infinity"))
    meta = {"source": "mu_infinity", "k2": [k10, k01, k11], "d": d, "method": method, "seed": seed}
    logger.info("Sampled %d eigenvalues of the limit law (%s, d=%d)", len(values), method, d)
    return SpectralSample(values, size, meta)


def free_convolve_samples(
    a: SpectralSample,
    b: SpectralSample,
    d: int,
    seed: int,
    matrices: int | None = None,
    threads: int | None = None,
) -> SpectralSample:
    """Eigenvalues of A + U B U* with A, B diagonal resamples of a, b and U Haar unitary."""
    if len(a) < d or len(b) < d:
        raise ValueError(f"Need at least d={d} samples on each side, got {len(a)} and {len(b)}")
    matrices = matrices or max(2, min(len(a), len(b)) // d)

    def one(trial: int) -> np.ndarray:
        rng = trial_rng(seed, trial)
        A = rng.choice(a.values, size=d, replace=False)
        B = rng.choice(b.values, size=d, replace=False)
        U = haar_unitary(d, rng)
        return np.linalg.eigvalsh(np.diag(A) + (U * B) @ U.conj().T)

    values = np.concatenate(map_trials(one, matrices, threads, desc="free convolution"))
    meta = {"source": "free_convolution", "d": d, "seed": seed, "inputs": [a.meta.get("source"), b.meta.get("source")]}
    return SpectralSample(values, d, meta)


def clt_partial_sums(
    sampler: Callable[[np.random.Generator], Matrix],
    N_list: Sequence[int],
    trials: int,
    seed: int,
    mean: float = 0.0,
    threads: int | None = None,
) -> dict[int, SpectralSample]:
    """
    For each N, eigenvalues of (x_1 + ... + x_N - N·mean) / sqrt(N) with x_i
    independent draws of sampler; one matrix per trial.
    """
    if trials < 2:
        raise ValueError(f"Need at least 2 trials, got {trials}")
    out = {}
    for N in N_list:
        if N < 1:
            raise ValueError(f"N must be positive, got {N}")

        def one(trial: int, N: int = N) -> np.ndarray:
            rng = trial_rng(seed, N, trial)
            total = as_dense(sampler(rng)).data.copy()
            for _ in range(N - 1):
                total += as_dense(sampler(rng)).data
            total -= N * mean * np.eye(total.shape[0])
            return np.linalg.eigvalsh(total / math.sqrt(N))

        values = np.stack(map_trials(one, trials, threads, desc=f"clt N={N}"))
        out[N] = SpectralSample(values, values.shape[1], {"source": "clt_partial_sum", "N": N, "seed": seed})
        logger.info("Partial sums at N=%d: %d trials", N, trials)
    return out


def product_model_sampler(lambdas: Sequence[float], sigmas: Sequence[float], d: int) -> Callable[[np.random.Generator], MultipartiteMatrix]:
    """x = ⊗_s (lambda_s I + sigma_s G_s) with independent normalized GUE G_s."""

    def draw(rng: np.random.Generator) -> MultipartiteMatrix:
        return MultipartiteMatrix.kron([lam * np.eye(d) + sig * gue(d, rng) for lam, sig in zip(lambdas, sigmas)])

    return draw
