# src/rmt.py
"""
Seeded random matrix samplers.

Every draw is a pure function of (spec, trial): the generator for trial t
is Philox seeded by SeedSequence(spec.seed, spawn_key=(t,)), so results do
not depend on how trials are scheduled across threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Callable, Optional, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, root_validator, validator
from tqdm import tqdm

from src.config import PROGRESS, THREADS
from src.perm import Permutation, all_permutations
from src.pairing import enumerate_pairings
from src.tensors import EmbeddedMatrix, Matrix, MultipartiteMatrix

logger = logging.getLogger(__name__)

T = TypeVar("T")

NORMALIZATIONS = {
    "gue": "(A + A*)/sqrt(2) / sqrt(D), A iid standard complex Gaussian (E|a|^2 = 1); E tr X^2 = 1",
    "goe": "(A + A^T)/sqrt(2) / sqrt(D), A iid N(0,1); E tr X^2 = (D+1)/D",
    "ginibre_complex": "iid standard complex Gaussian / sqrt(D)",
    "ginibre_real": "iid N(0,1) / sqrt(D)",
    "wishart": "G G*/N, G of size D x N iid standard complex Gaussian; E tr W = 1, E tr W^2 = 1 + D/N",
    "haar_unitary": "QR of complex Ginibre, columns rescaled by the phases of diag(R)",
    "haar_orthogonal": "QR of real Ginibre, columns rescaled by the signs of diag(R)",
    "local_haar": "tensor product of independent per-leg Haar draws",
    "tensor_gue": "GUE of size D_I on legs I, identity elsewhere",
    "index_order": "big-endian mixed radix, leg 1 slowest",
}


class EnsembleKind(str, Enum):
    GUE = "gue"
    GOE = "goe"
    GINIBRE_COMPLEX = "ginibre_complex"
    GINIBRE_REAL = "ginibre_real"
    WISHART = "wishart"
    HAAR_UNITARY = "haar_unitary"
    HAAR_ORTHOGONAL = "haar_orthogonal"
    LOCAL_HAAR_UNITARY = "local_haar_unitary"
    LOCAL_HAAR_ORTHOGONAL = "local_haar_orthogonal"
    TENSOR_GUE = "tensor_gue"
    DETERMINISTIC = "deterministic"


class DeterministicBase(str, Enum):
    DIAGONAL_GRID = "diagonal_grid"
    RANK_ONE = "rank_one"


class EnsembleSpec(BaseModel):
    """
    One random matrix ensemble on C^{d_1} ⊗ ... ⊗ C^{d_r}.

    ``legs`` are 1-based and only used by tensor_gue. ``aspect`` is c = D/N
    for Wishart; ``columns`` overrides N directly. With ``local_conjugation``
    every draw is conjugated by an independent local Haar unitary.
    """

    kind: EnsembleKind
    dims: list[int]
    seed: int = 0
    legs: Optional[list[int]] = None
    aspect: float = 1.0
    columns: Optional[int] = None
    base: Optional[DeterministicBase] = None
    local_conjugation: bool = False

    class Config:
        use_enum_values = True

    @validator("dims")
    def dims_positive(cls, v):
        if not v or any(d < 1 for d in v):
            raise ValueError(f"dims must be nonempty and positive, got {v}")
        return v

    @validator("aspect")
    def aspect_positive(cls, v):
        if v <= 0:
            raise ValueError("aspect must be positive")
        return v

    @validator("columns")
    def columns_positive(cls, v):
        if v is not None and v < 1:
            raise ValueError("columns must be positive")
        return v

    @root_validator(skip_on_failure=True)
    def kind_specific(cls, values):
        kind, dims, legs = values.get("kind"), values.get("dims"), values.get("legs")
        if kind == EnsembleKind.TENSOR_GUE.value:
            if not legs:
                raise ValueError("tensor_gue needs a nonempty set of legs")
            if len(set(legs)) != len(legs) or any(not 1 <= s <= len(dims) for s in legs):
                raise ValueError(f"legs {legs} must be distinct and within 1..{len(dims)}")
        if kind == EnsembleKind.DETERMINISTIC.value and values.get("base") is None:
            values["base"] = DeterministicBase.DIAGONAL_GRID.value
        return values

    @property
    def D(self) -> int:
        return math.prod(self.dims)

    @property
    def n_columns(self) -> int:
        if self.columns is not None:
            return self.columns
        return max(1, round(self.D / self.aspect))


# ---------------------------------------------------------------------------
# Generators and trial maps


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for the spawn key under seed, e.g. (trial,) or (N, trial)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def map_trials(fn: Callable[[int], T], trials: int, threads: int | None = None, desc: str | None = None) -> list[T]:
    """fn(0), ..., fn(trials-1) on a thread pool; results come back in trial order."""
    threads = THREADS if threads is None else max(1, threads)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        results = executor.map(fn, range(trials))
        return list(tqdm(results, total=trials, desc=desc, disable=not PROGRESS))


# ---------------------------------------------------------------------------
# Elementary draws


def standard_complex_normal(shape, rng: np.random.Generator) -> np.ndarray:
    """Entries with E|z|^2 = 1."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def gue(n: int, rng: np.random.Generator) -> np.ndarray:
    A = standard_complex_normal((n, n), rng)
    return (A + A.conj().T) / math.sqrt(2) / math.sqrt(n)


def goe(n: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return (A + A.T) / math.sqrt(2) / math.sqrt(n)


def haar_unitary(n: int, rng: np.random.Generator, phase_correction: bool = True) -> np.ndarray:
    A = standard_complex_normal((n, n), rng)
    Q, R = np.linalg.qr(A)
    if phase_correction:
        # Q' = Q L with L = diag(phase(diag R)) makes the decomposition unique
        L = np.diagonal(R)
        Q = Q * (L / np.abs(L))
    return Q


def haar_orthogonal(n: int, rng: np.random.Generator, sign_correction: bool = True) -> np.ndarray:
    A = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(A)
    if sign_correction:
        L = np.diagonal(R)
        Q = Q * np.sign(L)
    return Q


def local_haar(dims: Sequence[int], rng: np.random.Generator, orthogonal: bool = False) -> list[np.ndarray]:
    """One independent Haar matrix per leg."""
    draw_one = haar_orthogonal if orthogonal else haar_unitary
    return [draw_one(d, rng) for d in dims]


def conjugate(X: Matrix, unitaries: Sequence[np.ndarray]) -> Matrix:
    """(⊗_s U_s) X (⊗_s U_s)*; embedded matrices only see the unitaries on their legs."""
    if len(unitaries) != X.r:
        raise ValueError(f"{len(unitaries)} unitaries for {X.r} legs")
    if isinstance(X, EmbeddedMatrix):
        if not X.legs:
            return X
        U = _kron([unitaries[s] for s in X.legs])
        return EmbeddedMatrix(X.dims, X.legs, U @ X.block @ U.conj().T)
    U = _kron(unitaries)
    return MultipartiteMatrix(X.dims, U @ X.data @ U.conj().T)


def _kron(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.asarray(factors[0])
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def deterministic_matrix(dims: Sequence[int], base: str) -> MultipartiteMatrix:
    D = math.prod(dims)
    if base == DeterministicBase.DIAGONAL_GRID.value:
        # eigenvalues 2(k+1)/(D+1), normalized trace 1
        return MultipartiteMatrix(tuple(dims), np.diag(2.0 * np.arange(1, D + 1) / (D + 1)))
    if base == DeterministicBase.RANK_ONE.value:
        v = np.ones(D) / math.sqrt(D)
        return MultipartiteMatrix(tuple(dims), np.outer(v, v))
    raise ValueError(f"Unknown deterministic base {base!r}")


def draw(spec: EnsembleSpec, rng: np.random.Generator) -> Matrix:
    """One draw of the ensemble from an explicit generator."""
    dims, D, kind = tuple(spec.dims), spec.D, spec.kind
    if kind == EnsembleKind.GUE.value:
        X: Matrix = MultipartiteMatrix(dims, gue(D, rng))
    elif kind == EnsembleKind.GOE.value:
        X = MultipartiteMatrix(dims, goe(D, rng))
    elif kind == EnsembleKind.GINIBRE_COMPLEX.value:
        X = MultipartiteMatrix(dims, standard_complex_normal((D, D), rng) / math.sqrt(D))
    elif kind == EnsembleKind.GINIBRE_REAL.value:
        X = MultipartiteMatrix(dims, rng.standard_normal((D, D)) / math.sqrt(D))
    elif kind == EnsembleKind.WISHART.value:
        N = spec.n_columns
        G = standard_complex_normal((D, N), rng)
        X = MultipartiteMatrix(dims, G @ G.conj().T / N)
    elif kind == EnsembleKind.HAAR_UNITARY.value:
        X = MultipartiteMatrix(dims, haar_unitary(D, rng))
    elif kind == EnsembleKind.HAAR_ORTHOGONAL.value:
        X = MultipartiteMatrix(dims, haar_orthogonal(D, rng))
    elif kind == EnsembleKind.LOCAL_HAAR_UNITARY.value:
        X = MultipartiteMatrix.kron(local_haar(dims, rng))
    elif kind == EnsembleKind.LOCAL_HAAR_ORTHOGONAL.value:
        X = MultipartiteMatrix.kron(local_haar(dims, rng, orthogonal=True))
    elif kind == EnsembleKind.TENSOR_GUE.value:
        legs = tuple(s - 1 for s in sorted(spec.legs))
        D_I = math.prod(dims[s] for s in legs)
        X = EmbeddedMatrix(dims, legs, gue(D_I, rng))
    elif kind == EnsembleKind.DETERMINISTIC.value:
        X = deterministic_matrix(dims, spec.base)
    else:
        raise ValueError(f"Unknown ensemble kind {kind!r}")
    if spec.local_conjugation:
        X = conjugate(X, local_haar(dims, rng))
    return X


def sample(spec: EnsembleSpec, trial: int) -> Matrix:
    return draw(spec, trial_rng(spec.seed, trial))


def sample_family(specs: Sequence[EnsembleSpec], trial: int) -> list[Matrix]:
    """Independent draws, one per spec, each deterministic in (its seed, trial)."""
    sizes = {spec.D for spec in specs}
    if len(sizes) > 1:
        raise ValueError(f"Family members act on spaces of different total dimension: {sorted(sizes)}")
    dims = {tuple(spec.dims) for spec in specs}
    if len(dims) > 1:
        raise ValueError(f"Family members have different leg dimensions: {sorted(dims)}")
    return [sample(spec, trial) for spec in specs]


# ---------------------------------------------------------------------------
# Exact finite-dimensional Gaussian moments


def wishart_tensor_moment(alpha: Sequence[Permutation], dims: Sequence[int], N: int) -> float:
    """
    E tr_alpha(W, ..., W) for W = G G*/N, G of size D x N with E|g|^2 = 1:

        sum_{sigma in S_p} N^{#sigma - p} prod_s d_s^{#(alpha_s^-1 sigma)} / prod_s d_s^{#alpha_s}
    """
    p = alpha[0].p
    total = 0.0
    for sigma in all_permutations(p):
        term = float(N) ** (sigma.num_cycles - p)
        for a, d in zip(alpha, dims):
            term *= float(d) ** ((a.inverse() * sigma).num_cycles - a.num_cycles)
        total += term
    return total


def gue_tensor_moment(alpha: Sequence[Permutation], dims: Sequence[int], legs: Sequence[int]) -> float:
    """
    E tr_alpha(X, ..., X) for the tensor GUE on the 1-based legs I: a Wick sum over
    fixed-point-free involutions sigma of [p],

        D_I^{-p/2} sum_sigma prod_{s in I} d_s^{#(alpha_s sigma) - #alpha_s}
    """
    p = alpha[0].p
    if p % 2:
        return 0.0
    legs0 = [s - 1 for s in legs]
    D_I = math.prod(dims[s] for s in legs0)
    total = 0.0
    for pairing in enumerate_pairings(p // 2):
        # a pairing of [±(p/2)] read as a fixed-point-free involution of [p]
        sigma = Permutation(pairing.partner)
        term = 1.0
        for s in legs0:
            a = alpha[s]
            term *= float(dims[s]) ** ((a * sigma).num_cycles - a.num_cycles)
        total += term
    return total / float(D_I) ** (p / 2)


def marchenko_pastur_free_cumulants(c: float, n: int) -> list[float]:
    """kappa_k = c^{k-1} for W = G G*/N with c = D/N."""
    return [c ** (k - 1) for k in range(1, n + 1)]
