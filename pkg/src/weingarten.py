# src/weingarten.py
"""
Unitary and orthogonal Weingarten functions at finite d, their large-d
asymptotics, Haar moment formulas and the closed-form two-fold twirls.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import sympy
from scipy.stats import norm

from src.pairing import Pairing, enumerate_pairings, join_block_count
from src.perm import Partition, Permutation, all_permutations, catalan, mobius
from src.rmt import haar_orthogonal, haar_unitary, map_trials, trial_rng
from src.tensors import MultipartiteMatrix

logger = logging.getLogger(__name__)

EXACT_MAX_P = 4
MAX_CONDITION = 1e12


def _check_order(p: int, d: int) -> None:
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    if d < p:
        raise ValueError(f"Weingarten inversion needs d >= p, got d={d}, p={p}")


def _exact_solve(gram: list[list[int]], rhs: list[int]) -> list[Fraction]:
    solution = sympy.Matrix(gram).LUsolve(sympy.Matrix(rhs))
    return [Fraction(int(sympy.fraction(x)[0]), int(sympy.fraction(x)[1])) for x in solution]


def _float_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise RuntimeError(f"Gram matrix is numerically singular (condition number {cond:.3g})")
    logger.debug("Gram matrix of size %d, condition number %.3g", gram.shape[0], cond)
    return np.linalg.solve(gram, rhs)


@dataclass(frozen=True)
class UnitaryWgTable:
    p: int
    d: int
    values: dict[Permutation, float]
    exact: Optional[dict[Permutation, Fraction]] = None

    def __call__(self, sigma: Permutation) -> float:
        return self.values[sigma]

    def by_cycle_type(self) -> dict[tuple[int, ...], float]:
        out: dict[tuple[int, ...], float] = {}
        for sigma, value in self.values.items():
            out.setdefault(sigma.cycle_type(), value)
        return out

    def class_spread(self) -> float:
        """Largest relative spread of values inside one conjugacy class."""
        groups: dict[tuple[int, ...], list[float]] = {}
        for sigma, value in self.values.items():
            groups.setdefault(sigma.cycle_type(), []).append(value)
        spread = 0.0
        for vals in groups.values():
            scale = max(abs(v) for v in vals) or 1.0
            spread = max(spread, (max(vals) - min(vals)) / scale)
        return spread

    def convolution_residual(self) -> float:
        """max_tau |sum_sigma Wg(sigma) d^{#(sigma^-1 tau)} - [tau = id]|."""
        perms = list(self.values)
        worst = 0.0
        for tau in perms:
            total = sum(self.values[s] * float(self.d) ** (s.inverse() * tau).num_cycles for s in perms)
            worst = max(worst, abs(total - (1.0 if tau.is_identity() else 0.0)))
        return worst

    def entries(self) -> list[dict]:
        return [{"key": str(s), "value": v} for s, v in self.values.items()]


@dataclass(frozen=True, eq=False)
class OrthogonalWgTable:
    p: int
    d: int
    pairings: list[Pairing]
    matrix: np.ndarray
    exact: Optional[list[list[Fraction]]] = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index.update({pi: i for i, pi in enumerate(self.pairings)})

    def __call__(self, pi: Pairing, rho: Pairing) -> float:
        return float(self.matrix[self._index[pi], self._index[rho]])

    def gram(self) -> np.ndarray:
        return np.array(
            [[float(self.d) ** join_block_count(a, b) for b in self.pairings] for a in self.pairings]
        )

    def inverse_residual(self) -> float:
        """max |Psi Wg - I|."""
        return float(np.max(np.abs(self.gram() @ self.matrix - np.eye(len(self.pairings)))))

    def entries(self) -> list[dict]:
        return [
            {"key": f"{a};{b}", "value": float(self.matrix[i, j])}
            for i, a in enumerate(self.pairings)
            for j, b in enumerate(self.pairings)
        ]


def unitary_wg(p: int, d: int, exact: bool = False) -> UnitaryWgTable:
    """Invert G[sigma, tau] = d^{#(sigma^-1 tau)} and read off the identity column."""
    _check_order(p, d)
    perms = all_permutations(p)
    exponents = [[(s.inverse() * t).num_cycles for t in perms] for s in perms]
    ident = next(i for i, s in enumerate(perms) if s.is_identity())
    rhs = [1 if i == ident else 0 for i in range(len(perms))]
    exact_values = None
    if exact:
        if p > EXACT_MAX_P:
            raise ValueError(f"Exact rational inversion is limited to p <= {EXACT_MAX_P}")
        solution = _exact_solve([[d**e for e in row] for row in exponents], rhs)
        exact_values = dict(zip(perms, solution))
        values = {s: float(x) for s, x in exact_values.items()}
    else:
        gram = float(d) ** np.array(exponents, dtype=float)
        solution = _float_solve(gram, np.array(rhs, dtype=float))
        values = dict(zip(perms, solution.tolist()))
    return UnitaryWgTable(p=p, d=d, values=values, exact=exact_values)


def orthogonal_wg(p: int, d: int, exact: bool = False) -> OrthogonalWgTable:
    """Invert Psi[pi, rho] = d^{#(pi ∨ rho)} over the pairings of [±p]."""
    _check_order(p, d)
    pairings = enumerate_pairings(p)
    exponents = [[join_block_count(a, b) for b in pairings] for a in pairings]
    n = len(pairings)
    exact_matrix = None
    if exact:
        if p > EXACT_MAX_P:
            raise ValueError(f"Exact rational inversion is limited to p <= {EXACT_MAX_P}")
        inverse = sympy.Matrix([[d**e for e in row] for row in exponents]).inv()
        exact_matrix = [[Fraction(int(sympy.fraction(inverse[i, j])[0]), int(sympy.fraction(inverse[i, j])[1])) for j in range(n)] for i in range(n)]
        matrix = np.array([[float(x) for x in row] for row in exact_matrix])
    else:
        gram = float(d) ** np.array(exponents, dtype=float)
        matrix = _float_solve(gram, np.eye(n))
    return OrthogonalWgTable(p=p, d=d, pairings=pairings, matrix=matrix, exact=exact_matrix)


def _join_mobius(pi: Pairing, rho: Pairing) -> int:
    """Product over blocks of pi ∨ rho (2k elements each) of (-1)^{k-1} Cat_{k-1}."""
    a = Partition(tuple((i, j) for i, j in enumerate(pi.partner) if i < j))
    b = Partition(tuple((i, j) for i, j in enumerate(rho.partner) if i < j))
    out = 1
    for block in a.join(b).blocks:
        k = len(block) // 2
        out *= (-1) ** (k - 1) * catalan(k - 1)
    return out


@dataclass(frozen=True)
class AsymptoticDeviation:
    kind: str
    p: int
    d: int
    deviations: dict[str, float]

    @property
    def max_abs(self) -> float:
        return max(abs(v) for v in self.deviations.values())


def wg_asymptotic_check(table: UnitaryWgTable | OrthogonalWgTable) -> AsymptoticDeviation:
    """
    Unitary: Wg(sigma) d^{2p - #sigma} - Möb(sigma), expected O(d^-2).
    Orthogonal: Wg(pi, rho) d^{2p - #(pi ∨ rho)} - Möb(pi ∨ rho), expected O(d^-1).
    """
    p, d = table.p, table.d
    if isinstance(table, UnitaryWgTable):
        deviations = {
            str(s): v * float(d) ** (2 * p - s.num_cycles) - mobius(s) for s, v in table.values.items()
        }
        return AsymptoticDeviation("unitary", p, d, deviations)
    deviations = {}
    for i, a in enumerate(table.pairings):
        for j, b in enumerate(table.pairings):
            scale = float(d) ** (2 * p - join_block_count(a, b))
            deviations[f"{a};{b}"] = table.matrix[i, j] * scale - _join_mobius(a, b)
    return AsymptoticDeviation("orthogonal", p, d, deviations)


# ---------------------------------------------------------------------------
# Haar moments


def haar_unitary_moment(
    i: Sequence[int], j: Sequence[int], i_prime: Sequence[int], j_prime: Sequence[int], d: int,
    table: UnitaryWgTable | None = None,
) -> float:
    """
    E[U_{i1 j1} ... U_{ip jp} conj(U_{i'1 j'1}) ... conj(U_{i'p j'p})] (0-based indices)
      = sum_{sigma, tau} prod_k [i_k = i'_{sigma(k)}] [j_k = j'_{tau(k)}] Wg(tau sigma^-1).
    """
    p = len(i)
    if not (len(j) == len(i_prime) == len(j_prime) == p):
        raise ValueError("All index tuples must have the same length")
    table = table or unitary_wg(p, d)
    perms = list(table.values)
    rows = [s for s in perms if all(i[k] == i_prime[s(k)] for k in range(p))]
    cols = [t for t in perms if all(j[k] == j_prime[t(k)] for k in range(p))]
    return sum(table(t * s.inverse()) for s in rows for t in cols)


def haar_orthogonal_moment(i: Sequence[int], j: Sequence[int], d: int, table: OrthogonalWgTable | None = None) -> float:
    """E[O_{i1 j1} ... O_{i2p j2p}] = sum_{pi, rho} delta_pi(i) delta_rho(j) Wg(pi, rho) (0-based indices)."""
    n = len(i)
    if n != len(j):
        raise ValueError("Index tuples must have the same length")
    if n % 2:
        return 0.0
    table = table or orthogonal_wg(n // 2, d)

    def matches(pi: Pairing, idx: Sequence[int]) -> bool:
        return all(idx[a] == idx[b] for a, b in enumerate(pi.partner))

    rows = [k for k, pi in enumerate(table.pairings) if matches(pi, i)]
    cols = [k for k, rho in enumerate(table.pairings) if matches(rho, j)]
    return float(sum(table.matrix[a, b] for a in rows for b in cols))


# ---------------------------------------------------------------------------
# Two-fold twirls


def swap_operator(d: int) -> MultipartiteMatrix:
    """F_d = sum_ij E_ij ⊗ E_ji."""
    F = np.zeros((d, d, d, d))
    for a, b in itertools.product(range(d), repeat=2):
        F[a, b, b, a] = 1.0
    return MultipartiteMatrix.from_tensor(F, (d, d))


def omega_operator(d: int) -> MultipartiteMatrix:
    """d·omega_d = sum_ij E_ij ⊗ E_ij, the unnormalized maximally entangled projector."""
    W = np.zeros((d, d, d, d))
    for a, b in itertools.product(range(d), repeat=2):
        W[a, a, b, b] = 1.0
    return MultipartiteMatrix.from_tensor(W, (d, d))


def _check_bipartite_square(X: MultipartiteMatrix) -> int:
    if X.r != 2 or X.dims[0] != X.dims[1]:
        raise ValueError(f"Two-fold twirls act on M_d ⊗ M_d, got dims {X.dims}")
    return X.dims[0]


def twirl2_unitary(X: MultipartiteMatrix) -> MultipartiteMatrix:
    """E[(U⊗U) X (U⊗U)*] for Haar U."""
    d = _check_bipartite_square(X)
    F = swap_operator(d)
    tr_x, tr_fx = np.trace(X.data), np.trace(F.data @ X.data)
    denom = d * (d * d - 1)
    a = (d * tr_x - tr_fx) / denom
    b = (d * tr_fx - tr_x) / denom
    return MultipartiteMatrix(X.dims, a * np.eye(d * d) + b * F.data)


def twirl2_orthogonal(X: MultipartiteMatrix) -> MultipartiteMatrix:
    """E[(O⊗O) X (O⊗O)^T] for Haar orthogonal O."""
    d = _check_bipartite_square(X)
    F, W = swap_operator(d), omega_operator(d)
    traces = np.array([np.trace(X.data), np.trace(F.data @ X.data), np.trace(W.data @ X.data)])
    weights = np.array([[d + 1, -1, -1], [-1, d + 1, -1], [-1, -1, d + 1]], dtype=float)
    a, b, c = weights @ traces / (d * (d + 2) * (d - 1))
    return MultipartiteMatrix(X.dims, a * np.eye(d * d) + b * F.data + c * W.data)


@dataclass(frozen=True)
class TwirlEstimate:
    mean: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    trials: int

    def max_standardized_deviation(self, target: np.ndarray, atol: float = 0.0) -> float:
        """Largest |estimate - target| / stderr over real and imaginary parts (atol absorbs zero stderr)."""
        worst = 0.0
        for diff, se in ((self.mean.real - target.real, self.stderr_re), (self.mean.imag - target.imag, self.stderr_im)):
            excess = np.maximum(np.abs(diff) - atol, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(excess > 0, excess / np.where(se > 0, se, np.nan), 0.0)
            z = np.where(np.isnan(z), np.inf, z)
            worst = max(worst, float(np.max(z)))
        return worst


def monte_carlo_twirl(
    X: MultipartiteMatrix, trials: int, seed: int, orthogonal: bool = False, threads: int | None = None,
) -> TwirlEstimate:
    d = _check_bipartite_square(X)
    if trials < 2:
        raise ValueError("Monte Carlo twirl needs at least 2 trials")

    def one(trial: int) -> np.ndarray:
        rng = trial_rng(seed, trial)
        U = haar_orthogonal(d, rng) if orthogonal else haar_unitary(d, rng)
        V = np.kron(U, U)
        return V @ X.data @ V.conj().T

    draws = np.stack(map_trials(one, trials, threads, desc="twirl"))
    scale = math.sqrt(trials)
    return TwirlEstimate(
        mean=draws.mean(axis=0),
        stderr_re=draws.real.std(axis=0, ddof=1) / scale,
        stderr_im=draws.imag.std(axis=0, ddof=1) / scale,
        trials=trials,
    )


def familywise_multiplier(k: float, comparisons: int) -> float:
    """
    Šidák-adjusted band: the per-comparison multiplier whose family-wise
    two-sided false-alarm rate equals that of a single k-band.
    """
    if comparisons <= 1:
        return k
    alpha = 2 * norm.sf(k)
    per_test = -math.expm1(math.log1p(-alpha) / comparisons)
    return max(k, float(norm.isf(per_test / 2)))
