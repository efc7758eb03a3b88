# src/tensors.py
"""
Multipartite matrices and their tensor trace invariants.

A MultipartiteMatrix acts on C^{d_1} ⊗ ... ⊗ C^{d_r}. Row and column
indices use big-endian mixed radix: leg 1 (index 0 here) varies slowest,
so ``data.reshape(dims + dims)`` exposes the (row legs, column legs)
tensor. Legs are 0-based in this module.

Contraction convention for Tr_alpha(X_1, ..., X_p): on leg s the column
index of X_k equals the row index of X_{alpha_s(k)}. With every alpha_s
equal to the full cycle this is Tr(X_1 ... X_p).
"""

from __future__ import annotations

import itertools
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import opt_einsum as oe
import pandas as pd
from pydantic import BaseModel

from src.config import EXACT_RTOL
from src.pairing import Pairing, delta, join_block_count
from src.perm import Permutation, PermTuple, direct_sum, erase

logger = logging.getLogger(__name__)

MAGIC = b"TFPM"


def _check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"Leg dimensions must be positive, got {dims}")
    return dims


@dataclass(frozen=True, eq=False)
class MultipartiteMatrix:
    """Dense D x D complex matrix with leg dimensions (d_1, ..., d_r)."""

    dims: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        data = np.array(self.data, dtype=np.complex128)
        D = math.prod(dims)
        if data.shape != (D, D):
            raise ValueError(f"Data shape {data.shape} does not match dims {dims} (D={D})")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @property
    def r(self) -> int:
        return len(self.dims)

    @property
    def D(self) -> int:
        return math.prod(self.dims)

    @property
    def legs(self) -> tuple[int, ...]:
        return tuple(range(self.r))

    def tensor(self) -> np.ndarray:
        return self.data.reshape(self.dims + self.dims)

    def to_dense(self) -> "MultipartiteMatrix":
        return self

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "MultipartiteMatrix":
        dims = _check_dims(dims)
        return cls(dims, np.eye(math.prod(dims)))

    @classmethod
    def from_tensor(cls, tensor: np.ndarray, dims: Sequence[int]) -> "MultipartiteMatrix":
        dims = _check_dims(dims)
        D = math.prod(dims)
        return cls(dims, np.asarray(tensor).reshape(D, D))

    @classmethod
    def kron(cls, factors: Sequence[np.ndarray]) -> "MultipartiteMatrix":
        """⊗ of one square matrix per leg."""
        factors = [np.asarray(f) for f in factors]
        dims = tuple(f.shape[0] for f in factors)
        data = factors[0]
        for f in factors[1:]:
            data = np.kron(data, f)
        return cls(dims, data)

    def __matmul__(self, other: "MultipartiteMatrix") -> "MultipartiteMatrix":
        other = as_dense(other)
        _same_dims(self, other)
        return MultipartiteMatrix(self.dims, self.data @ other.data)

    def __add__(self, other: "MultipartiteMatrix") -> "MultipartiteMatrix":
        other = as_dense(other)
        _same_dims(self, other)
        return MultipartiteMatrix(self.dims, self.data + other.data)

    def __sub__(self, other: "MultipartiteMatrix") -> "MultipartiteMatrix":
        other = as_dense(other)
        _same_dims(self, other)
        return MultipartiteMatrix(self.dims, self.data - other.data)

    def __mul__(self, scalar: complex) -> "MultipartiteMatrix":
        return MultipartiteMatrix(self.dims, self.data * scalar)

    __rmul__ = __mul__

    def adjoint(self) -> "MultipartiteMatrix":
        return MultipartiteMatrix(self.dims, self.data.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return bool(np.allclose(self.data, self.data.conj().T, atol=atol))


@dataclass(frozen=True, eq=False)
class EmbeddedMatrix:
    """A block acting on a subset of legs, tensored with the identity on the rest."""

    dims: tuple[int, ...]
    legs: tuple[int, ...]
    block: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        legs = tuple(sorted(int(s) for s in self.legs))
        if len(set(legs)) != len(legs) or any(not 0 <= s < len(dims) for s in legs):
            raise ValueError(f"Invalid legs {self.legs} for dims {dims}")
        block = np.array(self.block, dtype=np.complex128)
        d_block = math.prod(dims[s] for s in legs)
        if block.shape != (d_block, d_block):
            raise ValueError(f"Block shape {block.shape} does not match legs {legs} of dims {dims}")
        block.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "legs", legs)
        object.__setattr__(self, "block", block)

    @property
    def r(self) -> int:
        return len(self.dims)

    @property
    def D(self) -> int:
        return math.prod(self.dims)

    @property
    def block_dims(self) -> tuple[int, ...]:
        return tuple(self.dims[s] for s in self.legs)

    def block_tensor(self) -> np.ndarray:
        return self.block.reshape(self.block_dims + self.block_dims)

    def to_dense(self) -> MultipartiteMatrix:
        r = self.r
        operands: list = [self.block_tensor(), list(self.legs) + [r + s for s in self.legs]]
        for s in range(r):
            if s not in self.legs:
                operands += [np.eye(self.dims[s]), [s, r + s]]
        tensor = oe.contract(*operands, list(range(2 * r)))
        return MultipartiteMatrix.from_tensor(tensor, self.dims)

    def adjoint(self) -> "EmbeddedMatrix":
        return EmbeddedMatrix(self.dims, self.legs, self.block.conj().T)

    def __mul__(self, scalar: complex) -> "EmbeddedMatrix":
        return EmbeddedMatrix(self.dims, self.legs, self.block * scalar)

    __rmul__ = __mul__

    def trace(self) -> complex:
        rest = math.prod(d for s, d in enumerate(self.dims) if s not in self.legs)
        return complex(np.trace(self.block)) * rest


Matrix = Union[MultipartiteMatrix, EmbeddedMatrix]


def embed_on_legs(block: np.ndarray, legs: Sequence[int], dims: Sequence[int]) -> EmbeddedMatrix:
    return EmbeddedMatrix(tuple(dims), tuple(legs), block)


def as_dense(X: Matrix) -> MultipartiteMatrix:
    return X.to_dense()


def _same_dims(*Xs: Matrix) -> tuple[int, ...]:
    dims = {X.dims for X in Xs}
    if len(dims) != 1:
        raise ValueError(f"Matrices have different leg dimensions: {sorted(dims)}")
    return dims.pop()


# ---------------------------------------------------------------------------
# Contraction engine


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def _contract(Xs: Sequence[Matrix], row_label, col_label) -> complex:
    """
    Fully contract the matrices with the index wiring given by
    row_label(k, s) / col_label(k, s); every label occurs exactly twice.
    Identity legs of embedded matrices merge their row and column labels;
    a merged class touching no dense slot is a free loop worth d_s.
    """
    dims = _same_dims(*Xs)
    r = len(dims)
    uf = _UnionFind()
    for k, X in enumerate(Xs):
        active = set(X.legs) if isinstance(X, EmbeddedMatrix) else set(range(r))
        for s in range(r):
            uf.find((s, row_label(k, s)))
            uf.find((s, col_label(k, s)))
            if s not in active:
                uf.union((s, row_label(k, s)), (s, col_label(k, s)))

    symbols: dict = {}
    used: set = set()
    operands: list = []
    scalar = 1.0 + 0j

    def sym(s, lab):
        root = uf.find((s, lab))
        used.add(root)
        return symbols.setdefault(root, len(symbols))

    for k, X in enumerate(Xs):
        if isinstance(X, EmbeddedMatrix):
            if not X.legs:
                scalar *= complex(X.block[0, 0])
                continue
            tensor, legs = X.block_tensor(), X.legs
        else:
            tensor, legs = X.tensor(), tuple(range(r))
        labels = [sym(s, row_label(k, s)) for s in legs] + [sym(s, col_label(k, s)) for s in legs]
        operands += [tensor, labels]

    for root in list(uf.parent):
        if uf.find(root) == root and root not in used:
            scalar *= dims[root[0]]

    if not operands:
        return complex(scalar)
    value = oe.contract(*operands, [], optimize="greedy")
    return complex(value) * scalar


def _check_tuple(alpha: Sequence[Permutation], Xs: Sequence[Matrix]) -> None:
    if not Xs:
        raise ValueError("At least one matrix is required")
    dims = _same_dims(*Xs)
    if len(alpha) != len(dims):
        raise ValueError(f"Tuple has {len(alpha)} components but the matrices have {len(dims)} legs")
    for a in alpha:
        if a.p != len(Xs):
            raise ValueError(f"Permutation {a} acts on [{a.p}] but {len(Xs)} matrices were given")


def trace_invariant(alpha: Sequence[Permutation], Xs: Sequence[Matrix]) -> complex:
    """Tr_alpha(X_1, ..., X_p): column of X_k on leg s meets the row of X_{alpha_s(k)}."""
    _check_tuple(alpha, Xs)
    return _contract(Xs, lambda k, s: k, lambda k, s: alpha[s](k))


def normalized_trace_invariant(alpha: Sequence[Permutation], Xs: Sequence[Matrix]) -> complex:
    """tr_alpha = Tr_alpha / prod_s d_s^{#alpha_s}."""
    value = trace_invariant(alpha, Xs)
    dims = Xs[0].dims
    return value / math.prod(float(d) ** a.num_cycles for d, a in zip(dims, alpha))


def naive_trace_invariant(alpha: Sequence[Permutation], Xs: Sequence[Matrix]) -> complex:
    """Explicit index sum; for tests on tiny instances."""
    _check_tuple(alpha, Xs)
    dims = Xs[0].dims
    tensors = [as_dense(X).tensor() for X in Xs]
    p, r = len(Xs), len(dims)
    legs = [range(d) for d in dims]
    total = 0j
    for rows in itertools.product(*(itertools.product(*legs) for _ in range(p))):
        term = 1 + 0j
        for k in range(p):
            col = tuple(rows[alpha[s](k)][s] for s in range(r))
            term *= tensors[k][rows[k] + col]
            if term == 0:
                break
        total += term
    return total


def flat_trace_invariant(sigma: Permutation, Xs: Sequence[Matrix]) -> complex:
    """Tr_sigma on M_D: product over cycles (c_1 ... c_m) of Tr(X_{c_1} ... X_{c_m})."""
    total = 1 + 0j
    dense = [as_dense(X).data for X in Xs]
    for cyc in sigma.cycles():
        prod = dense[cyc[0]]
        for k in cyc[1:]:
            prod = prod @ dense[k]
        total *= np.trace(prod)
    return complex(total)


# ---------------------------------------------------------------------------
# Orthogonal invariants


def orthogonal_trace_invariant(pis: Sequence[Pairing], Xs: Sequence[Matrix]) -> complex:
    """
    Local orthogonal invariant: X_k carries its row index at +k and its
    column index at -k on every leg; pi_s identifies the indices of each pair.
    """
    if not Xs:
        raise ValueError("At least one matrix is required")
    dims = _same_dims(*Xs)
    p = len(Xs)
    if len(pis) != len(dims):
        raise ValueError(f"{len(pis)} pairings for {len(dims)} legs")
    for pi in pis:
        if pi.p != p:
            raise ValueError(f"Pairing {pi} is on [±{pi.p}] but {p} matrices were given")
    # label of a slot is the smaller relabelled index of its pair
    return _contract(
        Xs,
        lambda k, s: min(k, pis[s].partner[k]),
        lambda k, s: min(p + k, pis[s].partner[p + k]),
    )


def normalized_orthogonal_trace_invariant(pis: Sequence[Pairing], Xs: Sequence[Matrix]) -> complex:
    value = orthogonal_trace_invariant(pis, Xs)
    dims = Xs[0].dims
    norm = math.prod(float(d) ** join_block_count(pi, delta(pi.p)) for d, pi in zip(dims, pis))
    return value / norm


# ---------------------------------------------------------------------------
# Partial operations


def _check_signs(t: Sequence[int], r: int) -> tuple[int, ...]:
    t = tuple(int(x) for x in t)
    if len(t) != r:
        raise ValueError(f"Sign vector {t} has length {len(t)}, expected {r}")
    if any(x not in (1, -1) for x in t):
        raise ValueError(f"Sign vector entries must be ±1, got {t}")
    return t


def partial_transpose(X: Matrix, t: Sequence[int]) -> Matrix:
    """Transpose the legs s with t[s] = -1."""
    t = _check_signs(t, X.r)
    if isinstance(X, EmbeddedMatrix):
        n = len(X.legs)
        axes = list(range(2 * n))
        for i, s in enumerate(X.legs):
            if t[s] == -1:
                axes[i], axes[n + i] = n + i, i
        tensor = X.block_tensor().transpose(axes)
        return EmbeddedMatrix(X.dims, X.legs, tensor.reshape(X.block.shape))
    r = X.r
    axes = list(range(2 * r))
    for s in range(r):
        if t[s] == -1:
            axes[s], axes[r + s] = r + s, s
    return MultipartiteMatrix.from_tensor(X.tensor().transpose(axes), X.dims)


def partial_trace(X: Matrix, keep: Sequence[int]) -> MultipartiteMatrix:
    """Trace out every leg not in keep."""
    keep = sorted(set(int(s) for s in keep))
    if not keep:
        raise ValueError("keep must name at least one leg; use .trace() for the full trace")
    X = as_dense(X)
    if any(not 0 <= s < X.r for s in keep):
        raise ValueError(f"Invalid legs {keep} for dims {X.dims}")
    r = X.r
    labels = [s for s in range(r)] + [r + s if s in keep else s for s in range(r)]
    out = keep + [r + s for s in keep]
    tensor = oe.contract(X.tensor(), labels, out)
    return MultipartiteMatrix.from_tensor(tensor, [X.dims[s] for s in keep])


# ---------------------------------------------------------------------------
# Axioms of a tensor probability space, evaluated on matrix algebras


class AxiomCheck(BaseModel):
    name: str
    lhs: tuple[float, float]
    rhs: tuple[float, float]
    rel_error: float
    passed: bool


class AxiomReport(BaseModel):
    dims: list[int]
    rtol: float
    checks: list[AxiomCheck] = []

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list[AxiomCheck]:
        return [c for c in self.checks if not c.passed]


def substitute(alpha: Sequence[Permutation], Xs: Sequence[Matrix], i: int) -> tuple[PermTuple, list[MultipartiteMatrix]]:
    """
    Merge X_i with X_j where j = alpha_s(i) on every leg: X_i X_j takes slot i,
    slot j is removed and alpha'_s(i) = alpha_s(j).
    """
    targets = {a(i) for a in alpha}
    if len(targets) != 1:
        raise ValueError(f"alpha_s({i + 1}) differs between legs; substitution needs a common successor")
    j = targets.pop()
    if j == i:
        raise ValueError(f"{i + 1} is a fixed point; nothing to substitute")
    new_alpha = []
    for a in alpha:
        images = list(a.images)
        images[i] = a(j)
        images[j] = j
        new_alpha.append(erase(Permutation(tuple(images)), j))
    merged = as_dense(Xs[i]) @ as_dense(Xs[j])
    new_Xs = [merged if k == i else as_dense(X) for k, X in enumerate(Xs) if k != j]
    return tuple(new_alpha), new_Xs


def _rel(a: complex, b: complex) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def random_complex_matrix(dims: Sequence[int], rng: np.random.Generator) -> MultipartiteMatrix:
    D = math.prod(dims)
    return MultipartiteMatrix(tuple(dims), rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)))


def _random_tuple(p: int, r: int, rng: np.random.Generator) -> PermTuple:
    return tuple(Permutation(tuple(rng.permutation(p))) for _ in range(r))


def verify_tensor_space_axioms(
    dims: Sequence[int],
    rng: np.random.Generator,
    p_max: int = 5,
    samples: int = 3,
    rtol: float = EXACT_RTOL,
) -> AxiomReport:
    """Evaluate the defining identities of an r-partite tensor probability space on random matrices."""
    dims = _check_dims(dims)
    r = len(dims)
    report = AxiomReport(dims=list(dims), rtol=rtol)

    def record(name, lhs, rhs):
        err = _rel(lhs, rhs)
        report.checks.append(
            AxiomCheck(
                name=name,
                lhs=(lhs.real, lhs.imag),
                rhs=(rhs.real, rhs.imag),
                rel_error=err,
                passed=err <= rtol,
            )
        )

    for p in range(1, p_max + 1):
        for _ in range(samples):
            Xs = [random_complex_matrix(dims, rng) for _ in range(p)]
            sigma = Permutation(tuple(rng.permutation(p)))

            D = math.prod(dims)
            lhs = normalized_trace_invariant((sigma,) * r, Xs)
            rhs = flat_trace_invariant(sigma, Xs) / D ** sigma.num_cycles
            record(f"consistency p={p}", lhs, rhs)

            alpha = _random_tuple(p, r, rng)
            inv = sigma.inverse()
            conj = tuple(a.conjugate(sigma) for a in alpha)
            relabelled = [Xs[inv(k)] for k in range(p)]
            record(
                f"permutation invariance p={p}",
                normalized_trace_invariant(alpha, Xs),
                normalized_trace_invariant(conj, relabelled),
            )

            q = int(rng.integers(1, p_max + 1))
            beta = _random_tuple(q, r, rng)
            Ys = [random_complex_matrix(dims, rng) for _ in range(q)]
            record(
                f"multiplicativity p={p} q={q}",
                normalized_trace_invariant(tuple(direct_sum(a, b) for a, b in zip(alpha, beta)), Xs + Ys),
                normalized_trace_invariant(alpha, Xs) * normalized_trace_invariant(beta, Ys),
            )

            if p >= 2:
                j = int(rng.integers(p))
                with_identity = list(Xs)
                with_identity[j] = MultipartiteMatrix.identity(dims)
                reduced = [X for k, X in enumerate(Xs) if k != j]
                record(
                    f"unitality p={p}",
                    normalized_trace_invariant(alpha, with_identity),
                    normalized_trace_invariant(tuple(erase(a, j) for a in alpha), reduced),
                )

                i = int(rng.integers(p))
                j = int((i + 1 + rng.integers(p - 1)) % p)
                forced = tuple(_with_successor(a, i, j) for a in alpha)
                new_alpha, merged = substitute(forced, Xs, i)
                record(
                    f"substitution p={p}",
                    normalized_trace_invariant(forced, Xs),
                    normalized_trace_invariant(new_alpha, merged),
                )

    # worked instances
    Xs = [random_complex_matrix(dims, rng) for _ in range(6)]
    if r == 2:
        alpha = (Permutation.parse("(1 4 2 3)"), Permutation.parse("(1 3 4 2)"))
        target = (Permutation.parse("(1 3 2)"), Permutation.parse("(1 2 3)"))
        X1, X2, X3, X4 = Xs[:4]
        record(
            "substitution worked instance",
            normalized_trace_invariant(alpha, [X1, X2, X3, X4]),
            normalized_trace_invariant(target, [X1, X3, X4 @ X2]),
        )
        alpha6 = (Permutation.parse("(1 2 5 3)(4 6)"), Permutation.parse("(1)(3 4 5)(2 6)"))
        alpha5 = (Permutation.parse("(1 4 2)(3 5)"), Permutation.parse("(1)(2 3 4)(5)"))
        with_identity = [Xs[0], MultipartiteMatrix.identity(dims)] + Xs[2:]
        record(
            "unitality worked instance",
            normalized_trace_invariant(alpha6, with_identity),
            normalized_trace_invariant(alpha5, [Xs[0]] + Xs[2:]),
        )

    logger.info("Axiom checks on dims %s: %d checks, %d violations", dims, len(report.checks), len(report.violations))
    return report


def _with_successor(a: Permutation, i: int, j: int) -> Permutation:
    """Modify a so that a(i) = j, by swapping images."""
    images = list(a.images)
    k = images.index(j)
    images[i], images[k] = images[k], images[i]
    return Permutation(tuple(images))


# ---------------------------------------------------------------------------
# Matrix I/O


def write_matrix_binary(path: Union[str, Path], X: Matrix) -> None:
    """b"TFPM", uint32 r, r x uint32 dims, complex128 little-endian row-major data."""
    X = as_dense(X)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(f"<I{X.r}I", X.r, *X.dims))
        fh.write(np.ascontiguousarray(X.data, dtype="<c16").tobytes())


def read_matrix_binary(path: Union[str, Path]) -> MultipartiteMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path} is not a matrix file (bad magic {raw[:4]!r})")
    (r,) = struct.unpack_from("<I", raw, 4)
    dims = struct.unpack_from(f"<{r}I", raw, 8)
    offset = 8 + 4 * r
    D = math.prod(dims)
    data = np.frombuffer(raw, dtype="<c16", offset=offset)
    if data.size != D * D:
        raise ValueError(f"{path}: expected {D * D} entries, found {data.size}")
    return MultipartiteMatrix(tuple(dims), data.reshape(D, D))


def write_matrix_csv(path: Union[str, Path], X: Matrix) -> None:
    """Header line ``#dims=d1,d2,...`` followed by row,col,re,im records."""
    X = as_dense(X)
    rows, cols = np.indices(X.data.shape)
    frame = pd.DataFrame(
        {
            "row": rows.ravel(),
            "col": cols.ravel(),
            "re": X.data.real.ravel(),
            "im": X.data.imag.ravel(),
        }
    )
    with open(path, "w", newline="") as fh:
        fh.write("#dims=" + ",".join(str(d) for d in X.dims) + "\n")
        frame.to_csv(fh, index=False, float_format="%.17g")


def read_matrix_csv(path: Union[str, Path]) -> MultipartiteMatrix:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#dims="):
            raise ValueError(f"{path}: missing #dims= header")
        dims = tuple(int(d) for d in header[len("#dims="):].split(","))
        frame = pd.read_csv(fh, float_precision="round_trip")
    D = math.prod(dims)
    data = np.zeros((D, D), dtype=np.complex128)
    data[frame["row"].to_numpy(), frame["col"].to_numpy()] = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
    return MultipartiteMatrix(dims, data)
