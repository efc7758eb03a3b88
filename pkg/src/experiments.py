# src/experiments.py
"""
Seeded scenarios that check the finite-d and large-d claims of the
library. Each run_* function returns an ExperimentReport; writing files and
tracking are left to the caller.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.config import EXACT_RTOL, OUTPUT_DIR, TOL_MULT
from src.cumulant import (
    CumulantTable,
    MomentTable,
    cumulants_to_moments,
    estimate_tensor_cumulants,
    free_cumulants_from_tensor,
    irreducible_tuples,
    matrix_moment_table,
    mixed_cumulant_rms,
    mixed_cumulant_scan,
    moments_to_cumulants,
    transpose_tuple,
)
from src.freeconv import (
    clt_finite_n_moments,
    clt_limit_moments,
    clt_limit_moments_bipartite,
    clt_partial_sums,
    product_model_cumulants,
    product_model_sampler,
    product_model_tensor_cumulant,
    sample_mu_infinity,
    semicircle_moments,
)
from src.pairing import enumerate_pairings, factorize, recompose
from src.perm import (
    Partition,
    Permutation,
    all_permutations,
    all_tuples,
    catalan,
    enumerate_snc,
    is_geodesic,
    tuple_to_string,
)
from src.reports import DecayFit, ExperimentConfig, ExperimentReport, StatisticResult
from src.rmt import EnsembleKind, EnsembleSpec, draw, map_trials, sample
from src.tensors import (
    EmbeddedMatrix,
    Matrix,
    MultipartiteMatrix,
    as_dense,
    normalized_trace_invariant,
    partial_transpose,
    random_complex_matrix,
    verify_tensor_space_axioms,
)
from src.weingarten import (
    EXACT_MAX_P,
    familywise_multiplier,
    monte_carlo_twirl,
    omega_operator,
    orthogonal_wg,
    swap_operator,
    twirl2_orthogonal,
    twirl2_unitary,
    unitary_wg,
    wg_asymptotic_check,
)

logger = logging.getLogger(__name__)

Dims = Sequence[int]

LUI_DIMS = ((16, 16), (32, 32))
PT_SEMICIRCLE_DIMS = ((48, 48),)
PT_FREENESS_DIMS = ((16, 16), (32, 32))
EMBEDDING_DIMS = ((12, 12), (24, 24))
HISTOGRAM_TRIPLES = ((1.0, 1.0, 1.0), (1.0, 1.0, 4.0), (1.0, 4.0, 1.0), (1.0, 4.0, 4.0))
CHECKED_TRIPLES = ((1.0, 1.0, 1.0), (1.0, 4.0, 4.0))
HISTOGRAM_BINS = 80
DECAY_FACTOR = 1.5
# largest p whose pairing Gram matrix the wg-table scenario inverts in rationals
ORTHOGONAL_EXACT_MAX_P = 3


def _config(scenario: str, dims, trials: int, seed: int, tol_mult: float, threads: Optional[int], **params) -> ExperimentConfig:
    return ExperimentConfig(
        scenario=scenario,
        dims=[list(d) for d in dims],
        trials=trials,
        seed=seed,
        tol_mult=tol_mult,
        threads=threads,
        params=params,
    )


def _tag(dims: Dims) -> str:
    return "x".join(str(d) for d in dims)


def mixed_words(p: int, labels: int) -> list[tuple[int, ...]]:
    """Words over range(labels) using at least two labels, one per rotation class."""
    words = set()
    for word in itertools.product(range(labels), repeat=p):
        if len(set(word)) > 1:
            words.add(min(word[i:] + word[:i] for i in range(p)))
    return sorted(words)


def _check_words(words: Sequence[Sequence[int]]) -> list[tuple[int, ...]]:
    words = [tuple(w) for w in words]
    for w in words:
        if len(set(w)) < 2:
            raise ValueError(f"Word {w} uses a single label; it has no mixed cumulants to scan")
    return words


def free_cumulant_samples(k: CumulantTable) -> np.ndarray:
    """Per-trial free cumulant kappa~_gamma of the word, from the per-trial tensor cumulants."""
    per_trial = CumulantTable(p=k.p, r=k.r, entries=k.samples, word=k.word, mode=k.mode)
    return np.asarray(free_cumulants_from_tensor(per_trial, Permutation.full_cycle(k.p)))


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(values) ** 2)))


def _worst_mixed(report: ExperimentReport, tables: Sequence[CumulantTable], name: str, tol_mult: float) -> None:
    """Record the most significant mixed irreducible cumulant as one family-wise statistic."""
    rows, worst = [], None
    for k in tables:
        for alpha, value in k.entries.items():
            se = k.stderr.get(alpha, 0.0)
            rows.append({"word": list(k.word), "tuple": tuple_to_string(alpha), "re": complex(value).real,
                         "im": complex(value).imag, "stderr": se})
            z = abs(value) / se if se > 0 else (math.inf if abs(value) > 0 else 0.0)
            if worst is None or z > worst[0]:
                worst = (z, abs(value), se)
    report.tables[name] = rows
    if worst is None:
        return
    k_fw = familywise_multiplier(tol_mult, len(rows))
    report.add(StatisticResult.compare(name, worst[1], worst[2], 0.0, k_fw))


# ---------------------------------------------------------------------------
# Weingarten


def _wg_closed_forms(kind: str, p: int, d: int) -> dict[str, float]:
    if p == 1:
        return {"wg:id": 1 / d}
    if p != 2:
        return {}
    if kind == "unitary":
        return {"wg:id": 1 / (d * d - 1), "wg:(1 2)": -1 / (d * (d * d - 1))}
    denom = d * (d + 2) * (d - 1)
    return {"wg:diagonal": (d + 1) / denom, "wg:off_diagonal": -1 / denom}


def run_wg_table(p: int = 2, d: int = 10, kind: str = "unitary", tol_mult: float = TOL_MULT, decay_factor: float | None = None) -> ExperimentReport:
    """Weingarten table with closed-form and exact-rational checks, and its large-d deviation."""
    if kind not in ("unitary", "orthogonal"):
        raise ValueError(f"kind must be 'unitary' or 'orthogonal', got {kind!r}")
    build = unitary_wg if kind == "unitary" else orthogonal_wg
    table = build(p, d)
    report = ExperimentReport(config=_config("wg-table", [], 0, 0, tol_mult, None, p=p, d=d, kind=kind))
    report.tables["weingarten"] = table.entries()

    closed = _wg_closed_forms(kind, p, d)
    if kind == "unitary":
        observed = {"wg:id": table(Permutation.identity(p))}
        if p == 2:
            observed["wg:(1 2)"] = table(Permutation.full_cycle(2))
        computed = np.array(list(table.values.values()))
    else:
        diag = table.matrix.diagonal()
        off = table.matrix[~np.eye(len(table.pairings), dtype=bool)]
        observed = {"wg:id": float(diag[0]), "wg:diagonal": float(diag.max())}
        if off.size:
            observed["wg:off_diagonal"] = float(off.min())
        computed = table.matrix.ravel()
    for name, target in closed.items():
        report.add(StatisticResult.exact(f"closed_form:{name}", observed[name], target, EXACT_RTOL))

    if p <= (EXACT_MAX_P if kind == "unitary" else ORTHOGONAL_EXACT_MAX_P):
        exact = build(p, d, exact=True)
        rational = np.array(list(exact.values.values())) if kind == "unitary" else exact.matrix.ravel()
        gap = float(np.max(np.abs(computed - rational)) / np.max(np.abs(rational)))
        report.add(StatisticResult.compare("float_vs_rational_rel_gap", gap, 0.0, 0.0, 0.0, allowance=EXACT_RTOL))
    residual = table.convolution_residual() if kind == "unitary" else table.inverse_residual()
    report.add(StatisticResult.compare("gram_inverse_residual", residual, 0.0, 0.0, 0.0, allowance=EXACT_RTOL))

    small, large = wg_asymptotic_check(table), wg_asymptotic_check(build(p, 2 * d))
    report.tables["asymptotic_deviation"] = [
        {"d": dev.d, "key": key, "value": value} for dev in (small, large) for key, value in dev.deviations.items()
    ]
    if p == 1:
        report.notes.append("p = 1: the rescaled Weingarten function equals its limit exactly; no decay to fit")
    else:
        factor = decay_factor or (3.0 if kind == "unitary" else 1.7)
        report.add(DecayFit.fit("asymptotic_deviation", [d, 2 * d], [small.max_abs, large.max_abs], factor))
    return report


def run_twirl_check(d: int = 6, trials: int = 2000, seed: int = 0, tol_mult: float = TOL_MULT, threads: int | None = None) -> ExperimentReport:
    """Monte Carlo two-fold twirls against their closed forms, plus exact fixed points."""
    report = ExperimentReport(config=_config("twirl-check", [[d, d]], trials, seed, tol_mult, threads, d=d))
    X = random_complex_matrix((d, d), np.random.default_rng(seed))
    for kind, orthogonal in (("unitary", False), ("orthogonal", True)):
        exact = (twirl2_orthogonal if orthogonal else twirl2_unitary)(X).data
        estimate = monte_carlo_twirl(X, trials, seed, orthogonal=orthogonal, threads=threads)
        k_fw = familywise_multiplier(tol_mult, 2 * exact.size)
        z = estimate.max_standardized_deviation(exact)
        report.add(StatisticResult.compare(f"{kind}_twirl_max_z", z, 1.0, 0.0, k_fw))

    I = MultipartiteMatrix.identity((d, d))
    fixed = {
        "unitary": (twirl2_unitary, {"identity": I, "swap": swap_operator(d)}),
        "orthogonal": (twirl2_orthogonal, {"identity": I, "swap": swap_operator(d), "omega": omega_operator(d)}),
    }
    for kind, (twirl, points) in fixed.items():
        for name, Y in points.items():
            gap = float(np.max(np.abs(twirl(Y).data - Y.data)))
            report.add(StatisticResult.compare(f"{kind}_fixed_point:{name}", gap, 0.0, 0.0, 0.0, allowance=EXACT_RTOL))
    return report


# ---------------------------------------------------------------------------
# Local unitary invariance


def lui_pair_specs(seed: int = 0) -> list[EnsembleSpec]:
    """Tensor GUE on leg 1 and a local-Haar-conjugated Wishart matrix (c = 1)."""
    return [
        EnsembleSpec(kind=EnsembleKind.TENSOR_GUE, dims=[1, 1], legs=[1], seed=seed),
        EnsembleSpec(kind=EnsembleKind.WISHART, dims=[1, 1], aspect=1.0, local_conjugation=True, seed=seed),
    ]


def _check_specs(specs: Sequence[EnsembleSpec | dict], dims: Dims) -> list[EnsembleSpec]:
    if isinstance(specs, (dict, str)):
        raise ValueError(f"Ensemble specs must be a list, got {type(specs).__name__}")
    # dicts from a config file may leave dims out
    specs = [s if isinstance(s, EnsembleSpec) else EnsembleSpec.parse_obj({"dims": list(dims), **s}) for s in specs]
    if len(specs) < 2:
        raise ValueError(f"Freeness needs at least two ensembles, got {len(specs)}")
    return specs


def family_sampler(specs: Sequence[EnsembleSpec], dims: Dims) -> Callable[[np.random.Generator], list[Matrix]]:
    """One independent draw of every spec, each resized to dims."""
    resized = [EnsembleSpec.parse_obj({**s.dict(), "dims": list(dims)}) for s in specs]
    return lambda rng: [draw(s, rng) for s in resized]


def exact_mixed_statistic(family: Sequence[Matrix], words: Sequence[Sequence[int]]) -> float:
    """Largest mixed irreducible cumulant of fixed matrices over the given words."""
    worst = 0.0
    for word in _check_words(words):
        k = moments_to_cumulants(matrix_moment_table(family, len(word), word=word))
        worst = max(worst, mixed_cumulant_scan(k))
    return worst


def run_lui_freeness(
    dims_schedule: Sequence[Dims] = LUI_DIMS,
    p_max: int = 3,
    trials: int = 100,
    seed: int = 0,
    words: Sequence[Sequence[int]] | None = None,
    specs: Sequence[EnsembleSpec | dict] | None = None,
    exact_family: Sequence[Matrix] | None = None,
    tol_mult: float = TOL_MULT,
    threads: int | None = None,
    decay_factor: float = DECAY_FACTOR,
) -> ExperimentReport:
    """
    Mixed tensor cumulants of independent locally invariant matrices across
    the dims schedule. ``specs`` name the ensembles (the tensor GUE and
    conjugated Wishart pair by default); their dims are replaced by each
    entry of the schedule. With ``exact_family`` the scan runs once on fixed
    matrices and must vanish to EXACT_RTOL.
    """
    specs = _check_specs(specs, dims_schedule[0]) if specs is not None else lui_pair_specs(seed)
    n = len(exact_family) if exact_family is not None else len(specs)
    words = _check_words(words) if words is not None else [w for p in range(2, p_max + 1) for w in mixed_words(p, n)]
    if any(label >= n for w in words for label in w):
        raise ValueError(f"Words use labels beyond the {n} matrices of the family")
    report = ExperimentReport(
        config=_config("lui-freeness", dims_schedule, trials, seed, tol_mult, threads,
                       p_max=p_max, words=[list(w) for w in words], decay_factor=decay_factor,
                       specs=[s.dict(exclude={"dims"}) for s in specs])
    )
    if exact_family is not None:
        statistic = exact_mixed_statistic(exact_family, words)
        report.add(StatisticResult.compare("exact_mixed_cumulant_max", statistic, 0.0, 0.0, 0.0, allowance=EXACT_RTOL))
        return report

    sizes, values, tables = [], [], []
    for dims in dims_schedule:
        sampler = family_sampler(specs, dims)
        r = len(dims)
        tables = [
            estimate_tensor_cumulants(sampler, irreducible_tuples(len(w), r), trials, seed, word=w, threads=threads)
            for w in words
        ]
        sizes.append(min(dims))
        values.append(mixed_cumulant_rms(tables))
        logger.info("dims %s: mixed cumulant rms %.4g", _tag(dims), values[-1])
    _worst_mixed(report, tables, f"final_mixed_cumulant:{_tag(dims_schedule[-1])}", tol_mult)
    if len(sizes) >= 2:
        report.add(DecayFit.fit("mixed_cumulant_rms", sizes, values, decay_factor))
    return report


# ---------------------------------------------------------------------------
# Partial transposes


PT_ENSEMBLES = ("wishart", "gue")


def _check_pt_vector(t: Sequence[int], r: int) -> tuple[int, ...]:
    t = tuple(int(x) for x in t)
    if len(t) != r or any(x not in (1, -1) for x in t):
        raise ValueError(f"Partial transpose vector {t} does not match r={r}")
    if len(set(t)) == 1:
        raise ValueError(f"Partial transpose vector {t} is degenerate: it is the identity or the full transpose")
    return t


def _pt_biases(ensemble: str, spec: EnsembleSpec) -> tuple[float, float]:
    """Finite-D offsets of E tr(Y - 1)^3 and E tr(Y - 1)^4 - 2 kappa_2^2 for the partially transposed ensemble."""
    if ensemble == "wishart":
        c = spec.D / spec.n_columns
        return 2 * c**2 / spec.D, 2 * c**3 / spec.D
    return 0.0, 1.0 / spec.D**2


def run_pt_semicircle(
    ensemble: str = "wishart",
    t: Sequence[int] = (1, -1),
    dims_schedule: Sequence[Dims] = PT_SEMICIRCLE_DIMS,
    aspect: float = 0.5,
    trials: int = 12,
    seed: int = 0,
    p_max: int = 6,
    tol_mult: float = TOL_MULT,
    threads: int | None = None,
) -> ExperimentReport:
    """Centered moments of X^t against a semicircle with the mean and variance of X."""
    if ensemble not in PT_ENSEMBLES:
        raise ValueError(f"ensemble must be one of {PT_ENSEMBLES}, got {ensemble!r}")
    if trials < 2:
        raise ValueError(f"Need at least 2 trials, got {trials}")
    report = ExperimentReport(
        config=_config("pt-semicircle", dims_schedule, trials, seed, tol_mult, threads,
                       ensemble=ensemble, t=list(t), aspect=aspect, p_max=max(p_max, 4))
    )
    p_max = max(p_max, 4)
    for dims in dims_schedule:
        signs = _check_pt_vector(t, len(dims))
        spec = EnsembleSpec(kind=ensemble, dims=list(dims), aspect=aspect, seed=seed)

        def one(trial: int) -> np.ndarray:
            X = as_dense(sample(spec, trial))
            Y = partial_transpose(X, signs)
            eig = np.linalg.eigvalsh(Y.data)
            mean = float(np.trace(X.data).real) / X.D
            kappa2 = float(np.sum(np.abs(X.data) ** 2)) / X.D - mean**2
            centered = eig - mean
            raw = [np.mean(eig**p) for p in range(1, p_max + 1)]
            return np.array(
                [mean, kappa2, abs(eig.mean() - mean), np.mean(centered**3), np.mean(centered**4) - 2 * kappa2**2, *raw]
            )

        rows = np.stack(map_trials(one, trials, threads, desc=f"pt {_tag(dims)}"))
        means = rows.mean(axis=0)
        se = rows.std(axis=0, ddof=1) / math.sqrt(trials)
        bias3, bias4 = _pt_biases(ensemble, spec)
        tag = _tag(dims)
        report.add(StatisticResult.compare(f"pt_trace_invariance:{tag}", rows[:, 2].max(), 0.0, 0.0, 0.0, allowance=EXACT_RTOL))
        report.add(StatisticResult.compare(f"pt_centered_m3:{tag}", means[3], se[3], bias3, tol_mult))
        report.add(StatisticResult.compare(f"pt_centered_m4_minus_2k2sq:{tag}", means[4], se[4], bias4, tol_mult))
        target = semicircle_moments(p_max, mean=means[0], variance=means[1])
        report.tables[f"pt_moments:{tag}"] = [
            {"p": p, "estimate": float(means[4 + p]), "stderr": float(se[4 + p]), "semicircle": float(target[p])}
            for p in range(1, p_max + 1)
        ]
        report.notes.append(
            f"{tag}: finite-size targets m3={bias3:.3g}, m4-2k2^2={bias4:.3g}; the limit values are 0"
        )
    return report


def pt_family_sampler(spec: EnsembleSpec) -> tuple[list[tuple[int, ...]], Callable[[np.random.Generator], list[Matrix]]]:
    """X^t for every sign vector with the last leg untransposed."""
    r = len(spec.dims)
    signs = [t + (1,) for t in itertools.product((1, -1), repeat=r - 1)]

    def sampler(rng: np.random.Generator) -> list[Matrix]:
        X = as_dense(draw(spec, rng))
        return [partial_transpose(X, t) for t in signs]

    return signs, sampler


def transpose_identity_gap(X: Matrix, t: Sequence[int], p: int) -> float:
    """max relative gap of tr_alpha(X^t, ..., X^t) against tr_{alpha^t}(X, ..., X)."""
    Y = partial_transpose(X, t)
    worst = 0.0
    for alpha in all_tuples(p, X.r):
        lhs = normalized_trace_invariant(alpha, [Y] * p)
        rhs = normalized_trace_invariant(transpose_tuple(alpha, t), [X] * p)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def run_pt_freeness(
    ensemble: str = "wishart",
    dims_schedule: Sequence[Dims] = PT_FREENESS_DIMS,
    trials: int = 40,
    seed: int = 0,
    p_max: int = 3,
    aspect: float = 1.0,
    tol_mult: float = TOL_MULT,
    threads: int | None = None,
    decay_factor: float = DECAY_FACTOR,
) -> ExperimentReport:
    """Decay of mixed free and tensor cumulants among the partial transposes of one matrix."""
    if ensemble not in PT_ENSEMBLES:
        raise ValueError(f"ensemble must be one of {PT_ENSEMBLES}, got {ensemble!r}")
    report = ExperimentReport(
        config=_config("pt-freeness", dims_schedule, trials, seed, tol_mult, threads,
                       ensemble=ensemble, p_max=p_max, aspect=aspect, decay_factor=decay_factor)
    )
    sizes, free_rms, tensor_rms = [], [], []
    for dims in dims_schedule:
        spec = EnsembleSpec(kind=ensemble, dims=list(dims), aspect=aspect, seed=seed)
        signs, sampler = pt_family_sampler(spec)
        words = [w for p in range(2, p_max + 1) for w in mixed_words(p, len(signs))]
        tables = [
            estimate_tensor_cumulants(sampler, all_tuples(len(w), len(dims)), trials, seed, word=w, threads=threads)
            for w in words
        ]
        sizes.append(min(dims))
        free_rms.append(max(_rms(free_cumulant_samples(k)) for k in tables))
        tensor_rms.append(mixed_cumulant_rms(tables))
        report.tables[f"pt_family:{_tag(dims)}"] = [{"label": i, "t": list(s)} for i, s in enumerate(signs)]
        logger.info("dims %s: free rms %.4g, tensor rms %.4g", _tag(dims), free_rms[-1], tensor_rms[-1])

    X = as_dense(sample(EnsembleSpec(kind=ensemble, dims=list(dims_schedule[0]), aspect=aspect, seed=seed), 0))
    t = (-1,) + (1,) * (X.r - 1)
    report.add(StatisticResult.compare("transpose_identity_rel_gap", transpose_identity_gap(X, t, 3), 0.0, 0.0, 0.0,
                                       allowance=EXACT_RTOL))
    if len(sizes) >= 2:
        report.add(DecayFit.fit("mixed_free_cumulant_rms", sizes, free_rms, decay_factor))
        report.add(DecayFit.fit("mixed_tensor_cumulant_rms", sizes, tensor_rms, decay_factor))
    return report


# ---------------------------------------------------------------------------
# Tensor embeddings


@dataclass(frozen=True)
class EmbeddingGraph:
    """
    Bipartite graph with q top and r bottom vertices. Edge i joins top vertex
    t[i] in 1..q with bottom vertex b[i] in q+1..q+r.
    """

    q: int
    r: int
    t: tuple[int, ...]
    b: tuple[int, ...]

    def __post_init__(self):
        if self.q < 1 or self.r < 1:
            raise ValueError("A graph needs at least one top and one bottom vertex")
        if len(self.t) != len(self.b) or not self.t:
            raise ValueError("t and b must list the same, nonzero number of edges")
        if any(not 1 <= x <= self.q for x in self.t):
            raise ValueError(f"Top vertices {self.t} must lie in 1..{self.q}")
        if any(not self.q < x <= self.q + self.r for x in self.b):
            raise ValueError(f"Bottom vertices {self.b} must lie in {self.q + 1}..{self.q + self.r}")
        if len(set(zip(self.t, self.b))) != len(self.t):
            raise ValueError(f"(t, b) = {list(zip(self.t, self.b))} is not injective; two matrices would share spaces")

    @property
    def k(self) -> int:
        return len(self.t)

    @property
    def constant_side(self) -> bool:
        return len(set(self.t)) == 1 or len(set(self.b)) == 1

    def leg_dims(self, d_top: int, d_bottom: int) -> tuple[int, ...]:
        return (d_top,) * self.q + (d_bottom,) * self.r

    def embed(self, Xs: Sequence[Matrix], d_top: int, d_bottom: int) -> list[EmbeddedMatrix]:
        """Y_i = X_i on legs (t(i), b(i)), identity elsewhere."""
        dims = self.leg_dims(d_top, d_bottom)
        return [
            EmbeddedMatrix(dims, (ti - 1, bi - 1), as_dense(X).data)
            for X, ti, bi in zip(Xs, self.t, self.b)
        ]


GRAPHS = {
    "star": EmbeddingGraph(q=1, r=3, t=(1, 1, 1), b=(2, 3, 4)),
    "path": EmbeddingGraph(q=2, r=2, t=(1, 1, 2), b=(3, 4, 4)),
}


def embedding_sampler(
    graph: EmbeddingGraph, spec: EnsembleSpec, identical: bool = True
) -> Callable[[np.random.Generator], list[EmbeddedMatrix]]:
    d_top, d_bottom = spec.dims

    def sampler(rng: np.random.Generator) -> list[EmbeddedMatrix]:
        if identical:
            Xs = [draw(spec, rng)] * graph.k
        else:
            Xs = [draw(spec, rng) for _ in range(graph.k)]
        return graph.embed(Xs, d_top, d_bottom)

    return sampler


def run_embedding(
    graph: Union[str, EmbeddingGraph] = "star",
    ensemble: str = "wishart",
    dims_schedule: Sequence[Dims] = EMBEDDING_DIMS,
    trials: int = 20,
    seed: int = 0,
    identical: bool = True,
    aspect: float = 1.0,
    p_max: int = 2,
    tol_mult: float = TOL_MULT,
    threads: int | None = None,
    decay_factor: float = DECAY_FACTOR,
) -> ExperimentReport:
    """
    Mixed cumulant decay for bipartite matrices embedded along a graph;
    dims entries are (d_top, d_bottom). When t or b is constant the plain
    mixed free cumulant is scanned as well.
    """
    if isinstance(graph, str):
        if graph not in GRAPHS:
            raise ValueError(f"Unknown graph {graph!r}; choose from {sorted(GRAPHS)}")
        name, graph = graph, GRAPHS[graph]
    else:
        name = "custom"
    report = ExperimentReport(
        config=_config("embedding", dims_schedule, trials, seed, tol_mult, threads,
                       graph=name, q=graph.q, r=graph.r, t=list(graph.t), b=list(graph.b),
                       ensemble=ensemble, identical=identical, aspect=aspect, p_max=p_max)
    )
    words = [w for p in range(2, p_max + 1) for w in mixed_words(p, graph.k)]
    sizes, tensor_rms, free_rms = [], [], []
    for dims in dims_schedule:
        if len(dims) != 2:
            raise ValueError(f"Embedding dims are (d_top, d_bottom), got {tuple(dims)}")
        spec = EnsembleSpec(kind=ensemble, dims=list(dims), aspect=aspect, seed=seed)
        sampler = embedding_sampler(graph, spec, identical)
        r_total = graph.q + graph.r
        tables = [
            estimate_tensor_cumulants(sampler, all_tuples(len(w), r_total), trials, seed, word=w, threads=threads)
            for w in words
        ]
        sizes.append(min(dims))
        tensor_rms.append(mixed_cumulant_rms(tables))
        if graph.constant_side:
            free_rms.append(max(_rms(free_cumulant_samples(k)) for k in tables))
        logger.info("dims %s: tensor rms %.4g", _tag(dims), tensor_rms[-1])
    if len(sizes) >= 2:
        report.add(DecayFit.fit("mixed_tensor_cumulant_rms", sizes, tensor_rms, decay_factor))
        if free_rms:
            report.add(DecayFit.fit("mixed_free_cumulant_rms", sizes, free_rms, decay_factor))
    if not graph.constant_side:
        report.notes.append("neither t nor b is constant: plain freeness is not expected, only tensor freeness")
    return report


# ---------------------------------------------------------------------------
# Central limit theorem


def _check_model(lambdas: Sequence[float], sigmas: Sequence[float]) -> None:
    if not lambdas or len(lambdas) != len(sigmas):
        raise ValueError("The product model needs one (lambda, sigma) pair per leg")
    if any(s < 0 for s in sigmas):
        raise ValueError(f"sigmas must be nonnegative, got {tuple(sigmas)}")


def histogram_frame(values: np.ndarray, bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    counts, edges = np.histogram(values, bins=bins)
    width = np.diff(edges)
    return pd.DataFrame({"left": edges[:-1], "right": edges[1:], "count": counts,
                         "density": counts / (counts.sum() * width)})


def _triple_tag(triple: Sequence[float]) -> str:
    return "_".join(f"{x:g}" for x in triple)


def run_clt(
    lambdas: Sequence[float] = (1.0, 1.0),
    sigmas: Sequence[float] = (1.0, 1.0),
    N_list: Sequence[int] = (1, 8, 64),
    d: int = 32,
    trials: int = 8,
    seed: int = 0,
    p_max: int = 4,
    histogram_d: int = 256,
    histogram_draws: int = 2000,
    histogram_triples: Sequence[Sequence[float]] = HISTOGRAM_TRIPLES,
    out_dir: Union[str, Path, None] = None,
    tol_mult: float = TOL_MULT,
    threads: int | None = None,
) -> ExperimentReport:
    """
    Partial sums of the product model against the finite-N prediction, and
    histograms of the limit law sampled by its matrix model.
    """
    _check_model(lambdas, sigmas)
    r = len(lambdas)
    report = ExperimentReport(
        config=_config("clt", [[d] * r], trials, seed, tol_mult, threads,
                       lambdas=list(lambdas), sigmas=list(sigmas), N_list=list(N_list), p_max=p_max,
                       histogram_d=histogram_d, histogram_draws=histogram_draws,
                       histogram_triples=[list(x) for x in histogram_triples])
    )
    mean = math.prod(lambdas)
    exact = lambda alpha: product_model_tensor_cumulant(alpha, lambdas, sigmas)
    sums = clt_partial_sums(product_model_sampler(lambdas, sigmas, d), N_list, trials, seed, mean=mean, threads=threads)
    limit = clt_limit_moments(product_model_cumulants(lambdas, sigmas), r, p_max)
    rel = 4 / d
    report.notes.append(f"finite-d allowance for partial sums: {rel:.3g} relative to the target")
    rows = []
    for N in N_list:
        observed = sums[N].moments(p_max)
        predicted = clt_finite_n_moments(exact, r, p_max, N)
        for p in range(1, p_max + 1):
            report.add(StatisticResult.compare(
                f"clt_m{p}:N={N}", observed[p], observed.se(p), predicted[p], tol_mult, allowance=rel * abs(predicted[p])
            ))
            rows.append({"N": N, "p": p, "estimate": observed[p], "stderr": observed.se(p),
                         "predicted": predicted[p], "limit": limit[p]})
    report.tables["partial_sum_moments"] = rows

    if histogram_draws > 0:
        out = Path(out_dir or OUTPUT_DIR)
        checked = {tuple(float(x) for x in c) for c in CHECKED_TRIPLES}
        allowance = 8 / histogram_d**2 + 1e-3
        for index, triple in enumerate(histogram_triples):
            spectrum = sample_mu_infinity(triple, histogram_d, histogram_draws * histogram_d, seed + index, threads=threads)
            tag = _triple_tag(triple)
            samples_path = spectrum.to_csv(out / f"clt_samples_{tag}.csv")
            hist_path = out / f"clt_hist_{tag}.csv"
            histogram_frame(spectrum.values).to_csv(hist_path, index=False, float_format="%.17g")
            report.artifacts += [samples_path.name, hist_path.name]
            if tuple(float(x) for x in triple) in checked:
                observed = spectrum.moments(6)
                target = clt_limit_moments_bipartite(triple, 6)
                for p in range(1, 7):
                    report.add(StatisticResult.compare(
                        f"mu_infinity_m{p}:{tag}", observed[p], observed.se(p), target[p], tol_mult,
                        allowance=allowance * abs(target[p]),
                    ))
        report.notes.append(f"limit-law histograms use {allowance:.3g} relative finite-d allowance")
    return report


# ---------------------------------------------------------------------------
# Axioms and combinatorial oracles


def _pairing_partition(pi) -> Partition:
    return Partition.from_labels([min(i, j) for i, j in enumerate(pi.partner)])


def combinatorics_mismatches(snc_p: int = 5, pairing_p: int = 4) -> dict[str, int]:
    """Counts of failures of the exact combinatorial identities; all should be 0."""
    out = {"snc_catalan": 0, "snc_brute_force": 0, "pairing_join": 0, "factorize_round_trip": 0}
    for p in range(1, snc_p + 1):
        gamma = Permutation.full_cycle(p)
        snc = set(enumerate_snc(gamma))
        out["snc_catalan"] += int(len(snc) != catalan(p))
        out["snc_brute_force"] += int(snc != {a for a in all_permutations(p) if is_geodesic(a, gamma)})
    for p in range(1, pairing_p + 1):
        pairings = enumerate_pairings(p)
        for pi in pairings:
            sigma, eps = factorize(pi)
            out["factorize_round_trip"] += int(recompose(sigma, eps) != pi)
            for rho in pairings:
                blocks = _pairing_partition(pi).join(_pairing_partition(rho)).num_blocks
                out["pairing_join"] += int(2 * blocks != (pi.as_permutation() * rho.as_permutation()).num_cycles)
    return out


def mobius_round_trip_mismatches(rng: np.random.Generator, p_max: int = 3, r_max: int = 3) -> int:
    """Exact moments -> cumulants -> moments on random rational tables."""
    bad = 0
    for p in range(1, p_max + 1):
        for r in range(1, r_max + 1):
            entries = {
                alpha: Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 7))) for alpha in all_tuples(p, r)
            }
            m = MomentTable(p=p, r=r, entries=entries)
            back = cumulants_to_moments(moments_to_cumulants(m))
            bad += sum(back[alpha] != value for alpha, value in entries.items())
    return bad


def run_axioms_check(dims: Dims = (3, 4), p_max: int = 5, seed: int = 0, tol_mult: float = TOL_MULT) -> ExperimentReport:
    """Tensor probability space axioms on random matrices, plus exact combinatorial oracles."""
    report = ExperimentReport(config=_config("axioms-check", [dims], 0, seed, tol_mult, None, p_max=p_max))
    rng = np.random.default_rng(seed)
    axioms = verify_tensor_space_axioms(dims, rng, p_max=p_max)
    seen: dict[str, int] = {}
    for check in axioms.checks:
        seen[check.name] = seen.get(check.name, 0) + 1
        report.add(StatisticResult.compare(
            f"axiom:{check.name}#{seen[check.name]}", check.rel_error, 0.0, 0.0, 0.0, allowance=axioms.rtol
        ))
    for name, count in combinatorics_mismatches().items():
        report.add(StatisticResult.compare(f"oracle:{name}", count, 0.0, 0.0, 0.0))
    report.add(StatisticResult.compare("oracle:mobius_round_trip", mobius_round_trip_mismatches(rng), 0.0, 0.0, 0.0))
    return report
