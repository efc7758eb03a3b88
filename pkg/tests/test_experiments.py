import numpy as np
import pandas as pd
import pytest

from src.cumulant import estimate_tensor_cumulants
from src.experiments import (
    GRAPHS,
    EmbeddingGraph,
    combinatorics_mismatches,
    exact_mixed_statistic,
    free_cumulant_samples,
    histogram_frame,
    mixed_words,
    mobius_round_trip_mismatches,
    pt_family_sampler,
    run_axioms_check,
    run_clt,
    run_embedding,
    run_lui_freeness,
    run_pt_freeness,
    run_pt_semicircle,
    run_twirl_check,
    run_wg_table,
    transpose_identity_gap,
)
from src.perm import all_tuples
from src.rmt import EnsembleSpec, trial_rng
from src.tensors import MultipartiteMatrix, random_complex_matrix


def _stat(report, name):
    return next(s for s in report.statistics if s.name == name)


def _hermitian(dims, rng):
    X = random_complex_matrix(dims, rng)
    return (X + X.adjoint()) * 0.5


def test_mixed_words_one_per_rotation_class():
    assert mixed_words(2, 2) == [(0, 1)]
    assert mixed_words(3, 2) == [(0, 0, 1), (0, 1, 1)]
    assert mixed_words(2, 3) == [(0, 1), (0, 2), (1, 2)]
    assert len(mixed_words(4, 2)) == 4


def test_wg_table_unitary_closed_forms():
    report = run_wg_table(p=2, d=10)
    assert _stat(report, "closed_form:wg:id").estimate == pytest.approx(1 / 99, rel=1e-12)
    assert _stat(report, "closed_form:wg:(1 2)").estimate == pytest.approx(-1 / 990, rel=1e-12)
    assert report.decay_fits[0].ratios[0] >= 3.0
    assert report.passed


def test_wg_table_orthogonal_closed_forms():
    report = run_wg_table(p=2, d=10, kind="orthogonal")
    assert _stat(report, "closed_form:wg:diagonal").estimate == pytest.approx(11 / 1080, rel=1e-12)
    assert _stat(report, "closed_form:wg:off_diagonal").estimate == pytest.approx(-1 / 1080, rel=1e-12)
    assert report.passed


@pytest.mark.parametrize("kind", ["unitary", "orthogonal"])
def test_wg_table_order_one(kind):
    report = run_wg_table(p=1, d=7, kind=kind)
    assert _stat(report, "closed_form:wg:id").estimate == pytest.approx(1 / 7)
    assert not report.decay_fits and report.notes
    assert report.passed


def test_wg_table_rejects_unknown_group():
    with pytest.raises(ValueError):
        run_wg_table(kind="symplectic")


def test_twirl_check_small():
    report = run_twirl_check(d=3, trials=300, seed=1)
    assert _stat(report, "orthogonal_fixed_point:omega").passed
    assert _stat(report, "unitary_fixed_point:swap").passed
    assert report.passed


def test_exact_legwise_products_have_no_mixed_cumulants():
    rng = np.random.default_rng(3)
    A, B = _hermitian((3,), rng), _hermitian((4,), rng)
    family = [
        MultipartiteMatrix.kron([A.data, np.eye(4)]),
        MultipartiteMatrix.kron([np.eye(3), B.data]),
    ]
    report = run_lui_freeness(exact_family=family, p_max=3)
    assert _stat(report, "exact_mixed_cumulant_max").estimate <= 1e-10
    assert report.passed


def test_generic_pair_has_mixed_cumulants():
    rng = np.random.default_rng(4)
    family = [_hermitian((2, 2), rng), _hermitian((2, 2), rng)]
    assert exact_mixed_statistic(family, [(0, 1)]) > 1e-3


def test_constant_word_is_rejected():
    with pytest.raises(ValueError):
        run_lui_freeness(words=[(0, 0)], dims_schedule=((2, 2), (3, 3)), trials=2)


def test_lui_freeness_report_shape():
    report = run_lui_freeness(dims_schedule=((2, 2), (4, 4)), p_max=2, trials=4, seed=2)
    assert report.decay_fits[0].statistic == "mixed_cumulant_rms"
    assert report.decay_fits[0].sizes == [2, 4]
    name = "final_mixed_cumulant:4x4"
    assert _stat(report, name).k > 4.0
    assert report.tables[name]


def test_lui_freeness_is_reproducible():
    a = run_lui_freeness(dims_schedule=((2, 2), (3, 3)), p_max=2, trials=3, seed=5)
    b = run_lui_freeness(dims_schedule=((2, 2), (3, 3)), p_max=2, trials=3, seed=5)
    assert a.to_json() == b.to_json()


def test_lui_freeness_runs_given_ensembles():
    specs = [
        EnsembleSpec(kind="wishart", dims=[2, 2], local_conjugation=True),
        {"kind": "wishart", "aspect": 0.5, "local_conjugation": True},
    ]
    report = run_lui_freeness(dims_schedule=((2, 2), (3, 3)), p_max=2, trials=3, seed=1, specs=specs)
    echoed = report.config.params["specs"]
    assert [s["kind"] for s in echoed] == ["wishart", "wishart"]
    assert echoed[1]["aspect"] == 0.5
    assert "dims" not in echoed[0]
    assert report.config.params["words"] == [[0, 1]]
    assert report.decay_fits[0].sizes == [2, 3]
    assert report.tables["final_mixed_cumulant:3x3"]


def test_lui_freeness_default_pair_is_echoed():
    report = run_lui_freeness(dims_schedule=((2, 2), (3, 3)), p_max=2, trials=3, seed=1)
    assert [s["kind"] for s in report.config.params["specs"]] == ["tensor_gue", "wishart"]


def test_lui_freeness_rejects_bad_ensembles():
    wishart = {"kind": "wishart", "local_conjugation": True}
    with pytest.raises(ValueError):
        run_lui_freeness(dims_schedule=((2, 2),), trials=2, specs=[wishart])
    with pytest.raises(ValueError):
        run_lui_freeness(dims_schedule=((2, 2),), trials=2, specs=[wishart, wishart], words=[(0, 2)])
    with pytest.raises(ValueError):
        run_lui_freeness(dims_schedule=((2, 2),), trials=2, specs=[wishart, {"kind": "wishart", "aspect": -1}])


def test_free_cumulant_samples_match_traces():
    dims, seed, trials = (2, 3), 5, 4
    sampler = lambda rng: [_hermitian(dims, rng), _hermitian(dims, rng)]
    k = estimate_tensor_cumulants(sampler, all_tuples(2, 2), trials, seed, word=(0, 1))
    samples = free_cumulant_samples(k)
    D = 6
    for trial in range(trials):
        X, Y = sampler(trial_rng(seed, trial))
        expected = np.trace(X.data @ Y.data) / D - np.trace(X.data) * np.trace(Y.data) / D**2
        assert samples[trial] == pytest.approx(expected, abs=1e-12)


def test_disjoint_edges_are_exactly_tensor_independent():
    graph = EmbeddingGraph(q=2, r=2, t=(1, 2), b=(3, 4))
    rng = np.random.default_rng(6)
    Ys = graph.embed([_hermitian((2, 2), rng), _hermitian((2, 2), rng)], 2, 2)
    assert exact_mixed_statistic(Ys, [(0, 1)]) <= 1e-10


def test_embedding_graph_validation():
    assert GRAPHS["star"].constant_side
    assert not GRAPHS["path"].constant_side
    with pytest.raises(ValueError):
        EmbeddingGraph(q=1, r=2, t=(1, 1), b=(2, 2))
    with pytest.raises(ValueError):
        EmbeddingGraph(q=1, r=2, t=(1, 2), b=(2, 3))
    with pytest.raises(ValueError):
        EmbeddingGraph(q=1, r=2, t=(1,), b=(2, 3))


def test_embedding_rejects_bad_input():
    with pytest.raises(ValueError):
        run_embedding(graph="cycle")
    with pytest.raises(ValueError):
        run_embedding(dims_schedule=((2, 2, 2),), trials=2)


def test_path_embedding_notes_missing_plain_freeness():
    report = run_embedding(graph="path", ensemble="gue", dims_schedule=((2, 2), (3, 3)), trials=3)
    assert [f.statistic for f in report.decay_fits] == ["mixed_tensor_cumulant_rms"]
    assert report.notes


def test_pt_family_sampler_keeps_last_leg():
    signs, sampler = pt_family_sampler(EnsembleSpec(kind="gue", dims=[2, 2, 2]))
    assert signs == [(1, 1, 1), (1, -1, 1), (-1, 1, 1), (-1, -1, 1)]
    assert len(sampler(np.random.default_rng(0))) == 4


def test_transpose_identity_is_exact():
    X = random_complex_matrix((2, 3), np.random.default_rng(7))
    assert transpose_identity_gap(X, (-1, 1), 3) <= 1e-10
    assert transpose_identity_gap(X, (1, -1), 2) <= 1e-10


@pytest.mark.parametrize("t", [(1, 1), (-1, -1), (1, -1, 1)])
def test_pt_semicircle_rejects_bad_sign_vectors(t):
    with pytest.raises(ValueError):
        run_pt_semicircle(t=t, dims_schedule=((4, 4),), trials=2)


def test_pt_semicircle_small_run():
    report = run_pt_semicircle(ensemble="gue", dims_schedule=((6, 6),), trials=4, p_max=4)
    assert _stat(report, "pt_trace_invariance:6x6").passed
    table = pd.DataFrame(report.tables["pt_moments:6x6"])
    assert list(table["p"]) == [1, 2, 3, 4]
    assert table["semicircle"].iloc[1] > 0


def test_pt_freeness_small_run():
    report = run_pt_freeness(ensemble="gue", dims_schedule=((2, 2), (3, 3)), trials=3, p_max=2)
    assert _stat(report, "transpose_identity_rel_gap").passed
    assert {f.statistic for f in report.decay_fits} == {"mixed_free_cumulant_rms", "mixed_tensor_cumulant_rms"}


def test_combinatorial_oracles_hold():
    assert combinatorics_mismatches() == {
        "snc_catalan": 0, "snc_brute_force": 0, "pairing_join": 0, "factorize_round_trip": 0,
    }
    assert mobius_round_trip_mismatches(np.random.default_rng(8), 2, 2) == 0


def test_axioms_check_passes():
    report = run_axioms_check(dims=(2, 3), p_max=3)
    assert report.passed
    assert any(s.name.startswith("axiom:substitution worked instance") for s in report.statistics)


def test_histogram_frame_density_integrates_to_one():
    values = np.random.default_rng(9).normal(size=1000)
    frame = histogram_frame(values, bins=20)
    assert frame["count"].sum() == 1000
    assert float(np.sum(frame["density"] * (frame["right"] - frame["left"]))) == pytest.approx(1.0)


def test_clt_rejects_bad_model():
    with pytest.raises(ValueError):
        run_clt(lambdas=(1, 1), sigmas=(1,))
    with pytest.raises(ValueError):
        run_clt(lambdas=(1, 1), sigmas=(1, -1))


def test_clt_small_run_without_histograms():
    report = run_clt(N_list=(1, 2), d=4, trials=3, p_max=3, histogram_draws=0)
    assert {s.name for s in report.statistics} == {f"clt_m{p}:N={N}" for p in (1, 2, 3) for N in (1, 2)}
    assert len(report.tables["partial_sum_moments"]) == 6
    assert not report.artifacts


def test_clt_writes_histograms(tmp_path):
    report = run_clt(N_list=(1,), d=4, trials=2, p_max=2, histogram_d=8, histogram_draws=2,
                     histogram_triples=((1.0, 1.0, 1.0),), out_dir=tmp_path)
    assert report.artifacts == ["clt_samples_1_1_1.csv", "clt_hist_1_1_1.csv"]
    for name in report.artifacts:
        assert (tmp_path / name).exists()
    assert (tmp_path / "clt_samples_1_1_1.csv.json").exists()
    assert any(s.name == "mu_infinity_m2:1_1_1" for s in report.statistics)


@pytest.mark.slow
def test_twirl_check_acceptance():
    assert run_twirl_check().passed


@pytest.mark.slow
def test_lui_freeness_acceptance():
    assert run_lui_freeness().passed


@pytest.mark.slow
@pytest.mark.parametrize("ensemble", ["wishart", "gue"])
def test_pt_semicircle_acceptance(ensemble):
    assert run_pt_semicircle(ensemble=ensemble).passed


@pytest.mark.slow
def test_pt_freeness_acceptance():
    assert run_pt_freeness().passed


@pytest.mark.slow
def test_star_embedding_acceptance():
    assert run_embedding().passed


@pytest.mark.slow
def test_clt_acceptance(tmp_path):
    assert run_clt(out_dir=tmp_path).passed
