import itertools
from fractions import Fraction

import numpy as np
import pytest

from src.config import MC_ATOL
from src.cumulant import (
    CumulantTable,
    MomentTable,
    cumulants_to_moments,
    downward_closure,
    estimate_tensor_cumulants,
    estimate_tensor_moments,
    free_cumulants_from_tensor,
    irreducible_tuples,
    is_irreducible,
    matrix_moment_table,
    mixed_cumulant_rms,
    mixed_cumulant_scan,
    moments_to_cumulants,
    tensor_haar_moment,
    transpose_tuple,
    vanishing_condition_set,
)
from src.perm import Permutation, all_tuples, alpha_over_pi, kernel_partition, meet_snc, parse_tuple, tuple_leq, tuple_mobius
from src.rmt import EnsembleSpec, draw, gue_tensor_moment, local_haar
from src.tensors import MultipartiteMatrix, partial_transpose, random_complex_matrix

G2, I2 = Permutation.full_cycle(2), Permutation.identity(2)
G4 = Permutation.full_cycle(4)


def _random_integer_table(p, r, seed, cls=MomentTable):
    rng = np.random.default_rng(seed)
    entries = {alpha: Fraction(int(rng.integers(-9, 10))) for alpha in all_tuples(p, r)}
    return cls(p=p, r=r, entries=entries)


def _hermitian(dims, rng):
    X = random_complex_matrix(dims, rng)
    return (X + X.adjoint()) * 0.5


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def test_order_one_cumulant_is_the_mean():
    alpha = (Permutation.identity(1),) * 2
    m = MomentTable(p=1, r=2, entries={alpha: 3.5})
    assert moments_to_cumulants(m)[alpha] == 3.5


def test_bipartite_order_two_formula():
    m = _random_integer_table(2, 2, seed=1)
    k = moments_to_cumulants(m)
    assert k[(G2, G2)] == m[(G2, G2)] - m[(G2, I2)] - m[(I2, G2)] + m[(I2, I2)]
    assert k[(G2, I2)] == m[(G2, I2)] - m[(I2, I2)]
    assert k[(I2, I2)] == m[(I2, I2)]


@pytest.mark.parametrize("p, r", [(2, 1), (3, 1), (2, 2), (3, 2)])
def test_transform_matches_double_loop(p, r):
    m = _random_integer_table(p, r, seed=p * 10 + r)
    k = moments_to_cumulants(m)
    tuples = all_tuples(p, r)
    for beta in tuples:
        expected = sum(m[a] * tuple_mobius(a, beta) for a in tuples if tuple_leq(a, beta))
        assert k[beta] == expected


@pytest.mark.parametrize("p, r", [(2, 3), (3, 2), (3, 3), (4, 1)])
def test_mobius_round_trip_is_exact(p, r):
    m = _random_integer_table(p, r, seed=7 * p + r)
    back = cumulants_to_moments(moments_to_cumulants(m))
    assert back.entries == m.entries


def test_only_first_order_cumulant_gives_power_moments():
    c = Fraction(3, 2)
    p, r = 3, 2
    ident = (Permutation.identity(p),) * r
    entries = {alpha: (c**p if alpha == ident else 0) for alpha in all_tuples(p, r)}
    m = cumulants_to_moments(CumulantTable(p=p, r=r, entries=entries))
    assert all(v == c**p for v in m.entries.values())


def test_incomplete_table_raises_value_error():
    m = MomentTable(p=2, r=2, entries={(G2, G2): 1.0})
    with pytest.raises(ValueError, match="incomplete"):
        moments_to_cumulants(m)


def test_sparse_downward_closed_table():
    m = _random_integer_table(3, 2, seed=3)
    target = [(Permutation.full_cycle(3),) * 2]
    sparse = MomentTable(p=3, r=2, entries={a: m[a] for a in downward_closure(target)})
    assert moments_to_cumulants(sparse, target)[target[0]] == moments_to_cumulants(m)[target[0]]


def test_is_irreducible():
    g3 = Permutation.full_cycle(3)
    assert is_irreducible((g3, g3))
    assert not is_irreducible((Permutation.identity(3),) * 2)
    assert is_irreducible(parse_tuple("(1 2)(3);(1)(2 3)"))
    assert not is_irreducible(parse_tuple("(1 2)(3);(1 2)(3)"))
    assert len(irreducible_tuples(2, 2)) == 3


def test_free_cumulant_from_tensor_order_two():
    k = _random_integer_table(2, 2, seed=5, cls=CumulantTable)
    assert free_cumulants_from_tensor(k, G2) == k[(G2, G2)] + k[(G2, I2)] + k[(I2, G2)]
    single = _random_integer_table(3, 1, seed=6, cls=CumulantTable)
    for alpha in single.entries:
        assert free_cumulants_from_tensor(single, alpha[0]) == single[alpha]


def test_free_cumulant_of_squares_of_tensor_products():
    # x = s1 ⊗ s1, y = s2 ⊗ s2 with free s1, s2: leg cumulants of (x², y², x², y²)
    a = {1: Fraction(2), 2: Fraction(3)}
    b = {1: Fraction(5), 2: Fraction(7)}
    word = (0, 1, 0, 1)

    def leg(sigma):
        out = Fraction(1)
        for cyc in sigma.cycles():
            labels = {word[i] for i in cyc}
            if len(labels) > 1:
                return Fraction(0)
            out *= (a if labels == {0} else b)[len(cyc)]
        return out

    entries = {beta: leg(beta[0]) * leg(beta[1]) for beta in downward_closure([(G4, G4)])}
    k = CumulantTable(p=4, r=2, entries=entries, word=word)
    assert free_cumulants_from_tensor(k, G4) == 2 * a[2] * b[1] ** 2 * b[2] * a[1] ** 2


def test_mixed_scan_is_empty_for_a_constant_word():
    k = _random_integer_table(2, 2, seed=8, cls=CumulantTable)
    assert mixed_cumulant_scan(k) == 0.0
    assert mixed_cumulant_scan(k, f=(0, 1)) > 0


@pytest.mark.parametrize("word", [(0, 1), (0, 1, 1), (0, 1, 0), (1, 0, 0, 1), (0, 1, 0, 1)])
def test_mixed_cumulants_vanish_for_legwise_products(rng, word):
    d = 4
    A = random_complex_matrix((d,), rng).data
    B = random_complex_matrix((d,), rng).data
    family = [MultipartiteMatrix.kron([A, np.eye(d)]), MultipartiteMatrix.kron([np.eye(d), B])]
    p = len(word)
    k = moments_to_cumulants(matrix_moment_table(family, p, word=word))
    assert mixed_cumulant_scan(k) <= 1e-10


def test_cumulants_are_additive_on_legwise_products(rng):
    d, p = 3, 3
    X = MultipartiteMatrix.kron([_hermitian((d,), rng).data, np.eye(d)])
    Y = MultipartiteMatrix.kron([np.eye(d), _hermitian((d,), rng).data])
    kx, ky, ks = (moments_to_cumulants(matrix_moment_table(Z, p)) for Z in (X, Y, X + Y))
    for alpha in irreducible_tuples(p, 2):
        assert ks[alpha] == pytest.approx(kx[alpha] + ky[alpha], abs=1e-10)


def test_order_two_cumulants_of_hermitian_are_nonnegative(rng):
    for _ in range(5):
        k = moments_to_cumulants(matrix_moment_table(_hermitian((3, 4), rng), 2))
        for alpha in irreducible_tuples(2, 2):
            assert abs(k[alpha].imag) <= 1e-12
            assert k[alpha].real >= -1e-12


def test_cumulants_of_partial_transpose(rng):
    X = random_complex_matrix((2, 3), rng)
    t = (1, -1)
    k = moments_to_cumulants(matrix_moment_table(X, 3))
    kt = moments_to_cumulants(matrix_moment_table(partial_transpose(X, t), 3))
    for alpha in all_tuples(3, 2):
        assert kt[alpha] == pytest.approx(k[transpose_tuple(alpha, t)], abs=1e-10)
    with pytest.raises(ValueError):
        transpose_tuple((G2, G2), (1, 0))


def test_estimate_with_constant_sampler_is_exact(rng):
    X = random_complex_matrix((2, 2), rng)
    tuples = all_tuples(2, 2)
    m = estimate_tensor_moments(lambda _: X, tuples, trials=4, seed=0)
    exact = matrix_moment_table(X, 2)
    for alpha in tuples:
        assert m.stderr[alpha] == 0.0
        assert m[alpha] == pytest.approx(exact[alpha])
    with pytest.raises(ValueError):
        estimate_tensor_moments(lambda _: X, tuples, trials=1, seed=0)


def test_estimate_is_deterministic_and_gue_variance():
    spec = EnsembleSpec(kind="gue", dims=[64])
    sampler = lambda g: draw(spec, g)
    gamma = [(G2,)]
    a = estimate_tensor_moments(sampler, gamma, trials=60, seed=4)
    b = estimate_tensor_moments(sampler, gamma, trials=60, seed=4, threads=3)
    assert a[gamma[0]] == b[gamma[0]]
    assert abs(a[gamma[0]].real - 1) <= 5 * a.stderr[gamma[0]]


def test_plug_in_cumulant_stderr_uses_the_same_trials():
    spec = EnsembleSpec(kind="wishart", dims=[4, 4])
    k = estimate_tensor_cumulants(lambda g: draw(spec, g), [(G2, G2)], trials=30, seed=2)
    assert set(k.entries) == {(G2, G2)}
    per_trial = k.samples[(G2, G2)]
    assert k[(G2, G2)] == pytest.approx(per_trial.mean())
    assert k.stderr[(G2, G2)] == pytest.approx(per_trial.real.std(ddof=1) / np.sqrt(30), rel=1e-6)


def test_table_json_and_frame_round_trip():
    m = moments_to_cumulants(matrix_moment_table(random_complex_matrix((2, 2), np.random.default_rng(1)), 2))
    frame = m.to_frame()
    assert list(frame.columns) == ["tuple", "re", "im", "stderr"]
    assert len(frame) == 4
    back = CumulantTable.from_json(m.to_json())
    assert back.mode == "exact"
    for alpha, value in m.entries.items():
        assert back[alpha] == pytest.approx(value)


def test_tensor_haar_moment_indicator():
    assert tensor_haar_moment((G2, G2), (1, -1)) == 1
    assert tensor_haar_moment((G2, I2), (1, -1)) == 0
    assert tensor_haar_moment((G4, parse_tuple("(1 2)(3 4)")[0]), (1, -1, 1, -1)) == 1
    assert tensor_haar_moment((G4, parse_tuple("(1 3)(2 4)")[0]), (1, -1, 1, -1)) == 0
    with pytest.raises(ValueError):
        tensor_haar_moment((G2,), (1, 0))


def test_tensor_haar_moments_from_local_unitaries():
    d, p = 8, 2
    eps = (1, -1)

    def sampler(g):
        u = MultipartiteMatrix.kron(local_haar((d, d), g))
        return [u, u.adjoint()]

    m = estimate_tensor_moments(sampler, all_tuples(p, 2), trials=200, seed=6, word=(0, 1))
    for alpha in m.entries:
        assert abs(m[alpha] - tensor_haar_moment(alpha, eps)) <= 5 * m.stderr[alpha] + 2 / d**2 + MC_ATOL


def test_vanishing_set_of_alternating_word():
    ids, s13, s24 = (parse_tuple(t, 4)[0] for t in ("(1)", "(1 3)", "(2 4)"))
    found = set(vanishing_condition_set((G4, G4), (0, 1, 0, 1)))
    assert found == set(itertools.product([ids, s13, s24], repeat=2))
    g3 = Permutation.full_cycle(3)
    assert vanishing_condition_set((g3, g3), (5, 5, 5)) == [(g3, g3)]


def _meets_stay_inside(alpha, f):
    found = vanishing_condition_set(alpha, f)
    members = set(found)
    floor = tuple(alpha_over_pi(a, kernel_partition(f)) for a in alpha)
    for a, b in itertools.combinations(found, 2):
        meet = tuple(meet_snc(x, y) for x, y in zip(a, b))
        if meet not in members:
            return False
    return all(tuple_leq(floor, b) for b in found)


def _label_functions(p):
    seen = set()
    for f in itertools.product(range(p), repeat=p):
        first = {}
        canon = tuple(first.setdefault(v, len(first)) for v in f)
        if canon not in seen:
            seen.add(canon)
            yield canon


@pytest.mark.parametrize("p, r", [(2, 2), (3, 2), (4, 1)])
def test_vanishing_sets_are_meet_closed(p, r):
    for alpha in all_tuples(p, r):
        for f in _label_functions(p):
            assert _meets_stay_inside(alpha, f)


def test_vanishing_sets_are_meet_closed_for_full_cycle_pairs():
    for sigma in (Permutation.identity(4), G4, parse_tuple("(1 3 2 4)", 4)[0]):
        for f in _label_functions(4):
            assert _meets_stay_inside((G4, sigma), f)


@pytest.mark.slow
def test_unitarily_invariant_cumulants_concentrate_on_equal_legs():
    d = 8
    spec = EnsembleSpec(kind="gue", dims=[d, d])
    for p in (2, 3):
        tuples = all_tuples(p, 2)
        exact = moments_to_cumulants(
            MomentTable(p=p, r=2, entries={a: gue_tensor_moment(a, (d, d), (1, 2)) for a in tuples})
        )
        estimate = moments_to_cumulants(estimate_tensor_moments(lambda g: draw(spec, g), tuples, trials=300, seed=p))
        for alpha in tuples:
            assert abs(estimate[alpha] - exact[alpha]) <= 5 * estimate.stderr[alpha] + MC_ATOL
            if alpha[0] != alpha[1] and is_irreducible(alpha):
                assert abs(exact[alpha]) <= 2 / d**2


@pytest.mark.slow
def test_mixed_statistic_decays_for_independent_gue_pairs():
    rms = []
    for d in (4, 8):
        specs = [EnsembleSpec(kind="gue", dims=[d, d]), EnsembleSpec(kind="gue", dims=[d, d])]
        k = estimate_tensor_cumulants(
            lambda g: [draw(s, g) for s in specs], irreducible_tuples(2, 2), trials=200, seed=d, word=(0, 1)
        )
        rms.append(mixed_cumulant_rms([k]))
    assert rms[0] > 1.5 * rms[1]
