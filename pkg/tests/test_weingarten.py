from fractions import Fraction

import numpy as np
import pytest

from src.config import MC_ATOL, TOL_MULT
from src.pairing import delta
from src.perm import Permutation
from src.rmt import haar_orthogonal, haar_unitary, trial_rng
from src.tensors import MultipartiteMatrix, random_complex_matrix
from src.weingarten import (
    familywise_multiplier,
    haar_orthogonal_moment,
    haar_unitary_moment,
    monte_carlo_twirl,
    omega_operator,
    orthogonal_wg,
    swap_operator,
    twirl2_orthogonal,
    twirl2_unitary,
    unitary_wg,
    wg_asymptotic_check,
)

ID2 = Permutation.identity(2)
SWAP = Permutation.full_cycle(2)


@pytest.mark.parametrize("d", [2, 3, 5, 8, 16, 64])
def test_unitary_order_two_values(d):
    table = unitary_wg(2, d)
    assert table(ID2) == pytest.approx(1 / (d * d - 1), rel=1e-10)
    assert table(SWAP) == pytest.approx(-1 / (d * (d * d - 1)), rel=1e-10)


@pytest.mark.parametrize("d", [3, 4, 7, 20])
def test_unitary_order_three_closed_forms(d):
    table = unitary_wg(3, d)
    denom = (d * d - 1) * (d * d - 4)
    assert table(Permutation.identity(3)) == pytest.approx((d * d - 2) / (d * denom), rel=1e-9)
    assert table(Permutation.parse("(1 2)(3)")) == pytest.approx(-1 / denom, rel=1e-9)
    assert table(Permutation.full_cycle(3)) == pytest.approx(2 / (d * denom), rel=1e-9)
    assert table.class_spread() <= 1e-9
    assert table.convolution_residual() <= 1e-10


def test_unitary_exact_mode():
    table = unitary_wg(2, 3, exact=True)
    assert table.exact[ID2] == Fraction(1, 8)
    assert table.exact[SWAP] == Fraction(-1, 24)
    table3 = unitary_wg(3, 4, exact=True)
    assert table3.exact[Permutation.full_cycle(3)] == Fraction(2, 4 * 15 * 12)
    with pytest.raises(ValueError):
        unitary_wg(5, 5, exact=True)


def test_order_must_not_exceed_dimension():
    with pytest.raises(ValueError):
        unitary_wg(3, 2)
    with pytest.raises(ValueError):
        orthogonal_wg(3, 2)
    with pytest.raises(ValueError):
        unitary_wg(0, 4)


@pytest.mark.parametrize("d", [2, 3, 6, 30])
def test_orthogonal_order_two_values(d):
    table = orthogonal_wg(2, d)
    denom = d * (d + 2) * (d - 1)
    for i in range(3):
        for j in range(3):
            expected = (d + 1) / denom if i == j else -1 / denom
            assert table.matrix[i, j] == pytest.approx(expected, rel=1e-10)
    assert table.inverse_residual() <= 1e-10


def test_orthogonal_exact_mode_and_lookup():
    table = orthogonal_wg(2, 3, exact=True)
    assert table.exact[0][0] == Fraction(4, 30)
    assert table.exact[0][1] == Fraction(-1, 30)
    assert table(delta(2), delta(2)) == pytest.approx(4 / 30)
    assert len(table.entries()) == 9


def test_orthogonal_order_three_inverts_gram():
    table = orthogonal_wg(3, 5)
    assert table.matrix.shape == (15, 15)
    assert table.inverse_residual() <= 1e-9
    assert np.allclose(table.matrix, table.matrix.T)


def test_unitary_asymptotics_decay_quadratically():
    small = wg_asymptotic_check(unitary_wg(3, 32))
    large = wg_asymptotic_check(unitary_wg(3, 64))
    assert small.kind == "unitary"
    assert small.max_abs / large.max_abs >= 3.0
    assert large.max_abs <= 12 / 64**2


def test_orthogonal_asymptotics_decay_linearly():
    small = wg_asymptotic_check(orthogonal_wg(2, 32))
    large = wg_asymptotic_check(orthogonal_wg(2, 64))
    assert small.kind == "orthogonal"
    assert small.max_abs / large.max_abs >= 1.7
    assert large.max_abs <= 2 / 64


def test_haar_moment_closed_forms():
    d = 5
    zeros = (0, 0)
    assert haar_unitary_moment((0,), (0,), (0,), (0,), d) == pytest.approx(1 / d)
    assert haar_unitary_moment(zeros, zeros, zeros, zeros, d) == pytest.approx(2 / (d * (d + 1)))
    assert haar_unitary_moment((0,), (0,), (1,), (0,), d) == 0.0
    assert haar_orthogonal_moment(zeros, zeros, d) == pytest.approx(1 / d)
    assert haar_orthogonal_moment((0,) * 4, (0,) * 4, d) == pytest.approx(3 / (d * (d + 2)))
    assert haar_orthogonal_moment((0, 0, 0), (0, 0, 0), d) == 0.0
    with pytest.raises(ValueError):
        haar_unitary_moment((0, 1), (0,), (0, 1), (0, 1), d)


@pytest.mark.parametrize(
    "i, j, ip, jp",
    [
        ((0, 1), (0, 1), (0, 1), (1, 0)),
        ((0, 1, 0), (0, 0, 1), (1, 0, 0), (0, 1, 0)),
        ((0, 0, 1), (1, 1, 2), (0, 1, 0), (2, 1, 1)),
    ],
)
def test_haar_unitary_moment_against_sampling(i, j, ip, jp):
    d, trials = 5, 20_000
    exact = haar_unitary_moment(i, j, ip, jp, d)
    values = []
    for t in range(trials):
        U = haar_unitary(d, trial_rng(21, t))
        values.append(np.prod([U[a, b] for a, b in zip(i, j)]) * np.prod([np.conj(U[a, b]) for a, b in zip(ip, jp)]))
    values = np.asarray(values)
    se = values.real.std(ddof=1) / np.sqrt(trials)
    assert abs(values.real.mean() - exact) <= 5 * se + MC_ATOL


def test_haar_orthogonal_moment_against_sampling():
    d, trials = 5, 20_000
    i, j = (0, 0, 1, 1), (0, 1, 0, 1)
    exact = haar_orthogonal_moment(i, j, d)
    values = []
    for t in range(trials):
        O = haar_orthogonal(d, trial_rng(22, t))
        values.append(np.prod([O[a, b] for a, b in zip(i, j)]))
    values = np.asarray(values)
    se = values.std(ddof=1) / np.sqrt(trials)
    assert abs(values.mean() - exact) <= 5 * se + MC_ATOL


def test_swap_and_omega_operators():
    d = 3
    F, W = swap_operator(d), omega_operator(d)
    assert np.allclose(F.data @ F.data, np.eye(d * d))
    assert F.trace() == pytest.approx(d)
    assert np.allclose(W.data @ W.data, d * W.data)
    assert W.trace() == pytest.approx(d)


@pytest.mark.parametrize("d", [2, 4])
def test_twirl_fixed_points(d):
    I = MultipartiteMatrix.identity((d, d))
    F, W = swap_operator(d), omega_operator(d)
    for X in (I, F):
        assert np.allclose(twirl2_unitary(X).data, X.data)
    for X in (I, F, W):
        assert np.allclose(twirl2_orthogonal(X).data, X.data)


def test_twirls_are_trace_preserving_projections():
    rng = np.random.default_rng(3)
    X = random_complex_matrix((3, 3), rng)
    for twirl in (twirl2_unitary, twirl2_orthogonal):
        Y = twirl(X)
        assert Y.trace() == pytest.approx(X.trace())
        assert np.allclose(twirl(Y).data, Y.data)


def test_twirl_rejects_unequal_legs():
    with pytest.raises(ValueError):
        twirl2_unitary(MultipartiteMatrix.identity((2, 3)))
    with pytest.raises(ValueError):
        twirl2_orthogonal(MultipartiteMatrix.identity((2, 2, 2)))


def test_familywise_multiplier_grows_with_family():
    assert familywise_multiplier(4, 1) == 4
    assert 4 < familywise_multiplier(4, 100) < familywise_multiplier(4, 10_000) < 7


@pytest.mark.slow
@pytest.mark.parametrize("orthogonal", [False, True])
def test_monte_carlo_twirl_matches_closed_form(orthogonal):
    d = 6
    X = random_complex_matrix((d, d), np.random.default_rng(4))
    estimate = monte_carlo_twirl(X, trials=2000, seed=13, orthogonal=orthogonal)
    exact = (twirl2_orthogonal if orthogonal else twirl2_unitary)(X).data
    k = familywise_multiplier(TOL_MULT, 2 * exact.size)
    assert estimate.max_standardized_deviation(exact, atol=MC_ATOL) <= k
