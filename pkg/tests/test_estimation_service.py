import numpy as np
import pytest

from ldpbd.exceptions import CountMismatch, DimensionMismatch, InvalidCounts, SingularGram
from ldpbd.services.design_service import design_service
from ldpbd.services.estimation_service import estimation_service, fit_structure
from ldpbd.services.mechanism_service import mechanism_service, uniform

from tests.conftest import DESIGN_CASES, EPS_2, EPS_4_3, tpm_from_positions


def build(name, eps=EPS_4_3):
    Q, _ = mechanism_service.build_mechanism(DESIGN_CASES[name](), eps)
    return Q


def test_binary_debias_matrix():
    Q, _ = mechanism_service.build_mechanism(design_service.trivial_design(2), EPS_2)
    L = estimation_service.debias_matrix(Q)
    assert L == pytest.approx(np.array([[2.0, -1.0], [-1.0, 2.0]]), abs=1e-12)


@pytest.mark.parametrize("name", sorted(DESIGN_CASES))
def test_debias_matrix_inverts_mechanism(name):
    Q = build(name)
    L = estimation_service.debias_matrix(Q)
    assert L @ Q == pytest.approx(np.eye(Q.shape[1]), abs=1e-10)


@pytest.mark.parametrize("name", sorted(DESIGN_CASES))
def test_debias_matrix_unbiased_for_any_weights(name):
    Q = build(name, EPS_2)
    rng = np.random.default_rng(11)
    for _ in range(3):
        nu = rng.uniform(0.1, 2.0, size=Q.shape[0])
        L = estimation_service.debias_matrix(Q, nu)
        assert L @ Q == pytest.approx(np.eye(Q.shape[1]), abs=1e-10)


def test_debias_matrix_closed_form_matches_dense(fano_mechanism):
    nu = fano_mechanism @ uniform(7)
    G = mechanism_service.gram_matrix(fano_mechanism, nu)
    dense = np.linalg.solve(G, fano_mechanism.T / nu)
    assert estimation_service.debias_matrix(fano_mechanism) == pytest.approx(dense, abs=1e-9)


def test_debias_matrix_singular():
    Q = tpm_from_positions([[1, 1, 0], [0, 0, 1]], EPS_2)
    with pytest.raises(SingularGram) as exc_info:
        estimation_service.debias_matrix(Q)
    assert exc_info.value.condition > 1e12


def test_estimate_exact_counts_binary():
    L = np.array([[2.0, -1.0], [-1.0, 2.0]])
    assert estimation_service.estimate(L, [2, 1], 3) == pytest.approx([1.0, 0.0], abs=1e-12)


def test_estimate_exact_counts_fano(fano, fano_mechanism):
    # n = 24 时 nQe_0 恰为整数计数
    counts = np.where(fano[:, 0] == 1, 4, 3)
    L = estimation_service.debias_matrix(fano_mechanism)
    estimate = estimation_service.estimate(L, counts, 24)
    assert estimate == pytest.approx(np.eye(7)[0], abs=1e-10)


def test_estimate_sums_to_one(fano_mechanism):
    L = estimation_service.debias_matrix(fano_mechanism)
    rng = np.random.default_rng(3)
    for _ in range(10):
        counts = rng.multinomial(500, uniform(7))
        assert estimation_service.estimate(L, counts, 500).sum() == pytest.approx(1.0, abs=1e-10)


def test_estimate_single_output_is_column(fano_mechanism):
    L = estimation_service.debias_matrix(fano_mechanism)
    counts = np.zeros(7, dtype=int)
    counts[4] = 10
    assert estimation_service.estimate(L, counts, 10) == pytest.approx(L[:, 4], abs=1e-15)


def test_estimate_errors(fano_mechanism):
    L = estimation_service.debias_matrix(fano_mechanism)
    with pytest.raises(CountMismatch):
        estimation_service.estimate(L, np.ones(7, dtype=int), 10)
    with pytest.raises(DimensionMismatch):
        estimation_service.estimate(L, np.ones(6, dtype=int), 6)


@pytest.mark.parametrize("counts", [[1.5, 1.5], [1.4, 1.6], [-1, 4], [np.nan, 3.0]])
def test_estimate_rejects_invalid_counts(counts):
    L = np.array([[2.0, -1.0], [-1.0, 2.0]])
    with pytest.raises(InvalidCounts):
        estimation_service.estimate(L, counts, 3)


def test_estimate_accepts_integral_floats():
    L = np.array([[2.0, -1.0], [-1.0, 2.0]])
    assert estimation_service.estimate(L, [2.0, 1.0], 3) == pytest.approx([1.0, 0.0], abs=1e-12)
    with pytest.raises(CountMismatch):
        estimation_service.estimate(L, [2.0, 2.0], 3)


@pytest.mark.parametrize(
    "name, expected",
    [
        ("fano", 1729 / 7),
        ("complete-7-3", 1729 / 7),
        ("trivial-7", 2905 / 7),
    ],
)
def test_trace_inverse_gram(name, expected):
    Q = build(name)
    assert estimation_service.trace_inverse_gram(Q) == pytest.approx(expected, abs=1e-9)
    assert estimation_service.trace_inverse_gram(Q, dense=True) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("name", sorted(DESIGN_CASES))
def test_trace_inverse_gram_matches_risk_constants(name):
    Q, spec = mechanism_service.build_mechanism(DESIGN_CASES[name](), EPS_2)
    constants = estimation_service.risk_constants(spec.design.v, spec.design.k, EPS_2)
    assert estimation_service.trace_inverse_gram(Q, dense=True) == pytest.approx(constants.trace_inv, rel=1e-9)


@pytest.mark.parametrize(
    "v, k, eps, expected",
    [
        (7, 3, EPS_4_3, 1728 / 7),
        (7, 1, EPS_4_3, 8712 / 21),
        (7, 2, EPS_2, 2916 / 70),
    ],
)
def test_minimax_bound(v, k, eps, expected):
    assert estimation_service.minimax_bound(v, k, eps) == pytest.approx(expected, rel=1e-12)


def test_minimax_bound_is_largest_at_uniform():
    rng = np.random.default_rng(5)
    uniform_bound = estimation_service.minimax_bound(7, 3, EPS_4_3)
    for _ in range(100):
        mu = rng.dirichlet(np.ones(7))
        assert estimation_service.minimax_bound(7, 3, EPS_4_3, mu) <= uniform_bound + 1e-12


def test_minimax_bound_point_mass():
    bound = estimation_service.minimax_bound(7, 3, EPS_4_3, np.eye(7)[0])
    assert bound == pytest.approx(1728 / 7 + 1 / 7 - 1, rel=1e-12)


@pytest.mark.parametrize("eps, a, b", [(EPS_4_3, 7 / 288, 287 / 288), (EPS_2, 0.14, 0.98)])
def test_risk_constants(eps, a, b):
    constants = estimation_service.risk_constants(7, 3, eps)
    assert constants.a_q == pytest.approx(a, rel=1e-12)
    assert constants.b_q == pytest.approx(b, rel=1e-12)
    assert constants.a_q + 7 * constants.b_q == pytest.approx(7.0, rel=1e-12)
    assert constants.eig_small == constants.a_q
    assert constants.eig_large == 7.0
    assert constants.trace_inv == pytest.approx(6 / a + 1 / 7, rel=1e-12)


def test_gram_eigenstructure(fano_mechanism):
    constants = estimation_service.risk_constants(7, 3, EPS_4_3)
    G = mechanism_service.gram_matrix(fano_mechanism, fano_mechanism @ uniform(7))
    residual = G - constants.a_q * np.eye(7)
    assert residual == pytest.approx(np.full((7, 7), constants.b_q), abs=1e-9)
    eigenvalues = np.sort(np.linalg.eigvalsh(G))
    assert eigenvalues[:6] == pytest.approx(np.full(6, constants.a_q), abs=1e-9)
    assert eigenvalues[6] == pytest.approx(7.0, abs=1e-9)


def test_fit_structure():
    structured, a, b, deviation = fit_structure(2 * np.eye(4) + 0.5, 1e-12)
    assert structured
    assert (a, b) == pytest.approx((2.0, 0.5))
    assert deviation == pytest.approx(0.0, abs=1e-15)
    G = 2 * np.eye(4) + 0.5
    G[0, 1] += 1e-3
    assert not fit_structure(G, 1e-9)[0]


def test_plugin_distribution():
    nu = estimation_service.plugin_distribution([0, 5, 5], 10)
    assert (nu > 0).all()
    assert nu.sum() == pytest.approx(1.0, abs=1e-15)
    assert nu[0] == pytest.approx((1 / 300) / (1 + 1 / 300))
    with pytest.raises(CountMismatch):
        estimation_service.plugin_distribution([1, 2], 5)
    with pytest.raises(InvalidCounts):
        estimation_service.plugin_distribution([0.5, 4.5], 5)


def test_empirical_debias_stays_unbiased(fano_mechanism):
    nu = estimation_service.plugin_distribution([10, 0, 3, 7, 2, 9, 1], 32)
    L = estimation_service.debias_matrix(fano_mechanism, nu)
    assert L @ fano_mechanism == pytest.approx(np.eye(7), abs=1e-9)


def test_project_to_simplex():
    assert estimation_service.project_to_simplex([0.6, 0.6, -0.2]) == pytest.approx([0.5, 0.5, 0.0], abs=1e-15)
    inside = np.array([0.2, 0.3, 0.5])
    assert estimation_service.project_to_simplex(inside) == pytest.approx(inside, abs=1e-15)
