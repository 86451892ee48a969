import numpy as np
import pytest

from ldpbd.exceptions import (
    DuplicateBlocks,
    FisherViolation,
    InvalidIncidence,
    InvalidParameter,
    NonConstantColumnSum,
    NonConstantRowSum,
    PointOutOfRange,
    RowLimitExceeded,
    UnbalancedPairs,
)
from ldpbd.models import DesignName, DesignParams, Polarity
from ldpbd.services.design_service import design_service, is_prime, prime_power_base

from tests.conftest import DESIGN_CASES


def test_fano_design(fano):
    params = design_service.verify_design(fano)
    assert params.as_tuple() == (7, 7, 3, 3, 1)
    assert params.is_symmetric
    assert design_service.blocks_from_incidence(fano)[0] == [1, 2, 4]


def test_trivial_design():
    A = design_service.trivial_design(7)
    assert (A == np.eye(7)).all()
    assert design_service.verify_design(A).as_tuple() == (7, 7, 1, 1, 0)
    assert design_service.verify_design(design_service.trivial_design(2)).as_tuple() == (2, 2, 1, 1, 0)


def test_trivial_design_too_small():
    with pytest.raises(InvalidParameter):
        design_service.trivial_design(1)


def test_complete_design_small():
    A = design_service.complete_design(3, 2)
    assert A.tolist() == [[1, 1, 0], [1, 0, 1], [0, 1, 1]]
    assert design_service.verify_design(A).as_tuple() == (3, 3, 2, 2, 1)


@pytest.mark.parametrize(
    "v, k, expected",
    [
        (7, 3, (7, 35, 15, 3, 5)),
        (7, 2, (7, 21, 6, 2, 1)),
        (4, 2, (4, 6, 3, 2, 1)),
        (7, 1, (7, 7, 1, 1, 0)),
    ],
)
def test_complete_design_params(v, k, expected):
    assert design_service.verify_design(design_service.complete_design(v, k)).as_tuple() == expected


@pytest.mark.parametrize("k", [0, 7, 9])
def test_complete_design_rejects_k(k):
    with pytest.raises(InvalidParameter):
        design_service.complete_design(7, k)


def test_complete_design_row_limit(override_settings):
    override_settings(row_limit=10)
    with pytest.raises(RowLimitExceeded) as exc_info:
        design_service.complete_design(7, 3)
    assert exc_info.value.rows == 35
    assert exc_info.value.exit_code == 2


@pytest.mark.parametrize(
    "t, polarity, expected",
    [
        (3, Polarity.MINUS, (7, 7, 4, 4, 2)),
        (3, Polarity.PLUS, (7, 7, 3, 3, 1)),
        (2, Polarity.MINUS, (3, 3, 2, 2, 1)),
        (2, Polarity.PLUS, (3, 3, 1, 1, 0)),
        (4, Polarity.MINUS, (15, 15, 8, 8, 4)),
    ],
)
def test_hadamard_design(t, polarity, expected):
    assert design_service.verify_design(design_service.hadamard_design(t, polarity)).as_tuple() == expected


def test_hadamard_polarities_are_complementary():
    plus = design_service.hadamard_design(3, Polarity.PLUS)
    minus = design_service.hadamard_design(3, Polarity.MINUS)
    assert ((plus + minus) == 1).all()


def test_hadamard_design_rejects_small_order():
    with pytest.raises(InvalidParameter):
        design_service.hadamard_design(1)


@pytest.mark.parametrize(
    "p, t, expected",
    [
        (2, 3, (7, 7, 3, 3, 1)),
        (3, 3, (13, 13, 4, 4, 1)),
        (2, 2, (3, 3, 1, 1, 0)),
        (2, 4, (15, 15, 7, 7, 3)),
    ],
)
def test_projective_design(p, t, expected):
    assert design_service.verify_design(design_service.projective_design(p, t)).as_tuple() == expected


@pytest.mark.parametrize("p", [4, 6, 1])
def test_projective_design_rejects_non_prime(p):
    with pytest.raises(InvalidParameter):
        design_service.projective_design(p, 3)


def test_projective_design_prime_power_message():
    with pytest.raises(InvalidParameter) as exc_info:
        design_service.projective_design(9, 2)
    assert "3^m" in exc_info.value.message


@pytest.mark.parametrize("name", sorted(DESIGN_CASES))
def test_constructor_gram_identity(name):
    A = DESIGN_CASES[name]().astype(np.int64)
    params = design_service.verify_design(A)
    v = params.v
    expected = (params.r - params.lambda_) * np.eye(v, dtype=np.int64) + params.lambda_
    assert (A.T @ A == expected).all()
    assert params.satisfies_identities()


@pytest.mark.parametrize("name", sorted(DESIGN_CASES))
def test_constructor_output_is_read_only(name):
    A = DESIGN_CASES[name]()
    with pytest.raises(ValueError):
        A[0, 0] = 1 - A[0, 0]


def test_single_subset_is_trivial():
    for v in range(2, 9):
        complete = design_service.verify_design(design_service.complete_design(v, 1))
        trivial = design_service.verify_design(design_service.trivial_design(v))
        assert complete == trivial


def test_cyclic_design_unbalanced(cyclic_012):
    with pytest.raises(UnbalancedPairs) as exc_info:
        design_service.verify_design(cyclic_012)
    assert exc_info.value.pair == (0, 2)
    assert exc_info.value.count == 1
    assert exc_info.value.expected == 2


def test_cyclic_design_difference_set():
    A = design_service.cyclic_design(13, (0, 1, 3, 9))
    assert design_service.verify_design(A).as_tuple() == (13, 13, 4, 4, 1)


def test_build_design_by_name():
    assert (design_service.build_design(DesignName.FANO) == design_service.fano_design()).all()
    A = design_service.build_design("complete", v=5, k=2)
    assert design_service.verify_design(A).as_tuple() == (5, 10, 4, 2, 1)
    A = design_service.build_design("cyclic", v=7, base=[1, 2, 4])
    assert (A == design_service.fano_design()).all()


def test_build_design_missing_parameter():
    with pytest.raises(InvalidParameter):
        design_service.build_design("complete", v=7)


def test_blocks_round_trip(fano):
    blocks = design_service.blocks_from_incidence(fano)
    assert (design_service.incidence_from_blocks(blocks, 7) == fano).all()
    assert design_service.blocks_from_incidence(np.eye(2, dtype=np.uint8)) == [[0], [1]]


def test_incidence_from_blocks_errors():
    with pytest.raises(PointOutOfRange):
        design_service.incidence_from_blocks([[0, 7]], 7)
    with pytest.raises(DuplicateBlocks):
        design_service.incidence_from_blocks([[0, 1], [1, 0]], 3)
    with pytest.raises(InvalidIncidence):
        design_service.incidence_from_blocks([[0, 0]], 3)


def test_verify_design_rejects_non_binary():
    with pytest.raises(InvalidIncidence):
        design_service.verify_design(np.array([[1, 2], [0, 1]]))


def test_verify_design_rejects_duplicate_rows():
    with pytest.raises(DuplicateBlocks):
        design_service.verify_design(np.array([[1, 0], [1, 0]]))


def test_verify_design_rejects_empty_blocks():
    with pytest.raises(InvalidIncidence):
        design_service.verify_design(np.zeros((1, 3), dtype=np.uint8))


def test_verify_design_non_constant_row_sum():
    with pytest.raises(NonConstantRowSum) as exc_info:
        design_service.verify_design(np.array([[1, 0, 0], [0, 1, 1]]))
    assert exc_info.value.row == 1


def test_verify_design_non_constant_column_sum():
    with pytest.raises(NonConstantColumnSum) as exc_info:
        design_service.verify_design(np.array([[1, 1, 0], [1, 0, 1]]))
    assert exc_info.value.column == 1


def test_verify_design_fisher():
    with pytest.raises(FisherViolation):
        design_service.verify_design(np.array([[1, 1, 1]]))


def test_satisfies_identities_detects_tampering(fano):
    params = design_service.verify_design(fano)
    for field in ("v", "b", "r", "k", "lambda_"):
        tampered = params.model_copy(update={field: getattr(params, field) + 1})
        assert not tampered.satisfies_identities()


def test_design_params_alias():
    params = DesignParams.model_validate({"v": 7, "b": 7, "r": 3, "k": 3, "lambda": 1})
    assert params.lambda_ == 1
    assert params.model_dump(by_alias=True)["lambda"] == 1


def test_prime_helpers():
    assert [n for n in range(20) if is_prime(n)] == [2, 3, 5, 7, 11, 13, 17, 19]
    assert prime_power_base(8) == 2
    assert prime_power_base(9) == 3
    assert prime_power_base(12) is None
