import math

import numpy as np
import pytest

from ldpbd.config import settings
from ldpbd.models import PrivacyParam
from ldpbd.services.design_service import design_service
from ldpbd.services.mechanism_service import mechanism_service


LN_4_3 = math.log(4 / 3)
LN_2 = math.log(2)

EPS_4_3 = PrivacyParam(epsilon=LN_4_3)
EPS_2 = PrivacyParam(epsilon=LN_2)


def tpm_from_positions(A, eps: PrivacyParam) -> np.ndarray:
    """不经过设计校验，直接按 p(A(e^ε-1)+J') 构造 TPM"""
    A = np.asarray(A, dtype=np.float64)
    r = A.sum(axis=0)[0]
    p = 1.0 / (r * (eps.e_eps - 1.0) + A.shape[0])
    return p * (A * (eps.e_eps - 1.0) + 1.0)


# 所有构造器的代表设计
DESIGN_CASES = {
    "fano": lambda: design_service.fano_design(),
    "trivial-7": lambda: design_service.trivial_design(7),
    "complete-7-3": lambda: design_service.complete_design(7, 3),
    "complete-7-2": lambda: design_service.complete_design(7, 2),
    "complete-5-2": lambda: design_service.complete_design(5, 2),
    "hadamard-3-plus": lambda: design_service.hadamard_design(3, "plus"),
    "hadamard-3-minus": lambda: design_service.hadamard_design(3, "minus"),
    "hadamard-4-minus": lambda: design_service.hadamard_design(4, "minus"),
    "projective-2-3": lambda: design_service.projective_design(2, 3),
    "projective-3-3": lambda: design_service.projective_design(3, 3),
}


@pytest.fixture
def fano():
    return design_service.fano_design()


@pytest.fixture
def fano_mechanism(fano):
    Q, _ = mechanism_service.build_mechanism(fano, EPS_4_3)
    return Q


@pytest.fixture
def cyclic_012():
    """{0,1,2} 模 7 循环展开：行列和恒定但点对不平衡"""
    return design_service.cyclic_design(7, (0, 1, 2))


@pytest.fixture
def override_settings(monkeypatch):
    def apply(**values):
        for key, value in values.items():
            monkeypatch.setattr(settings, key, value)

    return apply
