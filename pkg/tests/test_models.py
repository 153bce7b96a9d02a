'''
Tests for the shared domain model base: invariant errors keep their type.
'''

import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import DimensionMismatchError, InvalidProxySetError, ProxyHashError
from features.dataset import FeatureDataset
from hashing.layer import HashingLayer
from proxies.design import random_binary_proxies
from proxies.proxy_set import ProxySet
from theory.equivalence import EquivalenceCase


def test_model_validator_error_is_not_wrapped():
    with pytest.raises(InvalidProxySetError) as info:
        ProxySet.from_matrix(np.ones((3, 1)), "tammes")
    assert isinstance(info.value, ProxyHashError)
    assert not isinstance(info.value, ValidationError)
    assert "C >= 2" in str(info.value)


def test_field_validator_error_is_not_wrapped():
    with pytest.raises(InvalidProxySetError, match="2-D"):
        ProxySet(W=np.ones(3), kind="tammes", norm_constant=1.0)


@pytest.mark.parametrize("build", [
    lambda: HashingLayer(L=np.zeros((3, 4)), bias=np.zeros(4), proxies=random_binary_proxies(2, 8)),
    lambda: EquivalenceCase(nu=[1.0, 2.0, 3.0], W=np.eye(2)),
])
def test_dimension_errors_reach_callers(build):
    with pytest.raises(DimensionMismatchError):
        build()


def test_plain_value_errors_stay_validation_errors():
    with pytest.raises(ValidationError):
        FeatureDataset(features=np.zeros((2, 2)))
