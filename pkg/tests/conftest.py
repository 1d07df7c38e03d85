import pytest

from dialog_hmm.models.hmm import HmmModel, StateSpace


@pytest.fixture
def golden_model():
    """Modelo de 2 estados usado nos valores de referência"""
    return HmmModel(
        space=StateSpace(2, 2),
        initial=[0.5, 0.5],
        transition=[[0.7, 0.3], [0.4, 0.6]],
        emission=[[0.9, 0.1], [0.2, 0.8]],
    )
