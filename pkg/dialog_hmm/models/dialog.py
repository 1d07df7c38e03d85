"""Tipos do simulador de diálogo: canal ruidoso, domínio, registros e crenças."""

from dataclasses import dataclass

import numpy as np

from dialog_hmm.config import config
from dialog_hmm.models.hmm import HmmModel, ObservationSequence, StatePath, StateSpace, _readonly
from dialog_hmm.utils.errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class ConfusionChannel:
    """Canal ASR/SLU: confusion[i][s] = Pr(reportar s | estado verdadeiro i)"""

    confusion: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "confusion", _readonly(self.confusion, ndim=2))

    @property
    def error_rate(self):
        """1 - massa média da diagonal (apenas diagnóstico)"""
        size = min(self.confusion.shape)
        return float(1.0 - np.trace(self.confusion[:size, :size]) / self.confusion.shape[0])

    @classmethod
    def identity(cls, num_states):
        return cls(np.eye(num_states))

    @classmethod
    def symmetric(cls, num_states, error_rate):
        """Diagonal 1 - e; o erro é dividido igualmente entre os demais símbolos"""
        if num_states == 1:
            return cls.identity(1)
        off = error_rate / (num_states - 1)
        confusion = np.full((num_states, num_states), off)
        np.fill_diagonal(confusion, 1.0 - error_rate)
        return cls(confusion)


@dataclass(frozen=True, eq=False)
class DialogDomain:
    """Dinâmica geradora (π, A) e canal de observação.

    O canal é a fonte de verdade das emissões: ``generating_model`` usa
    B = channel.confusion, independentemente de ``true_model.emission``.
    """

    space: StateSpace
    true_model: HmmModel
    channel: ConfusionChannel

    def __post_init__(self):
        expected = (self.space.num_states, self.space.num_symbols)
        if self.channel.confusion.shape != expected:
            raise DimensionMismatch(
                f"Canal com forma {self.channel.confusion.shape}, esperado {expected}."
            )

    @property
    def generating_model(self):
        return self.true_model.replace(emission=self.channel.confusion)

    def emission_matches_channel(self, tolerance=config.STOCHASTIC_TOLERANCE):
        return self.true_model.emission.shape == self.channel.confusion.shape and bool(
            np.all(np.abs(self.true_model.emission - self.channel.confusion) <= tolerance)
        )


@dataclass(frozen=True, eq=False)
class DialogRecord:
    """Transcrição manual (estados verdadeiros) pareada com a automática (observada)"""

    true_states: StatePath
    observed: ObservationSequence

    def __post_init__(self):
        if len(self.true_states) != len(self.observed):
            raise DimensionMismatch(
                f"true_states ({len(self.true_states)}) e observed ({len(self.observed)}) "
                "com tamanhos diferentes."
            )

    def __len__(self):
        return len(self.observed)


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Distribuição filtrada Pr(X_k | Y_{1:k}) sobre as hipóteses do usuário"""

    distribution: np.ndarray
    turn_index: int

    def __post_init__(self):
        object.__setattr__(self, "distribution", _readonly(self.distribution, ndim=1))

    @property
    def best_state(self):
        """argmax com empate para o menor índice"""
        return int(np.argmax(self.distribution))

    def hypotheses(self, top_k=None, min_probability=0.0):
        """Hipóteses ordenadas por probabilidade, descartando as improváveis"""
        order = np.argsort(-self.distribution, kind="stable")
        ranked = [
            (int(state), float(self.distribution[state]))
            for state in order
            if self.distribution[state] >= min_probability
        ]
        return ranked[:top_k] if top_k is not None else ranked


@dataclass(frozen=True)
class EvaluationResult:
    normalized_log_likelihood: float
    tracking_accuracy: float
    infinite_dialogs: int
    dialogs: int
    turns: int

    def to_dict(self):
        return {
            "normalized_log_likelihood": self.normalized_log_likelihood,
            "tracking_accuracy": self.tracking_accuracy,
            "infinite_dialogs": self.infinite_dialogs,
            "dialogs": self.dialogs,
            "turns": self.turns,
        }
