"""Simulador de corpus de diálogo e as três condições de treinamento.

- manual: MLE supervisionado usando os estados verdadeiros como rótulos;
- automatic: o mesmo MLE, mas tomando a sequência observada (ruidosa) como se
  fosse a sequência de estados (símbolo s ↔ estado s);
- em: Baum-Welch apenas sobre as observações, melhor de K reinícios.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from dialog_hmm.config import config
from dialog_hmm.models.dialog import ConfusionChannel, DialogDomain, DialogRecord, EvaluationResult
from dialog_hmm.models.hmm import HmmModel, StateSpace, make_rng, sample_sequence
from dialog_hmm.services.inference_service import forward
from dialog_hmm.services.training_service import BaumWelchTrainer, ExpectedCounts, TrainingConfig
from dialog_hmm.utils.errors import DimensionMismatch, InputError, ZeroProbabilitySequence

logger = logging.getLogger(__name__)


class Condition(str, Enum):
    MANUAL = "manual"
    AUTOMATIC = "automatic"
    EM = "em"


def default_domain(num_states=None, error_rate=None, stay_probability=0.7):
    """Domínio padrão: transições "pegajosas" e canal simétrico.

    π decresce linearmente (n, n-1, ..., 1), A tem diagonal ``stay_probability``
    e o restante dividido igualmente.
    """
    n = config.DEFAULT_NUM_STATES if num_states is None else num_states
    error_rate = config.DEFAULT_ERROR_RATE if error_rate is None else error_rate

    space = StateSpace(n, n)
    weights = np.arange(n, 0, -1, dtype=np.float64)
    if n == 1:
        transition = np.ones((1, 1))
    else:
        transition = np.full((n, n), (1.0 - stay_probability) / (n - 1))
        np.fill_diagonal(transition, stay_probability)
    channel = ConfusionChannel.symmetric(n, error_rate)
    true_model = HmmModel(space, weights / weights.sum(), transition, channel.confusion)
    return DialogDomain(space=space, true_model=true_model, channel=channel)


@dataclass(frozen=True, eq=False)
class ConditionResult:
    condition: Condition
    model: HmmModel
    report: Optional[object] = None  # TrainingReport apenas para em


class DialogSimulator:
    """Gera diálogos sintéticos a partir da dinâmica do domínio"""

    def __init__(self, domain):
        self.domain = domain
        self.model = domain.generating_model

    def generate_corpus(self, num_dialogs, min_len, max_len, seed):
        """Corpus determinístico por semente; tamanhos uniformes em [min_len, max_len]"""
        if num_dialogs < 1:
            raise InputError("num_dialogs deve ser >= 1.")
        if not 1 <= min_len <= max_len:
            raise InputError("Exige 1 <= min_len <= max_len.")

        rng = make_rng(seed)
        corpus = []
        for _ in range(num_dialogs):
            length = int(rng.integers(min_len, max_len + 1))
            states, observed = sample_sequence(self.model, length, rng)
            corpus.append(DialogRecord(true_states=states, observed=observed))
        return corpus

    def estimate_entropy_rate(self, num_dialogs, min_len, max_len, seed):
        """Entropia por turno do gerador (Monte-Carlo), na mesma distribuição de tamanhos"""
        sample = self.generate_corpus(num_dialogs, min_len, max_len, seed)
        return -evaluate_model(self.model, sample).normalized_log_likelihood


def empirical_error_rate(corpus):
    """Fração de turnos em que o símbolo observado difere do estado verdadeiro"""
    turns = sum(len(record) for record in corpus)
    errors = sum(
        int(np.sum(record.observed.values != record.true_states.values)) for record in corpus
    )
    return errors / turns if turns else 0.0


def supervised_counts(corpus, space, condition=Condition.MANUAL):
    """Contagens de frequência a partir de rótulos (verdadeiros ou observados)"""
    condition = Condition(condition)
    if condition is Condition.AUTOMATIC and space.num_states != space.num_symbols:
        raise DimensionMismatch(
            "A condição automatic exige num_symbols == num_states (símbolo s ↔ estado s)."
        )

    n, m = space.num_states, space.num_symbols
    initial, transition, emission = np.zeros(n), np.zeros((n, n)), np.zeros((n, m))
    for record in corpus:
        observed = record.observed.values
        states = observed if condition is Condition.AUTOMATIC else record.true_states.values
        if states.max() >= n or observed.max() >= m:
            raise DimensionMismatch("Registro do corpus fora do espaço de estados.")
        initial[states[0]] += 1.0
        np.add.at(transition, (states[:-1], states[1:]), 1.0)
        np.add.at(emission, (states, observed), 1.0)

    return ExpectedCounts(
        initial=initial,
        transition=transition,
        emission=emission,
        num_sequences=len(corpus),
        num_symbols=int(sum(len(record) for record in corpus)),
        space=space,
    )


class ConditionTrainer:
    """Constrói os três sistemas comparados no experimento"""

    def __init__(self, space, training_config=None, em_restarts=1, workers=None):
        self.space = space
        self.config = training_config or TrainingConfig()
        self.em_restarts = em_restarts
        self.trainer = BaumWelchTrainer(self.config, workers)

    def train(self, condition, corpus):
        condition = Condition(condition)
        if not corpus:
            raise InputError("Corpus de treino vazio.")

        if condition is Condition.EM:
            observed = [record.observed for record in corpus]
            report = self.trainer.fit_restarts(observed, self.space, self.em_restarts)
            return ConditionResult(condition, report.final_model, report)

        counts = supervised_counts(corpus, self.space, condition)
        return ConditionResult(condition, self.trainer.m_step(counts))


def train_condition(condition, corpus, space, training_config, em_restarts=1):
    return ConditionTrainer(space, training_config, em_restarts).train(condition, corpus).model


def generate_corpus(domain, num_dialogs, min_len, max_len, seed):
    return DialogSimulator(domain).generate_corpus(num_dialogs, min_len, max_len, seed)


def evaluate_model(model, heldout):
    """Log-verossimilhança normalizada por turno e acurácia de rastreamento.

    Diálogos impossíveis entram como -inf (o resultado vira -inf) e seus
    turnos contam como erros de rastreamento.
    """
    if not heldout:
        raise InputError("Conjunto held-out vazio.")

    total, turns, hits, infinite = 0.0, 0, 0, 0
    for record in heldout:
        turns += len(record)
        try:
            result = forward(model, record.observed)
        except ZeroProbabilitySequence:
            infinite += 1
            total = -math.inf
            continue
        total += result.log_likelihood
        predicted = np.argmax(result.scaled_alpha, axis=1)
        hits += int(np.sum(predicted == record.true_states.values))

    if infinite:
        logger.warning("%d diálogo(s) com probabilidade zero sob o modelo.", infinite)
    return EvaluationResult(
        normalized_log_likelihood=total / turns,
        tracking_accuracy=hits / turns,
        infinite_dialogs=infinite,
        dialogs=len(heldout),
        turns=turns,
    )
