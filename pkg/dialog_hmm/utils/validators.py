from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from dialog_hmm.config import config


@dataclass(frozen=True)
class Violation:
    """Invariante violado, com a localização (parâmetro, linha, coluna)"""

    kind: str
    parameter: str
    message: str
    row: Optional[int] = None
    column: Optional[int] = None

    def __str__(self):
        location = self.parameter
        if self.row is not None:
            location += f"[{self.row}]"
        if self.column is not None:
            location += f"[{self.column}]"
        return f"{location}: {self.message}"


class ModelValidator:
    """Validador de espaços de estados e parâmetros estocásticos"""

    TOLERANCE = config.STOCHASTIC_TOLERANCE

    @classmethod
    def check_space(cls, space):
        """Verifica contagens positivas e rótulos consistentes"""
        problems = []
        if space.num_states < 1:
            problems.append(Violation("count", "num_states", "num_states deve ser >= 1."))
        if space.num_symbols < 1:
            problems.append(Violation("count", "num_symbols", "num_symbols deve ser >= 1."))

        for name, labels, expected in (
            ("state_labels", space.state_labels, space.num_states),
            ("symbol_labels", space.symbol_labels, space.num_symbols),
        ):
            if labels is None:
                continue
            if len(labels) != expected:
                problems.append(Violation(
                    "labels", name, f"{len(labels)} rótulos para {expected} valores."
                ))
            duplicates = sorted({label for label in labels if labels.count(label) > 1})
            if duplicates:
                problems.append(Violation(
                    "labels", name, f"rótulos duplicados: {', '.join(duplicates)}."
                ))
        return problems

    @classmethod
    def check_vector(cls, values, parameter, row=None):
        """Entradas em [0, 1] e soma 1 dentro da tolerância"""
        problems = []
        values = np.asarray(values, dtype=np.float64)

        if not np.all(np.isfinite(values)):
            problems.append(Violation("finite", parameter, "probabilidade não finita.", row))
            return problems

        for column in np.flatnonzero(values < 0.0):
            problems.append(Violation(
                "range", parameter, f"probabilidade negativa ({values[column]!r}).", row, int(column)
            ))
        for column in np.flatnonzero(values > 1.0):
            problems.append(Violation(
                "range", parameter, f"probabilidade maior que 1 ({values[column]!r}).", row, int(column)
            ))

        total = float(values.sum())
        if abs(total - 1.0) > cls.TOLERANCE:
            label = f"linha {row}" if row is not None else "vetor"
            problems.append(Violation("sum", parameter, f"{label} soma {total:.12g}.", row))
        return problems

    @classmethod
    def check_matrix(cls, values, parameter, shape):
        """Cada linha deve ser um vetor estocástico; a forma deve bater com o espaço"""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != shape:
            return [Violation(
                "shape", parameter, f"forma {values.shape}, esperado {shape}."
            )]
        problems = []
        for row in range(values.shape[0]):
            problems.extend(cls.check_vector(values[row], parameter, row))
        return problems


def validate_model(model) -> Tuple[bool, list]:
    """Função principal para validação de modelo.

    Nunca lança exceção: violações são dados, retornados com a localização.
    """
    problems = ModelValidator.check_space(model.space)
    if problems:
        return False, problems

    n, m = model.space.num_states, model.space.num_symbols
    if model.initial.shape != (n,):
        problems.append(Violation(
            "shape", "initial", f"forma {model.initial.shape}, esperado {(n,)}."
        ))
    else:
        problems.extend(ModelValidator.check_vector(model.initial, "initial"))

    problems.extend(ModelValidator.check_matrix(model.transition, "transition", (n, n)))
    problems.extend(ModelValidator.check_matrix(model.emission, "emission", (n, m)))
    return not problems, problems


def validate_sequence(sequence, space, name="observed", limit=None):
    """Verifica que todos os índices da sequência estão no intervalo do espaço"""
    limit = space.num_symbols if limit is None else limit
    values = np.asarray(sequence.values if hasattr(sequence, "values") else sequence)
    if values.size == 0:
        return False, f"'{name}' vazia."
    bad = np.flatnonzero((values < 0) | (values >= limit))
    if bad.size:
        k = int(bad[0])
        return False, f"'{name}'[{k}] = {int(values[k])} fora do intervalo [0, {limit})."
    return True, None


def validate_training_config(training_config):
    """Valida os campos do TrainingConfig"""
    if training_config.max_iterations < 1:
        return False, "max_iterations deve ser >= 1."
    if not training_config.rel_tolerance > 0:
        return False, "rel_tolerance deve ser > 0."
    if not training_config.smoothing_epsilon >= 0:
        return False, "smoothing_epsilon deve ser >= 0."
    if training_config.seed < 0:
        return False, "seed deve ser não negativa."
    return True, None


def validate_experiment_config(experiment):
    """Valida tamanhos de treino, held-out e sementes do experimento"""
    sizes = list(experiment.training_sizes)
    if not sizes:
        return False, "training_sizes vazio."
    if any(size < 1 for size in sizes):
        return False, "training_sizes deve conter apenas inteiros positivos."
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        return False, "training_sizes deve ser estritamente crescente."
    if experiment.heldout_dialogs < 1:
        return False, "heldout_dialogs deve ser >= 1."
    if experiment.em_restarts < 1:
        return False, "em_restarts deve ser >= 1."
    if not experiment.experiment_seeds:
        return False, "experiment_seeds vazio."
    if not 1 <= experiment.min_len <= experiment.max_len:
        return False, "exige 1 <= min_len <= max_len."
    return validate_training_config(experiment.training)
