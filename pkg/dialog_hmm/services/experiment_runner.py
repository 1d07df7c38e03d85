"""Experimento de curva de aprendizado: tamanhos de treino × sementes × condições.

Sementes derivadas (``derive_seed``, SeedSequence do numpy):
- corpus de treino da célula (tamanho, semente): (semente, tamanho, 1);
- inicialização do EM na célula: (training.seed, semente, tamanho, 2);
- held-out: (semente, 0, 3), o mesmo para todos os tamanhos da semente.
As três condições de uma célula treinam no mesmo corpus.
"""

import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import groupby
from pathlib import Path
from typing import Optional, Tuple

from dialog_hmm.config import config
from dialog_hmm.models.hmm import align_states
from dialog_hmm.services.dialog_simulator import (
    Condition,
    ConditionTrainer,
    DialogSimulator,
    evaluate_model,
)
from dialog_hmm.services.training_service import TrainingConfig
from dialog_hmm.utils.errors import FileFormatError, HmmError, InputError
from dialog_hmm.utils.seeds import derive_seed
from dialog_hmm.utils.validators import validate_experiment_config

logger = logging.getLogger(__name__)

TRAIN_STREAM, EM_INIT_STREAM, HELDOUT_STREAM = 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    domain_path: Path
    training_sizes: Tuple[int, ...]
    experiment_seeds: Tuple[int, ...]
    heldout_dialogs: int = config.DEFAULT_HELDOUT_DIALOGS
    em_restarts: int = config.DEFAULT_EM_RESTARTS
    min_len: int = config.DEFAULT_MIN_LEN
    max_len: int = config.DEFAULT_MAX_LEN
    training: TrainingConfig = TrainingConfig()
    output_dir: Path = Path("results")

    @classmethod
    def from_dict(cls, document, source="<config>", base_dir=None):
        """Lê o JSON do experimento; caminhos relativos são resolvidos a partir do arquivo"""
        base_dir = Path(base_dir) if base_dir is not None else Path(".")
        if not isinstance(document, dict):
            raise FileFormatError(source, "esperado um objeto JSON.")

        def get(key, kind, default=None):
            if key not in document:
                if default is None:
                    raise FileFormatError(source, "campo obrigatório ausente.", field=key)
                return default
            value = document[key]
            if not isinstance(value, kind) or isinstance(value, bool):
                raise FileFormatError(source, f"tipo inválido ({type(value).__name__}).", field=key)
            return value

        def int_list(key):
            values = get(key, list)
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
                raise FileFormatError(source, "deve ser uma lista de inteiros.", field=key)
            return tuple(values)

        training = get("training", dict, {})
        try:
            training_config = TrainingConfig(
                max_iterations=int(training.get("max_iterations", config.MAX_ITERATIONS)),
                rel_tolerance=float(training.get("rel_tolerance", config.REL_TOLERANCE)),
                smoothing_epsilon=float(training.get("smoothing_epsilon", config.SMOOTHING_EPSILON)),
                seed=int(training.get("seed", 0)),
            )
        except (TypeError, ValueError) as e:
            raise FileFormatError(source, f"valor inválido ({e}).", field="training") from e
        except InputError as e:
            raise FileFormatError(source, str(e), field="training") from e

        experiment = cls(
            domain_path=base_dir / get("domain", str),
            training_sizes=int_list("training_sizes"),
            experiment_seeds=int_list("experiment_seeds"),
            heldout_dialogs=get("heldout_dialogs", int, config.DEFAULT_HELDOUT_DIALOGS),
            em_restarts=get("em_restarts", int, config.DEFAULT_EM_RESTARTS),
            min_len=get("min_len", int, config.DEFAULT_MIN_LEN),
            max_len=get("max_len", int, config.DEFAULT_MAX_LEN),
            training=training_config,
            output_dir=base_dir / get("output_dir", str, "results"),
        )
        is_valid, error = validate_experiment_config(experiment)
        if not is_valid:
            raise FileFormatError(source, error)
        return experiment


@dataclass(frozen=True)
class CurveRow:
    condition: str
    train_dialogs: int
    seed: int
    normalized_log_likelihood: Optional[float] = None
    tracking_accuracy: Optional[float] = None
    error: Optional[str] = None

    @property
    def sort_key(self):
        return (self.condition, self.train_dialogs, self.seed)


@dataclass(frozen=True)
class CurveSummary:
    condition: str
    train_dialogs: int
    runs: int
    mean_normalized_log_likelihood: float
    std_normalized_log_likelihood: float
    mean_tracking_accuracy: float


class ExperimentRunner:
    """Executa as células do experimento e agrega os resultados"""

    def __init__(self, experiment, domain, workers=None):
        self.experiment = experiment
        self.domain = domain
        self.simulator = DialogSimulator(domain)
        self.workers = workers or config.WORKERS

    def heldout(self, seed):
        exp = self.experiment
        return self.simulator.generate_corpus(
            exp.heldout_dialogs, exp.min_len, exp.max_len, derive_seed(seed, 0, HELDOUT_STREAM)
        )

    def run_cell(self, train_dialogs, seed, heldout):
        """Gera o corpus da célula e treina/avalia as três condições"""
        exp = self.experiment
        corpus = self.simulator.generate_corpus(
            train_dialogs, exp.min_len, exp.max_len, derive_seed(seed, train_dialogs, TRAIN_STREAM)
        )
        training = TrainingConfig(
            max_iterations=exp.training.max_iterations,
            rel_tolerance=exp.training.rel_tolerance,
            smoothing_epsilon=exp.training.smoothing_epsilon,
            seed=derive_seed(exp.training.seed, seed, train_dialogs, EM_INIT_STREAM),
        )
        # um worker por célula: o paralelismo fica no nível das células
        trainer = ConditionTrainer(self.domain.space, training, exp.em_restarts, workers=1)

        rows = []
        for condition in Condition:
            try:
                model = trainer.train(condition, corpus).model
                if condition is Condition.EM and model.num_states <= 8:
                    # rótulos do EM são arbitrários; a verossimilhança não muda
                    _, model = align_states(model, self.domain.generating_model)
                result = evaluate_model(model, heldout)
                rows.append(CurveRow(
                    condition.value, train_dialogs, seed,
                    result.normalized_log_likelihood, result.tracking_accuracy,
                ))
            except (HmmError, ValueError, FloatingPointError) as e:
                logger.warning(
                    "Célula (%s, %d, %d) falhou: %s", condition.value, train_dialogs, seed, e
                )
                rows.append(CurveRow(condition.value, train_dialogs, seed, error=str(e)))
        return rows

    def run(self):
        """Linhas ordenadas por (condição, tamanho, semente), qualquer que seja a ordem de execução"""
        exp = self.experiment
        heldout = {seed: self.heldout(seed) for seed in exp.experiment_seeds}
        cells = [(size, seed) for size in exp.training_sizes for seed in exp.experiment_seeds]

        def run(cell):
            size, seed = cell
            logger.info("Célula: %d diálogos, semente %d", size, seed)
            return self.run_cell(size, seed, heldout[seed])

        if self.workers > 1 and len(cells) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(run, cells))
        else:
            results = [run(cell) for cell in cells]

        rows = [row for cell_rows in results for row in cell_rows]
        return sorted(rows, key=lambda row: row.sort_key)


def summarize(rows):
    """Média e desvio por (condição, tamanho), ignorando células com erro"""
    ok = sorted((row for row in rows if not row.error), key=lambda row: row.sort_key)
    summary = []
    for (condition, size), group in groupby(ok, key=lambda row: (row.condition, row.train_dialogs)):
        group = list(group)
        values = [row.normalized_log_likelihood for row in group]
        summary.append(CurveSummary(
            condition=condition,
            train_dialogs=size,
            runs=len(group),
            mean_normalized_log_likelihood=statistics.fmean(values),
            std_normalized_log_likelihood=statistics.pstdev(values) if len(values) > 1 else 0.0,
            mean_tracking_accuracy=statistics.fmean(row.tracking_accuracy for row in group),
        ))
    return summary
