"""EM (Baum-Welch) com diagnóstico do limite inferior de Jensen.

Uma iteração t faz: E-step sob θ_{t-1} → contagens esperadas; M-step → θ_t;
registra l(θ_t | θ_{t-1}) (o limite inferior avaliado no novo θ, com as
posteriores do anterior) e ln L(θ_t). A cadeia
L(θ_{t-1}) = l(θ_{t-1} | θ_{t-1}) ≤ l(θ_t | θ_{t-1}) ≤ L(θ_t)
é exatamente o que garante a subida monótona.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.special import xlogy

from dialog_hmm.config import config
from dialog_hmm.models.hmm import HmmModel, random_model
from dialog_hmm.services.inference_service import forward_backward_stack
from dialog_hmm.utils.errors import (
    DegenerateCorpus,
    DegenerateRow,
    DimensionMismatch,
    InputError,
    ZeroProbabilitySequence,
)
from dialog_hmm.utils.seeds import derive_seed
from dialog_hmm.utils.validators import validate_training_config

logger = logging.getLogger(__name__)

# Limite de elementos do tensor xi (T x D x S x S) por lote
BATCH_ELEMENTS = 2**21


@dataclass(frozen=True)
class TrainingConfig:
    max_iterations: int = config.MAX_ITERATIONS
    rel_tolerance: float = config.REL_TOLERANCE
    smoothing_epsilon: float = config.SMOOTHING_EPSILON
    seed: int = 0

    def __post_init__(self):
        is_valid, error = validate_training_config(self)
        if not is_valid:
            raise InputError(f"TrainingConfig inválido: {error}")


class StopReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    log_likelihood: float
    elbo_at_previous: float
    delta: float

    @property
    def elbo_gap(self):
        """ln L(θ_t) - l(θ_t | θ_{t-1}) = KL entre posteriores; >= 0"""
        return self.log_likelihood - self.elbo_at_previous


@dataclass(frozen=True, eq=False)
class TrainingReport:
    iterations: Tuple[IterationRecord, ...]
    final_model: HmmModel
    stop_reason: StopReason
    initial_log_likelihood: float
    num_sequences: int
    num_symbols: int
    seed: int = 0

    @property
    def final_log_likelihood(self):
        return self.iterations[-1].log_likelihood if self.iterations else self.initial_log_likelihood

    def is_monotone(self, tolerance=config.MONOTONE_TOLERANCE):
        """Verifica delta >= -tol e limite de Jensen em todas as iterações"""
        return all(
            record.delta >= -tolerance and record.elbo_at_previous <= record.log_likelihood + tolerance
            for record in self.iterations
        )


@dataclass(frozen=True, eq=False)
class ExpectedCounts:
    """Estatísticas suficientes do E-step, somadas sobre o corpus.

    ``entropy`` é a entropia da posterior sobre caminhos (fatorada pela
    cadeia de Markov), necessária para o ELBO.
    """

    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray
    log_likelihood: float = 0.0
    entropy: float = 0.0
    num_sequences: int = 0
    num_symbols: int = 0
    space: object = field(default=None, compare=False)

    def __add__(self, other):
        return ExpectedCounts(
            initial=self.initial + other.initial,
            transition=self.transition + other.transition,
            emission=self.emission + other.emission,
            log_likelihood=self.log_likelihood + other.log_likelihood,
            entropy=self.entropy + other.entropy,
            num_sequences=self.num_sequences + other.num_sequences,
            num_symbols=self.num_symbols + other.num_symbols,
            space=self.space or other.space,
        )

    @classmethod
    def zeros(cls, space):
        n, m = space.num_states, space.num_symbols
        return cls(np.zeros(n), np.zeros((n, n)), np.zeros((n, m)), space=space)

    def expected_complete_log_likelihood(self, model):
        """E_q[ln Pr(X, Y | model)] com q fixado pelas contagens"""
        if (
            model.initial.shape != self.initial.shape
            or model.transition.shape != self.transition.shape
            or model.emission.shape != self.emission.shape
        ):
            raise DimensionMismatch("Modelo e contagens com dimensões diferentes.")
        return float(
            xlogy(self.initial, model.initial).sum()
            + xlogy(self.transition, model.transition).sum()
            + xlogy(self.emission, model.emission).sum()
        )


def _batches(lengths, num_states, num_models=1):
    """Agrupa índices ordenados por tamanho em lotes de tamanho de tensor limitado"""
    order = np.argsort(lengths, kind="stable")
    batches, current = [], []
    for index in order:
        longest = int(lengths[index])
        if current and longest * (len(current) + 1) * num_states**2 * num_models > BATCH_ELEMENTS:
            batches.append(current)
            current = []
        current.append(int(index))
    if current:
        batches.append(current)
    return batches


def _accumulate_batch(models, corpus, indices):
    """Contagens esperadas de um lote, uma por modelo da pilha"""
    try:
        fb = forward_backward_stack(models, [corpus[i] for i in indices])
    except ZeroProbabilitySequence as error:
        raise ZeroProbabilitySequence(
            error.step, sequence_index=indices[error.sequence_index], model_index=error.model_index
        ) from error

    gamma = np.where(fb.mask[..., None], fb.gamma, 0.0)  # (R, T, D, S)
    xi = fb.xi()  # (R, T-1, D, S, S)

    emission = np.zeros(fb.emission.shape)
    for symbol in range(emission.shape[-1]):
        hits = (fb.observations == symbol) & fb.mask
        emission[..., symbol] = (gamma * hits[..., None]).sum(axis=(1, 2))

    # H(q) = H(X_1) + Σ_k H(X_{k+1} | X_k)
    inner = xlogy(gamma[:, :-1], gamma[:, :-1]).sum(axis=-1) * fb.mask[1:]
    neg_entropy = (
        xlogy(gamma[:, 0], gamma[:, 0]).sum(axis=(1, 2))
        + xlogy(xi, xi).sum(axis=(1, 2, 3, 4))
        - inner.sum(axis=(1, 2))
    )
    initial = gamma[:, 0].sum(axis=1)
    transition = xi.sum(axis=(1, 2))
    log_likelihoods = fb.log_likelihoods.sum(axis=-1)

    return [
        ExpectedCounts(
            initial=initial[r],
            transition=transition[r],
            emission=emission[r],
            log_likelihood=float(log_likelihoods[r]),
            entropy=float(-neg_entropy[r]),
            num_sequences=len(indices),
            num_symbols=int(fb.mask.sum()),
            space=model.space,
        )
        for r, model in enumerate(models)
    ]


@dataclass(eq=False)
class _Trajectory:
    """Estado mutável de uma execução de EM dentro de ``fit_many``"""

    model: HmmModel
    counts: ExpectedCounts
    seed: int
    records: list = field(default_factory=list)
    stop_reason: Optional[StopReason] = None

    def report(self, initial_log_likelihood):
        return TrainingReport(
            iterations=tuple(self.records),
            final_model=self.model,
            stop_reason=self.stop_reason or StopReason.MAX_ITERATIONS,
            initial_log_likelihood=initial_log_likelihood,
            num_sequences=self.counts.num_sequences,
            num_symbols=self.counts.num_symbols,
            seed=self.seed,
        )


class BaumWelchTrainer:
    """Treinador EM para HMM discreto sobre corpus de várias sequências"""

    def __init__(self, training_config=None, workers=None):
        self.config = training_config or TrainingConfig()
        self.workers = workers or config.WORKERS

    def collect_many(self, models, corpus):
        """Contagens esperadas sob cada modelo, num único percurso pelo corpus.

        Propaga ZeroProbabilitySequence com os índices no corpus e na lista de modelos.
        """
        if not corpus:
            raise InputError("Corpus vazio.")
        lengths = np.array([len(seq) for seq in corpus])
        batches = _batches(lengths, models[0].num_states, len(models))

        def run(indices):
            return _accumulate_batch(models, corpus, indices)

        if self.workers > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(run, batches))
        else:
            parts = [run(indices) for indices in batches]

        # soma na ordem dos lotes, independente da ordem de conclusão
        totals = [ExpectedCounts.zeros(model.space) for model in models]
        for part in parts:
            totals = [total + counts for total, counts in zip(totals, part)]
        return totals

    def collect(self, model, corpus):
        """Contagens esperadas; propaga ZeroProbabilitySequence com o índice no corpus"""
        return self.collect_many([model], corpus)[0]

    def e_step(self, model, corpus):
        """Contagens esperadas sob ``model``; DegenerateCorpus se alguma sequência é impossível"""
        try:
            return self.collect(model, corpus)
        except ZeroProbabilitySequence as error:
            raise DegenerateCorpus(error.sequence_index, error.step) from error

    def m_step(self, counts, training_config=None):
        """Normalização das contagens suavizadas (argmax sob restrições estocásticas)"""
        epsilon = (training_config or self.config).smoothing_epsilon
        return HmmModel(
            space=counts.space,
            initial=_normalize_rows(counts.initial[None, :], epsilon, "initial")[0],
            transition=_normalize_rows(counts.transition, epsilon, "transition"),
            emission=_normalize_rows(counts.emission, epsilon, "emission"),
        )

    def elbo(self, model_at, posteriors_from, corpus):
        """Limite inferior de Jensen l(model_at | posteriors_from), sem enumerar caminhos"""
        if (
            model_at.num_states != posteriors_from.num_states
            or model_at.num_symbols != posteriors_from.num_symbols
        ):
            raise DimensionMismatch("Modelos com dimensões diferentes.")
        counts = self.collect(posteriors_from, corpus)
        return counts.expected_complete_log_likelihood(model_at) + counts.entropy

    def fit(self, initial, corpus):
        """Alterna E/M até convergir ou atingir max_iterations"""
        return self.fit_many([initial], corpus)[0]

    def fit_many(self, initials, corpus, seeds=None):
        """Várias execuções de EM em paralelo, uma por modelo inicial.

        Cada execução para pelo seu próprio critério; as ainda ativas
        compartilham o mesmo E-step vetorizado. Um modelo inicial sob o qual
        alguma sequência é impossível levanta DegenerateCorpus.
        """
        cfg = self.config
        seeds = list(seeds) if seeds is not None else [cfg.seed] * len(initials)
        try:
            counts = self.collect_many(initials, corpus)
        except ZeroProbabilitySequence as error:
            raise DegenerateCorpus(error.sequence_index, error.step) from error
        runs = [_Trajectory(model, c, seed) for model, c, seed in zip(initials, counts, seeds)]
        initial_log_likelihoods = [c.log_likelihood for c in counts]

        for iteration in range(1, cfg.max_iterations + 1):
            active = [run for run in runs if run.stop_reason is None]
            if not active:
                break
            candidates = [self.m_step(run.counts) for run in active]
            bounds = [
                run.counts.expected_complete_log_likelihood(candidate) + run.counts.entropy
                for run, candidate in zip(active, candidates)
            ]
            next_counts = self._surviving_counts(active, candidates, corpus, iteration)

            for run, candidate, bound, counts in zip(active, candidates, bounds, next_counts):
                if counts is None:
                    run.stop_reason = StopReason.DEGENERATE
                    continue
                previous = run.counts.log_likelihood
                log_likelihood = counts.log_likelihood
                delta = log_likelihood - previous
                run.records.append(IterationRecord(iteration, log_likelihood, bound, delta))
                logger.debug(
                    "Semente %d, iteração %d: logL=%.10f elbo=%.10f delta=%.3e",
                    run.seed, iteration, log_likelihood, bound, delta,
                )
                if delta < -config.MONOTONE_TOLERANCE:
                    logger.warning(
                        "Iteração %d: log-verossimilhança diminuiu (delta=%.3e).", iteration, delta
                    )
                run.model, run.counts = candidate, counts
                if abs(delta) / (1.0 + abs(log_likelihood)) < cfg.rel_tolerance:
                    run.stop_reason = StopReason.CONVERGED

        return [run.report(ll) for run, ll in zip(runs, initial_log_likelihoods)]

    def _surviving_counts(self, runs, candidates, corpus, iteration):
        """E-step dos candidatos; None para os degenerados (a execução mantém o modelo anterior)"""
        pending = list(range(len(candidates)))
        result = [None] * len(candidates)
        while pending:
            try:
                counts = self.collect_many([candidates[i] for i in pending], corpus)
            except ZeroProbabilitySequence as error:
                failed = pending[error.model_index]
                if not runs[failed].records:
                    raise DegenerateCorpus(error.sequence_index, error.step) from error
                logger.warning("Iteração %d: modelo degenerado, mantendo o anterior.", iteration)
                pending.remove(failed)
                continue
            for index, c in zip(pending, counts):
                result[index] = c
            break
        return result

    def fit_restarts(self, corpus, space, restarts=1):
        """Melhor de ``restarts`` inicializações aleatórias pela log-verossimilhança final.

        O reinício 0 usa ``config.seed``; os demais, sementes derivadas dela.
        Empates ficam com o menor índice de reinício.
        """
        seeds = [
            self.config.seed if restart == 0 else derive_seed(self.config.seed, restart)
            for restart in range(restarts)
        ]
        reports = self.fit_many([random_model(space, seed) for seed in seeds], corpus, seeds)
        best = reports[0]
        for report in reports[1:]:
            if report.final_log_likelihood > best.final_log_likelihood:
                best = report
        logger.info(
            "Melhor de %d reinícios: semente %d, logL=%.6f",
            restarts, best.seed, best.final_log_likelihood,
        )
        return best


def _normalize_rows(counts, epsilon, parameter):
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=1)
    if epsilon == 0.0:
        empty = np.flatnonzero(~(totals > 0.0))
        if empty.size:
            raise DegenerateRow(parameter, int(empty[0]))
    return (counts + epsilon) / (totals + counts.shape[1] * epsilon)[:, None]


def e_step(model, corpus, workers=None):
    return BaumWelchTrainer(workers=workers).e_step(model, corpus)


def m_step(counts, training_config):
    return BaumWelchTrainer(training_config).m_step(counts)


def fit(initial, corpus, training_config, workers=None):
    return BaumWelchTrainer(training_config, workers).fit(initial, corpus)


def elbo(model_at, posteriors_from, corpus):
    return BaumWelchTrainer().elbo(model_at, posteriors_from, corpus)
