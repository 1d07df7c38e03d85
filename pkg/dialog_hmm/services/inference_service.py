"""Inferência em HMM discreto: forward, backward, suavização, verossimilhança e Viterbi.

O controle de underflow é feito por renormalização a cada passo: a linha k de
``scaled_alpha`` é Pr(X_k | Y_{1:k}) e o fator c_k é a soma antes da
normalização, de modo que ln Pr(Y) = Σ_k ln c_k. O backward usa os mesmos
fatores: β̂_k = β_k / ∏_{j>k} c_j (divisão por c_{k+1} a cada passo).
Viterbi trabalha em log-espaço por ser max-product.

Todas as funções são puras: podem rodar em paralelo sobre o mesmo modelo.
"""

from dataclasses import dataclass

import numpy as np

from dialog_hmm.models.hmm import ObservationSequence, StatePath
from dialog_hmm.utils.errors import DimensionMismatch, ZeroProbabilitySequence


@dataclass(frozen=True, eq=False)
class ScaledForwardResult:
    scaled_alpha: np.ndarray  # (N, num_states), linhas somam 1
    scaling_factors: np.ndarray  # (N,), c_k > 0
    log_likelihood: float

    def joint(self):
        """α_k(i) = Pr(X_k = i, Y_{1:k}) sem escala; só para sequências curtas"""
        return self.scaled_alpha * np.cumprod(self.scaling_factors)[:, None]


@dataclass(frozen=True, eq=False)
class ScaledBackwardResult:
    scaled_beta: np.ndarray  # (N, num_states), última linha = 1

    def unscaled(self, scaling_factors):
        """β_k(i) = Pr(Y_{k+1:N} | X_k = i); só para sequências curtas"""
        c = np.asarray(scaling_factors, dtype=np.float64)
        tail = np.append(np.cumprod(c[::-1])[::-1][1:], 1.0)
        return self.scaled_beta * tail[:, None]


@dataclass(frozen=True, eq=False)
class PosteriorMarginals:
    gamma: np.ndarray  # (N, S): Pr(X_k | Y)
    xi: np.ndarray  # (N-1, S, S): Pr(X_k, X_{k+1} | Y)
    log_likelihood: float


def _symbols(model, seq):
    symbols = seq.symbols if isinstance(seq, ObservationSequence) else ObservationSequence(seq).symbols
    if symbols.min() < 0 or symbols.max() >= model.num_symbols:
        raise DimensionMismatch(
            f"Símbolo fora do intervalo [0, {model.num_symbols}) na sequência observada."
        )
    return symbols


def forward(model, seq):
    """Recursão α com renormalização por passo (erro se algum passo tem soma 0)"""
    obs = _symbols(model, seq)
    length = obs.size
    alpha = np.empty((length, model.num_states))
    scaling = np.empty(length)

    current = model.initial * model.emission[:, obs[0]]
    for k in range(length):
        if k > 0:
            current = (alpha[k - 1] @ model.transition) * model.emission[:, obs[k]]
        total = current.sum()
        if not total > 0.0:
            raise ZeroProbabilitySequence(step=k + 1)
        scaling[k] = total
        alpha[k] = current / total

    alpha.setflags(write=False)
    scaling.setflags(write=False)
    return ScaledForwardResult(alpha, scaling, float(np.log(scaling).sum()))


def backward(model, seq, scaling_factors):
    """Recursão β com os mesmos fatores de escala do forward"""
    obs = _symbols(model, seq)
    length = obs.size
    scaling = np.asarray(scaling_factors, dtype=np.float64)
    if scaling.shape != (length,):
        raise DimensionMismatch(
            f"scaling_factors tem {scaling.size} entradas para sequência de tamanho {length}."
        )

    beta = np.empty((length, model.num_states))
    beta[-1] = 1.0
    for k in range(length - 2, -1, -1):
        beta[k] = model.transition @ (model.emission[:, obs[k + 1]] * beta[k + 1]) / scaling[k + 1]

    beta.setflags(write=False)
    return ScaledBackwardResult(beta)


def posteriors(model, seq):
    """Marginais suavizadas gamma e posteriores par-a-par xi"""
    obs = _symbols(model, seq)
    fwd = forward(model, obs)
    bwd = backward(model, obs, fwd.scaling_factors)
    alpha, beta, c = fwd.scaled_alpha, bwd.scaled_beta, fwd.scaling_factors

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)

    # xi_k(i,j) ∝ α̂_k(i) A[i,j] B[j,y_{k+1}] β̂_{k+1}(j)
    weighted_next = model.emission[:, obs[1:]].T * beta[1:]
    xi = alpha[:-1, :, None] * model.transition[None, :, :] * weighted_next[:, None, :]
    xi /= c[1:, None, None]
    if xi.shape[0]:
        xi /= xi.sum(axis=(1, 2), keepdims=True)

    gamma.setflags(write=False)
    xi.setflags(write=False)
    return PosteriorMarginals(gamma, xi, fwd.log_likelihood)


def sequence_log_likelihood(model, seq):
    """ln Pr(Y | θ); -inf (valor, não erro) para sequências impossíveis"""
    try:
        return forward(model, seq).log_likelihood
    except ZeroProbabilitySequence:
        return float("-inf")


def viterbi_decode(model, seq):
    """Caminho de máxima probabilidade conjunta e seu log.

    Em empate devolve o caminho lexicograficamente menor: os melhores sufixos
    são calculados de trás para frente e o caminho é escolhido do passo 1 em
    diante, com o menor índice que atinge o máximo (np.argmax devolve a
    primeira ocorrência).
    """
    obs = _symbols(model, seq)
    length = obs.size
    log_a, log_b = model.log_transition, model.log_emission

    delta = model.log_initial + log_b[:, obs[0]]
    if not np.isfinite(delta.max()):
        raise ZeroProbabilitySequence(step=1)
    for k in range(1, length):
        delta = (delta[:, None] + log_a).max(axis=0) + log_b[:, obs[k]]
        if not np.isfinite(delta.max()):
            raise ZeroProbabilitySequence(step=k + 1)

    # suffix[k, i] = max ln Pr(x_{k+1:N}, y_{k+1:N} | X_k = i)
    suffix = np.zeros((length, model.num_states))
    emitted = np.empty((length, model.num_states))
    for k in range(length - 1, 0, -1):
        emitted[k] = log_b[:, obs[k]] + suffix[k]
        suffix[k - 1] = (log_a + emitted[k][None, :]).max(axis=1)
    emitted[0] = log_b[:, obs[0]] + suffix[0]

    path = np.empty(length, dtype=np.int64)
    scores = model.log_initial + emitted[0]
    path[0] = int(np.argmax(scores))
    log_probability = float(scores[path[0]])
    for k in range(1, length):
        path[k] = int(np.argmax(log_a[path[k - 1]] + emitted[k]))
    return StatePath(path), log_probability


@dataclass(frozen=True, eq=False)
class BatchForwardBackward:
    """Forward-backward de um lote de sequências preenchidas até o mesmo tamanho.

    Arrays indexados por (passo, sequência, ...), com um eixo inicial de modelo
    quando os parâmetros vêm empilhados. Passos além do fim de uma sequência
    usam transição identidade e emissão 1: contribuem c = 1, mantêm α e têm
    β = 1, e ficam fora de ``mask``.
    """

    observations: np.ndarray  # (T, D)
    mask: np.ndarray  # (T, D) bool
    scaled_alpha: np.ndarray  # ([R,] T, D, S)
    scaled_beta: np.ndarray  # ([R,] T, D, S)
    scaling_factors: np.ndarray  # ([R,] T, D)
    transition: np.ndarray  # ([R,] S, S)
    emission: np.ndarray  # ([R,] S, M)

    @property
    def log_likelihoods(self):
        return np.log(self.scaling_factors).sum(axis=-2)

    @property
    def gamma(self):
        gamma = self.scaled_alpha * self.scaled_beta
        return gamma / gamma.sum(axis=-1, keepdims=True)

    def xi(self):
        """([R,] T-1, D, S, S); fatias fora da máscara de k+1 são zeradas"""
        weighted_next = (
            _emission_at(self.emission, self.observations[1:]) * self.scaled_beta[..., 1:, :, :]
        )
        xi = (
            self.scaled_alpha[..., :-1, :, :, None]
            * self.transition[..., None, None, :, :]
            * weighted_next[..., :, :, None, :]
        )
        xi /= self.scaling_factors[..., 1:, :, None, None]
        return np.where(self.mask[1:, :, None, None], xi, 0.0)


def _emission_at(emission, observations):
    # ([R,] T', D, S): B[:, y_{t,d}]
    return np.moveaxis(emission[..., :, observations], -3, -1)


def forward_backward_stack(models, sequences):
    """Forward-backward vetorizado sobre um lote de sequências e vários modelos.

    Os modelos compartilham o espaço de estados; seus parâmetros são
    empilhados num eixo inicial R. Lança ZeroProbabilitySequence com
    ``model_index`` e ``sequence_index`` = posições na pilha e no lote.
    """
    arrays = [_symbols(models[0], seq) for seq in sequences]
    lengths = np.array([a.size for a in arrays], dtype=np.int64)
    steps, count = int(lengths.max()), len(arrays)
    initial = np.stack([model.initial for model in models])
    transition = np.stack([model.transition for model in models])
    emission = np.stack([model.emission for model in models])
    stack, num_states = len(models), initial.shape[1]

    observations = np.zeros((steps, count), dtype=np.int64)
    for d, array in enumerate(arrays):
        observations[: array.size, d] = array
    mask = np.arange(steps)[:, None] < lengths[None, :]
    live = mask[:, None, :, None]  # (T, 1, D, 1) contra (R, D, S)

    alpha = np.empty((stack, steps, count, num_states))
    scaling = np.ones((stack, steps, count))
    emitted = _emission_at(emission, observations)  # (R, T, D, S)

    current = initial[:, None, :] * emitted[:, 0]
    for t in range(steps):
        if t > 0:
            predicted = (alpha[:, t - 1] @ transition) * emitted[:, t]
            current = np.where(live[t], predicted, alpha[:, t - 1])
        totals = current.sum(axis=2)
        failed = np.argwhere(~(totals > 0.0))
        if failed.size:
            model_index, sequence_index = (int(i) for i in failed[0])
            raise ZeroProbabilitySequence(
                step=t + 1, sequence_index=sequence_index, model_index=model_index
            )
        scaling[:, t] = totals
        alpha[:, t] = current / totals[..., None]

    beta = np.ones((stack, steps, count, num_states))
    backward_transition = np.swapaxes(transition, 1, 2)
    for t in range(steps - 2, -1, -1):
        propagated = (emitted[:, t + 1] * beta[:, t + 1]) @ backward_transition
        propagated /= scaling[:, t + 1][..., None]
        beta[:, t] = np.where(live[t + 1], propagated, 1.0)

    return BatchForwardBackward(observations, mask, alpha, beta, scaling, transition, emission)


def forward_backward_batch(model, sequences):
    """Forward-backward vetorizado de um único modelo sobre um lote de sequências.

    Lança ZeroProbabilitySequence com ``sequence_index`` = posição no lote.
    """
    fb = forward_backward_stack([model], sequences)
    return BatchForwardBackward(
        fb.observations, fb.mask, fb.scaled_alpha[0], fb.scaled_beta[0], fb.scaling_factors[0],
        model.transition, model.emission,
    )
