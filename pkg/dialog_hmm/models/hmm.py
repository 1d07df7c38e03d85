"""Tipos centrais do HMM discreto: espaço de estados, parâmetros e sequências.

Probabilidades ficam em espaço linear na fronteira do modelo; log-espaço é
detalhe interno da inferência. Todos os tipos são imutáveis após construção
(os arrays numpy são marcados como somente leitura).
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from typing import Optional, Tuple

import numpy as np

from dialog_hmm.config import config

# Aliases de documentação: vetor/matriz estocástica são arrays numpy 1-D/2-D
StochasticVector = np.ndarray
StochasticMatrix = np.ndarray


def _readonly(values, dtype=np.float64, ndim=None):
    array = np.array(values, dtype=dtype, copy=True)
    if ndim is not None and array.ndim != ndim:
        raise ValueError(f"Esperado array com {ndim} dimensões, recebido {array.ndim}.")
    array.setflags(write=False)
    return array


def _labels(labels):
    return tuple(str(label) for label in labels) if labels is not None else None


@dataclass(frozen=True)
class StateSpace:
    """Conjuntos de índices de X (estados ocultos) e Y (símbolos observáveis)"""

    num_states: int
    num_symbols: int
    state_labels: Optional[Tuple[str, ...]] = None
    symbol_labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "num_states", int(self.num_states))
        object.__setattr__(self, "num_symbols", int(self.num_symbols))
        object.__setattr__(self, "state_labels", _labels(self.state_labels))
        object.__setattr__(self, "symbol_labels", _labels(self.symbol_labels))

    def state_name(self, index):
        """Rótulo legível do estado, ou o próprio índice"""
        return self.state_labels[index] if self.state_labels else str(index)

    def symbol_name(self, index):
        return self.symbol_labels[index] if self.symbol_labels else str(index)


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Vetor de parâmetros θ = (π, A, B).

    A construção só normaliza tipos; os invariantes estocásticos são
    verificados por ``dialog_hmm.utils.validators.validate_model``.
    """

    space: StateSpace
    initial: StochasticVector
    transition: StochasticMatrix
    emission: StochasticMatrix

    def __post_init__(self):
        object.__setattr__(self, "initial", _readonly(self.initial, ndim=1))
        object.__setattr__(self, "transition", _readonly(self.transition, ndim=2))
        object.__setattr__(self, "emission", _readonly(self.emission, ndim=2))

    @property
    def num_states(self):
        return self.space.num_states

    @property
    def num_symbols(self):
        return self.space.num_symbols

    @cached_property
    def log_initial(self):
        with np.errstate(divide="ignore"):
            return _readonly(np.log(self.initial))

    @cached_property
    def log_transition(self):
        with np.errstate(divide="ignore"):
            return _readonly(np.log(self.transition))

    @cached_property
    def log_emission(self):
        with np.errstate(divide="ignore"):
            return _readonly(np.log(self.emission))

    def replace(self, initial=None, transition=None, emission=None):
        """Cópia com alguns parâmetros substituídos"""
        return HmmModel(
            space=self.space,
            initial=self.initial if initial is None else initial,
            transition=self.transition if transition is None else transition,
            emission=self.emission if emission is None else emission,
        )

    def __eq__(self, other):
        if not isinstance(other, HmmModel):
            return NotImplemented
        return (
            self.space == other.space
            and np.array_equal(self.initial, other.initial)
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.emission, other.emission)
        )

    __hash__ = None

    def max_abs_difference(self, other):
        """Maior diferença absoluta entre parâmetros de mesma forma"""
        return max(
            float(np.max(np.abs(self.initial - other.initial))),
            float(np.max(np.abs(self.transition - other.transition))),
            float(np.max(np.abs(self.emission - other.emission))),
        )


@dataclass(frozen=True, eq=False)
class _IndexSequence:
    values: np.ndarray = field()

    def __post_init__(self):
        array = _readonly(self.values, dtype=np.int64, ndim=1)
        if array.size == 0:
            raise ValueError(f"{type(self).__name__} não pode ser vazia.")
        object.__setattr__(self, "values", array)

    def __len__(self):
        return int(self.values.size)

    def __iter__(self):
        return iter(self.values.tolist())

    def __getitem__(self, index):
        return self.values[index]

    def __eq__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None

    def tolist(self):
        return self.values.tolist()


class ObservationSequence(_IndexSequence):
    """Y = (y_1..y_N): índices de símbolos observados de um diálogo"""

    @property
    def symbols(self):
        return self.values


class StatePath(_IndexSequence):
    """X = (x_1..x_N): índices de estados ocultos"""

    @property
    def states(self):
        return self.values


def uniform_model(space):
    """Modelo com π, linhas de A e linhas de B uniformes"""
    n, m = space.num_states, space.num_symbols
    return HmmModel(
        space=space,
        initial=np.full(n, 1.0 / n),
        transition=np.full((n, n), 1.0 / n),
        emission=np.full((n, m), 1.0 / m),
    )


def make_rng(seed):
    """Gerador Philox (contador de 64 bits) determinístico para a semente"""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def _random_rows(rng, rows, cols, epsilon):
    draws = rng.uniform(epsilon, 1.0, size=(rows, cols))
    return draws / draws.sum(axis=1, keepdims=True)


def random_model(space, seed, epsilon=None):
    """Inicialização aleatória estritamente positiva.

    Cada linha é uma amostra uniform(eps, 1) independente, normalizada.
    Com um único estado (ou símbolo) a linha correspondente é [1.0].
    """
    epsilon = config.RANDOM_INIT_EPSILON if epsilon is None else epsilon
    rng = make_rng(seed)
    n, m = space.num_states, space.num_symbols
    initial = _random_rows(rng, 1, n, epsilon)[0]
    transition = _random_rows(rng, n, n, epsilon)
    emission = _random_rows(rng, n, m, epsilon)
    return HmmModel(space=space, initial=initial, transition=transition, emission=emission)


def _draw(rng, probabilities):
    # inversão da CDF; o min protege contra soma acumulada < 1 por arredondamento
    index = int(np.searchsorted(np.cumsum(probabilities), rng.random(), side="right"))
    return min(index, len(probabilities) - 1)


def sample_sequence(model, length, rng):
    """Amostragem ancestral de (caminho oculto, observações) de tamanho ``length``"""
    if length < 1:
        raise ValueError("length deve ser >= 1.")
    states = np.empty(length, dtype=np.int64)
    symbols = np.empty(length, dtype=np.int64)
    state = _draw(rng, model.initial)
    for k in range(length):
        if k > 0:
            state = _draw(rng, model.transition[state])
        states[k] = state
        symbols[k] = _draw(rng, model.emission[state])
    return StatePath(states), ObservationSequence(symbols)


def permute_states(model, permutation):
    """Reordena os estados: o novo estado k é o antigo ``permutation[k]``"""
    order = np.asarray(permutation, dtype=np.int64)
    space = model.space
    labels = tuple(space.state_labels[i] for i in order) if space.state_labels else None
    return HmmModel(
        space=StateSpace(space.num_states, space.num_symbols, labels, space.symbol_labels),
        initial=model.initial[order],
        transition=model.transition[np.ix_(order, order)],
        emission=model.emission[order],
    )


def align_states(model, reference):
    """Melhor reetiquetagem de estados de ``model`` em relação a ``reference``.

    Busca exaustiva sobre permutações (viável até ~8 estados); minimiza a
    maior diferença absoluta em A e B. Retorna (permutação, modelo alinhado).
    """
    if model.num_states > 8:
        raise ValueError("align_states suporta no máximo 8 estados.")
    best = None
    for perm in permutations(range(model.num_states)):
        candidate = permute_states(model, perm)
        score = max(
            float(np.max(np.abs(candidate.transition - reference.transition))),
            float(np.max(np.abs(candidate.emission - reference.emission))),
        )
        if best is None or score < best[0]:
            best = (score, perm, candidate)
    return best[1], best[2]
