"""Oráculos e geradores compartilhados pelos testes"""

import itertools

import numpy as np

from dialog_hmm.models.hmm import HmmModel, StateSpace, make_rng, sample_sequence


def dirichlet_model(rng, num_states, num_symbols, concentration=1.0):
    """Modelo aleatório com linhas Dirichlet (independente de random_model)"""
    def rows(count, size):
        return rng.dirichlet(np.full(size, concentration), size=count)

    return HmmModel(
        space=StateSpace(num_states, num_symbols),
        initial=rows(1, num_states)[0],
        transition=rows(num_states, num_states),
        emission=rows(num_states, num_symbols),
    )


def random_instances(count, seed, max_states=4, max_symbols=4, max_length=8):
    """(modelo, sequência) pequenos para comparação com o oráculo"""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        model = dirichlet_model(
            rng, int(rng.integers(1, max_states + 1)), int(rng.integers(1, max_symbols + 1))
        )
        length = int(rng.integers(1, max_length + 1))
        yield model, rng.integers(0, model.num_symbols, size=length)


def path_probabilities(model, observations):
    """Todos os num_states^N caminhos e suas probabilidades conjuntas"""
    obs = np.asarray(observations)
    paths = np.array(
        list(itertools.product(range(model.num_states), repeat=obs.size)), dtype=np.int64
    )
    joint = model.initial[paths[:, 0]] * model.emission[paths[:, 0], obs[0]]
    for k in range(1, obs.size):
        joint = joint * model.transition[paths[:, k - 1], paths[:, k]] * model.emission[paths[:, k], obs[k]]
    return paths, joint


def brute_force(model, observations):
    """Verossimilhança, gamma, xi e melhor caminho por enumeração exaustiva"""
    paths, joint = path_probabilities(model, observations)
    length, num_states = paths.shape[1], model.num_states
    likelihood = joint.sum()

    gamma = np.zeros((length, num_states))
    xi = np.zeros((length - 1, num_states, num_states))
    for k in range(length):
        np.add.at(gamma[k], paths[:, k], joint)
        if k < length - 1:
            np.add.at(xi[k], (paths[:, k], paths[:, k + 1]), joint)

    best = int(np.argmax(joint))
    return {
        "likelihood": likelihood,
        "gamma": gamma / likelihood,
        "xi": xi / likelihood,
        "best_path": paths[best],
        "best_probability": joint[best],
    }


def corpus_from(model, count, length, seed):
    """Lista de ObservationSequence amostradas do modelo"""
    rng = make_rng(seed)
    return [sample_sequence(model, length, rng)[1] for _ in range(count)]
