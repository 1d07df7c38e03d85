import numpy as np


def derive_seed(*keys):
    """Mistura inteiros não negativos em uma semente de 64 bits.

    Usa ``numpy.random.SeedSequence(keys)``; a mesma tupla de chaves sempre
    produz a mesma semente, e tuplas distintas produzem fluxos independentes.
    """
    entropy = [int(key) % 2**64 for key in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])
