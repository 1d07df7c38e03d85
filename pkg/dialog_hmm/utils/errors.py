"""Hierarquia de exceções do toolkit.

Erros de entrada (arquivos, dimensões) viram código de saída 2 na CLI;
treinamento degenerado vira código 3. Ver ``dialog_hmm.main``.
"""


class HmmError(Exception):
    """Base de todos os erros do pacote"""


class ZeroProbabilitySequence(HmmError):
    """Sequência impossível sob o modelo"""

    def __init__(self, step, message=None, sequence_index=None, model_index=None):
        self.step = step
        self.sequence_index = sequence_index
        self.model_index = model_index
        super().__init__(message or f"Sequência com probabilidade zero no passo {step}.")


class DimensionMismatch(HmmError, ValueError):
    """Dimensões incompatíveis entre modelo, sequência ou contagens"""


class DegenerateCorpus(HmmError):
    """Alguma sequência do corpus tem probabilidade zero sob o modelo"""

    def __init__(self, sequence_index, step=None):
        self.sequence_index = sequence_index
        self.step = step
        where = f" (passo {step})" if step is not None else ""
        super().__init__(f"Sequência {sequence_index} do corpus tem probabilidade zero{where}.")


class DegenerateRow(HmmError):
    """Linha de contagens nula sem suavização: estado inalcançável"""

    def __init__(self, parameter, row):
        self.parameter = parameter
        self.row = row
        super().__init__(
            f"Linha {row} de '{parameter}' tem contagem total zero e smoothing_epsilon = 0."
        )


class InputError(HmmError):
    """Problema em arquivo ou argumento de entrada"""


class ModelValidationError(InputError):
    """Modelo viola invariantes de distribuição"""

    def __init__(self, violations, source=None):
        self.violations = list(violations)
        prefix = f"{source}: " if source else ""
        details = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{prefix}modelo inválido: {details}")


class FileFormatError(InputError):
    """Arquivo mal formado; informa linha e campo quando possível"""

    def __init__(self, path, message, line=None, field=None):
        self.path = str(path)
        self.line = line
        self.field = field
        location = self.path
        if line is not None:
            location += f":{line}"
        if field is not None:
            message = f"campo '{field}': {message}"
        super().__init__(f"{location}: {message}")
