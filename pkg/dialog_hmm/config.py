import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Configuração centralizada do toolkit"""

    # Diretórios
    BASE_DIR = Path(__file__).parent.parent
    EXPERIMENTS_DIR = BASE_DIR / "experiments"

    # Execução (não alteram nenhum resultado numérico)
    LOG_LEVEL = os.getenv("DIALOG_HMM_LOG_LEVEL", "WARNING").upper()
    WORKERS = max(1, int(os.getenv("DIALOG_HMM_WORKERS", "1")))

    # Validação de distribuições
    STOCHASTIC_TOLERANCE = 1e-9
    RANDOM_INIT_EPSILON = 1e-3  # entradas sorteadas em uniform(eps, 1)

    # Treinamento (EM / Baum-Welch)
    MAX_ITERATIONS = 200
    REL_TOLERANCE = 1e-6
    SMOOTHING_EPSILON = 1e-9
    MONOTONE_TOLERANCE = 1e-10

    # Experimento padrão de rastreamento de diálogo
    DEFAULT_NUM_STATES = 4
    DEFAULT_ERROR_RATE = 0.2
    DEFAULT_MIN_LEN = 5
    DEFAULT_MAX_LEN = 20
    DEFAULT_EM_RESTARTS = 10
    DEFAULT_HELDOUT_DIALOGS = 200

    # Saídas do comando curve
    CURVE_FILENAME = "learning_curve.csv"
    CURVE_SUMMARY_FILENAME = "learning_curve_summary.csv"

    @classmethod
    def init_output_dir(cls, path):
        """Garante que o diretório de saída existe"""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        return path


config = Config()
