import json
import logging
from pathlib import Path

import click

from dialog_hmm.config import config
from dialog_hmm.models.hmm import StateSpace
from dialog_hmm.services.belief_tracker import BeliefTracker
from dialog_hmm.services.dialog_simulator import (
    Condition,
    ConditionTrainer,
    DialogSimulator,
    empirical_error_rate,
    evaluate_model,
)
from dialog_hmm.services.experiment_runner import ExperimentConfig, ExperimentRunner, summarize
from dialog_hmm.services.inference_service import sequence_log_likelihood, viterbi_decode
from dialog_hmm.services.training_service import TrainingConfig
from dialog_hmm.storage.storage_service import StorageService
from dialog_hmm.utils.errors import ZeroProbabilitySequence

logger = logging.getLogger(__name__)

# Inicializa serviços
storage_service = StorageService()

SEED = click.IntRange(min=0, max=2**64 - 1)


def _emit(document, pretty):
    """Métricas como objeto JSON de uma linha (ou indentado com --pretty)"""
    click.echo(json.dumps(document, indent=2 if pretty else None))


def _pretty_option(command):
    return click.option("--pretty", is_flag=True, help="Saída JSON indentada.")(command)


@click.command("generate")
@click.argument("domain_file", type=click.Path(dir_okay=False))
@click.option("--dialogs", "num_dialogs", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--min-len", type=click.IntRange(min=1), default=config.DEFAULT_MIN_LEN, show_default=True)
@click.option("--max-len", type=click.IntRange(min=1), default=config.DEFAULT_MAX_LEN, show_default=True)
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True)
@_pretty_option
def generate(domain_file, num_dialogs, min_len, max_len, seed, out_file, pretty):
    """Gera um corpus sintético (um diálogo por linha) a partir de DOMAIN_FILE."""
    domain = storage_service.load_domain(domain_file)
    corpus = DialogSimulator(domain).generate_corpus(num_dialogs, min_len, max_len, seed)
    storage_service.save_corpus(corpus, out_file)
    _emit({
        "dialogs": len(corpus),
        "turns": sum(len(record) for record in corpus),
        "empirical_error_rate": empirical_error_rate(corpus),
    }, pretty)


@click.command("train")
@click.argument("condition", type=click.Choice([c.value for c in Condition]))
@click.argument("corpus_file", type=click.Path(dir_okay=False))
@click.option("--states", "num_states", type=click.IntRange(min=1), required=True)
@click.option("--symbols", "num_symbols", type=click.IntRange(min=1), default=None,
              help="Padrão: igual a --states.")
@click.option("--max-iterations", type=int, default=config.MAX_ITERATIONS, show_default=True)
@click.option("--rel-tolerance", type=float, default=config.REL_TOLERANCE, show_default=True)
@click.option("--smoothing", "smoothing_epsilon", type=float,
              default=config.SMOOTHING_EPSILON, show_default=True)
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--restarts", type=click.IntRange(min=1), default=1, show_default=True,
              help="Reinícios aleatórios do EM (fica o de maior log-verossimilhança).")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True)
@click.option("--trace", "trace_file", type=click.Path(dir_okay=False), default=None,
              help="CSV com a trajetória das iterações (apenas em).")
@click.option("--report", "report_file", type=click.Path(dir_okay=False), default=None)
@_pretty_option
def train(condition, corpus_file, num_states, num_symbols, max_iterations, rel_tolerance,
          smoothing_epsilon, seed, restarts, out_file, trace_file, report_file, pretty):
    """Treina um modelo sob a CONDITION (manual, automatic ou em)."""
    space = StateSpace(num_states, num_symbols or num_states)
    training = TrainingConfig(max_iterations, rel_tolerance, smoothing_epsilon, seed)
    corpus = storage_service.load_corpus(corpus_file, space)

    result = ConditionTrainer(space, training, em_restarts=restarts).train(condition, corpus)
    storage_service.save_model(result.model, out_file)

    if result.report is not None:
        log_likelihood = result.report.final_log_likelihood
        if trace_file:
            storage_service.save_trace(result.report, trace_file)
        if report_file:
            storage_service.save_report(result.report, report_file)
    else:
        if trace_file or report_file:
            logger.warning("--trace/--report só se aplicam à condição em; ignorados.")
        log_likelihood = sum(
            sequence_log_likelihood(result.model, record.observed) for record in corpus
        )

    document = {"condition": condition, "log_likelihood": log_likelihood}
    if result.report is not None:
        document["iterations"] = len(result.report.iterations)
        document["stop_reason"] = result.report.stop_reason.value
    _emit(document, pretty)


@click.command("eval")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("corpus_file", type=click.Path(dir_okay=False))
@_pretty_option
def evaluate(model_file, corpus_file, pretty):
    """Log-verossimilhança normalizada por turno e acurácia de rastreamento."""
    model = storage_service.load_model(model_file)
    corpus = storage_service.load_corpus(corpus_file)
    storage_service.check_corpus_dimensions(model, corpus, corpus_file)
    _emit(evaluate_model(model, corpus).to_dict(), pretty)


@click.command("decode")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("corpus_file", type=click.Path(dir_okay=False))
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True)
@_pretty_option
def decode(model_file, corpus_file, out_file, pretty):
    """Caminho de Viterbi por diálogo (path nulo para diálogos impossíveis)."""
    model = storage_service.load_model(model_file)
    corpus = storage_service.load_corpus(corpus_file)
    storage_service.check_corpus_dimensions(model, corpus, corpus_file, check_states=False)

    documents = []
    for record in corpus:
        try:
            path, log_probability = viterbi_decode(model, record.observed)
            documents.append({"path": path.tolist(), "log_probability": log_probability})
        except ZeroProbabilitySequence:
            documents.append({"path": None, "log_probability": None})

    storage_service.save_json_lines(documents, out_file)
    _emit({
        "dialogs": len(documents),
        "null_paths": sum(doc["path"] is None for doc in documents),
    }, pretty)


@click.command("track")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("corpus_file", type=click.Path(dir_okay=False))
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True)
@click.option("--top-k", type=click.IntRange(min=1), default=None,
              help="Mantém só as K hipóteses mais prováveis por turno.")
@click.option("--min-probability", type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True)
@_pretty_option
def track(model_file, corpus_file, out_file, top_k, min_probability, pretty):
    """Crenças filtradas turno a turno (hipóteses ranqueadas por diálogo)."""
    model = storage_service.load_model(model_file)
    corpus = storage_service.load_corpus(corpus_file)
    storage_service.check_corpus_dimensions(model, corpus, corpus_file, check_states=False)
    tracker = BeliefTracker(model)

    documents = []
    for record in corpus:
        try:
            beliefs = tracker.track(record.observed)
        except ZeroProbabilitySequence:
            documents.append({"beliefs": None})
            continue
        documents.append({"beliefs": [
            [[model.space.state_name(state), p] for state, p in belief.hypotheses(top_k, min_probability)]
            for belief in beliefs
        ]})

    storage_service.save_json_lines(documents, out_file)
    _emit({"dialogs": len(documents), "null_beliefs": sum(d["beliefs"] is None for d in documents)}, pretty)


@click.command("curve")
@click.argument("config_file", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Diretório de saída (padrão: output_dir do arquivo de configuração).")
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Células em paralelo (não altera os resultados).")
@_pretty_option
def curve(config_file, out_dir, workers, pretty):
    """Curva de aprendizado manual/automatic/em em CSV.

    Cada célula (tamanho de treino N, semente s) gera seus corpora com sementes
    derivadas por numpy.random.SeedSequence: treino = SeedSequence([s, N, 1]),
    inicialização do EM = SeedSequence([training.seed, s, N, 2]),
    held-out = SeedSequence([s, 0, 3]) (comum a todos os tamanhos de s).
    """
    config_path = Path(config_file)
    document = storage_service.read_json(config_path)
    experiment = ExperimentConfig.from_dict(document, config_path, base_dir=config_path.parent)
    domain = storage_service.load_domain(experiment.domain_path)

    rows = ExperimentRunner(experiment, domain, workers).run()
    output = config.init_output_dir(out_dir or experiment.output_dir)
    storage_service.save_curve(rows, output / config.CURVE_FILENAME)
    storage_service.save_curve_summary(summarize(rows), output / config.CURVE_SUMMARY_FILENAME)

    _emit({
        "rows": len(rows),
        "errors": sum(1 for row in rows if row.error),
        "output": str(output / config.CURVE_FILENAME),
    }, pretty)


COMMANDS = [generate, train, evaluate, decode, track, curve]
