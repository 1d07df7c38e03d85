"""Leitura e escrita de todos os formatos de arquivo do toolkit.

- modelo: documento JSON com num_states, num_symbols, rótulos opcionais,
  initial, transition, emission. Floats gravados com ``repr`` (forma mais
  curta que faz round-trip), então load(save(m)) reproduz os bits.
- domínio: JSON {"model": <modelo>, "confusion": [[...]]}.
- corpus: um diálogo por linha, {"true_states": [...], "observed": [...]}.
- relatório de treino: JSON; trace de iterações e curvas: CSV.
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np

from dialog_hmm.models.dialog import ConfusionChannel, DialogDomain, DialogRecord
from dialog_hmm.models.hmm import HmmModel, ObservationSequence, StatePath, StateSpace
from dialog_hmm.utils.errors import DimensionMismatch, FileFormatError, ModelValidationError
from dialog_hmm.utils.validators import validate_model, validate_sequence

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iteration", "log_likelihood", "elbo_at_previous", "delta"]
CURVE_COLUMNS = [
    "condition", "train_dialogs", "seed", "normalized_log_likelihood", "tracking_accuracy", "error",
]
SUMMARY_COLUMNS = [
    "condition", "train_dialogs", "runs", "mean_normalized_log_likelihood",
    "std_normalized_log_likelihood", "mean_tracking_accuracy",
]


def _format_float(value):
    return repr(float(value))


class StorageService:
    """Serviço de persistência de modelos, corpora e resultados"""

    # ------------------------------------------------------------------ JSON
    def read_json(self, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise FileFormatError(path, f"não foi possível ler o arquivo ({e.strerror}).") from e
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise FileFormatError(path, f"JSON inválido: {e.msg}.", line=e.lineno) from e

    def _write_text(self, path, text):
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path

    def _require(self, document, key, path, kind=None):
        if not isinstance(document, dict) or key not in document:
            raise FileFormatError(path, "campo obrigatório ausente.", field=key)
        value = document[key]
        if kind is not None and not isinstance(value, kind):
            raise FileFormatError(path, f"tipo inválido ({type(value).__name__}).", field=key)
        return value

    # ---------------------------------------------------------------- modelo
    def model_to_dict(self, model):
        """Converte modelo para dicionário no formato do arquivo"""
        space = model.space
        document = {"num_states": space.num_states, "num_symbols": space.num_symbols}
        if space.state_labels is not None:
            document["state_labels"] = list(space.state_labels)
        if space.symbol_labels is not None:
            document["symbol_labels"] = list(space.symbol_labels)
        document["initial"] = model.initial.tolist()
        document["transition"] = model.transition.tolist()
        document["emission"] = model.emission.tolist()
        return document

    def model_from_dict(self, document, path="<modelo>"):
        """Constrói e valida um modelo a partir do dicionário"""
        num_states = self._require(document, "num_states", path, int)
        num_symbols = self._require(document, "num_symbols", path, int)
        labels = {}
        for key in ("state_labels", "symbol_labels"):
            if key in document:
                value = document[key]
                if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                    raise FileFormatError(path, "deve ser uma lista de strings.", field=key)
                labels[key] = value

        arrays = {}
        for key, ndim in (("initial", 1), ("transition", 2), ("emission", 2)):
            value = self._require(document, key, path, list)
            try:
                array = np.array(value, dtype=np.float64)
            except (TypeError, ValueError) as e:
                raise FileFormatError(path, "matriz numérica inválida.", field=key) from e
            if array.ndim != ndim:
                raise FileFormatError(path, f"esperado array com {ndim} dimensão(ões).", field=key)
            arrays[key] = array

        model = HmmModel(
            space=StateSpace(num_states, num_symbols, labels.get("state_labels"), labels.get("symbol_labels")),
            **arrays,
        )
        is_valid, violations = validate_model(model)
        if not is_valid:
            raise ModelValidationError(violations, source=str(path))
        return model

    def save_model(self, model, path):
        return self._write_text(path, json.dumps(self.model_to_dict(model), indent=2) + "\n")

    def load_model(self, path):
        return self.model_from_dict(self.read_json(path), path)

    # --------------------------------------------------------------- domínio
    def domain_to_dict(self, domain):
        return {
            "model": self.model_to_dict(domain.true_model),
            "confusion": domain.channel.confusion.tolist(),
        }

    def save_domain(self, domain, path):
        return self._write_text(path, json.dumps(self.domain_to_dict(domain), indent=2) + "\n")

    def load_domain(self, path):
        """Carrega domínio; o canal prevalece sobre a emissão do modelo"""
        document = self.read_json(path)
        model = self.model_from_dict(self._require(document, "model", path, dict), path)
        confusion = self._require(document, "confusion", path, list)
        try:
            channel = ConfusionChannel(np.array(confusion, dtype=np.float64))
        except (TypeError, ValueError) as e:
            raise FileFormatError(path, "matriz de confusão inválida.", field="confusion") from e

        is_valid, violations = validate_model(model.replace(emission=channel.confusion))
        if not is_valid:
            raise ModelValidationError(
                [v for v in violations if v.parameter == "emission"], source=f"{path} (confusion)"
            )
        domain = DialogDomain(space=model.space, true_model=model, channel=channel)
        if not domain.emission_matches_channel():
            logger.warning(
                "%s: emissão do modelo difere da matriz de confusão; usando o canal.", path
            )
        return domain

    # ---------------------------------------------------------------- corpus
    def record_to_dict(self, record):
        return {"true_states": record.true_states.tolist(), "observed": record.observed.tolist()}

    def save_corpus(self, corpus, path):
        lines = [json.dumps(self.record_to_dict(record)) for record in corpus]
        return self._write_text(path, "".join(line + "\n" for line in lines))

    def load_corpus(self, path, space=None):
        """Lê corpus linha a linha; erros informam a linha e o campo"""
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise FileFormatError(path, f"não foi possível ler o arquivo ({e.strerror}).") from e

        corpus = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                document = json.loads(line)
            except json.JSONDecodeError as e:
                raise FileFormatError(path, f"JSON inválido: {e.msg}.", line=number) from e
            corpus.append(self._record_from_dict(document, path, number, space))
        return corpus

    def _record_from_dict(self, document, path, number, space):
        sequences = {}
        for key in ("true_states", "observed"):
            if not isinstance(document, dict) or key not in document:
                raise FileFormatError(path, "campo obrigatório ausente.", line=number, field=key)
            value = document[key]
            if not isinstance(value, list) or not value or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in value
            ):
                raise FileFormatError(
                    path, "deve ser uma lista não vazia de inteiros.", line=number, field=key
                )
            sequences[key] = value

        if len(sequences["true_states"]) != len(sequences["observed"]):
            raise FileFormatError(
                path, "true_states e observed com tamanhos diferentes.", line=number
            )
        record = DialogRecord(
            true_states=StatePath(sequences["true_states"]),
            observed=ObservationSequence(sequences["observed"]),
        )
        if space is not None:
            for key, limit in (("true_states", space.num_states), ("observed", space.num_symbols)):
                is_valid, error = validate_sequence(getattr(record, key), space, key, limit)
                if not is_valid:
                    raise FileFormatError(path, error, line=number, field=key)
        return record

    # ------------------------------------------------------------ resultados
    def report_to_dict(self, report):
        """Relatório de treino completo, incluindo o modelo final"""
        return {
            "stop_reason": report.stop_reason.value,
            "seed": report.seed,
            "num_sequences": report.num_sequences,
            "num_symbols": report.num_symbols,
            "initial_log_likelihood": report.initial_log_likelihood,
            "final_log_likelihood": report.final_log_likelihood,
            "iterations": [
                {
                    "iteration": r.iteration,
                    "log_likelihood": r.log_likelihood,
                    "elbo_at_previous": r.elbo_at_previous,
                    "delta": r.delta,
                    "elbo_gap": r.elbo_gap,
                }
                for r in report.iterations
            ],
            "final_model": self.model_to_dict(report.final_model),
        }

    def save_report(self, report, path):
        return self._write_text(path, json.dumps(self.report_to_dict(report), indent=2) + "\n")

    def save_trace(self, report, path):
        rows = [
            [str(r.iteration), _format_float(r.log_likelihood),
             _format_float(r.elbo_at_previous), _format_float(r.delta)]
            for r in report.iterations
        ]
        return self._write_csv(path, TRACE_COLUMNS, rows)

    def save_curve(self, rows, path):
        """Linhas da curva de aprendizado, já ordenadas pelo chamador"""
        formatted = [
            [
                row.condition,
                str(row.train_dialogs),
                str(row.seed),
                "" if row.error else _format_float(row.normalized_log_likelihood),
                "" if row.error else _format_float(row.tracking_accuracy),
                row.error or "",
            ]
            for row in rows
        ]
        return self._write_csv(path, CURVE_COLUMNS, formatted)

    def save_curve_summary(self, summary, path):
        formatted = [
            [
                s.condition, str(s.train_dialogs), str(s.runs),
                _format_float(s.mean_normalized_log_likelihood),
                _format_float(s.std_normalized_log_likelihood),
                _format_float(s.mean_tracking_accuracy),
            ]
            for s in summary
        ]
        return self._write_csv(path, SUMMARY_COLUMNS, formatted)

    def _write_csv(self, path, header, rows):
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return path

    def save_json_lines(self, documents, path):
        return self._write_text(path, "".join(json.dumps(doc) + "\n" for doc in documents))

    def check_corpus_dimensions(self, model, corpus, path="<corpus>", check_states=True):
        """DimensionMismatch se algum registro sai do espaço do modelo"""
        checks = [("observed", model.num_symbols)]
        if check_states:
            checks.insert(0, ("true_states", model.num_states))
        for number, record in enumerate(corpus, start=1):
            for key, limit in checks:
                is_valid, error = validate_sequence(getattr(record, key), model.space, key, limit)
                if not is_valid:
                    raise DimensionMismatch(f"{path}: diálogo {number}: {error}")
