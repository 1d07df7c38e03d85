import logging

import click

from dialog_hmm import __version__
from dialog_hmm.commands.experiments import COMMANDS
from dialog_hmm.config import config
from dialog_hmm.utils.errors import (
    DegenerateCorpus,
    DegenerateRow,
    DimensionMismatch,
    InputError,
)

EXIT_INPUT_ERROR = 2
EXIT_DEGENERATE = 3


class HarnessGroup(click.Group):
    """Grupo de comandos que traduz erros do domínio em códigos de saída"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (InputError, DimensionMismatch, OSError) as e:
            click.echo(f"Erro de entrada: {e}", err=True)
            ctx.exit(EXIT_INPUT_ERROR)
        except (DegenerateCorpus, DegenerateRow) as e:
            click.echo(f"Treinamento degenerado: {e}", err=True)
            ctx.exit(EXIT_DEGENERATE)


def create_cli():
    """Factory para criar a CLI"""

    @click.group(cls=HarnessGroup, help=(
        "Inferência e treinamento EM de HMMs discretos e experimentos de "
        "rastreamento de estado de diálogo. Códigos de saída: 0 sucesso, "
        "2 erro de entrada, 3 treinamento degenerado."
    ))
    @click.version_option(__version__)
    @click.option("--verbose", is_flag=True, help="Log em nível DEBUG.")
    def cli(verbose):
        logging.basicConfig(
            level=logging.DEBUG if verbose else config.LOG_LEVEL,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )

    # Registro dos comandos
    for command in COMMANDS:
        cli.add_command(command)

    return cli


cli = create_cli()

if __name__ == "__main__":
    cli()
