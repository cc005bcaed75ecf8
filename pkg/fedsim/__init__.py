from __future__ import annotations

import logging
import os
import sys

import click
import sentry_sdk
from dotenv import load_dotenv

from .errors import ConfigError, FedSimError

__version__ = "0.1.0"

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s [in %(pathname)s:%(lineno)d]"


def create_cli() -> click.Group:
    load_dotenv()
    from .config import Config

    @click.group()
    @click.version_option(__version__, prog_name="fedsim")
    @click.option("-v", "--verbose", is_flag=True, help="Registra mensagens DEBUG (treino por cliente).")
    def cli(verbose: bool) -> None:
        """Simulador de classificação de áudio federada: execuções limpas, com ruído e com rótulos errados."""
        _configure_logging(Config, "DEBUG" if verbose else Config.LOG_LEVEL)

    from .commands.corrupt import corrupt_cmd
    from .commands.features import features_cmd
    from .commands.partition import partition_cmd
    from .commands.report import report_cmd
    from .commands.run import run_cmd

    cli.add_command(run_cmd)
    cli.add_command(partition_cmd)
    cli.add_command(corrupt_cmd)
    cli.add_command(features_cmd)
    cli.add_command(report_cmd)

    if Config.SENTRY_DSN:
        sentry_sdk.init(dsn=Config.SENTRY_DSN)

    return cli


def main(argv: list[str] | None = None) -> int:
    """Executa a CLI e traduz falhas em códigos de saída: 2 para erro de configuração/uso, 1 para o resto."""
    cli = create_cli()
    try:
        cli.main(args=argv, prog_name="fedsim", standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"erro de configuração: {exc}", err=True)
        return 2
    except click.exceptions.Abort:
        click.echo("abortado", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2 if isinstance(exc, click.UsageError) else exc.exit_code
    except FedSimError as exc:
        sentry_sdk.capture_exception(exc)
        click.echo(f"erro: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001
        sentry_sdk.capture_exception(exc)
        logging.getLogger(__name__).exception("falha não tratada")
        click.echo(f"erro: {exc}", err=True)
        return 1
    return 0


def _ensure_log_directory(log_dir: str) -> None:
    os.makedirs(log_dir, exist_ok=True)


def _configure_logging(config, level: str) -> None:
    from logging.handlers import RotatingFileHandler

    logger = logging.getLogger("fedsim")
    logger.setLevel(level)
    if getattr(logger, "_fedsim_configured", False):
        for handler in logger.handlers:
            handler.setLevel(level)
            if not isinstance(handler, RotatingFileHandler):
                # o stderr pode ter sido trocado desde a primeira chamada
                handler.setStream(sys.stderr)
        return
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    stream.setLevel(level)
    logger.addHandler(stream)

    if config.ENABLE_FILE_LOGS:
        _ensure_log_directory(config.LOG_DIR)
        file_handler = RotatingFileHandler(
            os.path.join(config.LOG_DIR, "fedsim.log"), maxBytes=1_000_000, backupCount=3
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)
    logger._fedsim_configured = True
