import os


class Config:
    WORKERS = max(1, int(os.getenv("FEDAUDIO_SIM_WORKERS", "1") or "1"))

    LOG_LEVEL = os.getenv("FEDSIM_LOG_LEVEL", "INFO").upper()
    ENABLE_FILE_LOGS = os.getenv("ENABLE_FILE_LOGS", "false").lower() == "true"
    LOG_DIR = os.getenv("FEDSIM_LOG_DIR", os.path.join(os.getcwd(), "logs"))

    RESULTS_DIR = os.getenv("FEDSIM_RESULTS_DIR", "results")

    SENTRY_DSN = os.getenv("SENTRY_DSN")


def worker_count() -> int:
    """Relido a cada chamada para respeitar testes e `.env` carregados depois."""
    try:
        return max(1, int(os.getenv("FEDAUDIO_SIM_WORKERS", str(Config.WORKERS))))
    except ValueError:
        return Config.WORKERS
