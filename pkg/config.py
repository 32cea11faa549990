import os

import dotenv

dotenv.load_dotenv()

ENV_PREFIX = "LOWLOAD_"


def env(name, default=None):
    return os.getenv(ENV_PREFIX + name, default)


INPUT = env("INPUT")
RESULTS_DIR = env("OUT", "results")
SCHEMA = env("SCHEMA")
FORECASTER = env("FORECASTER", "PersistentPrevDay")
BOUND = env("BOUND", "+10:-5")
BACKUP_MINUTES = int(env("BACKUP_MIN", 60))
COVERAGE = float(env("COVERAGE", 0.9))
PARALLEL = int(env("PARALLEL", 1))
REGION = env("REGION", "local")
BUSY_THRESHOLD = float(env("BUSY_THRESHOLD", 60.0))

LOGGING_LEVEL = env("LOGGING_LEVEL", "INFO")
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        },
    },
    "handlers": {
        "stderr": {
            "level": LOGGING_LEVEL,
            "class": "logging.StreamHandler",
            "formatter": "standard",
        },
    },
    "loggers": {
        "": {
            "handlers": ["stderr"],
            "level": "DEBUG",
        },
    },
}
