import logging.config
import sys

import config
from cli import main

if __name__ == "__main__":
    logging.config.dictConfig(config.LOGGING)
    sys.exit(main())
