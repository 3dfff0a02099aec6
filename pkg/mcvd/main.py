import os
import sys
import logging
from typing import List, Optional

from mcvd.routes.cliRoutes import dispatch

MCVD_LOG_LEVEL = os.environ.get("MCVD_LOG_LEVEL", "INFO")


def configure_logging(level_name: str = MCVD_LOG_LEVEL) -> None:
    level = logging.getLevelName(level_name.upper())
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
