import sys

from dotenv import load_dotenv

from app.api import run
from app.core.logging import setup_logging

load_dotenv()


if __name__ == "__main__":
    setup_logging()
    sys.exit(run())
