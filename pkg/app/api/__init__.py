from .commands import build_parser, run

__all__ = ["build_parser", "run"]
