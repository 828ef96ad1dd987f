# main.py

from __future__ import annotations
import sys
from typing import Optional, Sequence

from .internal.cli import parse_args
from .internal.errors import CtxNmtError
from .internal.log import LOGGER, dprint


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    LOGGER.quiet = args.quiet
    try:
        return args.func(args)
    except CtxNmtError as exc:
        # errors always reach stderr, even with --quiet
        sys.stderr.write(f"error: {exc}\n")
        return 1
    finally:
        LOGGER.stop()
        LOGGER.quiet = False


if __name__ == "__main__":
    sys.exit(main())
