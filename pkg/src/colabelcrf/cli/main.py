#!/usr/bin/env python3
"""Entry point for the ``colabelcrf`` console script."""

import sys
from typing import Optional


def main(args: Optional[list[str]] = None) -> int:
    """Main entry point for the colabelcrf CLI."""
    from colabelcrf.cli.enhanced import EnhancedCLI

    cli = EnhancedCLI()
    return cli.run(args)


if __name__ == "__main__":
    sys.exit(main())
