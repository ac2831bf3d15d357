"""Main entry point for the consent ledger command line."""

import sys

from consent_ledger.cli import main

if __name__ == "__main__":
    sys.exit(main())
