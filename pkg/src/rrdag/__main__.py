"""Allow running the CLI via `python -m rrdag`."""
import sys

from .cli import main

sys.exit(main())
