"""Allow `python -m rodlimit`."""

import sys

from .cli import main

sys.exit(main())
