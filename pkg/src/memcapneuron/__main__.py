"""Allow ``python -m memcapneuron``."""

import sys

from .cli import main

sys.exit(main())
