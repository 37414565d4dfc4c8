import sys

from mdurn.cli import main

sys.exit(main())
