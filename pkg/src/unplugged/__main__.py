import sys

from unplugged.cli import main

sys.exit(main())
