import sys

from btar.cli import main

sys.exit(main())
