import sys

from kcl.cli import main

sys.exit(main())
