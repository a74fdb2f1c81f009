import sys

from aovsim.cli import main

sys.exit(main())
