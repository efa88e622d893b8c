import sys

from survnet.cli import main

sys.exit(main())
