#!/usr/bin/env python3
"""Run survnet from a source checkout: ``python survnet_cli.py report survnet/data/fig1.net``."""

import sys

from survnet.cli import main

if __name__ == "__main__":
    sys.exit(main())
