#!/usr/bin/env python3
"""
mpmhtsim: BER and soft-output simulator for multi-pivot MIMO detection.

Run ``python mpmhtsim.py --help`` for the subcommands.
"""

import sys

from mpmht.simcli import main

if __name__ == "__main__":
    sys.exit(main())
