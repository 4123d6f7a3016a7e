"""
mpmht: multi-pivot multiple-hypothesis MIMO detection
=====================================================

Library and Monte-Carlo BER simulator for QR-based MIMO detection:

- linalg:   phase-normalized QR with column permutation, condition number
- modem:    square QAM (4/16/64/256) with Gray labels and O(1) slicing
- channel:  seeded i.i.d. Rayleigh channels, AWGN, conditioned draws
- detect:   brute-force ML, ZF-QR decision feedback, multi-pivot detector
- softout:  max-log LLRs, competitor ranks, rank-aware LLR scaling
- simcli:   sweep engine, CSV output and the ``mpmhtsim`` command line
"""

__version__ = "0.3.0"
