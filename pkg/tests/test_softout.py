#!/usr/bin/env python3
"""
Tests for max-log LLRs, competitor ranks and rank-aware scaling.
"""

import itertools
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

import numpy as np
from pydantic import ValidationError

from mpmht.channel import RngStream, add_noise, draw_channel, snr_to_sigma2
from mpmht.detect import Candidate, CandidateList, detect_mpmht, enumerate_lattice
from mpmht.errors import ContractViolation, MissingCompetitor
from mpmht.modem import SUPPORTED_ORDERS, build_constellation
from mpmht.softout import (
    ScalingKind,
    ScalingScheme,
    competitor_rank,
    competitor_ranks,
    llr_oracle_ml,
    maxlog_llr,
    scale_llrs,
)


def _trial(seed, n_t, order, snr_db, stream=0, n_r=None):
    c = build_constellation(order)
    gen = RngStream(seed, stream).generator
    H = draw_channel(gen, n_r or n_t, n_t).H
    x = gen.integers(0, order, size=n_t)
    sigma2 = snr_to_sigma2(snr_db, n_t)
    return add_noise(H @ c.points[x], sigma2, gen), H, sigma2


def test_two_candidate_llr():
    c = build_constellation(4)
    candidates = CandidateList.from_candidates([
        Candidate(symbols=(0,), metric=1.0),
        Candidate(symbols=(3,), metric=3.5),
    ])
    llrs = maxlog_llr(candidates, c)
    assert np.array_equal(llrs.values, [[2.5, 2.5]])
    assert np.array_equal(llrs.competitor_rank, [[2, 2]])
    assert np.array_equal(llrs.hard_bits, [[0, 0]])


def test_missing_competitor():
    c = build_constellation(4)
    candidates = CandidateList.from_candidates([
        Candidate(symbols=(0,), metric=1.0),
        Candidate(symbols=(1,), metric=2.0),
    ])
    try:
        maxlog_llr(candidates, c)
    except MissingCompetitor as e:
        assert (e.layer, e.bit) == (0, 0)
        return
    raise AssertionError("single-valued bit accepted")


def test_two_layer_llrs_equal_oracle():
    for order in SUPPORTED_ORDERS:
        c = build_constellation(order)
        trials = 10 if order == 256 else 50
        for snr_db in (0.0, 10.0, 20.0):
            for stream in range(trials):
                y, H, sigma2 = _trial(13, 2, order, snr_db, stream)
                _, candidates = detect_mpmht(y, H, c, "cyclic")
                soft = maxlog_llr(candidates, c)
                oracle = llr_oracle_ml(y, H, c, sigma2)
                assert np.max(np.abs(soft.values - oracle.values)) <= 1e-9, (order, snr_db, stream)


def test_two_layer_tall_llrs_equal_oracle():
    for n_r, order in [(4, 4), (4, 16), (3, 64)]:
        c = build_constellation(order)
        for snr_db in (0.0, 10.0):
            for stream in range(20):
                y, H, sigma2 = _trial(17, 2, order, snr_db, stream, n_r=n_r)
                _, candidates = detect_mpmht(y, H, c, "cyclic")
                soft = maxlog_llr(candidates, c)
                oracle = llr_oracle_ml(y, H, c, sigma2)
                assert np.max(np.abs(soft.values - oracle.values)) <= 1e-9, (n_r, order, snr_db, stream)
                assert np.array_equal(soft.hard_bits, oracle.hard_bits)


def test_full_enumeration_list_equals_oracle():
    c = build_constellation(16)
    y, H, sigma2 = _trial(4, 2, 16, 8.0)
    blocks = list(enumerate_lattice(y, H, c))
    candidates = CandidateList(
        symbols=np.concatenate([s for _, s, _ in blocks]),
        metrics=np.concatenate([m for _, _, m in blocks]),
        provenance=np.full(256, -1, dtype=np.int64),
    )
    soft = maxlog_llr(candidates, c)
    oracle = llr_oracle_ml(y, H, c, sigma2)
    assert np.array_equal(soft.values, oracle.values)
    assert np.array_equal(soft.competitor_rank, oracle.competitor_rank)
    assert soft.n_c == oracle.n_c == 256


def test_single_layer_closed_form():
    """Noise-free QPSK at point 0: each LLR is the squared gap to the nearest opposing symbol."""
    c = build_constellation(4)
    oracle = llr_oracle_ml(c.points[[0]], np.ones((1, 1), dtype=complex), c, 1.0)
    assert np.allclose(oracle.values, [[2.0, 2.0]], atol=1e-12)


def test_oracle_sign_predicts_ml_bits():
    c = build_constellation(16)
    for stream in range(20):
        y, H, sigma2 = _trial(8, 2, 16, 6.0, stream)
        oracle = llr_oracle_ml(y, H, c, sigma2)
        assert np.array_equal((oracle.values < 0).astype(np.uint8), oracle.hard_bits)


def test_oracle_matches_nested_loops():
    c = build_constellation(16)
    y, H, sigma2 = _trial(19, 2, 16, 7.0)
    d = np.full((2, 4, 2), np.inf)
    for a, b in itertools.product(range(16), repeat=2):
        r = y - H[:, 0] * c.points[a] - H[:, 1] * c.points[b]
        m = float(np.sum(np.abs(r) ** 2))
        for t, s in enumerate((a, b)):
            for bit in range(4):
                v = c.bit_labels[s, bit]
                d[t, bit, v] = min(d[t, bit, v], m)
    expected = d[:, :, 1] - d[:, :, 0]
    oracle = llr_oracle_ml(y, H, c, sigma2)
    assert np.max(np.abs(oracle.values - expected)) <= 1e-9


def test_ranks_match_rescan():
    c = build_constellation(4)
    for stream in range(10):
        y, H, _ = _trial(27, 3, 4, 3.0, stream)
        _, candidates = detect_mpmht(y, H, c, "cyclic")
        rows = sorted(zip(candidates.metrics.tolist(), map(tuple, candidates.symbols.tolist())))
        hard_bits = c.bit_labels[list(rows[0][1])]
        ranks = competitor_ranks(candidates, c)
        for t in range(3):
            for b in range(2):
                position = next(i for i, (_, sym) in enumerate(rows, start=1)
                                if c.bit_labels[sym[t], b] != hard_bits[t, b])
                assert ranks[t, b] == position
                assert competitor_rank(candidates, c, t, b) == position
                assert position >= 2


def test_second_best_competitor_has_rank_two():
    c = build_constellation(4)
    candidates = CandidateList.from_candidates([
        Candidate(symbols=(0,), metric=0.5),
        Candidate(symbols=(3,), metric=0.7),
        Candidate(symbols=(1,), metric=2.0),
        Candidate(symbols=(2,), metric=4.0),
    ])
    assert competitor_rank(candidates, c, 0, 0) == 2
    assert competitor_rank(candidates, c, 0, 1) == 2


def test_reduced_lists_overestimate_reliability():
    c = build_constellation(16)
    for stream in range(40):
        y, H, sigma2 = _trial(33, 3, 16, 10.0, stream)
        hard, candidates = detect_mpmht(y, H, c, "cyclic")
        soft = maxlog_llr(candidates, c)
        oracle = llr_oracle_ml(y, H, c, sigma2)
        # Hard/soft consistency for the reduced list
        assert np.array_equal((soft.values < 0).astype(np.uint8), soft.hard_bits)
        if np.array_equal(soft.hard_bits, oracle.hard_bits):
            assert np.all(np.abs(soft.values) >= np.abs(oracle.values) - 1e-9)


def test_scaling_examples():
    c = build_constellation(4)
    candidates = CandidateList.from_candidates([
        Candidate(symbols=(0,), metric=0.0),
        Candidate(symbols=(1,), metric=1.0),
        Candidate(symbols=(2,), metric=2.0),
        Candidate(symbols=(3,), metric=3.0),
    ])
    llrs = maxlog_llr(candidates, c)
    # Bit 0 competitor is symbol 2 at rank 3, bit 1 competitor is symbol 1 at rank 2
    assert np.array_equal(llrs.competitor_rank, [[3, 2]])

    linear = scale_llrs(llrs, 4, ScalingScheme(kind="linear", beta=0.5))
    assert np.allclose(linear.alpha, [[2 / 3, 1 / 3]], atol=1e-12)
    assert np.allclose(linear.scaled, llrs.values * (1 - 0.5 * linear.alpha), atol=1e-12)

    # Rank N_c gives alpha = 1
    at_end = scale_llrs(llrs, 3, ScalingScheme(kind="linear", beta=0.5))
    assert abs(at_end.scaled[0, 0] - 0.5 * llrs.values[0, 0]) <= 1e-12
    expo = scale_llrs(llrs, 3, ScalingScheme(kind=ScalingKind.EXPONENTIAL, gamma=1.0))
    assert abs(expo.scaled[0, 0] - math.exp(-1) * llrs.values[0, 0]) <= 1e-12

    # Rank 1 gives alpha = 0 and g = 1
    assert np.array_equal(ScalingScheme(kind="linear").gain([0.0]), [1.0])
    assert np.array_equal(ScalingScheme(kind="exp", gamma=3.0).gain([0.0]), [1.0])
    none = scale_llrs(llrs, 4, ScalingScheme())
    assert np.array_equal(none.scaled, llrs.values)


def test_scaling_properties():
    alpha = np.linspace(0.0, 1.0, 101)
    values = np.linspace(-5.0, 5.0, 101)
    for scheme in (ScalingScheme(kind="linear", beta=0.0), ScalingScheme(kind="linear", beta=1.0),
                   ScalingScheme(kind="linear", beta=0.3), ScalingScheme(kind="exp", gamma=0.1),
                   ScalingScheme(kind="exp", gamma=4.0)):
        g = scheme.gain(alpha)
        assert g[0] == 1.0
        assert np.all(np.diff(g) <= 0)
        scaled = values * g
        assert np.all(np.abs(scaled) <= np.abs(values))
        nonzero = (values != 0) & (g > 0)
        assert np.all(np.sign(scaled[nonzero]) == np.sign(values[nonzero]))


def test_scaling_contracts():
    c = build_constellation(4)
    candidates = CandidateList.from_candidates([
        Candidate(symbols=(0,), metric=0.0),
        Candidate(symbols=(3,), metric=1.0),
    ])
    llrs = maxlog_llr(candidates, c)
    for n_c in (0, 1):
        try:
            scale_llrs(llrs, n_c, ScalingScheme())
        except ContractViolation:
            continue
        raise AssertionError(f"n_c={n_c} accepted")
    for bad in ({"beta": 1.5}, {"beta": -0.1}, {"gamma": 0.0}):
        try:
            ScalingScheme(kind="linear", **bad)
        except ValidationError:
            continue
        raise AssertionError(f"{bad} accepted")


def test_normalization_and_clipping():
    c = build_constellation(16)
    y, H, sigma2 = _trial(44, 3, 16, 4.0)
    _, candidates = detect_mpmht(y, H, c, "cyclic")
    raw = maxlog_llr(candidates, c)
    normalized = maxlog_llr(candidates, c, sigma2=sigma2)
    assert np.allclose(normalized.values, raw.values / sigma2, rtol=1e-15)
    clipped = maxlog_llr(candidates, c, clip=0.5)
    assert np.all(np.abs(clipped.values) <= 0.5)
    assert np.array_equal(np.sign(clipped.values), np.sign(raw.values))
    try:
        maxlog_llr(candidates, c, sigma2=0.0)
    except ContractViolation:
        return
    raise AssertionError("zero sigma2 normalization accepted")


def main():
    tests = [
        test_two_candidate_llr,
        test_missing_competitor,
        test_two_layer_llrs_equal_oracle,
        test_two_layer_tall_llrs_equal_oracle,
        test_full_enumeration_list_equals_oracle,
        test_single_layer_closed_form,
        test_oracle_sign_predicts_ml_bits,
        test_oracle_matches_nested_loops,
        test_ranks_match_rescan,
        test_second_best_competitor_has_rank_two,
        test_reduced_lists_overestimate_reliability,
        test_scaling_examples,
        test_scaling_properties,
        test_scaling_contracts,
        test_normalization_and_clipping,
    ]
    print("soft output tests")
    print("=" * 60)
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✓ {test.__name__}")
        except AssertionError as e:
            failed += 1
            print(f"✗ {test.__name__}: {e}")
    print("=" * 60)
    print(f"{len(tests) - failed}/{len(tests)} passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
