import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from seedbank.bank import DormantBank


def test_insert_examples():
    b = DormantBank()
    b.insert(1.0)
    assert (b.count, b.total_rate) == (1, 1.0)
    b.insert(1.0)
    assert b.count == 2 and b.snapshot() == [(1.0, 2)]
    c = DormantBank([1.0, 3.0])
    assert c.total_rate == 4.0


def test_ids_are_distinct_for_equal_rates():
    b = DormantBank()
    assert b.insert(1.0) != b.insert(1.0)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_insert_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        DormantBank().insert(bad)


def test_sample_from_empty_errors(rng):
    with pytest.raises(IndexError):
        DormantBank().sample_activation(rng)


def test_single_block_round_trip(rng):
    b = DormantBank([2.0])
    assert b.sample_activation(rng)[1] == 2.0
    assert b.count == 0 and b.total_rate == 0.0


def test_activation_frequency_two_blocks(rng):
    trials = 100_000
    hits = 0
    for _ in range(trials):
        b = DormantBank([1.0, 3.0])
        hits += b.sample_activation(rng)[1] == 3.0
    assert abs(hits / trials - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / trials)


def test_activation_chi_square_five_slots(rng):
    rates = np.array([0.5, 1.0, 2.0, 3.5, 7.0])
    b = DormantBank(rates)
    draws = 100_000
    counts = np.zeros(5)
    for _ in range(draws):
        _, r = b.remove_at(rng.random() * b.total_rate)
        counts[np.flatnonzero(rates == r)[0]] += 1
        b.insert(r)
    p = stats.chisquare(counts, draws * rates / rates.sum()).pvalue
    assert p > 0.01


def test_snapshot_examples():
    assert DormantBank().snapshot() == []
    assert DormantBank([1.0, 1.0, 2.0]).snapshot() == [(1.0, 2), (2.0, 1)]


def test_conservation_after_churn(rng):
    b = DormantBank()
    for _ in range(1000):
        if b.count and rng.random() < 0.45:
            b.sample_activation(rng)
        else:
            b.insert(float(rng.choice([0.5, 1.0, 2.0])))
    assert sum(k for _, k in b.snapshot()) == b.count
    assert b.total_rate == pytest.approx(b.resum(), rel=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.one_of(st.floats(1e-3, 1e3), st.none()), max_size=400), st.integers(0, 2**32 - 1))
def test_aggregate_matches_reference(ops, seed):
    rng = np.random.default_rng(seed)
    b = DormantBank()
    ref = []
    for op in ops:
        if op is None:
            if not ref:
                continue
            _, r = b.sample_activation(rng)
            ref.remove(r)
        else:
            b.insert(op)
            ref.append(op)
        assert b.count == len(ref)
        assert (b.total_rate == 0.0) == (b.count == 0)
    assert sorted(b.rates()) == sorted(ref)
    if ref:
        assert b.total_rate == pytest.approx(math.fsum(ref), rel=1e-9)
    assert sum(k for _, k in b.snapshot()) == len(ref)
