import random

import numpy as np
import pytest
from scipy import stats as sps

from axelrod1d.model import UsageError
from axelrod1d.randomness import (
    MarkCursor,
    MarkSource,
    StreamKey,
    mix64,
    parse_seed,
    replica_seed,
    _mix64_array,
)


@pytest.fixture(scope="module")
def source():
    return MarkSource(0xC0FFEE)


def test_mark_at_is_deterministic(source):
    key = StreamKey(5, 2)
    assert source.mark_at(key, 7) == source.mark_at(key, 7)
    assert MarkSource(0xC0FFEE).mark_at(key, 7) == source.mark_at(key, 7)
    assert MarkSource(0xC0FFEF).mark_at(key, 7) != source.mark_at(key, 7)


def test_mark_fields(source):
    marks = [source.mark_at(StreamKey(1, 1), n) for n in range(1, 40)]
    assert all(0 < m.uniform < 1 for m in marks)
    assert all(m.direction in (-1, 1) for m in marks)
    assert all(a.time < b.time for a, b in zip(marks, marks[1:]))
    with pytest.raises(UsageError):
        source.mark_at(StreamKey(1, 1), 0)


def test_scalar_and_vector_hash_agree():
    zs = [0, 1, 2**63, 2**64 - 1, 0x1234567890ABCDEF]
    vec = _mix64_array(np.array(zs, dtype=np.uint64)).tolist()
    assert vec == [mix64(z) for z in zs]


def test_first_arrival_mean(source):
    times = [source.times(e, 1 + e % 3, 1, 1, 0.0)[0] for e in range(100_000)]
    assert abs(np.mean(times) - 1.0) < 0.02


def test_direction_balance(source):
    d = source.directions(3, 1, 1, 100_000)
    assert abs((d == 1).mean() - 0.5) < 0.01


def test_next_arrival(source):
    key = StreamKey(12, 3)
    assert source.next_arrival(key, 0.0) == source.mark_at(key, 1)
    t3 = source.mark_at(key, 3).time
    assert source.next_arrival(key, t3) == source.mark_at(key, 4)
    far = source.next_arrival(key, 750.0)
    assert far.time > 750.0
    assert source.mark_at(key, far.index - 1).time <= 750.0
    assert source.mark_at(key, far.index) == far


def test_gaps_pass_ks(source):
    gaps = source.gaps(0, 1, 1, 100_000)
    assert sps.kstest(gaps, "expon").pvalue > 0.01


def test_uniforms_uncorrelated_across_keys(source):
    a = source.uniforms(10, 1, 1, 100_000)
    b = source.uniforms(11, 1, 1, 100_000)
    c = source.uniforms(10, 2, 1, 100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.01


def test_arrival_counts_are_poisson(source):
    counts = []
    for e in range(10_000):
        t = source.times(e, 1, 1, 200, 0.0)
        counts.append(int(np.searchsorted(t, 100.0, side="right")))
    counts = np.array(counts)
    ratio = counts.var(ddof=1) / counts.mean()
    assert 0.95 <= ratio <= 1.05
    assert abs(counts.mean() - 100) < 0.5


def test_cursor_matches_mark_at_in_any_order(source):
    key = StreamKey(4, 1)
    cursor = MarkCursor(source, 4, 1)
    seen = []
    for _ in range(100):
        seen.append((cursor.n, cursor.time, cursor.direction, cursor.uniform))
        cursor.advance()
    order = list(range(len(seen)))
    random.Random(1).shuffle(order)
    for k in order:
        n, t, d, u = seen[k]
        m = source.mark_at(key, n)
        assert (m.time, m.direction, m.uniform) == (t, d, u)


def test_cursor_skip_past_long_gap(source):
    cursor = MarkCursor(source, 9, 2)
    cursor.skip_past(3000.0)
    m = source.mark_at(StreamKey(9, 2), cursor.n)
    assert m.time == cursor.time > 3000.0
    assert source.mark_at(StreamKey(9, 2), cursor.n - 1).time <= 3000.0


def test_seed_parsing():
    assert parse_seed("0x10") == 16
    assert parse_seed("42") == 42
    with pytest.raises(UsageError):
        parse_seed(str(2**64))
    assert replica_seed(0b1010, 3) == 0b1001
